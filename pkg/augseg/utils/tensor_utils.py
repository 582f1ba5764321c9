"""
Shape-checked tensor primitives on top of torch.

Everything runs in float64. Gradients come from torch autograd; the wrappers here only add
the explicit shape contracts (no silent broadcasting except scalar-by-tensor) and the
finite-difference checker used to validate every differentiable piece of the models.
"""
import math

import torch
import torch.nn.functional as F

from .exceptions import DimensionError, NumericError

DTYPE = torch.float64


def as_tensor(x, requires_grad=False):
    t = torch.as_tensor(x, dtype=DTYPE)
    if requires_grad:
        t = t.clone().requires_grad_(True)
    return t


def check_rank(x, rank, name='input'):
    if x.dim() != rank:
        raise DimensionError('%s must be rank %d, got shape %s' % (name, rank, tuple(x.shape)))


def matmul(a, b):
    """
    Args:
        a: (..., m, k)
        b: (k, n) or (..., k, n) with the same leading shape as a
    Returns:
        (..., m, n)
    """
    if a.dim() < 2 or b.dim() < 2:
        raise DimensionError('matmul needs rank >= 2 operands, got %s and %s' % (tuple(a.shape), tuple(b.shape)))
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError('matmul inner dimensions differ: %s x %s' % (tuple(a.shape), tuple(b.shape)))
    if b.dim() > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError('matmul batch dimensions differ: %s x %s' % (tuple(a.shape), tuple(b.shape)))
    return torch.matmul(a, b)


def linear(x, weight, bias=None):
    """x: (..., d_in), weight: (d_out, d_in), bias: (d_out) -> (..., d_out)"""
    if x.shape[-1] != weight.shape[-1]:
        raise DimensionError('linear input dim %d does not match weight %s' % (x.shape[-1], tuple(weight.shape)))
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError('linear bias %s does not match weight %s' % (tuple(bias.shape), tuple(weight.shape)))
    return F.linear(x, weight, bias)


def add(a, b):
    if a.dim() > 0 and b.dim() > 0 and a.shape != b.shape:
        raise DimensionError('add operands differ: %s vs %s' % (tuple(a.shape), tuple(b.shape)))
    return a + b


def softmax(x, dim=-1):
    return torch.softmax(x, dim=dim)


def layer_norm(x, weight, bias, eps=1e-5):
    if weight.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise DimensionError('layer_norm params %s do not match features %s' % (tuple(weight.shape), tuple(x.shape)))
    return F.layer_norm(x, x.shape[-1:], weight, bias, eps)


def gelu(x):
    return F.gelu(x)


def mean_pool_hw(x):
    """(B, H, W, D) -> (B, D), mean over H and W."""
    check_rank(x, 4, 'mean_pool_hw input')
    return x.mean(dim=(1, 2))


def cross_entropy(logits, labels):
    check_rank(logits, 2, 'logits')
    if labels.dim() != 1 or labels.shape[0] != logits.shape[0]:
        raise DimensionError('labels %s do not match logits %s' % (tuple(labels.shape), tuple(logits.shape)))
    return F.cross_entropy(logits, labels)


def grad_check(f, x, eps=1e-5):
    """
    Compare the autograd gradient of a scalar function against central differences.

    Args:
        f: callable mapping a float64 tensor shaped like x to a scalar tensor
        x: float64 tensor, the evaluation point (left untouched)
        eps: finite-difference step
    Returns:
        max over coordinates of |analytic - numeric| / max(1, |analytic|)
    """
    if eps <= 0:
        raise ValueError('eps must be > 0')
    x0 = x.detach().clone().to(DTYPE)

    xa = x0.clone().requires_grad_(True)
    out = f(xa)
    if out.numel() != 1:
        raise DimensionError('grad_check needs a scalar-valued function, got shape %s' % (tuple(out.shape),))
    if not torch.isfinite(out).all():
        raise NumericError('f(x) is not finite: %s' % out.item())
    analytic, = torch.autograd.grad(out, xa, allow_unused=True)
    if analytic is None:
        analytic = torch.zeros_like(x0)

    numeric = torch.zeros_like(x0)
    flat_x = x0.view(-1)
    flat_num = numeric.view(-1)
    with torch.no_grad():
        for i in range(flat_x.numel()):
            orig = flat_x[i].item()
            flat_x[i] = orig + eps
            f_plus = f(x0).item()
            flat_x[i] = orig - eps
            f_minus = f(x0).item()
            flat_x[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericError('non-finite value while perturbing coordinate %d' % i)
            flat_num[i] = (f_plus - f_minus) / (2.0 * eps)

    rel = (analytic - numeric).abs() / analytic.abs().clamp(min=1.0)
    return rel.max().item() if rel.numel() > 0 else 0.0

from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn as nn

from ...utils import tensor_utils
from ...utils.exceptions import DimensionError, InjectionOrderError, InjectionSiteError, ValidationError


class AdapterVariant(str, Enum):
    VANILLA = 'vanilla'
    FROZEN_A = 'frozen_A'
    SLORA = 'slora'
    AUGMODULE = 'augmodule'

    @property
    def shared_a(self):
        return self in (AdapterVariant.SLORA, AdapterVariant.AUGMODULE)

    @property
    def uses_prompt(self):
        return self is AdapterVariant.AUGMODULE


@dataclass(frozen=True, order=True)
class SiteId:
    """A linear layer that can receive an adapter: 1-based block index and layer kind."""
    block: int
    kind: str

    @property
    def key(self):
        return 'block%d_%s' % (self.block, self.kind)

    @classmethod
    def from_key(cls, key):
        head, kind = key.split('_', 1)
        return cls(block=int(head[len('block'):]), kind=kind)


def _check_rank_dims(A, B, d_in=None):
    if A.shape[0] != B.shape[1]:
        raise DimensionError('rank mismatch: A %s, B %s' % (tuple(A.shape), tuple(B.shape)))
    if d_in is not None and A.shape[1] != d_in:
        raise DimensionError('A %s does not match input dim %d' % (tuple(A.shape), d_in))


def forward_vanilla(W, X, A, B, bias=None):
    """Y = (W + B A) X for every token. X: (..., tokens, d_in) -> (..., tokens, d_out)"""
    _check_rank_dims(A, B, X.shape[-1])
    base = tensor_utils.linear(X, W, bias)
    return base + tensor_utils.linear(tensor_utils.linear(X, A), B)


def forward_slora(W, X, shared_A, B, bias=None):
    """Y = (W + B shared_A) X; shared_A must match the site's input dim."""
    if shared_A.shape[1] != X.shape[-1] or shared_A.shape[1] != W.shape[1]:
        raise InjectionSiteError('site input dim %d differs from the shared A width %d'
                                 % (W.shape[1], shared_A.shape[1]))
    _check_rank_dims(shared_A, B)
    base = tensor_utils.linear(X, W, bias)
    return base + tensor_utils.linear(tensor_utils.linear(X, shared_A), B)


def forward_aug(W, X, shared_A, B, C, P, bias=None):
    """
    Y = W X + B C (shared_A X + P)

    Args:
        W: (d_out, D), X: (..., tokens, D), shared_A: (r, D), B: (d_out, r), C: (r, r)
        P: (..., tokens, r) prompt term
    """
    r = shared_A.shape[0]
    if P.shape[-1] != r:
        raise DimensionError('prompt term width %d does not match rank %d' % (P.shape[-1], r))
    if P.shape[-2] != X.shape[-2]:
        raise DimensionError('prompt term has %d tokens, input has %d' % (P.shape[-2], X.shape[-2]))
    if C.shape != (r, r):
        raise DimensionError('C must be %dx%d, got %s' % (r, r, tuple(C.shape)))
    if shared_A.shape[1] != X.shape[-1]:
        raise InjectionSiteError('site input dim %d differs from the shared A width %d'
                                 % (X.shape[-1], shared_A.shape[1]))
    _check_rank_dims(shared_A, B)
    base = tensor_utils.linear(X, W, bias)
    low = tensor_utils.linear(X, shared_A) + P
    return base + tensor_utils.linear(tensor_utils.linear(low, C), B)


class LoRAPair(nn.Module):
    """Per-site A_i / B_i of vanilla (and frozen-A) LoRA."""

    def __init__(self, site, d_in, d_out, rank, init_std=0.02, generator=None, freeze_a=False):
        super().__init__()
        self.site = site
        a = torch.randn(rank, d_in, generator=generator, dtype=tensor_utils.DTYPE) * init_std
        self.A = nn.Parameter(a, requires_grad=not freeze_a)
        self.B = nn.Parameter(torch.zeros(d_out, rank, dtype=tensor_utils.DTYPE))


class AdapterSet(nn.Module):
    """
    One task's trainable payload for a single adapter variant.

    vanilla / frozen_A keep one LoRAPair per site; slora keeps one shared A plus a B per site;
    augmodule (the AugModuleSet) adds a per-site C and the heatmap-to-rank prompt projection.
    All sites must live in blocks after start_block.
    """

    def __init__(self, variant, sites, dims, rank, start_block, embed_dim, init_std=0.02, seed=0, task_id=-1):
        super().__init__()
        self.variant = AdapterVariant(variant)
        self.sites = sorted(sites)
        self.dims = {site.key: tuple(dims[site.key]) for site in self.sites}
        self.rank = int(rank)
        self.start_block = int(start_block)
        self.embed_dim = int(embed_dim)
        self.init_std = float(init_std)
        self.seed = int(seed)
        self.task_id = int(task_id)

        if self.rank < 1:
            raise ValidationError('adapter rank must be >= 1, got %d' % self.rank)
        for site in self.sites:
            if site.block <= self.start_block:
                raise InjectionOrderError('site %s lies in block %d <= start block %d'
                                          % (site.key, site.block, self.start_block))
            if self.variant.shared_a and self.dims[site.key][0] != self.embed_dim:
                raise InjectionSiteError('site %s has input dim %d, the shared A needs %d'
                                         % (site.key, self.dims[site.key][0], self.embed_dim))

        generator = torch.Generator()
        generator.manual_seed(self.seed)
        if self.variant.shared_a:
            a = torch.randn(self.rank, self.embed_dim, generator=generator, dtype=tensor_utils.DTYPE) * self.init_std
            self.shared_A = nn.Parameter(a)
            self.lora_B = nn.ParameterDict({
                site.key: nn.Parameter(torch.zeros(self.dims[site.key][1], self.rank, dtype=tensor_utils.DTYPE))
                for site in self.sites
            })
        else:
            self.pairs = nn.ModuleDict({
                site.key: LoRAPair(site, *self.dims[site.key], self.rank, init_std=self.init_std, generator=generator,
                                   freeze_a=self.variant is AdapterVariant.FROZEN_A)
                for site in self.sites
            })
        if self.variant.uses_prompt:
            self.lora_C = nn.ParameterDict({
                site.key: nn.Parameter(torch.eye(self.rank, dtype=tensor_utils.DTYPE)) for site in self.sites
            })
            self.prompt_weight = nn.Parameter(torch.zeros(self.rank, dtype=tensor_utils.DTYPE))
            self.prompt_bias = nn.Parameter(torch.zeros(self.rank, dtype=tensor_utils.DTYPE))

    @property
    def site_keys(self):
        return [site.key for site in self.sites]

    def has_site(self, key):
        return key in self.dims

    def prompt_projection(self, heatmap_tokens):
        """(B, N) heatmap scalars -> (B, N, r) prompt term P."""
        return heatmap_tokens.unsqueeze(-1) * self.prompt_weight + self.prompt_bias

    def site_output(self, key, weight, bias, x, prompt_term=None):
        """Adapted output of one site: base linear plus this set's low-rank update."""
        if self.variant.shared_a:
            B = self.lora_B[key]
            if self.variant.uses_prompt:
                if prompt_term is None:
                    prompt_term = torch.zeros(*x.shape[:-1], self.rank, dtype=x.dtype)
                return forward_aug(weight, x, self.shared_A, B, self.lora_C[key], prompt_term, bias=bias)
            return forward_slora(weight, x, self.shared_A, B, bias=bias)
        pair = self.pairs[key]
        return forward_vanilla(weight, x, pair.A, pair.B, bias=bias)

    def stored_tensors(self):
        """Every tensor that has to be persisted, trainable or not, in a fixed order."""
        tensors = OrderedDict()
        if self.variant.shared_a:
            tensors['shared_A'] = self.shared_A
            for key in self.site_keys:
                tensors['B.%s' % key] = self.lora_B[key]
        else:
            for key in self.site_keys:
                tensors['A.%s' % key] = self.pairs[key].A
                tensors['B.%s' % key] = self.pairs[key].B
        if self.variant.uses_prompt:
            for key in self.site_keys:
                tensors['C.%s' % key] = self.lora_C[key]
            tensors['prompt_weight'] = self.prompt_weight
            tensors['prompt_bias'] = self.prompt_bias
        return tensors

    def load_stored_tensors(self, tensors):
        expected = self.stored_tensors()
        if set(expected.keys()) != set(tensors.keys()):
            raise ValidationError('tensor names %s do not match adapter layout %s'
                                  % (sorted(tensors.keys()), sorted(expected.keys())))
        with torch.no_grad():
            for name, param in expected.items():
                val = torch.as_tensor(tensors[name], dtype=tensor_utils.DTYPE)
                if val.shape != param.shape:
                    raise DimensionError('tensor %s has shape %s, expected %s'
                                         % (name, tuple(val.shape), tuple(param.shape)))
                param.copy_(val)
        return self

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        return self

    def metadata(self):
        return {
            'task_id': self.task_id,
            'variant': self.variant.value,
            'rank': self.rank,
            'start_block': self.start_block,
            'embed_dim': self.embed_dim,
            'init_std': self.init_std,
            'seed': self.seed,
            'sites': [[site.key, self.dims[site.key][0], self.dims[site.key][1]] for site in self.sites],
        }

    @classmethod
    def from_metadata(cls, meta):
        sites = [SiteId.from_key(key) for key, _, _ in meta['sites']]
        dims = {key: (d_in, d_out) for key, d_in, d_out in meta['sites']}
        return cls(meta['variant'], sites, dims, meta['rank'], meta['start_block'], meta['embed_dim'],
                   init_std=meta['init_std'], seed=meta['seed'], task_id=meta['task_id'])


def build_adapter_set(model, adapter_cfg, task_id, seed, variant=None):
    """Adapter set covering every configured site kind in blocks start_block+1..n of model."""
    start_block = adapter_cfg.START_BLOCK
    sites = model.injection_sites(start_block, adapter_cfg.SITES)
    dims = {site.key: model.site_dims(site) for site in sites}
    return AdapterSet(
        variant or adapter_cfg.VARIANT, sites, dims, adapter_cfg.RANK, start_block, model.embed_dim,
        init_std=adapter_cfg.INIT_STD, seed=seed, task_id=task_id
    )

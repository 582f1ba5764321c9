import numpy as np
import pytest
import torch

from augseg.continual.harness import load_adapter_set, save_adapter_set
from augseg.models.adapters import AdapterSet, SiteId, build_adapter_set, inject
from augseg.models.adapters.lora import forward_aug, forward_slora, forward_vanilla
from augseg.models.adapters.param_count import count_adapter_set, count_params
from augseg.utils import file_utils, tensor_utils
from augseg.utils.exceptions import DimensionError, InjectionOrderError, InjectionSiteError, StateError


def _randn(g, *shape):
    return torch.randn(*shape, generator=g, dtype=torch.float64)


def _rel(a, b):
    return ((a - b).abs().max() / b.abs().max().clamp(min=1e-300)).item()


def test_reduction_chain_on_random_instances():
    g = torch.Generator().manual_seed(0)
    for _ in range(100):
        D, d_out, r, tokens = 8, 6, 3, 5
        W, X = _randn(g, d_out, D), _randn(g, tokens, D)
        A, B = _randn(g, r, D), _randn(g, d_out, r)
        aug = forward_aug(W, X, A, B, torch.eye(r, dtype=torch.float64), torch.zeros(tokens, r, dtype=torch.float64))
        slora = forward_slora(W, X, A, B)
        vanilla = forward_vanilla(W, X, A, B)
        assert _rel(aug, slora) <= 1e-12
        assert _rel(slora, vanilla) <= 1e-12


def test_forward_vanilla_matches_dense_oracle():
    g = torch.Generator().manual_seed(1)
    W, X, A, B = _randn(g, 4, 6), _randn(g, 1, 6), _randn(g, 2, 6), _randn(g, 4, 2)
    dense = ((W + B @ A) @ X[0]).unsqueeze(0)
    assert torch.allclose(forward_vanilla(W, X, A, B), dense, rtol=1e-12, atol=1e-12)


def test_forward_aug_matches_term_by_term_oracle():
    g = torch.Generator().manual_seed(2)
    W, X, A, B, C, P = _randn(g, 5, 4), _randn(g, 3, 4), _randn(g, 2, 4), _randn(g, 5, 2), _randn(g, 2, 2), \
        _randn(g, 3, 2)
    expected = X @ W.T + ((X @ A.T + P) @ C.T) @ B.T
    assert torch.allclose(forward_aug(W, X, A, B, C, P), expected, rtol=1e-12, atol=1e-12)


def test_zero_b_gives_base_output_regardless_of_prompt():
    g = torch.Generator().manual_seed(3)
    W, X, A = _randn(g, 5, 4), _randn(g, 3, 4), _randn(g, 2, 4)
    B = torch.zeros(5, 2, dtype=torch.float64)
    base = tensor_utils.linear(X, W)
    assert torch.equal(forward_vanilla(W, X, A, B), base)
    assert torch.equal(forward_slora(W, X, A, B), base)
    assert torch.equal(forward_aug(W, X, A, B, _randn(g, 2, 2), _randn(g, 3, 2)), base)


def test_shape_errors():
    W, X = torch.zeros(5, 4, dtype=torch.float64), torch.zeros(3, 4, dtype=torch.float64)
    A, B = torch.zeros(2, 4, dtype=torch.float64), torch.zeros(5, 3, dtype=torch.float64)
    with pytest.raises(DimensionError):
        forward_vanilla(W, X, A, B)
    with pytest.raises(InjectionSiteError):
        forward_slora(torch.zeros(5, 6, dtype=torch.float64), torch.zeros(3, 6, dtype=torch.float64), A,
                      torch.zeros(5, 2, dtype=torch.float64))
    with pytest.raises(DimensionError):
        forward_aug(W, X, A, torch.zeros(5, 2, dtype=torch.float64), torch.eye(2, dtype=torch.float64),
                    torch.zeros(3, 3, dtype=torch.float64))


def test_shared_a_couples_sites():
    sites = [SiteId(2, 'attn_query'), SiteId(2, 'attn_value')]
    dims = {s.key: (4, 4) for s in sites}
    adapters = AdapterSet('slora', sites, dims, rank=2, start_block=1, embed_dim=4, seed=0)
    g = torch.Generator().manual_seed(4)
    W, X = _randn(g, 4, 4), _randn(g, 3, 4)
    with torch.no_grad():
        for key in adapters.site_keys:
            adapters.lora_B[key].copy_(_randn(g, 4, 2))

    def outputs():
        return [adapters.site_output(k, W, None, X).clone() for k in adapters.site_keys]

    before = outputs()
    with torch.no_grad():
        adapters.lora_B[sites[0].key].add_(1.0)
    after_b = outputs()
    assert not torch.equal(before[0], after_b[0]) and torch.equal(before[1], after_b[1])
    with torch.no_grad():
        adapters.shared_A.add_(1.0)
    after_a = outputs()
    assert not torch.equal(after_b[0], after_a[0]) and not torch.equal(after_b[1], after_a[1])


def test_count_params_closed_forms():
    sites = ['s%d' % i for i in range(12)]
    dims = [(64, 64)] * 12
    assert count_params('vanilla', sites, 4, dims).stored_count == 6144
    assert count_params('augmodule', sites, 4, dims).stored_count == 3528
    assert count_params('augmodule', sites, 4, dims).stored_bytes == 3528 * 8
    frozen = count_params('frozen_A', sites, 4, dims)
    assert frozen.trainable_count == 12 * 4 * 64 and frozen.stored_count == 6144
    assert count_params('slora', sites, 4, dims).stored_count == 256 + 12 * 256


@pytest.mark.parametrize('variant', ['vanilla', 'frozen_A', 'slora', 'augmodule'])
def test_rank_zero_counts_nothing(variant):
    assert count_params(variant, ['a', 'b'], 0, [(8, 8), (8, 16)]) == (0, 0, 0)


def test_shared_a_requires_one_input_dim():
    with pytest.raises(InjectionSiteError):
        count_params('slora', ['a', 'b'], 2, [(8, 8), (16, 8)])


def test_augmodule_stores_less_than_vanilla_on_random_configs():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n_sites, D = int(rng.integers(2, 20)), int(rng.integers(16, 128))
        r = int(rng.integers(1, D // 4 + 1))
        dims = [(D, int(rng.integers(8, 4 * D))) for _ in range(n_sites)]
        sites = list(range(n_sites))
        assert count_params('augmodule', sites, r, dims).stored_count < count_params('vanilla', sites, r, dims).stored_count


@pytest.mark.parametrize('variant', ['vanilla', 'frozen_A', 'slora', 'augmodule'])
def test_counts_match_model_enumeration_and_file_payload(tiny_cfg, frozen_model, tmp_path, variant):
    adapters = build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=0, seed=1, variant=variant)
    counts = count_adapter_set(adapters)
    assert counts.trainable_count == sum(p.numel() for p in adapters.trainable_parameters())
    assert counts.stored_count == sum(t.numel() for t in adapters.stored_tensors().values())
    payload = save_adapter_set(adapters, tmp_path / 'task.bin')
    assert payload == counts.stored_bytes
    _, _, payload_read = file_utils.read_container(tmp_path / 'task.bin', file_utils.MAGIC_ADAPTER)
    assert payload_read == counts.stored_bytes


def test_adapter_file_round_trip(tiny_cfg, frozen_model, tmp_path):
    adapters = build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=3, seed=1)
    with torch.no_grad():
        for p in adapters.parameters():
            p.normal_()
    save_adapter_set(adapters, tmp_path / 'a.bin')
    loaded = load_adapter_set(tmp_path / 'a.bin')
    assert loaded.task_id == 3 and loaded.variant == adapters.variant and loaded.sites == adapters.sites
    for name, val in adapters.stored_tensors().items():
        assert torch.equal(val, loaded.stored_tensors()[name])
    save_adapter_set(loaded, tmp_path / 'b.bin')
    assert (tmp_path / 'a.bin').read_bytes() == (tmp_path / 'b.bin').read_bytes()


def test_sites_must_follow_start_block():
    with pytest.raises(InjectionOrderError):
        AdapterSet('augmodule', [SiteId(2, 'mlp_in')], {'block2_mlp_in': (16, 32)}, rank=2, start_block=2,
                   embed_dim=16)


def test_inject_eject_restores_frozen_forward(tiny_cfg, frozen_model, images, heatmaps):
    bare = frozen_model({'images': images, 'heatmaps': heatmaps})['mask_logits'].clone()
    adapters = build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=0, seed=2)
    with torch.no_grad():
        for p in adapters.parameters():
            p.normal_()
    handle = inject(frozen_model, adapters)
    adapted = handle({'images': images, 'heatmaps': heatmaps})['mask_logits'].clone()
    assert not torch.equal(adapted, bare)
    model = handle.eject()
    assert torch.equal(model({'images': images, 'heatmaps': heatmaps})['mask_logits'], bare)
    with pytest.raises(StateError):
        handle.encode(images)


def test_empty_site_list_is_a_no_op(frozen_model, images, heatmaps):
    adapters = AdapterSet('augmodule', [], {}, rank=2, start_block=2, embed_dim=16)
    bare = frozen_model({'images': images, 'heatmaps': heatmaps})['mask_logits'].clone()
    adapted = inject(frozen_model, adapters)({'images': images, 'heatmaps': heatmaps})['mask_logits']
    assert torch.equal(bare, adapted)


def test_alternating_adapter_sets_are_reproducible(tiny_cfg, frozen_model, images, heatmaps):
    sets = []
    for seed in (1, 2):
        adapters = build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=seed, seed=seed)
        with torch.no_grad():
            for p in adapters.parameters():
                p.normal_(generator=torch.Generator().manual_seed(seed))
        sets.append(adapters)
    outs = [frozen_model({'images': images, 'heatmaps': heatmaps}, adapters=s)['mask_logits'].clone() for s in sets]
    again = [frozen_model({'images': images, 'heatmaps': heatmaps}, adapters=s)['mask_logits'].clone()
             for s in reversed(sets)]
    assert torch.equal(outs[0], again[1]) and torch.equal(outs[1], again[0])
    assert not torch.equal(outs[0], outs[1])


def test_adapter_gradients_match_finite_differences():
    g = torch.Generator().manual_seed(5)
    W, X = _randn(g, 5, 4), _randn(g, 3, 4)
    A, B, C, P = _randn(g, 2, 4), _randn(g, 5, 2), _randn(g, 2, 2), _randn(g, 3, 2)

    def loss(y):
        return torch.tanh(y).pow(2).sum()

    checks = [
        (lambda a: loss(forward_aug(W, X, a, B, C, P)), A),
        (lambda b: loss(forward_aug(W, X, A, b, C, P)), B),
        (lambda c: loss(forward_aug(W, X, A, B, c, P)), C),
        (lambda p: loss(forward_aug(W, X, A, B, C, p)), P),
        (lambda a: loss(forward_vanilla(W, X, a, B)), A),
        (lambda b: loss(forward_slora(W, X, A, b)), B),
    ]
    for f, x in checks:
        assert tensor_utils.grad_check(f, x) < 1e-4


class _PromptProjection(torch.nn.Module):
    def __init__(self, adapters):
        super().__init__()
        self.adapters = adapters

    def forward(self, heatmap_tokens):
        return self.adapters.prompt_projection(heatmap_tokens)


def test_prompt_projection_gradients():
    adapters = AdapterSet('augmodule', [SiteId(2, 'mlp_in')], {'block2_mlp_in': (4, 8)}, rank=3, start_block=1,
                          embed_dim=4)
    with torch.no_grad():
        adapters.prompt_weight.copy_(torch.tensor([0.3, -0.2, 0.5]))
        adapters.prompt_bias.copy_(torch.tensor([0.1, 0.0, -0.4]))
    projection = _PromptProjection(adapters)
    tokens = torch.linspace(0, 1, 6, dtype=torch.float64).reshape(1, 6)
    assert adapters.prompt_projection(tokens).shape == (1, 6, 3)

    def through(name):
        return lambda value: torch.func.functional_call(
            projection, {'adapters.%s' % name: value}, (tokens,)).sin().sum()

    assert tensor_utils.grad_check(through('prompt_weight'), adapters.prompt_weight.detach()) < 1e-6
    assert tensor_utils.grad_check(through('prompt_bias'), adapters.prompt_bias.detach()) < 1e-6
    assert tensor_utils.grad_check(lambda h: adapters.prompt_projection(h).sin().sum(), tokens) < 1e-6


@pytest.mark.parametrize('variant,expected', [('vanilla', 0), ('frozen_A', 0), ('slora', 2 * 16),
                                              ('augmodule', 2 * 16 + 2 * 2)])
def test_empty_site_list_counts_what_is_stored(tmp_path, variant, expected):
    adapters = AdapterSet(variant, [], {}, rank=2, start_block=2, embed_dim=16)
    counts = count_adapter_set(adapters)
    assert counts.stored_count == expected
    assert counts.stored_count == sum(t.numel() for t in adapters.stored_tensors().values())
    assert counts.trainable_count == sum(p.numel() for p in adapters.trainable_parameters())
    assert save_adapter_set(adapters, tmp_path / 'empty.bin') == counts.stored_bytes == expected * 8
    assert count_params(variant, [], 0, [], embed_dim=16) == (0, 0, 0)

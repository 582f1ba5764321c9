import numpy as np
import pytest
import torch

from augseg.continual import (ModuleSet, baseline_sequential, build_base_splits, build_task_stream, evaluate_dataset,
                              infer_with_adapter, infer_with_selection, load_adapter_set, load_run, pretrain_base,
                              run_continual, save_adapter_set, train_task)
from augseg.continual.harness import _SEED_ADAPTER_INIT, _SEED_TRAIN
from augseg.continual.run_record import summary_without_timing
from augseg.continual.train_utils import derive_seed
from augseg.models import build_network
from augseg.models.adapters import build_adapter_set
from augseg.models.selector import EmbeddingBuffer, train_selector
from augseg.utils import common_utils
from augseg.utils.exceptions import StateError, ValidationError


@pytest.fixture
def stream(tiny_cfg):
    return build_task_stream(tiny_cfg, seed=0)


def _perturbed_adapters(model, cfg, task_id, seed):
    adapters = build_adapter_set(model, cfg.ADAPTER, task_id=task_id, seed=seed)
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in adapters.parameters():
            p.add_(torch.randn(p.shape, generator=g, dtype=p.dtype) * 0.1)
    return adapters.freeze()


def test_derive_seed_is_stable_and_separates_purposes():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert len({derive_seed(0, t, p) for t in range(5) for p in range(1, 5)}) == 20
    assert 0 <= derive_seed(123, 4) < 2 ** 31


def test_oracle_run_has_exactly_zero_forgetting(tiny_cfg, frozen_model, stream, tmp_path):
    record = run_continual(frozen_model, stream, tiny_cfg, mode='samcl-oracle', run_dir=tmp_path / 'run')
    metrics = record.continual_metrics()
    for metric in ('miou', 'mf1', 'mmae'):
        assert metrics[metric]['fm'] == 0.0
        values = record.matrices[metric].values
        for i in range(3):
            for j in range(i + 1):
                assert values[i, j] == values[j, j]
    assert record.summary()['complete']
    assert all(acc is not None for acc in record.selection_accuracy)


def test_selection_route_matches_direct_adapter_route(tiny_cfg, frozen_model, images, heatmaps):
    k = tiny_cfg.ADAPTER.START_BLOCK
    module_set = ModuleSet()
    buffer = EmbeddingBuffer(10, frozen_model.embed_dim)
    for t in range(2):
        module_set.add(t, _perturbed_adapters(frozen_model, tiny_cfg, t, seed=10 + t))
        embs = torch.randn(6, frozen_model.embed_dim, generator=torch.Generator().manual_seed(t), dtype=torch.float64)
        buffer.add(t, embs + 3.0 * t, seed=t)
    selector, _ = train_selector(buffer, tiny_cfg.SELECTOR, seed=0)

    for i in range(images.shape[0]):
        img, hm = images[i:i + 1], heatmaps[i:i + 1]
        logits, iou, selection = infer_with_selection(frozen_model, module_set, selector, img, hm, k)
        direct_logits, direct_iou = infer_with_adapter(frozen_model, module_set.get(selection.task_id), img, hm)
        assert selection.block == k
        assert torch.equal(logits, direct_logits) and torch.equal(iou, direct_iou)
        full = frozen_model({'images': img, 'heatmaps': hm}, adapters=module_set.get(selection.task_id))
        assert torch.allclose(logits, full['mask_logits'][0], rtol=0, atol=1e-12)


def test_runs_are_deterministic(tiny_cfg, frozen_model, stream):
    short = stream.truncate(2)
    a = run_continual(frozen_model, short, tiny_cfg, mode='samcl', seed=3)
    b = run_continual(frozen_model, short, tiny_cfg, mode='samcl', seed=3)
    assert summary_without_timing(a.summary()) == summary_without_timing(b.summary())


def test_stored_modules_are_never_rewritten(tiny_cfg, frozen_model, stream, tmp_path):
    run_continual(frozen_model, stream.truncate(1), tiny_cfg, mode='samcl', run_dir=tmp_path / 'one', seed=1)
    run_continual(frozen_model, stream, tiny_cfg, mode='samcl', run_dir=tmp_path / 'all', seed=1)
    first = tmp_path / 'one' / 'adapters' / 'task00.bin'
    later = tmp_path / 'all' / 'adapters' / 'task00.bin'
    assert common_utils.file_digest(first) == common_utils.file_digest(later)
    assert sorted(p.name for p in (tmp_path / 'all' / 'adapters').iterdir()) == \
        ['task00.bin', 'task01.bin', 'task02.bin']


def test_single_task_stream_has_no_forward_transfer(tiny_cfg, frozen_model, stream):
    record = run_continual(frozen_model, stream.truncate(1), tiny_cfg, mode='samcl')
    metrics = record.continual_metrics()['miou']
    assert metrics['ft'] is None and metrics['fm'] == 0.0
    assert metrics['aa'] == record.matrices['miou'].get(0, 0)


@pytest.mark.parametrize('mode', ['baseline-lora', 'baseline-slora', 'baseline-augmodule'])
def test_sequential_baselines_run(tiny_cfg, frozen_model, stream, mode):
    record = run_continual(frozen_model, stream.truncate(2), tiny_cfg, mode=mode)
    summary = record.summary()
    assert summary['mode'] == mode and summary['complete']
    assert summary['selection_accuracy'] == [None, None]
    assert summary['metrics']['miou']['ft'] is not None


def test_run_directory_can_be_reloaded(tiny_cfg, frozen_model, stream, tmp_path):
    run_dir = tmp_path / 'run'
    record = run_continual(frozen_model, stream.truncate(2), tiny_cfg, mode='samcl', run_dir=run_dir)
    for name in ('summary.json', 'manifest.json', 'config_echo.yaml', 'accuracy_miou.csv', 'buffer.bin',
                 'selector.bin', 'adapters/task00.bin', 'adapters/task01.bin'):
        assert (run_dir / name).exists(), name
    summary, matrices = load_run(run_dir)
    assert summary['metrics'] == record.continual_metrics()
    assert np.array_equal(np.isnan(matrices['miou'].values), np.isnan(record.matrices['miou'].values))

    loaded = load_adapter_set(run_dir / 'adapters' / 'task01.bin')
    assert save_adapter_set(loaded, tmp_path / 'copy.bin') > 0
    assert (tmp_path / 'copy.bin').read_bytes() == (run_dir / 'adapters' / 'task01.bin').read_bytes()


def test_module_set_is_write_once(tiny_cfg, frozen_model):
    module_set = ModuleSet()
    module_set.add(0, build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=0, seed=0))
    with pytest.raises(StateError):
        module_set.add(0, build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=0, seed=1))
    with pytest.raises(StateError):
        module_set.get(1)


def test_unfrozen_base_is_rejected(tiny_cfg, stream):
    with pytest.raises(StateError):
        run_continual(build_network(tiny_cfg.MODEL), stream, tiny_cfg, mode='samcl')


def test_train_task_without_epochs_returns_initial_adapter(tiny_cfg, frozen_model, stream):
    tiny_cfg.OPTIMIZATION.NUM_EPOCHS = 0
    adapters = build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=0, seed=7)
    before = common_utils.state_dict_digest(adapters.state_dict())
    trained = train_task(frozen_model, adapters, stream[0].train_set, tiny_cfg, seed=1)
    assert trained is adapters
    assert common_utils.state_dict_digest(trained.state_dict()) == before


def test_seeded_task_training_is_deterministic(tiny_cfg, frozen_model, stream):
    digests = []
    for _ in range(2):
        adapters = build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=0, seed=7)
        initial = common_utils.state_dict_digest(adapters.state_dict())
        train_task(frozen_model, adapters, stream[0].train_set, tiny_cfg, seed=1)
        digests.append(common_utils.state_dict_digest(adapters.state_dict()))
    assert digests[0] == digests[1]
    assert digests[0] != initial


def test_pretraining_with_one_seed_is_bit_identical(tiny_cfg):
    train_set, test_set = build_base_splits(tiny_cfg, 0)
    digests, reports = [], []
    for _ in range(2):
        common_utils.set_random_seed(0)
        model, report = pretrain_base(build_network(tiny_cfg.MODEL), train_set, test_set, tiny_cfg, seed=0)
        assert model.is_frozen
        digests.append(common_utils.state_dict_digest(model.state_dict()))
        reports.append(report)
    assert digests[0] == digests[1]
    assert reports[0] == reports[1]


def test_selection_runs_the_encoder_and_selector_once(tiny_cfg, frozen_model, images, heatmaps, monkeypatch):
    k = tiny_cfg.ADAPTER.START_BLOCK
    module_set = ModuleSet()
    buffer = EmbeddingBuffer(10, frozen_model.embed_dim)
    for t in range(2):
        module_set.add(t, _perturbed_adapters(frozen_model, tiny_cfg, t, seed=20 + t))
        embs = torch.randn(6, frozen_model.embed_dim, generator=torch.Generator().manual_seed(t), dtype=torch.float64)
        buffer.add(t, embs + 3.0 * t, seed=t)
    selector, _ = train_selector(buffer, tiny_cfg.SELECTOR, seed=0)

    calls = {'embed': 0, 'selector': 0, 'blocks': [0] * frozen_model.num_blocks}
    embed = frozen_model.encoder.embed

    def counting_embed(x):
        calls['embed'] += 1
        return embed(x)

    def full_encode(*args, **kwargs):
        raise AssertionError('selection must not run a second full encoder pass')

    monkeypatch.setattr(frozen_model.encoder, 'embed', counting_embed)
    monkeypatch.setattr(frozen_model, 'encode', full_encode)
    selector.register_forward_hook(lambda *_: calls.__setitem__('selector', calls['selector'] + 1))
    for b, block in enumerate(frozen_model.encoder.blocks):
        block.register_forward_hook(lambda *_, b=b: calls['blocks'].__setitem__(b, calls['blocks'][b] + 1))

    infer_with_selection(frozen_model, module_set, selector, images[:1], heatmaps[:1], k)
    assert calls['embed'] == 1
    assert calls['selector'] == 1
    assert calls['blocks'] == [1] * frozen_model.num_blocks


def test_baseline_sequential_reuses_one_adapter(tiny_cfg, frozen_model, stream, tmp_path):
    record = baseline_sequential(frozen_model, stream.truncate(2), tiny_cfg, variant='vanilla',
                                 run_dir=tmp_path / 'run', seed=2)
    summary = record.summary()
    assert summary['mode'] == 'baseline-lora' and summary['variant'] == 'vanilla'
    assert summary['selection_accuracy'] == [None, None]
    first = load_adapter_set(tmp_path / 'run' / 'adapters' / 'task00.bin')
    second = load_adapter_set(tmp_path / 'run' / 'adapters' / 'task01.bin')
    assert common_utils.state_dict_digest(first.state_dict()) != common_utils.state_dict_digest(second.state_dict())
    with pytest.raises(ValidationError):
        baseline_sequential(frozen_model, stream, tiny_cfg, variant='frozen_A')


def test_single_task_baseline_matches_one_trained_task(tiny_cfg, frozen_model, stream):
    single = stream.truncate(1)
    baseline = baseline_sequential(frozen_model, single, tiny_cfg, variant='vanilla', seed=5)

    tiny_cfg.ADAPTER.VARIANT = 'vanilla'
    oracle = run_continual(frozen_model, single, tiny_cfg, mode='samcl-oracle', seed=5)
    adapters = build_adapter_set(frozen_model, tiny_cfg.ADAPTER, task_id=0, seed=derive_seed(5, 0, _SEED_ADAPTER_INIT))
    train_task(frozen_model, adapters, single[0].train_set, tiny_cfg, seed=derive_seed(5, 0, _SEED_TRAIN))
    direct = evaluate_dataset(frozen_model, single[0].test_set, route=adapters.freeze()).scores

    for metric, value in direct.items():
        assert baseline.matrices[metric].get(0, 0) == value
        assert oracle.matrices[metric].get(0, 0) == value

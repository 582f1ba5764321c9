"""
End-to-end checks on the default configuration. They pre-train the full base model and run
the five-domain stream several times, so they only run with `pytest -m slow`.
"""
import numpy as np
import pytest
import torch

from augseg.config import get_default_config, validate_config
from augseg.continual import (ablate, build_base_splits, build_task_stream, evaluate_dataset, pretrain_base,
                              run_continual)
from augseg.continual.eval_utils import compute_embeddings
from augseg.models import build_network
from augseg.models.selector import EmbeddingBuffer, selection_accuracy, train_selector
from augseg.utils import common_utils

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


@pytest.fixture(scope='module')
def default_cfg():
    return validate_config(get_default_config())


@pytest.fixture(scope='module')
def base_model(default_cfg):
    common_utils.set_random_seed(0)
    train_set, test_set = build_base_splits(default_cfg, 0)
    model, report = pretrain_base(build_network(default_cfg.MODEL), train_set, test_set, default_cfg, 0)
    assert report['miou'] >= default_cfg.PRETRAIN.MIOU_THRESHOLD
    return model


@pytest.fixture(scope='module')
def default_stream(default_cfg):
    return build_task_stream(default_cfg, 0)


@pytest.fixture(scope='module')
def base_scores(base_model, default_stream):
    return {task.domain: evaluate_dataset(base_model, task.test_set).scores['miou'] for task in default_stream}


@pytest.fixture(scope='module')
def oracle_record(default_cfg, base_model, default_stream):
    return run_continual(base_model, default_stream, default_cfg, mode='samcl-oracle', seed=0)


def test_camouflage_is_harder_than_bright_blobs(base_scores):
    assert base_scores['camouflage-texture'] <= base_scores['bright-blob'] - 0.1


def test_adapters_have_headroom_over_the_base(base_scores, oracle_record, default_stream):
    for j, task in enumerate(default_stream):
        assert oracle_record.matrices['miou'].get(j, j) >= base_scores[task.domain] + 0.1, task.domain


def test_domains_are_separable_at_the_split_block(default_cfg, base_model, default_stream):
    k = default_cfg.ADAPTER.START_BLOCK
    buffer = EmbeddingBuffer(default_cfg.DATA_CONFIG.NUM_TRAIN, base_model.embed_dim)
    embs, labels = [], []
    for t, task in enumerate(default_stream):
        buffer.add(t, compute_embeddings(base_model, task.train_set, k), seed=t)
        test_embs = compute_embeddings(base_model, task.test_set, k)
        embs.append(test_embs)
        labels.append(np.full(test_embs.shape[0], t, dtype=np.int64))
    selector, _ = train_selector(buffer, default_cfg.SELECTOR, seed=0)
    assert selection_accuracy(selector, torch.from_numpy(np.concatenate(embs)), np.concatenate(labels)) >= 0.95


def test_oracle_routing_never_forgets(oracle_record):
    record = oracle_record
    for metric, vals in record.continual_metrics().items():
        assert vals['fm'] == 0.0, metric


@pytest.mark.parametrize('seed', SEEDS)
def test_module_selection_beats_sequential_lora(default_cfg, base_model, default_stream, seed):
    samcl = run_continual(base_model, default_stream, default_cfg, mode='samcl', seed=seed)
    baseline = run_continual(base_model, default_stream, default_cfg, mode='baseline-lora', seed=seed)
    assert samcl.selection_accuracy[-1] >= 0.95
    fm_samcl = samcl.continual_metrics()['miou']['fm']
    fm_baseline = baseline.continual_metrics()['miou']['fm']
    assert fm_baseline > 0.05
    assert fm_samcl < fm_baseline


def test_buffer_size_barely_matters(default_cfg, base_model, default_stream, tmp_path):
    report = ablate('buffer-sweep', default_cfg, base_model, default_stream, tmp_path)
    assert report['aggregate']['selection_accuracy']['spread'] <= 0.02


def test_task_order_robustness(default_cfg, base_model, default_stream, tmp_path):
    report = ablate('order-sweep', default_cfg, base_model, default_stream, tmp_path)
    assert len({r['order'] for r in report['rows']}) == default_cfg.ABLATION.NUM_PERMUTATIONS
    oracle, baseline = report['aggregate']['samcl-oracle'], report['aggregate']['baseline-lora']
    assert oracle['miou_fm']['spread'] == 0.0
    assert oracle['miou_aa']['spread'] < baseline['miou_aa']['spread']

import sys
from pathlib import Path

import pytest
import torch

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))
sys.path.insert(0, str(ROOT / 'tools'))

from augseg.config import get_default_config, validate_config  # noqa: E402
from augseg.models import build_network  # noqa: E402
from augseg.utils import common_utils  # noqa: E402


def make_tiny_config():
    cfg = get_default_config()
    m = cfg.MODEL
    m.IMAGE_SIZE, m.PATCH_SIZE, m.EMBED_DIM, m.NUM_BLOCKS, m.NUM_HEADS = 16, 4, 16, 4, 2
    m.MLP_RATIO, m.DECODER_HIDDEN = 2, 16

    d = cfg.DATA_CONFIG
    d.DOMAINS = ['bright-blob', 'shadow-region', 'noisy-lesion']
    d.NUM_TRAIN, d.NUM_TEST, d.NUM_PROMPTS = 6, 4, 2

    p = cfg.PRETRAIN
    p.NUM_TRAIN, p.NUM_TEST, p.NUM_EPOCHS, p.BATCH_SIZE, p.MIOU_THRESHOLD = 8, 4, 1, 4, 0.0

    cfg.ADAPTER.RANK = 2
    cfg.ADAPTER.START_BLOCK = 2
    cfg.OPTIMIZATION.NUM_EPOCHS = 1
    cfg.OPTIMIZATION.BATCH_SIZE = 3

    s = cfg.SELECTOR
    s.BUFFER_SIZE, s.NUM_EPOCHS, s.BATCH_SIZE = 5, 3, 8
    cfg.CONTINUAL.LOGGER_ITER_INTERVAL = 0
    return validate_config(cfg)


@pytest.fixture
def tiny_cfg():
    return make_tiny_config()


@pytest.fixture
def frozen_model(tiny_cfg):
    common_utils.set_random_seed(0)
    model = build_network(tiny_cfg.MODEL)
    return model.freeze()


@pytest.fixture
def images(tiny_cfg):
    g = torch.Generator().manual_seed(1)
    size = tiny_cfg.MODEL.IMAGE_SIZE
    return torch.rand(2, 3, size, size, generator=g, dtype=torch.float64)


@pytest.fixture
def heatmaps(frozen_model):
    prompts = [[[1, 1], [6, 9]], [[12, 3], [15, 15]]]
    return frozen_model.make_heatmaps(prompts)


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    root = tmp_path / 'output'
    monkeypatch.setenv('AUGSEG_OUTPUT_ROOT', str(root))
    return root

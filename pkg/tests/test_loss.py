import math

import pytest
import torch

from augseg.config import get_default_config
from augseg.utils import loss_utils, tensor_utils
from augseg.utils.exceptions import DimensionError, ValidationError


@pytest.fixture
def loss_fn():
    return loss_utils.SegmentationLoss(get_default_config().OPTIMIZATION.LOSS)


def test_uniform_prediction_hand_values(loss_fn):
    logits = torch.zeros(1, 2, 2, dtype=torch.float64)
    gt = torch.ones(1, 2, 2, dtype=torch.float64)
    loss, tb_dict = loss_fn(logits, gt, torch.zeros(1, dtype=torch.float64))
    focal = 0.25 * 0.5 ** 2 * math.log(2.0)
    assert tb_dict['loss_focal'] == pytest.approx(focal)
    assert tb_dict['loss_dice'] == pytest.approx(2.0 / 7.0)
    assert tb_dict['loss_iou'] == 0.0
    assert loss.item() == pytest.approx(focal + 10.0 * 2.0 / 7.0)


def test_saturated_correct_prediction_has_near_zero_loss(loss_fn):
    gt = torch.zeros(2, 4, 4, dtype=torch.float64)
    gt[:, 1:3, 1:3] = 1
    logits = (gt * 2 - 1) * 40.0
    loss, tb_dict = loss_fn(logits, gt, torch.ones(2, dtype=torch.float64))
    assert tb_dict['loss_iou'] == 0.0
    assert loss.item() < 0.1


def test_non_binary_target_is_rejected(loss_fn):
    gt = torch.full((1, 2, 2), 0.5, dtype=torch.float64)
    with pytest.raises(ValidationError):
        loss_fn(torch.zeros(1, 2, 2, dtype=torch.float64), gt, torch.zeros(1, dtype=torch.float64))


def test_shape_mismatches_are_rejected(loss_fn):
    with pytest.raises(DimensionError):
        loss_fn(torch.zeros(1, 2, 2), torch.zeros(1, 2, 3), torch.zeros(1))
    with pytest.raises(DimensionError):
        loss_fn(torch.zeros(2, 2, 2), torch.zeros(2, 2, 2), torch.zeros(3))


def test_unbatched_inputs_are_accepted(loss_fn):
    loss, _ = loss_fn(torch.zeros(2, 2, dtype=torch.float64), torch.ones(2, 2, dtype=torch.float64),
                      torch.tensor(0.0, dtype=torch.float64))
    assert loss.dim() == 0


def test_loss_gradients_match_finite_differences(loss_fn):
    g = torch.Generator().manual_seed(2)
    logits = torch.randn(2, 3, 3, generator=g, dtype=torch.float64)
    gt = (torch.rand(2, 3, 3, generator=g, dtype=torch.float64) > 0.5).to(torch.float64)
    iou = torch.rand(2, generator=g, dtype=torch.float64)
    assert tensor_utils.grad_check(lambda x: loss_fn(x, gt, iou)[0], logits) < 1e-4
    assert tensor_utils.grad_check(lambda p: loss_fn(logits, gt, p)[0], iou) < 1e-4


def test_binary_mask_iou():
    pred = torch.tensor([[[1, 1], [0, 0]], [[0, 0], [0, 0]]], dtype=torch.float64)
    gt = torch.tensor([[[1, 0], [0, 0]], [[0, 0], [0, 0]]], dtype=torch.float64)
    assert loss_utils.binary_mask_iou(pred, gt).tolist() == [0.5, 1.0]

import torch
import torch.nn as nn

from .exceptions import DimensionError, ValidationError


class SigmoidFocalClassificationLoss(nn.Module):
    """
    Sigmoid focal cross entropy loss.
    """

    def __init__(self, gamma: float = 2.0, alpha: float = 0.25):
        """
        Args:
            gamma: Weighting parameter to balance loss for hard and easy examples.
            alpha: Weighting parameter to balance loss for positive and negative examples.
        """
        super(SigmoidFocalClassificationLoss, self).__init__()
        self.alpha = alpha
        self.gamma = gamma

    @staticmethod
    def sigmoid_cross_entropy_with_logits(input: torch.Tensor, target: torch.Tensor):
        """ PyTorch Implementation for tf.nn.sigmoid_cross_entropy_with_logits:
            max(x, 0) - x * z + log(1 + exp(-abs(x)))

        Args:
            input: (B, H, W) float tensor. Predicted mask logits
            target: (B, H, W) float tensor. Binary mask targets

        Returns:
            loss: (B, H, W) float tensor. Sigmoid cross entropy loss without reduction
        """
        loss = torch.clamp(input, min=0) - input * target + \
               torch.log1p(torch.exp(-torch.abs(input)))
        return loss

    def forward(self, input: torch.Tensor, target: torch.Tensor):
        """
        Args:
            input: (B, H, W) float tensor. Predicted mask logits
            target: (B, H, W) float tensor. Binary mask targets

        Returns:
            loss: (B,) focal loss averaged over pixels
        """
        pred_sigmoid = torch.sigmoid(input)
        alpha_weight = target * self.alpha + (1 - target) * (1 - self.alpha)
        pt = target * (1.0 - pred_sigmoid) + (1.0 - target) * pred_sigmoid
        focal_weight = alpha_weight * torch.pow(pt, self.gamma)

        bce_loss = self.sigmoid_cross_entropy_with_logits(input, target)

        loss = focal_weight * bce_loss
        return loss.flatten(1).mean(dim=1)


class SoftDiceLoss(nn.Module):
    """1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps) per image, p = sigmoid(logits)."""

    def __init__(self, smooth: float = 1.0):
        super(SoftDiceLoss, self).__init__()
        self.smooth = smooth

    def forward(self, input: torch.Tensor, target: torch.Tensor):
        prob = torch.sigmoid(input).flatten(1)
        target = target.flatten(1)
        inter = (prob * target).sum(dim=1)
        return 1.0 - (2.0 * inter + self.smooth) / (prob.sum(dim=1) + target.sum(dim=1) + self.smooth)


def binary_mask_iou(pred_mask, gt_mask):
    """
    Args:
        pred_mask, gt_mask: (B, H, W) {0, 1} tensors
    Returns:
        (B,) IoU, 1.0 where both masks are empty
    """
    pred_mask = pred_mask.flatten(1)
    gt_mask = gt_mask.flatten(1)
    inter = (pred_mask * gt_mask).sum(dim=1)
    union = ((pred_mask + gt_mask) > 0).to(pred_mask.dtype).sum(dim=1)
    return torch.where(union > 0, inter / union.clamp(min=1), torch.ones_like(union))


def check_binary_target(gt_mask):
    if not torch.all((gt_mask == 0) | (gt_mask == 1)):
        raise ValidationError('ground-truth mask must be binary (values in {0, 1})')


class SegmentationLoss(nn.Module):
    """
    focal + DICE_WEIGHT * dice + IOU_WEIGHT * (predicted_iou - IoU(logits > 0, gt))^2

    The IoU target is computed from the thresholded prediction and carries no gradient.
    """

    def __init__(self, loss_cfg):
        super().__init__()
        self.focal = SigmoidFocalClassificationLoss(gamma=loss_cfg.FOCAL_GAMMA, alpha=loss_cfg.FOCAL_ALPHA)
        self.dice = SoftDiceLoss(smooth=loss_cfg.DICE_SMOOTH)
        self.dice_weight = loss_cfg.DICE_WEIGHT
        self.iou_weight = loss_cfg.IOU_WEIGHT

    def forward(self, mask_logits, gt_mask, predicted_iou):
        """
        Args:
            mask_logits: (B, H, W) or (H, W)
            gt_mask: same shape as mask_logits, binary
            predicted_iou: (B,) or scalar
        Returns:
            loss: scalar tensor, mean over the batch
            tb_dict: per-component floats
        """
        if mask_logits.dim() == 2:
            mask_logits, gt_mask = mask_logits.unsqueeze(0), gt_mask.unsqueeze(0)
            predicted_iou = predicted_iou.reshape(1)
        if mask_logits.shape != gt_mask.shape:
            raise DimensionError('mask logits %s and ground truth %s differ'
                                 % (tuple(mask_logits.shape), tuple(gt_mask.shape)))
        if predicted_iou.shape != mask_logits.shape[:1]:
            raise DimensionError('predicted_iou %s does not match batch %d'
                                 % (tuple(predicted_iou.shape), mask_logits.shape[0]))
        gt_mask = gt_mask.to(mask_logits.dtype)
        check_binary_target(gt_mask)

        loss_focal = self.focal(mask_logits, gt_mask)
        loss_dice = self.dice(mask_logits, gt_mask)
        with torch.no_grad():
            actual_iou = binary_mask_iou((mask_logits > 0).to(mask_logits.dtype), gt_mask)
        loss_iou = (predicted_iou - actual_iou) ** 2

        loss = (loss_focal + self.dice_weight * loss_dice + self.iou_weight * loss_iou).mean()
        tb_dict = {
            'loss_focal': loss_focal.mean().item(),
            'loss_dice': loss_dice.mean().item(),
            'loss_iou': loss_iou.mean().item(),
            'loss': loss.item(),
        }
        return loss, tb_dict

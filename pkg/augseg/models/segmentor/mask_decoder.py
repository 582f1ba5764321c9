import torch
import torch.nn as nn

from ...utils import tensor_utils
from ...utils.exceptions import DimensionError


class MaskDecoder(nn.Module):
    """
    Per-token two-layer MLP over [encoder feature, heatmap value] producing mask logits,
    plus an IoU head on the token-averaged hidden state.

    With DECODER_UPSAMPLE == 'pixel_shuffle' every token emits a patch_size x patch_size tile of
    logits; with 'nearest' it emits one logit that is repeated over its patch.
    """

    def __init__(self, model_cfg):
        super().__init__()
        self.patch_size = model_cfg.PATCH_SIZE
        self.grid = (model_cfg.IMAGE_SIZE // self.patch_size, model_cfg.IMAGE_SIZE // self.patch_size)
        self.upsample = model_cfg.DECODER_UPSAMPLE
        self.embed_dim = model_cfg.EMBED_DIM
        out_per_token = self.patch_size ** 2 if self.upsample == 'pixel_shuffle' else 1

        self.mlp_hidden = nn.Linear(self.embed_dim + 1, model_cfg.DECODER_HIDDEN)
        self.mlp_logits = nn.Linear(model_cfg.DECODER_HIDDEN, out_per_token)
        self.iou_head = nn.Linear(model_cfg.DECODER_HIDDEN, 1)

    def forward(self, features, heatmap_tokens):
        """
        Args:
            features: (B, N, D) final encoder tokens
            heatmap_tokens: (B, N) prompt heatmap on the patch grid
        Returns:
            mask_logits: (B, H, W)
            predicted_iou: (B,) in [0, 1]
        """
        B, N, D = features.shape
        if D != self.embed_dim or N != self.grid[0] * self.grid[1]:
            raise DimensionError('decoder expects (B, %d, %d) features, got %s'
                                 % (self.grid[0] * self.grid[1], self.embed_dim, tuple(features.shape)))
        if heatmap_tokens.shape != (B, N):
            raise DimensionError('heatmap tokens %s do not match features %s'
                                 % (tuple(heatmap_tokens.shape), tuple(features.shape)))

        x = torch.cat([features, heatmap_tokens.unsqueeze(-1)], dim=-1)
        hidden = tensor_utils.gelu(tensor_utils.linear(x, self.mlp_hidden.weight, self.mlp_hidden.bias))
        out = tensor_utils.linear(hidden, self.mlp_logits.weight, self.mlp_logits.bias)

        gh, gw, p = self.grid[0], self.grid[1], self.patch_size
        if self.upsample == 'pixel_shuffle':
            logits = out.view(B, gh, gw, p, p).permute(0, 1, 3, 2, 4).reshape(B, gh * p, gw * p)
        else:
            logits = out.view(B, gh, gw).repeat_interleave(p, dim=1).repeat_interleave(p, dim=2)

        pooled = hidden.mean(dim=1)
        predicted_iou = torch.sigmoid(tensor_utils.linear(pooled, self.iou_head.weight, self.iou_head.bias)).squeeze(-1)
        return logits, predicted_iou

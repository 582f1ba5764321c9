from collections import namedtuple

import numpy as np
import torch
import torch.nn as nn
from easydict import EasyDict

from ...config import SITE_KINDS, to_plain_dict
from ...utils import file_utils, tensor_utils
from ...utils.exceptions import DimensionError, InjectionOrderError, InjectionSiteError
from ..adapters.lora import SiteId
from .mask_decoder import MaskDecoder
from .prompt_heatmap import make_heatmap
from .vit_encoder import ImageEncoder

EncoderOutput = namedtuple('EncoderOutput', ['activations', 'features'])


class PromptableSegmentor(nn.Module):
    """
    Tiny promptable segmenter: ViT-style image encoder, frozen after base pre-training, and a
    small mask decoder that also reads the prompt heatmap.

    activations[b] is the (B, H', W', D) output of block b, activations[0] the patch embedding.
    """

    def __init__(self, model_cfg):
        super().__init__()
        self.model_cfg = EasyDict(to_plain_dict(model_cfg))
        self.encoder = ImageEncoder(self.model_cfg)
        self.decoder = MaskDecoder(self.model_cfg)
        self.register_buffer('frozen', torch.zeros(1, dtype=torch.float64))
        self.to(tensor_utils.DTYPE)

    @property
    def embed_dim(self):
        return self.encoder.embed_dim

    @property
    def num_blocks(self):
        return self.encoder.num_blocks

    @property
    def grid(self):
        return self.encoder.grid

    @property
    def is_frozen(self):
        return bool(self.frozen.item())

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.frozen.fill_(1.0)
        self.eval()
        return self

    def injection_sites(self, start_block, kinds):
        return [SiteId(b, kind) for b in range(start_block + 1, self.num_blocks + 1) for kind in kinds]

    def site_dims(self, site):
        if not 1 <= site.block <= self.num_blocks or site.kind not in SITE_KINDS:
            raise InjectionSiteError('unknown injection site %s' % site.key)
        layer = self.encoder.blocks[site.block - 1].site_layer(site.kind)
        return layer.in_features, layer.out_features

    def check_adapters(self, adapters, extract_block=None):
        if adapters is None:
            return
        for site in adapters.sites:
            d_in, d_out = self.site_dims(site)
            if (d_in, d_out) != tuple(adapters.dims[site.key]):
                raise InjectionSiteError('site %s is (%d, %d) in the model but (%d, %d) in the adapter'
                                         % (site.key, d_in, d_out, *adapters.dims[site.key]))
            if extract_block is not None and site.block <= extract_block:
                raise InjectionOrderError('adapter site %s precedes extraction block %d' % (site.key, extract_block))

    def heatmap_tokens(self, heatmaps):
        """(B, H', W') -> (B, N)"""
        if heatmaps.dim() != 3 or tuple(heatmaps.shape[1:]) != self.grid:
            raise DimensionError('heatmaps must be (B, %d, %d), got %s' % (*self.grid, tuple(heatmaps.shape)))
        return heatmaps.reshape(heatmaps.shape[0], -1)

    def prompt_term(self, adapters, heatmaps):
        if adapters is None or not adapters.variant.uses_prompt or heatmaps is None:
            return None
        return adapters.prompt_projection(self.heatmap_tokens(heatmaps))

    def make_heatmaps(self, prompts_batch):
        """(B, K, 2) pixel prompts -> (B, H', W') heatmaps"""
        maps = [make_heatmap(p, self.grid, self.model_cfg.PATCH_SIZE, sigma=self.model_cfg.HEATMAP_SIGMA,
                             image_size=self.model_cfg.IMAGE_SIZE) for p in prompts_batch]
        return torch.from_numpy(np.stack(maps, axis=0)).to(tensor_utils.DTYPE)

    def check_images(self, images):
        expected = (self.model_cfg.IN_CHANNELS, self.model_cfg.IMAGE_SIZE, self.model_cfg.IMAGE_SIZE)
        if images.dim() != 4 or tuple(images.shape[1:]) != expected:
            raise DimensionError('images must be (B, %d, %d, %d), got %s' % (*expected, tuple(images.shape)))

    def encode(self, images, adapters=None, heatmaps=None, extract_block=None):
        """
        Args:
            images: (B, C, H, W)
            adapters: optional AdapterSet routed into its sites
            heatmaps: (B, H', W') prompt heatmaps, used by augmodule adapters
            extract_block: if given, adapters may only touch blocks after it
        Returns:
            EncoderOutput(activations: list of n+1 (B, H', W', D), features: (B, N, D))
        """
        self.check_images(images)
        self.check_adapters(adapters, extract_block)
        tokens = self.encoder.embed(images)
        activations = [self.encoder.to_grid(tokens)]
        tokens = self.encoder.run_blocks(tokens, 1, adapters=adapters, prompt_term=self.prompt_term(adapters, heatmaps),
                                         activations=activations)
        return EncoderOutput(activations, self.encoder.neck(tokens))

    def encode_prefix(self, images, k):
        """Frozen blocks 1..k only; returns the block-k activation (B, H', W', D)."""
        self.check_images(images)
        if not 0 <= k <= self.num_blocks:
            raise IndexError('block index %d out of range [0, %d]' % (k, self.num_blocks))
        tokens = self.encoder.embed(images)
        for block in self.encoder.blocks[:k]:
            tokens = block(tokens)
        return self.encoder.to_grid(tokens)

    def resume(self, activation_k, k, adapters=None, heatmaps=None):
        """Continue from a cached block-k activation through blocks k+1..n."""
        self.check_adapters(adapters, extract_block=k)
        tokens = self.encoder.to_tokens(activation_k)
        tokens = self.encoder.run_blocks(tokens, k + 1, adapters=adapters,
                                         prompt_term=self.prompt_term(adapters, heatmaps))
        return self.encoder.neck(tokens)

    def decode(self, features, heatmaps):
        """Returns (mask_logits (B, H, W), predicted_iou (B,))."""
        return self.decoder(features, self.heatmap_tokens(heatmaps))

    def forward(self, batch_dict, adapters=None):
        images, heatmaps = batch_dict['images'], batch_dict['heatmaps']
        features = self.encode(images, adapters=adapters, heatmaps=heatmaps).features
        mask_logits, predicted_iou = self.decode(features, heatmaps)
        batch_dict['mask_logits'] = mask_logits
        batch_dict['predicted_iou'] = predicted_iou
        return batch_dict

    def save_checkpoint(self, path, extra_meta=None):
        meta = {'model_cfg': to_plain_dict(self.model_cfg), 'frozen': self.is_frozen}
        if extra_meta:
            meta.update(extra_meta)
        tensors = {k: v for k, v in self.state_dict().items()}
        return file_utils.write_container(path, file_utils.MAGIC_BASE, meta, tensors)

    @classmethod
    def load_checkpoint(cls, path):
        meta, tensors, _ = file_utils.read_container(path, file_utils.MAGIC_BASE)
        model = cls(EasyDict(meta['model_cfg']))
        state = {k: torch.from_numpy(v) for k, v in tensors.items()}
        model.load_state_dict(state, strict=True)
        if meta.get('frozen', False):
            model.freeze()
        return model, meta

import math

import torch
import torch.nn as nn

from ...utils import tensor_utils
from ..adapters.lora import SiteId


class Attention(nn.Module):
    def __init__(self, d_model, nhead):
        super().__init__()
        self.nhead = nhead
        self.head_dim = d_model // nhead
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def split_heads(self, x):
        B, N, _ = x.shape
        return x.view(B, N, self.nhead, self.head_dim).transpose(1, 2)

    def attend(self, q, k, v):
        """q, k, v: (B, N, D) -> (B, N, D)"""
        B, N, D = q.shape
        q, k, v = self.split_heads(q), self.split_heads(k), self.split_heads(v)
        scores = tensor_utils.matmul(q, k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        out = tensor_utils.matmul(tensor_utils.softmax(scores, dim=-1), v)
        out = out.transpose(1, 2).reshape(B, N, D)
        return tensor_utils.linear(out, self.out_proj.weight, self.out_proj.bias)


class EncoderBlock(nn.Module):
    """
    Pre-norm transformer block. The query, value and mlp-in projections are injection sites:
    when an adapter set covers (block_idx, kind), the projection is routed through it.
    """
    SITE_LAYERS = {
        'attn_query': ('attn', 'q_proj'),
        'attn_value': ('attn', 'v_proj'),
        'mlp_in': ('mlp_in', None),
    }

    def __init__(self, block_idx, d_model, nhead, dim_feedforward):
        super().__init__()
        self.block_idx = block_idx
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = Attention(d_model, nhead)
        self.norm2 = nn.LayerNorm(d_model)
        self.mlp_in = nn.Linear(d_model, dim_feedforward)
        self.mlp_out = nn.Linear(dim_feedforward, d_model)

    def site_layer(self, kind):
        owner, child = self.SITE_LAYERS[kind]
        layer = getattr(self, owner)
        return getattr(layer, child) if child is not None else layer

    def _project(self, kind, x, adapters, prompt_term):
        layer = self.site_layer(kind)
        key = SiteId(self.block_idx, kind).key
        if adapters is not None and adapters.has_site(key):
            return adapters.site_output(key, layer.weight, layer.bias, x, prompt_term)
        return tensor_utils.linear(x, layer.weight, layer.bias)

    def forward(self, x, adapters=None, prompt_term=None):
        """x: (B, N, D) tokens"""
        h = tensor_utils.layer_norm(x, self.norm1.weight, self.norm1.bias, self.norm1.eps)
        q = self._project('attn_query', h, adapters, prompt_term)
        k = tensor_utils.linear(h, self.attn.k_proj.weight, self.attn.k_proj.bias)
        v = self._project('attn_value', h, adapters, prompt_term)
        x = x + self.attn.attend(q, k, v)

        h = tensor_utils.layer_norm(x, self.norm2.weight, self.norm2.bias, self.norm2.eps)
        h = tensor_utils.gelu(self._project('mlp_in', h, adapters, prompt_term))
        x = x + tensor_utils.linear(h, self.mlp_out.weight, self.mlp_out.bias)
        return x


class ImageEncoder(nn.Module):
    """Patch embedding followed by num_blocks EncoderBlocks (numbered 1..n)."""

    def __init__(self, model_cfg):
        super().__init__()
        self.model_cfg = model_cfg
        self.image_size = model_cfg.IMAGE_SIZE
        self.patch_size = model_cfg.PATCH_SIZE
        self.embed_dim = model_cfg.EMBED_DIM
        self.grid = (self.image_size // self.patch_size, self.image_size // self.patch_size)
        num_tokens = self.grid[0] * self.grid[1]

        self.patch_embed = nn.Conv2d(model_cfg.IN_CHANNELS, self.embed_dim,
                                     kernel_size=self.patch_size, stride=self.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, num_tokens, self.embed_dim))
        self.blocks = nn.ModuleList([
            EncoderBlock(i + 1, self.embed_dim, model_cfg.NUM_HEADS, self.embed_dim * model_cfg.MLP_RATIO)
            for i in range(model_cfg.NUM_BLOCKS)
        ])
        self.neck_norm = nn.LayerNorm(self.embed_dim)
        self._reset_parameters()

    def _reset_parameters(self):
        nn.init.normal_(self.pos_embed, std=0.02)
        for name, p in self.named_parameters():
            if p.dim() > 1 and 'pos_embed' not in name:
                nn.init.xavier_uniform_(p)

    @property
    def num_blocks(self):
        return len(self.blocks)

    def to_grid(self, tokens):
        B, N, D = tokens.shape
        return tokens.reshape(B, self.grid[0], self.grid[1], D)

    def to_tokens(self, grid_feats):
        B, H, W, D = grid_feats.shape
        return grid_feats.reshape(B, H * W, D)

    def embed(self, images):
        x = self.patch_embed(images)                      # (B, D, H', W')
        x = x.flatten(2).transpose(1, 2)                  # (B, N, D)
        return x + self.pos_embed

    def run_blocks(self, tokens, first_block, adapters=None, prompt_term=None, activations=None):
        """Run blocks first_block..n (1-based) on tokens; optionally record each block output."""
        x = tokens
        for block in self.blocks[first_block - 1:]:
            x = block(x, adapters=adapters, prompt_term=prompt_term)
            if activations is not None:
                activations.append(self.to_grid(x))
        return x

    def neck(self, tokens):
        return tensor_utils.layer_norm(tokens, self.neck_norm.weight, self.neck_norm.bias, self.neck_norm.eps)

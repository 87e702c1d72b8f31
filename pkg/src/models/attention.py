#!/usr/bin/env python3
"""
Чередующееся внимание по видам и модальностям.

Тензор токенов: (B, V, M, L, d): батч, вид, модальность (I, S, P), токен, канал.
- cross-view: для каждой модальности отдельно внимание по токенам всех видов;
- cross-modal: для каждого вида отдельно внимание по токенам всех модальностей.
"""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn


class MultiHeadAttention(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads:
            raise ValueError("width must be divisible by heads")
        self.heads = heads
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (N, S, d) → (N, S, d)."""
        n, s, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q, k, v = (t.reshape(n, s, self.heads, d // self.heads).transpose(1, 2) for t in (q, k, v))
        attended = F.scaled_dot_product_attention(q, k, v)
        return self.out(attended.transpose(1, 2).reshape(n, s, d))


def cross_view_attention(tokens: torch.Tensor, attention: MultiHeadAttention) -> torch.Tensor:
    b, v, m, l, d = tokens.shape
    seq = tokens.permute(0, 2, 1, 3, 4).reshape(b * m, v * l, d)
    out = attention(seq)
    return out.reshape(b, m, v, l, d).permute(0, 2, 1, 3, 4)


def cross_modal_attention(tokens: torch.Tensor, attention: MultiHeadAttention) -> torch.Tensor:
    b, v, m, l, d = tokens.shape
    seq = tokens.reshape(b * v, m * l, d)
    out = attention(seq)
    return out.reshape(b, v, m, l, d)


class FeedForward(nn.Module):
    def __init__(self, width: int, mult: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(width, width * mult), nn.GELU(), nn.Linear(width * mult, width))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class AlternatingBlock(nn.Module):
    """
    Пара слоёв: cross-view + FF, затем cross-modal + FF (pre-norm, residual).

    Каждый подслой модулируется условием потока c (shift, scale, gate), как в
    adaLN-Zero: модуляция инициализируется нулём, и свежий блок тождественен.
    c имеет форму (B, V, M, 1, d) и не смешивает ни виды, ни модальности.
    """

    def __init__(self, width: int, heads: int, ff_mult: int):
        super().__init__()
        self.norms = nn.ModuleList(nn.LayerNorm(width, elementwise_affine=False) for _ in range(4))
        self.view_attn = MultiHeadAttention(width, heads)
        self.ff1 = FeedForward(width, ff_mult)
        self.modal_attn = MultiHeadAttention(width, heads)
        self.ff2 = FeedForward(width, ff_mult)
        self.modulation = nn.Sequential(nn.SiLU(), nn.Linear(width, 12 * width))
        nn.init.zeros_(self.modulation[1].weight)
        nn.init.zeros_(self.modulation[1].bias)

    def forward(self, x: torch.Tensor, c: Optional[torch.Tensor] = None) -> torch.Tensor:
        if c is None:
            c = torch.zeros(x.shape[:3] + (1, x.shape[-1]), dtype=x.dtype, device=x.device)
        chunks = self.modulation(c).chunk(12, dim=-1)
        layers = (
            lambda h: cross_view_attention(h, self.view_attn),
            self.ff1,
            lambda h: cross_modal_attention(h, self.modal_attn),
            self.ff2,
        )
        for k, (norm, layer) in enumerate(zip(self.norms, layers)):
            shift, scale, gate = chunks[3 * k : 3 * k + 3]
            x = x + gate * layer(norm(x) * (1.0 + scale) + shift)
        return x

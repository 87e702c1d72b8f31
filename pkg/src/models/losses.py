#!/usr/bin/env python3
"""
Геометрические потери SCM-кодека.

    L_rec  = mean_valid( c * ||P_hat - P|| - alpha * log c )
    L_grad = sum_{s=1..4} mean || grad(P_hat^s) - grad(P^s) ||
             (разности на масштабе s делятся на шаг 2^(s-1) исходных пикселей)
    L      = L_rec + lambda1 * L_grad
"""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn.functional as F

from core.errors import InvalidInputError

ALPHA = 0.2
GRAD_SCALES = 4


def loss_rec(
    p_hat: torch.Tensor,
    p: torch.Tensor,
    c: torch.Tensor,
    mask: Optional[torch.Tensor] = None,
    alpha: float = ALPHA,
) -> torch.Tensor:
    """P_hat, P: (B, 3, H, W); c: (B, H, W); mask: (B, H, W) bool или None (все пиксели)."""
    if p_hat.shape != p.shape:
        raise InvalidInputError(f"shape mismatch {tuple(p_hat.shape)} vs {tuple(p.shape)}")
    error = torch.linalg.vector_norm(p_hat - p, dim=1)
    per_pixel = c * error - alpha * torch.log(c)
    if mask is None:
        return per_pixel.mean()
    if not bool(mask.any()):
        raise InvalidInputError("no valid pixels to supervise")
    return per_pixel[mask].mean()


def _forward_diff(x: torch.Tensor):
    """Прямые разности с зажимом на краю: последний столбец/строка дают 0."""
    gx = torch.cat([x[..., :, 1:] - x[..., :, :-1], torch.zeros_like(x[..., :, :1])], dim=-1)
    gy = torch.cat([x[..., 1:, :] - x[..., :-1, :], torch.zeros_like(x[..., :1, :])], dim=-2)
    return gx, gy


def loss_grad(p_hat: torch.Tensor, p: torch.Tensor, scales: int = GRAD_SCALES) -> torch.Tensor:
    """
    Сумма по масштабам (2x average pooling) средних норм невязки градиентов.

    Разности отнесены к шагу исходной сетки: линейный наклон a даёт a на каждом
    масштабе (кроме зажатого крайнего столбца).
    """
    if p_hat.shape != p.shape:
        raise InvalidInputError(f"shape mismatch {tuple(p_hat.shape)} vs {tuple(p.shape)}")
    divisor = 2 ** (scales - 1)
    if p.shape[-1] % divisor or p.shape[-2] % divisor:
        raise InvalidInputError(f"H, W must be divisible by {divisor}")
    residual = p_hat - p
    total = residual.new_zeros(())
    for scale in range(scales):
        if scale:
            residual = F.avg_pool2d(residual, 2)
        gx, gy = _forward_diff(residual)
        step = float(2**scale)
        total = total + torch.linalg.vector_norm(torch.cat([gx, gy], dim=1) / step, dim=1).mean()
    return total


def total_loss(
    p_hat: torch.Tensor,
    p: torch.Tensor,
    c: torch.Tensor,
    lambda1: float = 1.0,
    mask: Optional[torch.Tensor] = None,
    alpha: float = ALPHA,
) -> torch.Tensor:
    return loss_rec(p_hat, p, c, mask, alpha) + lambda1 * loss_grad(p_hat, p)

#!/usr/bin/env python3
"""
Косинусное variance-preserving расписание шума и v-параметризация.

    alpha_t = cos(pi t / 2), sigma_t = sin(pi t / 2)
    x_t = alpha x0 + sigma eps
    v   = alpha eps - sigma x0
    x0  = alpha x_t - sigma v,   eps = sigma x_t + alpha v
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import torch

from core.errors import InvalidInputError

Array = Union[torch.Tensor, float]


@dataclass(frozen=True)
class DiffusionState:
    t: float
    alpha: float
    sigma: float


def schedule(t: float) -> DiffusionState:
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError(f"t must lie in [0, 1], got {t}")
    alpha = 0.0 if t == 1.0 else math.cos(math.pi * t / 2.0)
    sigma = 0.0 if t == 0.0 else math.sin(math.pi * t / 2.0)
    return DiffusionState(t=float(t), alpha=alpha, sigma=sigma)


def alpha_sigma(t: torch.Tensor):
    """Пакетная версия schedule для тензора t в [0, 1]."""
    if torch.any((t < 0) | (t > 1)):
        raise InvalidInputError("t must lie in [0, 1]")
    half_pi = math.pi / 2.0
    alpha = torch.where(t == 1, torch.zeros_like(t), torch.cos(half_pi * t))
    sigma = torch.where(t == 0, torch.zeros_like(t), torch.sin(half_pi * t))
    return alpha, sigma


def q_sample(x0: Array, eps: Array, state: DiffusionState) -> Array:
    return state.alpha * x0 + state.sigma * eps


def v_target(x0: Array, eps: Array, state: DiffusionState) -> Array:
    return state.alpha * eps - state.sigma * x0


def x0_from_v(x_t: Array, v: Array, state: DiffusionState) -> Array:
    return state.alpha * x_t - state.sigma * v


def eps_from_v(x_t: Array, v: Array, state: DiffusionState) -> Array:
    return state.sigma * x_t + state.alpha * v


def ddim_step(x_t: Array, v: Array, current: DiffusionState, target: DiffusionState) -> Array:
    """Детерминированный DDIM-шаг (eta = 0) из current в target."""
    x0 = x0_from_v(x_t, v, current)
    eps = eps_from_v(x_t, v, current)
    return target.alpha * x0 + target.sigma * eps


def time_grid(steps: int) -> list:
    """Убывающая сетка 1 = t_0 > ... > t_steps = 0."""
    if steps < 1:
        raise InvalidInputError(f"steps must be >= 1, got {steps}")
    return [1.0 - k / steps for k in range(steps + 1)]

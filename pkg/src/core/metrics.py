#!/usr/bin/env python3
"""
Метрики оценки: PSNR, SSIM (по яркости Rec. 601) и симметричное расстояние Chamfer.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.signal import convolve2d
from scipy.spatial import cKDTree

from core.errors import InvalidInputError
from core.rng import make_rng
from core.warp import GlobalPointCloud

REC601 = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
BRUTE_BUDGET = 1 << 22


def _check_pair(image: np.ndarray, reference: np.ndarray):
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if image.shape != reference.shape:
        raise InvalidInputError(f"shape mismatch {image.shape} vs {reference.shape}")
    return image, reference


def psnr(image: np.ndarray, reference: np.ndarray) -> float:
    """10·log10(1 / MSE) в dB; одинаковые изображения: math.inf."""
    image, reference = _check_pair(image, reference)
    mse = float(np.mean((image - reference) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def luma(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        return image[..., :3] @ REC601
    return image


@lru_cache(maxsize=4)
def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim_map(image: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Локальная SSIM в valid-режиме свёртки; изображение меньше окна: ошибка."""
    image, reference = _check_pair(image, reference)
    x, y = luma(image), luma(reference)
    if min(x.shape) < SSIM_WINDOW:
        raise InvalidInputError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    window = gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2

    def filt(a: np.ndarray) -> np.ndarray:
        return convolve2d(a, window, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x**2
    syy = filt(y * y) - mu_y**2
    sxy = filt(x * y) - mu_x * mu_y
    return ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)) / ((mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2))


def ssim(image: np.ndarray, reference: np.ndarray) -> float:
    return float(np.mean(ssim_map(image, reference)))


def _points(cloud: Union[GlobalPointCloud, np.ndarray]) -> np.ndarray:
    if isinstance(cloud, GlobalPointCloud):
        return cloud.positions
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def _nearest_brute(queries: np.ndarray, targets: np.ndarray) -> np.ndarray:
    result = np.empty(len(queries))
    step = max(1, BRUTE_BUDGET // max(1, len(targets)))
    for start in range(0, len(queries), step):
        chunk = queries[start : start + step]
        diff = chunk[:, None, :] - targets[None, :, :]
        result[start : start + step] = np.sqrt(np.min(np.sum(diff * diff, axis=-1), axis=1))
    return result


def _nearest_tree(queries: np.ndarray, targets: np.ndarray) -> np.ndarray:
    distances, _ = cKDTree(targets).query(queries, k=1)
    return np.asarray(distances, dtype=np.float64)


def chamfer(
    cloud_a: Union[GlobalPointCloud, np.ndarray],
    cloud_b: Union[GlobalPointCloud, np.ndarray],
    sample_n: int = 4096,
    seed: int = 0,
    mode: str = "tree",
) -> float:
    """
    Симметричное Chamfer: mean_a(nn до b) + mean_b(nn до a).

    Запросы: детерминированная выборка до sample_n точек из каждого облака,
    цели: облако целиком. mode: "brute" (O(n·m)) или "tree" (cKDTree).
    """
    a, b = _points(cloud_a), _points(cloud_b)
    if len(a) == 0 or len(b) == 0:
        raise InvalidInputError("chamfer needs two non-empty clouds")
    if mode not in ("brute", "tree"):
        raise InvalidInputError(f"unknown chamfer mode '{mode}'")
    nearest = _nearest_brute if mode == "brute" else _nearest_tree

    def sample(points: np.ndarray) -> np.ndarray:
        if len(points) <= sample_n:
            return points
        rng = make_rng(seed, 11)
        return points[np.sort(rng.choice(len(points), size=sample_n, replace=False))]

    return float(np.mean(nearest(sample(a), b)) + np.mean(nearest(sample(b), a)))

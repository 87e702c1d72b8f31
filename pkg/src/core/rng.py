#!/usr/bin/env python3
"""
Детерминированные генераторы случайных чисел.

Везде используется numpy Generator поверх Philox (64-битный counter-based PRNG,
4x64 counter, 2x64 key, 10 раундов). Поток задаётся SeedSequence([seed, *stream]),
поэтому последовательности совпадают на всех платформах.
"""

from __future__ import annotations

import numpy as np
import torch


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Возвращает независимый генератор для пары (seed, stream)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(s) & 0xFFFFFFFFFFFFFFFF for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def torch_generator(seed: int, *stream: int) -> torch.Generator:
    """torch.Generator, засеянный из того же Philox-потока."""
    rng = make_rng(seed, *stream)
    generator = torch.Generator()
    generator.manual_seed(int(rng.integers(0, 2**62)))
    return generator

import math

import numpy as np
import pytest
import torch

from core.errors import InvalidInputError
from models.schedule import (
    alpha_sigma,
    ddim_step,
    eps_from_v,
    q_sample,
    schedule,
    time_grid,
    v_target,
    x0_from_v,
)


def test_variance_preserving_on_random_times():
    rng = np.random.default_rng(0)
    for t in rng.random(1000):
        state = schedule(float(t))
        assert state.alpha**2 + state.sigma**2 == pytest.approx(1.0, abs=1e-6)


def test_endpoints_and_monotonicity():
    assert schedule(0.0).alpha == 1.0 and schedule(0.0).sigma == 0.0
    assert schedule(1.0).alpha == 0.0 and schedule(1.0).sigma == 1.0
    alphas = [schedule(t).alpha for t in np.linspace(0.0, 1.0, 50)]
    assert all(a > b for a, b in zip(alphas, alphas[1:]))


@pytest.mark.parametrize("t", [-0.1, 1.5])
def test_time_outside_unit_interval(t):
    with pytest.raises(InvalidInputError):
        schedule(t)
    with pytest.raises(InvalidInputError):
        alpha_sigma(torch.tensor([t]))


def test_v_conversions_round_trip():
    gen = torch.Generator().manual_seed(1)
    for t in torch.rand(1000, generator=gen, dtype=torch.float64):
        state = schedule(float(t))
        x0 = torch.randn(6, generator=gen, dtype=torch.float64)
        eps = torch.randn(6, generator=gen, dtype=torch.float64)
        x_t = q_sample(x0, eps, state)
        v = v_target(x0, eps, state)
        assert torch.allclose(x0_from_v(x_t, v, state), x0, atol=1e-6)
        assert torch.allclose(eps_from_v(x_t, v, state), eps, atol=1e-6)


def test_ddim_step_with_true_v_lands_on_forward_process():
    gen = torch.Generator().manual_seed(2)
    x0 = torch.randn(16, generator=gen, dtype=torch.float64)
    eps = torch.randn(16, generator=gen, dtype=torch.float64)
    current, target = schedule(0.8), schedule(0.3)
    stepped = ddim_step(q_sample(x0, eps, current), v_target(x0, eps, current), current, target)
    assert torch.allclose(stepped, q_sample(x0, eps, target), atol=1e-6)


def test_batched_schedule_matches_scalar():
    t = torch.tensor([0.0, 0.25, 0.5, 1.0], dtype=torch.float64)
    alpha, sigma = alpha_sigma(t)
    for k, value in enumerate(t.tolist()):
        assert float(alpha[k]) == pytest.approx(schedule(value).alpha)
        assert float(sigma[k]) == pytest.approx(schedule(value).sigma)


def test_time_grid():
    assert time_grid(4) == [1.0, 0.75, 0.5, 0.25, 0.0]
    assert math.isclose(time_grid(3)[1], 2 / 3)
    with pytest.raises(InvalidInputError):
        time_grid(0)


def test_single_ddim_step_from_pure_noise_returns_minus_v():
    grid = time_grid(1)
    assert grid == [1.0, 0.0]
    gen = torch.Generator().manual_seed(11)
    x1 = torch.randn(2, 5, generator=gen)
    v = torch.randn(2, 5, generator=gen)
    x0 = ddim_step(x1, v, schedule(grid[0]), schedule(grid[1]))
    assert torch.equal(x0, -v)

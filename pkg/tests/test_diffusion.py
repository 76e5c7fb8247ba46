import math

import numpy as np
import pytest
import torch

from rollforge.diffusion import (NoiseSchedule, build_schedule, forward_sample,
                                 mse_loss, reverse_step)


def test_schedule_single_step():
    sched = build_schedule(1, 0.5, 0.5)
    assert float(sched.alpha_bars[0]) == pytest.approx(0.5)
    assert float(sched.posterior_vars[0]) == 0.0


def test_schedule_two_step_product():
    sched = build_schedule(2, 1e-4, 2e-4)
    assert float(sched.alpha_bars[1]) == pytest.approx((1 - 1e-4) * (1 - 2e-4), rel=1e-12)


def test_default_thousand_step_terminal_signal():
    sched = build_schedule(1000, 1e-4, 0.02)
    # independent oracle: direct product in float64
    direct = np.prod(1.0 - np.linspace(1e-4, 0.02, 1000))
    assert float(sched.alpha_bars[-1]) == pytest.approx(direct, rel=1e-9)
    assert float(sched.alpha_bars[-1]) < 1e-4


def test_schedule_tables_consistent():
    sched = build_schedule(100)
    bars = sched.alpha_bars
    assert bool((bars[1:] < bars[:-1]).all())  # strictly decreasing
    assert bool((bars > 0).all()) and bool((bars < 1).all())
    assert bool((sched.betas[1:] > sched.betas[:-1]).all())
    recurrence = torch.cat([torch.ones(1, dtype=torch.float64), bars[:-1]]) * sched.alphas
    assert torch.allclose(recurrence, bars, rtol=1e-14, atol=0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        build_schedule(0)
    with pytest.raises(ValueError):
        build_schedule(10, 0.0, 0.5)
    with pytest.raises(ValueError):
        build_schedule(10, 0.5, 0.1)
    with pytest.raises(ValueError):
        build_schedule(10, 0.1, 1.0)


def test_forward_sample_limits():
    sched = build_schedule(50)
    x0 = torch.rand(2, 8, 8, dtype=torch.float64)
    zeros = torch.zeros_like(x0)
    t = 20
    abar = float(sched.alpha_bars[t - 1])
    noiseless = forward_sample(x0, t, zeros, sched)
    assert torch.allclose(noiseless, math.sqrt(abar) * x0, rtol=1e-14, atol=0)
    eps = torch.randn(x0.shape, dtype=torch.float64)
    pure_noise = forward_sample(zeros, t, eps, sched)
    assert torch.allclose(pure_noise, math.sqrt(1 - abar) * eps, rtol=1e-14, atol=0)


def test_forward_sample_batched_steps():
    sched = build_schedule(10)
    x0 = torch.ones(3, 2, 4, 4)
    eps = torch.zeros_like(x0)
    t = torch.tensor([1, 5, 10])
    out = forward_sample(x0, t, eps, sched)
    for i, ti in enumerate(t.tolist()):
        assert torch.allclose(out[i], torch.full_like(out[i],
                              float(sched.alpha_bars[ti - 1] ** 0.5)))


def test_forward_sample_marginal_monte_carlo():
    # Monte-Carlo oracle of the closed-form marginal: mean ~ sqrt(abar),
    # variance ~ 1 - abar, with x0 = 1 fixed.
    sched = build_schedule(100)
    t = 40
    n = 100_000
    gen = torch.Generator().manual_seed(0)
    eps = torch.randn(n, dtype=torch.float64, generator=gen)
    xt = forward_sample(torch.ones(n, dtype=torch.float64), t, eps, sched)
    abar = float(sched.alpha_bars[t - 1])
    sigma = math.sqrt(1 - abar)
    assert float(xt.mean()) == pytest.approx(math.sqrt(abar), abs=3 * sigma / math.sqrt(n))
    assert float(xt.var()) == pytest.approx(1 - abar, rel=0.02)


def test_step_range_validation():
    sched = build_schedule(10)
    x = torch.zeros(4)
    with pytest.raises(ValueError):
        forward_sample(x, 0, x, sched)
    with pytest.raises(ValueError):
        forward_sample(x, 11, x, sched)


def test_reverse_step_t1_inverts_forward():
    sched = build_schedule(30)
    x0 = torch.rand(2, 8, 8, dtype=torch.float64)
    eps = torch.randn(x0.shape, dtype=torch.float64)
    x1 = forward_sample(x0, 1, eps, sched)
    back = reverse_step(x1, eps, 1, sched, None)
    assert torch.allclose(back, x0, rtol=1e-12, atol=1e-12)


def test_reverse_step_zero_eps_hat():
    sched = build_schedule(30)
    xt = torch.rand(2, 4, 4, dtype=torch.float64)
    out = reverse_step(xt, torch.zeros_like(xt), 5, sched, None)
    assert torch.allclose(out, xt / math.sqrt(float(sched.alphas[4])), rtol=1e-14, atol=0)


def test_reverse_step_rejects_noise_at_t1():
    sched = build_schedule(10)
    xt = torch.zeros(2, 4, 4)
    with pytest.raises(ValueError):
        reverse_step(xt, xt, 1, sched, torch.ones_like(xt))
    # explicit zero noise tensor is fine
    reverse_step(xt, xt, 1, sched, torch.zeros_like(xt))


def exact_inversion_error(num_steps: int) -> float:
    """Forward to x_N, then reverse with the true per-step noise content and
    zero reverse noise; returns the relative recovery error of x0."""
    sched = build_schedule(num_steps)
    gen = torch.Generator().manual_seed(42)
    x0 = torch.rand(2, 8, 8, generator=gen, dtype=torch.float64)
    eps = torch.randn(x0.shape, generator=gen, dtype=torch.float64)
    x = forward_sample(x0, num_steps, eps, sched)
    for t in range(num_steps, 0, -1):
        abar = sched.alpha_bars[t - 1]
        eps_t = (x - abar.sqrt() * x0) / (1.0 - abar).sqrt()
        x = reverse_step(x, eps_t, t, sched, None)
    return float((x - x0).abs().max() / x0.abs().max())


@pytest.mark.parametrize("num_steps", [1, 2, 10, 100, 1000])
def test_exact_noise_inversion_chain(num_steps):
    assert exact_inversion_error(num_steps) <= 1e-10


def test_loss_examples():
    eps = torch.randn(2, 8, 8, dtype=torch.float64)
    assert float(mse_loss(eps, eps)) == 0.0
    offset = eps + 0.25
    assert float(mse_loss(offset, eps)) == pytest.approx(0.25 ** 2, rel=1e-12)
    other = torch.randn_like(eps)
    manual = float(((other - eps) ** 2).sum() / eps.numel())
    assert float(mse_loss(other, eps)) == pytest.approx(manual, rel=1e-12)
    with pytest.raises(ValueError):
        mse_loss(eps, eps[:1])


def test_schedule_json_round_trip():
    sched = build_schedule(100, 2e-4, 0.05)
    obj = sched.to_json()
    again = NoiseSchedule.from_json(obj)
    assert torch.equal(again.alpha_bars, sched.alpha_bars)
    assert again.num_steps == 100
    corrupted = dict(obj, alpha_bar_final=obj["alpha_bar_final"] + 1e-3)
    with pytest.raises(ValueError):
        NoiseSchedule.from_json(corrupted)

"""Noise schedules, closed-form forward noising, and the reverse denoising step.

Steps are 1-based: t runs over [1, N]. All schedule tables are kept in
float64 and cast to the operand dtype at use, so float32 sampling and
float64 oracle tests share one schedule.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class NoiseSchedule:
    num_steps: int
    beta_start: float
    beta_end: float
    betas: torch.Tensor          # [N], beta_t at index t-1
    alphas: torch.Tensor         # 1 - beta
    alpha_bars: torch.Tensor     # cumulative product of alphas
    posterior_vars: torch.Tensor  # (1 - abar_{t-1}) / (1 - abar_t) * beta_t

    def to_json(self) -> dict:
        return {
            "N": self.num_steps,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "family": "linear",
            "alpha_bar_final": float(self.alpha_bars[-1]),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NoiseSchedule":
        if obj.get("family", "linear") != "linear":
            raise ValueError(f"unsupported schedule family {obj.get('family')!r}")
        sched = build_schedule(int(obj["N"]), float(obj["beta_start"]), float(obj["beta_end"]))
        stored = obj.get("alpha_bar_final")
        if stored is not None and abs(stored - float(sched.alpha_bars[-1])) > 1e-6:
            raise ValueError("schedule tables do not reproduce the stored terminal alpha_bar")
        return sched


def build_schedule(num_steps: int, beta_start: float = 1e-4,
                   beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule with all derived tables populated."""
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    if num_steps == 1:
        betas = torch.tensor([beta_start], dtype=torch.float64)
    else:
        betas = torch.linspace(beta_start, beta_end, num_steps, dtype=torch.float64)
    alphas = 1.0 - betas
    alpha_bars = torch.cumprod(alphas, dim=0)
    prev_bars = torch.cat([torch.ones(1, dtype=torch.float64), alpha_bars[:-1]])
    posterior_vars = (1.0 - prev_bars) / (1.0 - alpha_bars) * betas
    return NoiseSchedule(num_steps, beta_start, beta_end,
                         betas, alphas, alpha_bars, posterior_vars)


def _coeff(table: torch.Tensor, t: int | torch.Tensor, num_steps: int,
           like: torch.Tensor) -> torch.Tensor:
    """Look up table values for 1-based step(s) t, shaped to broadcast over `like`.

    Integer t gives a scalar; a batch tensor t of shape [B] is reshaped to
    [B, 1, ..., 1] so per-item steps broadcast over trailing dimensions.
    """
    if isinstance(t, torch.Tensor):
        if ((t < 1) | (t > num_steps)).any():
            raise ValueError(f"step out of range 1..{num_steps}")
        value = table.to(like.dtype)[t.long() - 1]
        return value.reshape(value.shape + (1,) * (like.ndim - value.ndim))
    if not 1 <= t <= num_steps:
        raise ValueError(f"step {t} out of range 1..{num_steps}")
    return table[t - 1].to(like.dtype)


def forward_sample(x0: torch.Tensor, t: int | torch.Tensor, eps: torch.Tensor,
                   sched: NoiseSchedule) -> torch.Tensor:
    """Closed-form noising: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps."""
    abar = _coeff(sched.alpha_bars, t, sched.num_steps, x0)
    return abar.sqrt() * x0 + (1.0 - abar).sqrt() * eps


def reverse_step(xt: torch.Tensor, eps_hat: torch.Tensor, t: int,
                 sched: NoiseSchedule,
                 noise: torch.Tensor | None = None) -> torch.Tensor:
    """One ancestral denoising step from level t to t-1.

    The mean inverts the epsilon parameterization; the variance is the fixed
    forward-posterior variance. At t = 1 the step is deterministic, so any
    nonzero noise there is a caller bug and raises.
    """
    if xt.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch {tuple(xt.shape)} vs {tuple(eps_hat.shape)}")
    alpha = _coeff(sched.alphas, t, sched.num_steps, xt)
    abar = _coeff(sched.alpha_bars, t, sched.num_steps, xt)
    beta = _coeff(sched.betas, t, sched.num_steps, xt)
    mean = (xt - beta / (1.0 - abar).sqrt() * eps_hat) / alpha.sqrt()
    if noise is None:
        return mean
    if t == 1:
        if bool((noise != 0).any()):
            raise ValueError("reverse step at t=1 is deterministic; noise must be zero")
        return mean
    sigma = _coeff(sched.posterior_vars, t, sched.num_steps, xt).sqrt()
    return mean + sigma * noise


def mse_loss(eps_hat: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all elements (mean keeps magnitude size-independent)."""
    if eps_hat.shape != eps.shape:
        raise ValueError(f"shape mismatch {tuple(eps_hat.shape)} vs {tuple(eps.shape)}")
    return ((eps_hat - eps) ** 2).mean()

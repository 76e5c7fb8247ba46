"""Ancestral sampling, classifier-free guidance, masked inpainting, and
iterative long-form generation.

A denoiser here is anything callable as (x_t, t, cond) -> eps_hat; the UNet,
the analytic Gaussian oracle, and test stand-ins all fit. Every sampler is a
pure function of (denoiser, schedule, request): RNG streams are derived from
the request seed, one stream per purpose, so e.g. inpainting with an empty
mask consumes exactly the same draws as plain sampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .denoiser import DivergenceError
from .diffusion import NoiseSchedule, reverse_step
from .masks import Mask
from .pianoroll import NUM_PITCHES, STEPS_PER_BAR, DequantizedRoll, PianoRoll

_STREAM_INIT = 0      # x_N draw
_STREAM_REVERSE = 1   # per-step reverse noise (eps_2)
_STREAM_FORWARD = 2   # per-step source re-noising (eps_1)
_STREAM_RESAMPLE = 3  # optional repaint-style resampling hook


@dataclass
class GuidanceConfig:
    scale: float = 1.0
    cond: torch.Tensor | None = None  # condition tokens [K, D]; None = unconditional

    def __post_init__(self):
        if not np.isfinite(self.scale):
            raise ValueError("guidance scale must be finite")


@dataclass
class SampleRequest:
    shape: tuple[int, ...] = (2, 128, NUM_PITCHES)
    seed: int = 0
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    dtype: torch.dtype = torch.float32
    # When set, each reverse step clamps the implied x0 estimate to this range
    # before recomputing the posterior mean. Binary-roll generation uses
    # (0, 1): small models otherwise accumulate a DC drift over the chain
    # (trained only on forward marginals, their response to off-manifold mean
    # shifts is unconstrained, and the reverse recursion amplifies it).
    # None keeps the raw epsilon-form step.
    clip_range: tuple[float, float] | None = None


def _stream(seed: int, salt: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed((seed * 1_000_003 + salt) % (2 ** 63 - 1))
    return gen


def cfg_combine(eps_cond: torch.Tensor, eps_uncond: torch.Tensor,
                scale: float) -> torch.Tensor:
    """Guided prediction: uncond + scale * (cond - uncond). scale 1 is plain
    conditional, 0 is unconditional; both endpoints return their input
    exactly, and equal inputs are a fixed point for any scale."""
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError(f"shape mismatch {tuple(eps_cond.shape)} vs {tuple(eps_uncond.shape)}")
    if scale == 1.0:
        return eps_cond
    if scale == 0.0:
        return eps_uncond
    return eps_uncond + scale * (eps_cond - eps_uncond)


def _predict(denoiser, xt: torch.Tensor, t: int, guidance: GuidanceConfig) -> torch.Tensor:
    if guidance.cond is None or guidance.scale == 1.0:
        return denoiser(xt, t, guidance.cond)
    eps_cond = denoiser(xt, t, guidance.cond)
    eps_uncond = denoiser(xt, t, None)
    return cfg_combine(eps_cond, eps_uncond, guidance.scale)


def _check_finite(x: torch.Tensor, t: int):
    if not torch.isfinite(x).all():
        raise DivergenceError(f"sampler diverged: non-finite values at step {t}")


def _step(xt: torch.Tensor, eps_hat: torch.Tensor, t: int, sched: NoiseSchedule,
          noise: torch.Tensor | None, clip_range: tuple[float, float] | None,
          ) -> torch.Tensor:
    """One reverse step; with clip_range, the x0 estimate is clamped and the
    posterior mean recomputed (algebraically identical when the clamp is
    inactive)."""
    if clip_range is None:
        return reverse_step(xt, eps_hat, t, sched, noise)
    dtype = xt.dtype
    abar = sched.alpha_bars[t - 1].to(dtype)
    alpha = sched.alphas[t - 1].to(dtype)
    beta = sched.betas[t - 1].to(dtype)
    prev = sched.alpha_bars[t - 2].to(dtype) if t > 1 else torch.ones((), dtype=dtype)
    x0_hat = (xt - (1 - abar).sqrt() * eps_hat) / abar.sqrt()
    x0_hat = x0_hat.clamp(*clip_range)
    mean = (prev.sqrt() * beta * x0_hat + alpha.sqrt() * (1 - prev) * xt) / (1 - abar)
    if noise is None or t == 1:
        return mean
    sigma = sched.posterior_vars[t - 1].to(dtype).sqrt()
    return mean + sigma * noise


@torch.no_grad()
def sample(denoiser, sched: NoiseSchedule, req: SampleRequest) -> torch.Tensor:
    """Unconditional / guided ancestral sampling; returns the x_0 tensor."""
    g_init = _stream(req.seed, _STREAM_INIT)
    g_rev = _stream(req.seed, _STREAM_REVERSE)
    x = torch.randn(req.shape, generator=g_init, dtype=req.dtype)
    for t in range(sched.num_steps, 0, -1):
        eps_hat = _predict(denoiser, x, t, req.guidance)
        noise = torch.randn(req.shape, generator=g_rev, dtype=req.dtype) if t > 1 else None
        x = _step(x, eps_hat, t, sched, noise, req.clip_range)
        _check_finite(x, t)
    return x


def sample_roll(denoiser, sched: NoiseSchedule, req: SampleRequest) -> DequantizedRoll:
    if len(req.shape) != 3 or req.shape[0] != 2:
        raise ValueError(f"roll sampling needs shape [2, T, P], got {req.shape}")
    return DequantizedRoll(sample(denoiser, sched, req).numpy())


@torch.no_grad()
def inpaint(denoiser, sched: NoiseSchedule, source: PianoRoll | torch.Tensor,
            mask: Mask | torch.Tensor, req: SampleRequest,
            resample_steps: int = 0) -> DequantizedRoll:
    """Masked generation: keep mask=1 cells from source, generate the rest.

    Each step re-noises the source to the current level and pastes it over
    the fixed region; the final step pastes the source itself, so fixed cells
    of the output equal the source bit-exactly. resample_steps > 0 enables
    repeated re-noising per step (off by default: the base procedure has none).
    """
    s = torch.as_tensor(np.asarray(source.data if isinstance(source, PianoRoll) else source),
                        dtype=req.dtype)
    m = torch.as_tensor(np.asarray(mask.data if isinstance(mask, Mask) else mask),
                        dtype=req.dtype)
    if s.shape != m.shape:
        raise ValueError(f"source shape {tuple(s.shape)} != mask shape {tuple(m.shape)}")
    shape = tuple(s.shape)
    g_init = _stream(req.seed, _STREAM_INIT)
    g_rev = _stream(req.seed, _STREAM_REVERSE)
    g_fwd = _stream(req.seed, _STREAM_FORWARD)
    g_res = _stream(req.seed, _STREAM_RESAMPLE)

    x = torch.randn(shape, generator=g_init, dtype=req.dtype)
    for t in range(sched.num_steps, 0, -1):
        for repeat in range(resample_steps + 1):
            if t > 1:
                eps1 = torch.randn(shape, generator=g_fwd, dtype=req.dtype)
                eps2 = torch.randn(shape, generator=g_rev, dtype=req.dtype)
                abar = sched.alpha_bars[t - 1].to(req.dtype)
                y = abar.sqrt() * s + (1 - abar).sqrt() * eps1
            else:
                eps2 = None
                y = s
            eps_hat = _predict(denoiser, x, t, req.guidance)
            x_prev = _step(x, eps_hat, t, sched, eps2, req.clip_range)
            x_prev = x_prev * (1 - m) + y * m
            _check_finite(x_prev, t)
            if repeat < resample_steps and t > 1:
                alpha = sched.alphas[t - 1].to(req.dtype)
                z = torch.randn(shape, generator=g_res, dtype=req.dtype)
                x = alpha.sqrt() * x_prev + (1 - alpha).sqrt() * z
            else:
                x = x_prev
    if x.ndim == 3 and x.shape[0] == 2:
        return DequantizedRoll(x.numpy())
    raise ValueError(f"inpainting output shape {tuple(x.shape)} is not a roll")


@torch.no_grad()
def generate_long(denoiser, sched: NoiseSchedule, prompt: PianoRoll,
                  iterations: int, seed: int = 0, overlap_bars: int = 4,
                  guidance_scale: float = 1.0,
                  conditions: list[torch.Tensor | None] | None = None,
                  dtype: torch.dtype = torch.float32,
                  clip_range: tuple[float, float] | None = None) -> DequantizedRoll:
    """Iterative future-inpainting: each window keeps the last overlap_bars
    bars generated so far and fills the remaining 8 - overlap_bars bars.

    A prompt of overlap_bars bars plus `iterations` windows yields
    overlap_bars + (8 - overlap_bars) * iterations bars. The prompt survives
    bit-exactly as the opening bars.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not 1 <= overlap_bars <= 7:
        raise ValueError("overlap_bars must lie in 1..7")
    overlap_steps = overlap_bars * STEPS_PER_BAR
    if prompt.num_steps != overlap_steps:
        raise ValueError(f"prompt must be exactly {overlap_bars} bars "
                         f"({overlap_steps} steps), got {prompt.num_steps}")
    if conditions is not None and len(conditions) != iterations:
        raise ValueError("need one condition entry per iteration")

    window_steps = 8 * STEPS_PER_BAR
    mask = np.zeros((2, window_steps, NUM_PITCHES), dtype=np.uint8)
    mask[:, :overlap_steps, :] = 1  # prefix fixed, remainder generated
    mask = Mask(mask)

    content = torch.as_tensor(prompt.data, dtype=dtype)
    for i in range(iterations):
        source = torch.zeros((2, window_steps, NUM_PITCHES), dtype=dtype)
        source[:, :overlap_steps] = content[:, -overlap_steps:]
        cond = conditions[i] if conditions is not None else None
        req = SampleRequest(shape=(2, window_steps, NUM_PITCHES), seed=seed + i,
                            guidance=GuidanceConfig(scale=guidance_scale, cond=cond),
                            dtype=dtype, clip_range=clip_range)
        window = inpaint(denoiser, sched, source, mask, req)
        new_part = torch.as_tensor(window.data[:, overlap_steps:], dtype=dtype)
        content = torch.cat([content, new_part], dim=1)
    return DequantizedRoll(content.numpy())

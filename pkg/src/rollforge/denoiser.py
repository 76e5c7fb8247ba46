"""Noise-prediction backbone: a 2-D UNet over piano rolls.

The network predicts the injected noise from (x_t, t) plus optional
condition tokens attended to via cross-attention. Also here: an analytic
denoiser for Gaussian toy data (training-free sampler verification) and a
finite-difference gradient checking harness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .diffusion import NoiseSchedule, forward_sample, mse_loss


class DivergenceError(RuntimeError):
    """Raised when training or sampling produces non-finite numbers."""


@dataclass
class DenoiserConfig:
    in_channels: int = 2
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 4)
    num_res_blocks: int = 1
    # Level indices (0 = full resolution) where self/cross attention applies.
    attn_levels: tuple[int, ...] = (1, 2)
    cond_dim: int = 0  # 0 disables cross-attention entirely
    time_embed_dim: int = 128
    num_heads: int = 4

    def __post_init__(self):
        if len(self.channel_mults) < 1:
            raise ValueError("need at least one resolution level")
        if self.cond_dim < 0:
            raise ValueError("cond_dim must be >= 0")

    def to_json(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "base_channels": self.base_channels,
            "channel_mults": list(self.channel_mults),
            "num_res_blocks": self.num_res_blocks,
            "attn_levels": list(self.attn_levels),
            "cond_dim": self.cond_dim,
            "time_embed_dim": self.time_embed_dim,
            "num_heads": self.num_heads,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DenoiserConfig":
        obj = dict(obj)
        obj["channel_mults"] = tuple(obj["channel_mults"])
        obj["attn_levels"] = tuple(obj["attn_levels"])
        return cls(**obj)


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(8, channels), channels)


def _trunc_init(module: nn.Module, std: float = 0.02):
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d)):
            nn.init.trunc_normal_(m.weight, std=std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Transformer-style embedding of (1-based) step indices, shape [B, dim]."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10_000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / max(half - 1, 1)
    )
    args = t[:, None] * freqs[None, :]
    emb = torch.cat([args.sin(), args.cos()], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, emb.new_zeros(emb.shape[0], 1)], dim=-1)
    return emb


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class SelfAttention(nn.Module):
    def __init__(self, channels: int, num_heads: int):
        super().__init__()
        self.num_heads = math.gcd(num_heads, channels)
        self.norm = _norm(channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj = nn.Conv2d(channels, channels, 1)
        _trunc_init(self.qkv)
        _trunc_init(self.proj)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b, 3, self.num_heads, c // self.num_heads, h * w)
        q, k, v = qkv.unbind(dim=1)
        attn = torch.softmax(q.transpose(-2, -1) @ k / math.sqrt(c // self.num_heads), dim=-1)
        out = (v @ attn.transpose(-2, -1)).reshape(b, c, h, w)
        return x + self.proj(out)


class CrossAttention(nn.Module):
    """Queries from the spatial map, keys/values from condition tokens."""

    def __init__(self, channels: int, cond_dim: int, num_heads: int):
        super().__init__()
        self.num_heads = math.gcd(num_heads, channels)
        self.norm = _norm(channels)
        self.to_q = nn.Conv2d(channels, channels, 1)
        self.to_k = nn.Linear(cond_dim, channels)
        self.to_v = nn.Linear(cond_dim, channels)
        self.proj = nn.Conv2d(channels, channels, 1)
        for m in (self.to_q, self.to_k, self.to_v, self.proj):
            _trunc_init(m)

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        heads, dh = self.num_heads, c // self.num_heads
        q = self.to_q(self.norm(x)).reshape(b, heads, dh, h * w).transpose(-2, -1)
        k = self.to_k(tokens).reshape(b, -1, heads, dh).transpose(1, 2)
        v = self.to_v(tokens).reshape(b, -1, heads, dh).transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dh), dim=-1)
        out = (attn @ v).transpose(-2, -1).reshape(b, c, h, w)
        return x + self.proj(out)


class _Level(nn.Module):
    """One resolution level: res blocks with optional self+cross attention."""

    def __init__(self, blocks_io: list[tuple[int, int]], time_dim: int,
                 attend: bool, cond_dim: int, num_heads: int):
        super().__init__()
        self.res = nn.ModuleList([ResBlock(i, o, time_dim) for i, o in blocks_io])
        self.self_attn = nn.ModuleList(
            [SelfAttention(o, num_heads) if attend else nn.Identity() for _, o in blocks_io])
        self.cross_attn = nn.ModuleList(
            [CrossAttention(o, cond_dim, num_heads) if attend and cond_dim else nn.Identity()
             for _, o in blocks_io])


class UNetDenoiser(nn.Module):
    """Epsilon-prediction UNet. Forward signature: (x_t, t, cond_tokens) -> eps_hat.

    cond_tokens is a [K, cond_dim] or [B, K, cond_dim] tensor, or None for the
    unconditional pass. None is realized as a learned null token, so models
    trained with condition dropout expose both paths.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        cfg = config
        time_dim = cfg.time_embed_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim))
        # Per-channel global means feed the embedding: GroupNorm strips the
        # spatial mean ahead of every conv, so without this the model cannot
        # see (or correct) global drift during ancestral sampling.
        self.stats_proj = nn.Linear(cfg.in_channels, time_dim)

        chans = [cfg.base_channels * m for m in cfg.channel_mults]
        self.conv_in = nn.Conv2d(cfg.in_channels, chans[0], 3, padding=1)

        if cfg.cond_dim:
            self.null_token = nn.Parameter(torch.empty(1, cfg.cond_dim))
            nn.init.trunc_normal_(self.null_token, std=0.02)
        else:
            self.null_token = None

        self.down_levels = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        skip_chans = [chans[0]]
        ch = chans[0]
        for i, out_ch in enumerate(chans):
            io = [(ch if b == 0 else out_ch, out_ch) for b in range(cfg.num_res_blocks)]
            self.down_levels.append(_Level(io, time_dim, i in cfg.attn_levels,
                                           cfg.cond_dim, cfg.num_heads))
            skip_chans += [out_ch] * cfg.num_res_blocks
            ch = out_ch
            if i < len(chans) - 1:
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
                skip_chans.append(ch)

        deepest = len(chans) - 1
        self.mid = _Level([(ch, ch), (ch, ch)], time_dim, deepest in cfg.attn_levels,
                          cfg.cond_dim, cfg.num_heads)

        self.up_levels = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i in reversed(range(len(chans))):
            out_ch = chans[i]
            io = []
            for _ in range(cfg.num_res_blocks + 1):
                io.append((ch + skip_chans.pop(), out_ch))
                ch = out_ch
            self.up_levels.append(_Level(io, time_dim, i in cfg.attn_levels,
                                         cfg.cond_dim, cfg.num_heads))
            if i > 0:
                self.upsamples.append(nn.Conv2d(ch, ch, 3, padding=1))

        self.norm_out = _norm(ch)
        self.conv_out = nn.Conv2d(ch, cfg.in_channels, 3, padding=1)
        nn.init.zeros_(self.conv_out.weight)
        nn.init.zeros_(self.conv_out.bias)

    # -- forward ---------------------------------------------------------

    def _tokens(self, cond: torch.Tensor | None, batch: int) -> torch.Tensor | None:
        if self.config.cond_dim == 0:
            if cond is not None:
                raise ValueError("model was built without conditioning slots")
            return None
        if cond is None:
            return self.null_token.expand(batch, 1, -1)
        if cond.ndim == 2:  # [K, D] shared across the batch
            cond = cond.unsqueeze(0).expand(batch, -1, -1)
        if cond.ndim != 3 or cond.shape[0] != batch or cond.shape[-1] != self.config.cond_dim:
            raise ValueError(
                f"condition tokens must be [K, {self.config.cond_dim}] or "
                f"[{batch}, K, {self.config.cond_dim}], got {tuple(cond.shape)}")
        return cond.to(self.conv_in.weight.dtype)

    def _run_level(self, level: _Level, h, temb, tokens, skips: list | None):
        for res, sa, ca in zip(level.res, level.self_attn, level.cross_attn):
            h = res(h, temb)
            h = sa(h)
            if not isinstance(ca, nn.Identity) and tokens is not None:
                h = ca(h, tokens)
            if skips is not None:
                skips.append(h)
        return h

    def forward(self, xt: torch.Tensor, t: int | torch.Tensor,
                cond: torch.Tensor | None = None) -> torch.Tensor:
        squeeze = xt.ndim == 3
        if squeeze:
            xt = xt.unsqueeze(0)
        if xt.ndim != 4 or xt.shape[1] != self.config.in_channels:
            raise ValueError(f"expected [B, {self.config.in_channels}, T, P], got {tuple(xt.shape)}")
        down_factor = 2 ** (len(self.config.channel_mults) - 1)
        if xt.shape[2] % down_factor or xt.shape[3] % down_factor:
            raise ValueError(f"spatial dims must be divisible by {down_factor}")
        batch = xt.shape[0]
        dtype = self.conv_in.weight.dtype
        xt = xt.to(dtype)
        if isinstance(t, int):
            t = torch.full((batch,), t, dtype=torch.long)
        if ((t < 1)).any():
            raise ValueError("step indices are 1-based")
        temb = self.time_mlp(sinusoidal_embedding(t.to(dtype), self.config.time_embed_dim))
        temb = temb + self.stats_proj(xt.mean(dim=(2, 3)))
        tokens = self._tokens(cond, batch)

        h = self.conv_in(xt)
        skips = [h]
        for i, level in enumerate(self.down_levels):
            h = self._run_level(level, h, temb, tokens, skips)
            if i < len(self.downsamples):
                h = self.downsamples[i](h)
                skips.append(h)

        h = self._run_level(self.mid, h, temb, tokens, None)

        for j, level in enumerate(self.up_levels):
            for res, sa, ca in zip(level.res, level.self_attn, level.cross_attn):
                h = res(torch.cat([h, skips.pop()], dim=1), temb)
                h = sa(h)
                if not isinstance(ca, nn.Identity) and tokens is not None:
                    h = ca(h, tokens)
            if j < len(self.upsamples):
                h = torch.nn.functional.interpolate(h, scale_factor=2, mode="nearest")
                h = self.upsamples[j](h)

        out = self.conv_out(torch.nn.functional.silu(self.norm_out(h)))
        return out.squeeze(0) if squeeze else out

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


# -- training loss and gradients ------------------------------------------


def training_loss(model: UNetDenoiser, sched: NoiseSchedule, x0: torch.Tensor,
                  t: torch.Tensor, eps: torch.Tensor,
                  cond: torch.Tensor | None = None) -> torch.Tensor:
    """Noise-prediction MSE on a batch: ||eps - model(noised x0, t, cond)||^2 (mean)."""
    xt = forward_sample(x0, t, eps, sched)
    return mse_loss(model(xt, t, cond), eps)


def loss_and_grads(model: UNetDenoiser, sched: NoiseSchedule, x0: torch.Tensor,
                   t: torch.Tensor, eps: torch.Tensor,
                   cond: torch.Tensor | None = None,
                   ) -> tuple[float, dict[str, torch.Tensor]]:
    """Exact gradients of the batch-mean loss for every named parameter."""
    if x0.ndim != 4 or x0.shape[0] < 1:
        raise ValueError("batch must be a nonempty [B, C, T, P] tensor")
    model.zero_grad(set_to_none=True)
    loss = training_loss(model, sched, x0, t, eps, cond)
    if not torch.isfinite(loss):
        for name, p in model.named_parameters():
            if not torch.isfinite(p).all():
                raise DivergenceError(f"non-finite loss; parameter {name!r} is non-finite")
        raise DivergenceError("non-finite loss with finite parameters (check inputs)")
    loss.backward()
    grads = {name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
             for name, p in model.named_parameters()}
    return float(loss), grads


def gradient_check(model: UNetDenoiser, loss_fn, h: float = 1e-3,
                   elements_per_tensor: int = 4) -> dict[str, float]:
    """Compare analytic gradients against central finite differences.

    loss_fn() must recompute the scalar loss from the model's current
    parameters deterministically. For each parameter tensor the elements with
    the largest analytic gradient are perturbed (largest first, so relative
    error is dominated by truncation, not roundoff). Returns max relative
    error per tensor. Run the model in float64 for meaningful thresholds.
    """
    model.zero_grad(set_to_none=True)
    loss = loss_fn()
    loss.backward()
    errors: dict[str, float] = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            grad = p.grad if p.grad is not None else torch.zeros_like(p)
            flat = p.reshape(-1)
            gflat = grad.reshape(-1)
            order = torch.argsort(gflat.abs(), descending=True)
            worst = 0.0
            for idx in order[:elements_per_tensor].tolist():
                orig = flat[idx].item()
                flat[idx] = orig + h
                plus = float(loss_fn())
                flat[idx] = orig - h
                minus = float(loss_fn())
                flat[idx] = orig
                numeric = (plus - minus) / (2 * h)
                analytic = float(gflat[idx])
                denom = max(abs(numeric), abs(analytic))
                if denom < 1e-10:
                    continue
                worst = max(worst, abs(numeric - analytic) / denom)
            errors[name] = worst
    model.zero_grad(set_to_none=True)
    return errors


def directional_gradient_check(model: UNetDenoiser, loss_fn, h: float = 1e-4,
                               seed: int = 0) -> float:
    """Relative error of the full-gradient directional derivative along one
    random unit direction (covers every parameter element at once)."""
    model.zero_grad(set_to_none=True)
    loss = loss_fn()
    loss.backward()
    gen = torch.Generator().manual_seed(seed)
    direction = {name: torch.randn(p.shape, generator=gen, dtype=p.dtype)
                 for name, p in model.named_parameters()}
    norm = math.sqrt(sum(float((d ** 2).sum()) for d in direction.values()))
    analytic = 0.0
    for name, p in model.named_parameters():
        if p.grad is not None:
            analytic += float((p.grad * direction[name]).sum()) / norm
    with torch.no_grad():
        for name, p in model.named_parameters():
            p += direction[name] * (h / norm)
        plus = float(loss_fn())
        for name, p in model.named_parameters():
            p -= direction[name] * (2 * h / norm)
        minus = float(loss_fn())
        for name, p in model.named_parameters():
            p += direction[name] * (h / norm)
    numeric = (plus - minus) / (2 * h)
    model.zero_grad(set_to_none=True)
    return abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-12)


# -- analytic oracle -------------------------------------------------------


def oracle_denoise(xt: torch.Tensor, t: int, mu0: float, sigma0: float,
                   sched: NoiseSchedule) -> torch.Tensor:
    """Exact E[eps | x_t] when x_0 ~ N(mu0, sigma0^2 I), elementwise.

    sigma0 = 0 is the deterministic-data limit (x_0 = mu0 exactly), where the
    prediction is the exact noise content of x_t.
    """
    if sigma0 < 0:
        raise ValueError("sigma0 must be >= 0")
    abar = float(sched.alpha_bars[t - 1])
    return math.sqrt(1.0 - abar) * (xt - math.sqrt(abar) * mu0) / (
        abar * sigma0 ** 2 + 1.0 - abar)


class GaussianOracleDenoiser:
    """Adapter giving oracle_denoise the (xt, t, cond) -> eps_hat call shape."""

    def __init__(self, mu0: float, sigma0: float, sched: NoiseSchedule):
        self.mu0 = mu0
        self.sigma0 = sigma0
        self.sched = sched

    def __call__(self, xt: torch.Tensor, t: int,
                 cond: torch.Tensor | None = None) -> torch.Tensor:
        return oracle_denoise(xt, t, self.mu0, self.sigma0, self.sched)

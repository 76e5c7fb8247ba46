"""Condition encoders: a chord VAE over beat-wise 36-D vectors and a texture
VAE over pitch-blurred 2-bar onset rolls, plus condition dropout for
classifier-free guidance training.

Both encoders are trained once, then frozen while the diffusion model trains.
Inference always takes the posterior mean, so latents are deterministic.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .chords import ChordSeq, extract_chords
from .denoiser import DivergenceError
from .params import blob_to_state, state_checksum, state_to_blob
from .pianoroll import NUM_PITCHES, STEPS_PER_BAR, PianoRoll

logger = logging.getLogger(__name__)

CHORD_LATENT_DIM = 512
TEXTURE_LATENT_DIM = 256    # per 2-bar segment; 4 segments concatenate to 1024
SEGMENT_BEATS = 32
TEXTURE_SEGMENT_STEPS = 2 * STEPS_PER_BAR  # 32
PITCH_BLUR_RADIUS = 6

CONDITION_MODES = ("none", "chord", "texture", "chord_raw36", "texture_raw")

# Token width the denoiser must be built with, per condition mode.
COND_DIMS = {"none": 0, "chord": CHORD_LATENT_DIM, "texture": TEXTURE_LATENT_DIM,
             "chord_raw36": 36, "texture_raw": 256}


class ChordVAE(nn.Module):
    """Sequence VAE over [32, 36] chord matrices with a 512-D latent."""

    def __init__(self, hidden: int = 256):
        super().__init__()
        self.rnn = nn.GRU(36, hidden, batch_first=True, bidirectional=True)
        self.to_mu = nn.Linear(2 * hidden, CHORD_LATENT_DIM)
        self.to_logvar = nn.Linear(2 * hidden, CHORD_LATENT_DIM)
        self.decode = nn.Sequential(
            nn.Linear(CHORD_LATENT_DIM, 512), nn.ReLU(),
            nn.Linear(512, SEGMENT_BEATS * 36))

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        _, h = self.rnn(x)
        h = torch.cat([h[0], h[1]], dim=-1)
        return self.to_mu(h), self.to_logvar(h)

    def forward(self, x: torch.Tensor):
        mu, logvar = self.encode(x)
        z = mu + (0.5 * logvar).exp() * torch.randn_like(mu)
        logits = self.decode(z).reshape(-1, SEGMENT_BEATS, 36)
        return logits, mu, logvar


def blur_onsets(onsets: np.ndarray, radius: int = PITCH_BLUR_RADIUS) -> np.ndarray:
    """Max-blur an onset map [T, P] across pitch: a texture representation
    that keeps rhythm and coarse register while discarding exact pitches."""
    out = np.zeros_like(onsets, dtype=np.float32)
    for shift in range(-radius, radius + 1):
        if shift >= 0:
            out[:, shift:] = np.maximum(out[:, shift:], onsets[:, :NUM_PITCHES - shift])
        else:
            out[:, :shift] = np.maximum(out[:, :shift], onsets[:, -shift:])
    return out


class TextureVAE(nn.Module):
    """Conv VAE over blurred [32, 128] 2-bar onset maps with a 256-D latent."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(1, 16, 3, stride=2, padding=1), nn.ReLU(),   # 16 x 64
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),  # 8 x 32
            nn.Conv2d(32, 32, 3, stride=2, padding=1), nn.ReLU())  # 4 x 16
        flat = 32 * 4 * 16
        self.to_mu = nn.Linear(flat, TEXTURE_LATENT_DIM)
        self.to_logvar = nn.Linear(flat, TEXTURE_LATENT_DIM)
        self.decode = nn.Sequential(
            nn.Linear(TEXTURE_LATENT_DIM, flat), nn.ReLU(),
            nn.Linear(flat, TEXTURE_SEGMENT_STEPS * NUM_PITCHES))

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.conv(x[:, None]).flatten(1)
        return self.to_mu(h), self.to_logvar(h)

    def forward(self, x: torch.Tensor):
        mu, logvar = self.encode(x)
        z = mu + (0.5 * logvar).exp() * torch.randn_like(mu)
        logits = self.decode(z).reshape(-1, TEXTURE_SEGMENT_STEPS, NUM_PITCHES)
        return logits, mu, logvar


def vae_loss(logits: torch.Tensor, target: torch.Tensor, mu: torch.Tensor,
             logvar: torch.Tensor, beta: float) -> torch.Tensor:
    recon = nn.functional.binary_cross_entropy_with_logits(logits, target)
    kl = 0.5 * (mu ** 2 + logvar.exp() - 1.0 - logvar).mean()
    return recon + beta * kl


@dataclass
class EncoderTrainConfig:
    epochs: int = 60
    lr: float = 1e-3
    batch_size: int = 16
    kl_beta: float = 1e-3
    seed: int = 0


class ConditionEncoders:
    """Frozen chord + texture encoders with deterministic (posterior-mean)
    encoding. Carries a checksum so freezing is verifiable."""

    VERSION = 1

    def __init__(self, chord_vae: ChordVAE, texture_vae: TextureVAE):
        self.chord_vae = chord_vae.eval()
        self.texture_vae = texture_vae.eval()
        for p in self.chord_vae.parameters():
            p.requires_grad_(False)
        for p in self.texture_vae.parameters():
            p.requires_grad_(False)

    def checksum(self) -> str:
        state = {f"chord.{k}": v for k, v in self.chord_vae.state_dict().items()}
        state.update({f"texture.{k}": v for k, v in self.texture_vae.state_dict().items()})
        return state_checksum(state)

    @torch.no_grad()
    def encode_chords(self, seq: ChordSeq) -> torch.Tensor:
        if len(seq) != SEGMENT_BEATS:
            raise ValueError(f"chord sequence must have {SEGMENT_BEATS} beats, got {len(seq)}")
        x = torch.from_numpy(seq.to_matrix()).unsqueeze(0)
        mu, _ = self.chord_vae.encode(x)
        return mu.squeeze(0)

    @torch.no_grad()
    def encode_texture(self, roll: PianoRoll) -> torch.Tensor:
        if roll.num_steps != 4 * TEXTURE_SEGMENT_STEPS:
            raise ValueError("texture encoding expects an 8-bar roll")
        segments = []
        for i in range(4):
            part = roll.onsets[i * TEXTURE_SEGMENT_STEPS:(i + 1) * TEXTURE_SEGMENT_STEPS]
            segments.append(blur_onsets(part.astype(np.float32)))
        x = torch.from_numpy(np.stack(segments))
        mu, _ = self.texture_vae.encode(x)
        return mu.reshape(-1)  # [1024], time order preserved

    # -- persistence -----------------------------------------------------

    def to_blob(self) -> tuple[bytes, dict]:
        state = {f"chord.{k}": v for k, v in self.chord_vae.state_dict().items()}
        state.update({f"texture.{k}": v for k, v in self.texture_vae.state_dict().items()})
        blob, manifest = state_to_blob(state)
        return blob, {"version": self.VERSION, "manifest": manifest}

    @classmethod
    def from_blob(cls, blob: bytes, meta: dict) -> "ConditionEncoders":
        if meta.get("version") != cls.VERSION:
            raise ValueError(f"encoder version mismatch: {meta.get('version')}")
        state = blob_to_state(blob, meta["manifest"])
        chord_vae, texture_vae = ChordVAE(), TextureVAE()
        chord_vae.load_state_dict(
            {k[len("chord."):]: v for k, v in state.items() if k.startswith("chord.")})
        texture_vae.load_state_dict(
            {k[len("texture."):]: v for k, v in state.items() if k.startswith("texture.")})
        return cls(chord_vae, texture_vae)


def _texture_batches(rolls: list[PianoRoll]) -> torch.Tensor:
    maps = []
    for roll in rolls:
        for i in range(roll.num_steps // TEXTURE_SEGMENT_STEPS):
            part = roll.onsets[i * TEXTURE_SEGMENT_STEPS:(i + 1) * TEXTURE_SEGMENT_STEPS]
            maps.append(blur_onsets(part.astype(np.float32)))
    return torch.from_numpy(np.stack(maps))


def fit_encoders(corpus: list[PianoRoll],
                 config: EncoderTrainConfig | None = None) -> ConditionEncoders:
    """Train both VAEs on a roll corpus, then freeze them."""
    if not corpus:
        raise ValueError("encoder corpus is empty")
    cfg = config or EncoderTrainConfig()
    torch.manual_seed(cfg.seed)

    chord_data = torch.from_numpy(
        np.stack([extract_chords(r).to_matrix() for r in corpus]))
    texture_data = _texture_batches(corpus)

    chord_vae, texture_vae = ChordVAE(), TextureVAE()
    for model, data, label in ((chord_vae, chord_data, "chord"),
                               (texture_vae, texture_data, "texture")):
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        for epoch in range(cfg.epochs):
            perm = torch.randperm(data.shape[0])
            total = 0.0
            for lo in range(0, data.shape[0], cfg.batch_size):
                batch = data[perm[lo:lo + cfg.batch_size]]
                logits, mu, logvar = model(batch)
                loss = vae_loss(logits, batch, mu, logvar, cfg.kl_beta)
                if not torch.isfinite(loss):
                    raise DivergenceError(f"{label} VAE loss diverged at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * batch.shape[0]
            if epoch % 20 == 0:
                logger.debug("%s VAE epoch %d loss %.4f", label, epoch, total / data.shape[0])
    return ConditionEncoders(chord_vae, texture_vae)


def drop_condition(cond: torch.Tensor | None, p_drop: float,
                   rng: torch.Generator) -> torch.Tensor | None:
    """With probability p_drop replace the condition by the NULL sentinel."""
    if not 0.0 <= p_drop <= 1.0:
        raise ValueError("p_drop must lie in [0, 1]")
    if cond is None:
        return None
    if float(torch.rand((), generator=rng)) < p_drop:
        return None
    return cond


def condition_tokens(mode: str, encoders: ConditionEncoders | None = None,
                     roll: PianoRoll | None = None,
                     chords: ChordSeq | None = None) -> torch.Tensor | None:
    """Assemble the cross-attention token matrix [K, D] for a condition mode.

    chord: one 512-D token. texture: four 256-D tokens (one per 2 bars).
    chord_raw36: the bare 32x36 chord matrix as 32 tokens (encoder ablation).
    texture_raw: four tokens of the onset map pooled into 8 pitch bands.
    """
    if mode == "none":
        return None
    if mode == "chord":
        chords = chords if chords is not None else extract_chords(roll)
        return encoders.encode_chords(chords).unsqueeze(0)
    if mode == "texture":
        return encoders.encode_texture(roll).reshape(4, TEXTURE_LATENT_DIM)
    if mode == "chord_raw36":
        chords = chords if chords is not None else extract_chords(roll)
        return torch.from_numpy(chords.to_matrix())
    if mode == "texture_raw":
        tokens = []
        for i in range(4):
            part = roll.onsets[i * TEXTURE_SEGMENT_STEPS:(i + 1) * TEXTURE_SEGMENT_STEPS]
            pooled = part.reshape(TEXTURE_SEGMENT_STEPS, 8, NUM_PITCHES // 8).max(axis=2)
            tokens.append(pooled.astype(np.float32).reshape(-1))
        return torch.from_numpy(np.stack(tokens))
    raise ValueError(f"unknown condition mode {mode!r}")

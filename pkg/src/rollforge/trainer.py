"""Dataset preparation, the noise-prediction training loop, and checkpoints.

Training samples a batch of segments, draws per-item steps uniformly from
[1, N] and Gaussian noise, optionally transposes for key augmentation,
noises the batch with the closed-form forward process, and regresses the
denoiser output on the injected noise with Adam.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .conditioning import COND_DIMS, ConditionEncoders, condition_tokens
from .denoiser import DenoiserConfig, DivergenceError, UNetDenoiser, training_loss
from .diffusion import NoiseSchedule, build_schedule
from .params import blob_to_state, state_to_blob
from .pianoroll import PianoRoll, UnsupportedMeterError, midi_to_roll
from .samplers import SampleRequest, sample

logger = logging.getLogger(__name__)

_MAGIC = b"RFCKPT01"
FORMAT_VERSION = 1

# Per-sample transposition offsets covering each pitch-class residue once.
AUGMENT_OFFSETS = tuple(range(-5, 7))


@dataclass
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 16
    max_steps: int = 1000
    num_steps: int = 1000  # diffusion steps N
    beta_start: float = 1e-4
    beta_end: float = 0.02
    p_drop: float = 0.1
    augment: bool = True
    seed: int = 0
    condition_mode: str = "none"
    split_ratio: float = 0.9
    val_every: int = 200
    early_stop_patience: int = 10
    stop_below_loss: float = 0.0  # 0 disables loss-based early stop
    stop_loss_window: int = 100   # stop gates on the mean of this many recent steps
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.condition_mode not in COND_DIMS:
            raise ValueError(f"unknown condition_mode {self.condition_mode!r}")
        # The attention token width is dictated by the condition mode.
        wanted = COND_DIMS[self.condition_mode]
        if self.denoiser.cond_dim != wanted:
            self.denoiser = _with_cond_dim(self.denoiser, wanted)

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "lr", "batch_size", "max_steps", "num_steps", "beta_start", "beta_end",
            "p_drop", "augment", "seed", "condition_mode", "split_ratio",
            "val_every", "early_stop_patience", "stop_below_loss", "stop_loss_window")}
        out["denoiser"] = self.denoiser.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        obj = dict(obj)
        if "denoiser" in obj:
            obj["denoiser"] = DenoiserConfig.from_json(obj["denoiser"])
        return cls(**obj)


def _with_cond_dim(cfg: DenoiserConfig, cond_dim: int) -> DenoiserConfig:
    data = cfg.to_json()
    data["cond_dim"] = cond_dim
    return DenoiserConfig.from_json(data)


@dataclass
class Segment:
    roll: PianoRoll
    song: str
    start_bar: int

    def digest(self) -> str:
        return hashlib.sha256(self.roll.data.tobytes()).hexdigest()


@dataclass
class DatasetSplit:
    train: list[Segment]
    val: list[Segment]
    ratio: float
    song_split: dict[str, str]  # song id -> "train" | "val"


def prepare_dataset(midi_dir: str | Path, config: TrainConfig) -> DatasetSplit:
    """Segment every parseable 2/4 or 4/4 MIDI under midi_dir and split the
    songs (not segments) 90/10, deterministically in the config seed."""
    midi_dir = Path(midi_dir)
    paths = sorted(p for p in midi_dir.rglob("*") if p.suffix.lower() in (".mid", ".midi"))
    songs: dict[str, list[Segment]] = {}
    for path in paths:
        try:
            segs = midi_to_roll(path.read_bytes())
        except UnsupportedMeterError as exc:
            logger.warning("skipping %s: %s", path.name, exc)
            continue
        song_id = str(path.relative_to(midi_dir))
        songs[song_id] = [Segment(roll, song_id, meta.start_bar) for roll, meta in segs]
    if not songs:
        raise ValueError(f"no usable MIDI files under {midi_dir}")

    ids = sorted(songs)
    order = torch.randperm(len(ids), generator=torch.Generator().manual_seed(config.seed))
    n_train = max(1, int(len(ids) * config.split_ratio))
    assignment = {}
    train: list[Segment] = []
    val: list[Segment] = []
    for rank, idx in enumerate(order.tolist()):
        song_id = ids[idx]
        if rank < n_train:
            assignment[song_id] = "train"
            train.extend(songs[song_id])
        else:
            assignment[song_id] = "val"
            val.extend(songs[song_id])
    return DatasetSplit(train, val, config.split_ratio, assignment)


def build_denoiser(config: TrainConfig) -> UNetDenoiser:
    return UNetDenoiser(config.denoiser)


def _item_tokens(mode: str, roll_array: np.ndarray,
                 encoders: ConditionEncoders | None) -> torch.Tensor | None:
    """Condition tokens for one (possibly transposed) roll array [2, T, P]."""
    if mode == "none":
        return None
    return condition_tokens(mode, encoders, roll=PianoRoll(roll_array))


def _batch_tokens(items: list[torch.Tensor | None], model: UNetDenoiser,
                  ) -> torch.Tensor | None:
    """Stack per-item tokens; dropped items use the learned null token so its
    embedding keeps receiving gradient."""
    if all(tok is None for tok in items):
        return None
    width = model.config.cond_dim
    num_tokens = next(tok.shape[0] for tok in items if tok is not None)
    rows = []
    for tok in items:
        if tok is None:
            rows.append(model.null_token.expand(num_tokens, width))
        else:
            rows.append(tok.to(torch.float32))
    return torch.stack(rows)


def _transpose_array(data: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return data
    out = np.zeros_like(data)
    if k > 0:
        out[:, :, k:] = data[:, :, :-k]
    else:
        out[:, :, :k] = data[:, :, -k:]
    return out


@dataclass
class Checkpoint:
    denoiser_config: DenoiserConfig
    denoiser_state: dict[str, torch.Tensor]
    schedule: NoiseSchedule
    train_config: TrainConfig
    encoders: ConditionEncoders | None = None
    curve: dict = field(default_factory=dict)
    golden: dict | None = None

    def build_denoiser(self) -> UNetDenoiser:
        model = UNetDenoiser(self.denoiser_config)
        model.load_state_dict(self.denoiser_state)
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        return model

    @property
    def condition_mode(self) -> str:
        return self.train_config.condition_mode


def train(split: DatasetSplit, config: TrainConfig,
          encoders: ConditionEncoders | None = None,
          checkpoint_path: str | Path | None = None,
          checkpoint_every: int = 1000) -> Checkpoint:
    """Run the training loop and return the final checkpoint."""
    if config.condition_mode in ("chord", "texture") and encoders is None:
        raise ValueError(f"condition_mode {config.condition_mode!r} needs fitted encoders")
    if not split.train:
        raise ValueError("empty training split")

    torch.manual_seed(config.seed)
    sched = build_schedule(config.num_steps, config.beta_start, config.beta_end)
    model = build_denoiser(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr,
                           betas=(0.9, 0.999), eps=1e-8)

    data = np.stack([seg.roll.data for seg in split.train])  # [n, 2, T, P] uint8
    g_batch = torch.Generator().manual_seed(config.seed + 1)
    g_noise = torch.Generator().manual_seed(config.seed + 2)
    g_drop = torch.Generator().manual_seed(config.seed + 3)
    g_val = torch.Generator().manual_seed(config.seed + 4)

    encoder_checksum = encoders.checksum() if encoders is not None else None

    # Fixed validation batch: same segments, steps, and noise at every eval.
    val_state = None
    if split.val:
        cap = min(len(split.val), 64)
        val_rolls = np.stack([seg.roll.data for seg in split.val[:cap]]).astype(np.float32)
        val_x0 = torch.from_numpy(val_rolls)
        val_t = torch.randint(1, config.num_steps + 1, (cap,), generator=g_val)
        val_eps = torch.randn(val_x0.shape, generator=g_val)
        val_cond = None
        if config.condition_mode != "none":
            items = [_item_tokens(config.condition_mode, seg.roll.data, encoders)
                     for seg in split.val[:cap]]
            val_cond = _batch_tokens(items, model)
            val_cond = val_cond.detach() if val_cond is not None else None
        val_state = (val_x0, val_t, val_eps, val_cond)

    curve: dict[str, list] = {"train": [], "val": []}
    best_val = float("inf")
    stale_evals = 0
    final_loss = float("nan")

    for step in range(1, config.max_steps + 1):
        idx = torch.randint(0, data.shape[0], (config.batch_size,), generator=g_batch)
        ks = torch.randint(0, len(AUGMENT_OFFSETS), (config.batch_size,), generator=g_batch) \
            if config.augment else torch.zeros(config.batch_size, dtype=torch.long)
        arrays = []
        tokens: list[torch.Tensor | None] = []
        for i, ki in zip(idx.tolist(), ks.tolist()):
            arr = _transpose_array(data[i], AUGMENT_OFFSETS[ki] if config.augment else 0)
            arrays.append(arr.astype(np.float32))
            if config.condition_mode == "none":
                tokens.append(None)
            else:
                tok = _item_tokens(config.condition_mode, arr, encoders)
                if float(torch.rand((), generator=g_drop)) < config.p_drop:
                    tok = None
                tokens.append(tok)
        x0 = torch.from_numpy(np.stack(arrays))
        t = torch.randint(1, config.num_steps + 1, (config.batch_size,), generator=g_noise)
        eps = torch.randn(x0.shape, generator=g_noise)
        cond = _batch_tokens(tokens, model)

        loss = training_loss(model, sched, x0, t, eps, cond)
        if not torch.isfinite(loss):
            raise DivergenceError(f"training loss diverged at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        final_loss = float(loss.detach())
        curve["train"].append((step, final_loss))

        if val_state is not None and step % config.val_every == 0:
            with torch.no_grad():
                vx0, vt, veps, vcond = val_state
                val_loss = float(training_loss(model, sched, vx0, vt, veps, vcond))
            curve["val"].append((step, val_loss))
            if val_loss < best_val - 1e-6:
                best_val = val_loss
                stale_evals = 0
            else:
                stale_evals += 1
                if stale_evals >= config.early_stop_patience:
                    logger.info("early stop at step %d (val plateau)", step)
                    break
        if config.stop_below_loss and step >= config.stop_loss_window:
            window = [v for _, v in curve["train"][-config.stop_loss_window:]]
            if sum(window) / len(window) < config.stop_below_loss:
                logger.info("early stop at step %d (windowed train loss %.4f)",
                            step, sum(window) / len(window))
                break
        if checkpoint_path is not None and step % checkpoint_every == 0:
            snapshot = Checkpoint(config.denoiser, model.state_dict(), sched,
                                  config, encoders, dict(curve))
            save_checkpoint(snapshot, checkpoint_path)

    if encoder_checksum is not None and encoders.checksum() != encoder_checksum:
        raise RuntimeError("condition encoders changed during diffusion training")

    return Checkpoint(config.denoiser, model.state_dict(), sched, config,
                      encoders, curve)


# -- persistence ------------------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path: str | Path,
                    golden_seed: int | None = None) -> None:
    """Atomically write magic + manifest JSON + tensor blobs.

    golden_seed, when given, stores the hash of a fixed-seed sample so a
    reloaded checkpoint can prove it reproduces the original model."""
    path = Path(path)
    golden = ckpt.golden
    if golden_seed is not None:
        model = ckpt.build_denoiser()
        out = sample(model, ckpt.schedule, SampleRequest(seed=golden_seed))
        golden = {"seed": golden_seed,
                  "sha256": hashlib.sha256(out.numpy().tobytes()).hexdigest()}

    den_blob, den_manifest = state_to_blob(ckpt.denoiser_state)
    enc_blob, enc_meta = (b"", None)
    if ckpt.encoders is not None:
        enc_blob, enc_meta = ckpt.encoders.to_blob()
    manifest = {
        "format_version": FORMAT_VERSION,
        "denoiser_config": ckpt.denoiser_config.to_json(),
        "schedule": ckpt.schedule.to_json(),
        "train_config": ckpt.train_config.to_json(),
        "curve": ckpt.curve,
        "golden": golden,
        "denoiser_manifest": den_manifest,
        "denoiser_blob_size": len(den_blob),
        "encoder_meta": enc_meta,
        "encoder_blob_size": len(enc_blob),
    }
    payload = json.dumps(manifest).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(">Q", len(payload)))
        fh.write(payload)
        fh.write(den_blob)
        fh.write(enc_blob)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (length,) = struct.unpack(">Q", raw[8:16])
    manifest = json.loads(raw[16:16 + length].decode())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
    offset = 16 + length
    den_blob = raw[offset:offset + manifest["denoiser_blob_size"]]
    offset += manifest["denoiser_blob_size"]
    enc_blob = raw[offset:offset + manifest["encoder_blob_size"]]

    state = blob_to_state(den_blob, manifest["denoiser_manifest"])
    sched = NoiseSchedule.from_json(manifest["schedule"])
    encoders = None
    if manifest["encoder_meta"] is not None:
        encoders = ConditionEncoders.from_blob(enc_blob, manifest["encoder_meta"])
    return Checkpoint(
        denoiser_config=DenoiserConfig.from_json(manifest["denoiser_config"]),
        denoiser_state=state,
        schedule=sched,
        train_config=TrainConfig.from_json(manifest["train_config"]),
        encoders=encoders,
        curve=manifest.get("curve", {}),
        golden=manifest.get("golden"),
    )

"""Objective evaluation: pitch/duration histogram overlap against reference
music, and chord/onset distances measuring adherence to a condition.

Histogram conventions recorded in every report header: pitch uses all 128
MIDI bins weighted by note count; durations bin at 1..32 steps with longer
notes clipped into a final bucket; onset counts are normalized to a
distribution before the l2 distance so density and placement stay separate.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chords import ChordSeq, chord_to_vec36, extract_chords
from .pianoroll import (DequantizedRoll, PianoRoll, midi_to_roll, roll_from_json,
                        roll_to_notes)

logger = logging.getLogger(__name__)

DURATION_BINS = 33  # 1..32 steps, plus one clipped bucket for >= 33

MODES = {
    "uncond": ("pitch_overlap", "duration_overlap"),
    "acc": ("pitch_overlap", "duration_overlap"),
    "inpaint": ("pitch_overlap", "duration_overlap"),
    "chord": ("pitch_overlap", "duration_overlap", "chord_distance"),
    "texture": ("pitch_overlap", "duration_overlap", "onset_distance"),
}


def _pitch_hist(roll: PianoRoll) -> np.ndarray | None:
    notes, _ = roll_to_notes(roll)
    if not notes:
        return None
    hist = np.zeros(128)
    for n in notes:
        hist[n.pitch] += 1
    return hist / hist.sum()


def _duration_hist(roll: PianoRoll) -> np.ndarray | None:
    notes, _ = roll_to_notes(roll)
    if not notes:
        return None
    hist = np.zeros(DURATION_BINS)
    for n in notes:
        hist[min(n.duration_steps, DURATION_BINS) - 1] += 1
    return hist / hist.sum()


def _overlap(p: np.ndarray | None, q: np.ndarray | None) -> float | None:
    if p is None and q is None:
        return None  # undefined: both sides empty
    if p is None or q is None:
        return 0.0
    return float(np.minimum(p, q).sum())


def pitch_overlap(gen: PianoRoll, ref: PianoRoll) -> float | None:
    """Overlapped area of note-count pitch histograms, in [0, 1]."""
    return _overlap(_pitch_hist(gen), _pitch_hist(ref))


def duration_overlap(gen: PianoRoll, ref: PianoRoll) -> float | None:
    """Overlapped area of note-duration histograms, in [0, 1]."""
    return _overlap(_duration_hist(gen), _duration_hist(ref))


def chord_distance(gen: PianoRoll | ChordSeq, cond: ChordSeq) -> float:
    """Mean per-beat l2 distance between 36-D chord vectors."""
    gen_seq = gen if isinstance(gen, ChordSeq) else extract_chords(gen)
    if len(gen_seq) != len(cond):
        raise ValueError(f"beat count mismatch: {len(gen_seq)} vs {len(cond)}")
    total = 0.0
    for a, b in zip(gen_seq, cond):
        total += float(np.linalg.norm(chord_to_vec36(a) - chord_to_vec36(b)))
    return total / len(cond)


def onset_distance(gen: PianoRoll, texture_src: PianoRoll) -> float | None:
    """l2 distance between normalized per-step onset-count distributions."""
    if gen.num_steps != texture_src.num_steps:
        raise ValueError("rolls must cover the same number of steps")
    a = gen.onsets.sum(axis=1).astype(np.float64)
    b = texture_src.onsets.sum(axis=1).astype(np.float64)
    if a.sum() == 0 or b.sum() == 0:
        return None  # flagged: a roll without onsets has no onset distribution
    return float(np.linalg.norm(a / a.sum() - b / b.sum()))


@dataclass
class EvalReport:
    mode: str
    sample_count: int
    means: dict[str, float]
    per_sample: dict[str, list[float | None]]
    skipped: dict[str, int] = field(default_factory=dict)
    conventions: dict[str, str] = field(default_factory=lambda: {
        "pitch_overlap": "128 MIDI pitch bins, note-count weighted",
        "duration_overlap": "bins 1..32 steps, >=33 clipped",
        "chord_distance": "template chroma, mean l2 over beats",
        "onset_distance": "per-step onset counts normalized before l2",
    })

    def to_json(self) -> dict:
        return {"mode": self.mode, "sample_count": self.sample_count,
                "means": self.means, "per_sample": self.per_sample,
                "skipped": self.skipped, "conventions": self.conventions}

    def to_table(self) -> str:
        names = list(self.means)
        header = "task".ljust(12) + "".join(n.rjust(20) for n in names)
        row = self.mode.ljust(12) + "".join(
            f"{self.means[n]:.4f}".rjust(20) for n in names)
        return header + "\n" + row


def _load_roll(path: Path) -> PianoRoll:
    if path.suffix.lower() in (".mid", ".midi"):
        segments = midi_to_roll(path.read_bytes())
        return segments[0][0]
    obj = json.loads(path.read_text())
    if isinstance(obj, dict) and "shape" in obj:
        return roll_from_json(obj)
    raise ValueError(f"{path}: not a roll file")


def _roll_files(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.suffix.lower() in (".json", ".mid", ".midi"))


def evaluate(gen_dir: str | Path, ref_dir: str | Path, mode: str = "uncond",
             ) -> EvalReport:
    """Score generated rolls against references paired by sorted filename index.

    References are the ground-truth segments each sample was conditioned on or
    inpainted from; chord conditions are re-extracted from the reference,
    texture conditions are the reference onsets.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; pick one of {sorted(MODES)}")
    gen_files = _roll_files(gen_dir)
    ref_files = _roll_files(ref_dir)
    if len(gen_files) != len(ref_files):
        raise ValueError(f"unpaired files: {len(gen_files)} generated vs {len(ref_files)} reference")
    if not gen_files:
        raise ValueError("no samples to evaluate")

    metric_fns = {
        "pitch_overlap": pitch_overlap,
        "duration_overlap": duration_overlap,
        "chord_distance": lambda g, r: chord_distance(g, extract_chords(r)),
        "onset_distance": onset_distance,
    }
    per_sample: dict[str, list[float | None]] = {m: [] for m in MODES[mode]}
    for gen_path, ref_path in zip(gen_files, ref_files):
        gen = _load_roll(gen_path)
        ref = _load_roll(ref_path)
        for metric in MODES[mode]:
            per_sample[metric].append(metric_fns[metric](gen, ref))

    means = {}
    skipped = {}
    for metric, values in per_sample.items():
        kept = [v for v in values if v is not None]
        skipped[metric] = len(values) - len(kept)
        means[metric] = float(np.mean(kept)) if kept else float("nan")
    return EvalReport(mode, len(gen_files), means, per_sample, skipped)

"""Inpainting masks over piano rolls.

Mask entries are 1 where a cell is FIXED (kept from the source) and 0 where
the sampler generates. Region specs name the generated area for time and
pitch selections, and the fixed area for part selections, matching how each
creative task is phrased (regenerate these bars / keep this part).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pianoroll import (NUM_PITCHES, SEGMENT_STEPS, STEPS_PER_BAR, Part, PianoRoll)


@dataclass
class Mask:
    data: np.ndarray  # uint8 [2, T, P], 1 = fixed, 0 = generated

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise ValueError(f"expected shape [2, T, P], got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        self.data = arr.astype(np.uint8)

    @classmethod
    def all_fixed(cls, num_steps: int = SEGMENT_STEPS) -> "Mask":
        return cls(np.ones((2, num_steps, NUM_PITCHES), dtype=np.uint8))

    @classmethod
    def all_generated(cls, num_steps: int = SEGMENT_STEPS) -> "Mask":
        return cls(np.zeros((2, num_steps, NUM_PITCHES), dtype=np.uint8))

    def union(self, other: "Mask") -> "Mask":
        """Cell-wise OR: fixed if fixed in either operand."""
        return Mask(self.data | other.data)

    def intersection(self, other: "Mask") -> "Mask":
        return Mask(self.data & other.data)

    def complement(self) -> "Mask":
        return Mask(1 - self.data)

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.data, other.data)


@dataclass
class MaskSpec:
    """Serializable recipe for a mask. kind selects the payload fields.

    kinds: time_bars (1-based bar list, generated), time_steps (half-open step
    range, generated), pitch_range (inclusive pitch range, generated),
    part (named part fixed, needs a source roll with part labels),
    explicit (sparse fixed-cell list), union, complement.
    """

    kind: str
    bars: list[int] = field(default_factory=list)
    start: int = 0
    stop: int = 0
    low: int = 0
    high: int = 0
    part: str = ""
    shape: list[int] = field(default_factory=list)
    ones: list[list[int]] = field(default_factory=list)
    specs: list["MaskSpec"] = field(default_factory=list)
    spec: "MaskSpec | None" = None

    def to_json(self) -> dict:
        if self.kind == "time_bars":
            return {"kind": "time_bars", "bars": list(self.bars)}
        if self.kind == "time_steps":
            return {"kind": "time_steps", "start": self.start, "stop": self.stop}
        if self.kind == "pitch_range":
            return {"kind": "pitch_range", "low": self.low, "high": self.high}
        if self.kind == "part":
            return {"kind": "part", "part": self.part}
        if self.kind == "explicit":
            return {"kind": "explicit", "shape": list(self.shape),
                    "ones": [list(c) for c in self.ones]}
        if self.kind == "union":
            return {"kind": "union", "specs": [s.to_json() for s in self.specs]}
        if self.kind == "complement":
            return {"kind": "complement", "spec": self.spec.to_json()}
        raise ValueError(f"unknown mask kind {self.kind!r}")

    @classmethod
    def from_json(cls, obj: dict) -> "MaskSpec":
        kind = obj.get("kind")
        if kind == "time_bars":
            return cls(kind, bars=[int(b) for b in obj["bars"]])
        if kind == "time_steps":
            return cls(kind, start=int(obj["start"]), stop=int(obj["stop"]))
        if kind == "pitch_range":
            return cls(kind, low=int(obj["low"]), high=int(obj["high"]))
        if kind == "part":
            return cls(kind, part=obj["part"])
        if kind == "explicit":
            return cls(kind, shape=list(obj.get("shape", [2, SEGMENT_STEPS, NUM_PITCHES])),
                       ones=[list(c) for c in obj.get("ones", [])])
        if kind == "union":
            return cls(kind, specs=[cls.from_json(s) for s in obj["specs"]])
        if kind == "complement":
            return cls(kind, spec=cls.from_json(obj["spec"]))
        raise ValueError(f"unknown mask kind {kind!r}")


def time_bars(bars: list[int]) -> MaskSpec:
    return MaskSpec("time_bars", bars=list(bars))


def time_steps(start: int, stop: int) -> MaskSpec:
    return MaskSpec("time_steps", start=start, stop=stop)


def pitch_range(low: int, high: int) -> MaskSpec:
    return MaskSpec("pitch_range", low=low, high=high)


def part(name: str | Part) -> MaskSpec:
    name = name.value if isinstance(name, Part) else name
    return MaskSpec("part", part=name)


def explicit(data: np.ndarray) -> MaskSpec:
    arr = np.asarray(data)
    return MaskSpec("explicit", shape=list(arr.shape),
                    ones=np.argwhere(arr).tolist())


def union(*specs: MaskSpec) -> MaskSpec:
    return MaskSpec("union", specs=list(specs))


def complement(inner: MaskSpec) -> MaskSpec:
    return MaskSpec("complement", spec=inner)


def make_mask(spec: MaskSpec, num_steps: int = SEGMENT_STEPS,
              source: PianoRoll | None = None) -> Mask:
    """Build the mask a spec describes. part specs need a decoded source roll."""
    if spec.kind == "time_bars":
        data = np.ones((2, num_steps, NUM_PITCHES), dtype=np.uint8)
        num_bars = num_steps // STEPS_PER_BAR
        for bar in spec.bars:
            if not 1 <= bar <= num_bars:
                raise ValueError(f"bar {bar} outside 1..{num_bars}")
            lo = (bar - 1) * STEPS_PER_BAR
            data[:, lo:lo + STEPS_PER_BAR, :] = 0
        return Mask(data)
    if spec.kind == "time_steps":
        if not 0 <= spec.start <= spec.stop <= num_steps:
            raise ValueError(f"step range [{spec.start}, {spec.stop}) outside 0..{num_steps}")
        data = np.ones((2, num_steps, NUM_PITCHES), dtype=np.uint8)
        data[:, spec.start:spec.stop, :] = 0
        return Mask(data)
    if spec.kind == "pitch_range":
        if not 0 <= spec.low <= spec.high < NUM_PITCHES:
            raise ValueError(f"pitch range {spec.low}..{spec.high} invalid")
        data = np.ones((2, num_steps, NUM_PITCHES), dtype=np.uint8)
        data[:, :, spec.low:spec.high + 1] = 0
        return Mask(data)
    if spec.kind == "part":
        if source is None or not source.notes:
            raise ValueError("part mask needs a source roll decoded with part labels")
        wanted = Part(spec.part)
        data = np.zeros((2, num_steps, NUM_PITCHES), dtype=np.uint8)
        for n in source.notes:
            if n.part is wanted:
                end = min(n.onset_step + n.duration_steps, num_steps)
                data[:, n.onset_step:end, n.pitch] = 1
        return Mask(data)
    if spec.kind == "explicit":
        shape = tuple(spec.shape) if spec.shape else (2, num_steps, NUM_PITCHES)
        data = np.zeros(shape, dtype=np.uint8)
        for cell in spec.ones:
            data[tuple(cell)] = 1
        return Mask(data)
    if spec.kind == "union":
        masks = [make_mask(s, num_steps, source) for s in spec.specs]
        out = masks[0]
        for m in masks[1:]:
            out = out.union(m)
        return out
    if spec.kind == "complement":
        return make_mask(spec.spec, num_steps, source).complement()
    raise ValueError(f"unknown mask kind {spec.kind!r}")

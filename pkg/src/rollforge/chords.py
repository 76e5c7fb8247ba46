"""Rule-based chord extraction and the 36-D chord vector encoding.

Each beat of a roll is matched against 96 chord templates (8 qualities over
12 roots) by inner product with the beat's duration-weighted chroma
histogram. A chord serializes to 36 dimensions: one-hot root (0-11),
one-hot bass (12-23), multi-hot chroma (24-35); an absent chord is all zeros.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .pianoroll import STEPS_PER_BEAT, PianoRoll

# Quality -> intervals above the root. Order doubles as the tie-break
# precedence when score and template overlap are equal at one root.
QUALITIES: dict[str, tuple[int, ...]] = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "sus4": (0, 5, 7),
    "dom7": (0, 4, 7, 10),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
}

PITCH_NAMES = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]
_NAME_TO_PC = {name: i for i, name in enumerate(PITCH_NAMES)}
_NAME_TO_PC.update({"DB": 1, "EB": 3, "GB": 6, "AB": 8, "BB": 10})


@dataclass(frozen=True)
class Chord:
    root: int = 0
    bass: int = 0
    chroma: frozenset[int] = frozenset()
    present: bool = False

    def __post_init__(self):
        if self.present:
            if not 0 <= self.root < 12 or not 0 <= self.bass < 12:
                raise ValueError("root and bass must be pitch classes 0-11")
            if self.chroma and self.root not in self.chroma:
                raise ValueError("root must belong to the chroma set")

    @classmethod
    def absent(cls) -> "Chord":
        return cls()

    @classmethod
    def from_quality(cls, root: int, quality: str, bass: int | None = None) -> "Chord":
        intervals = QUALITIES[quality]
        chroma = frozenset((root + i) % 12 for i in intervals)
        return cls(root=root, bass=root if bass is None else bass,
                   chroma=chroma, present=True)

    def transposed(self, k: int) -> "Chord":
        if not self.present:
            return self
        return Chord((self.root + k) % 12, (self.bass + k) % 12,
                     frozenset((pc + k) % 12 for pc in self.chroma), True)

    def symbol(self) -> str:
        if not self.present:
            return "N"
        for quality, intervals in QUALITIES.items():
            if self.chroma == frozenset((self.root + i) % 12 for i in intervals):
                base = f"{PITCH_NAMES[self.root]}:{quality}"
                return base if self.bass == self.root else f"{base}/{PITCH_NAMES[self.bass]}"
        return f"{PITCH_NAMES[self.root]}:?"


@dataclass
class ChordSeq:
    """One chord per beat of an 8-bar segment (32 beats)."""

    chords: list[Chord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.chords)

    def __iter__(self):
        return iter(self.chords)

    def __getitem__(self, i):
        return self.chords[i]

    def transposed(self, k: int) -> "ChordSeq":
        return ChordSeq([c.transposed(k) for c in self.chords])

    def to_json(self) -> list[dict]:
        out = []
        for c in self.chords:
            if c.present:
                out.append({"root": c.root, "bass": c.bass, "chroma": sorted(c.chroma)})
            else:
                out.append({"root": None, "bass": None, "chroma": []})
        return out

    @classmethod
    def from_json(cls, items: list[dict]) -> "ChordSeq":
        chords = []
        for item in items:
            if item.get("root") is None:
                chords.append(Chord.absent())
            else:
                chords.append(Chord(int(item["root"]), int(item["bass"]),
                                    frozenset(int(p) for p in item["chroma"]), True))
        return cls(chords)

    def to_matrix(self) -> np.ndarray:
        """Stack the per-beat 36-D vectors into a [beats, 36] float32 matrix."""
        return np.stack([chord_to_vec36(c) for c in self.chords])


def chord_to_vec36(chord: Chord) -> np.ndarray:
    vec = np.zeros(36, dtype=np.float32)
    if chord.present:
        vec[chord.root] = 1.0
        vec[12 + chord.bass] = 1.0
        for pc in chord.chroma:
            vec[24 + pc] = 1.0
    return vec


_TEMPLATES: list[tuple[int, str, np.ndarray]] = []
for _root in range(12):
    for _quality, _intervals in QUALITIES.items():
        _vec = np.zeros(12, dtype=np.float64)
        for _i in _intervals:
            _vec[(_root + _i) % 12] = 1.0
        _TEMPLATES.append((_root, _quality, _vec))


def _match_templates(hist: np.ndarray, bass: int) -> Chord:
    """Pick the best template for a duration-weighted chroma histogram.

    Primary score is the inner product; ties break toward the template with
    the larger fraction of its tones actually sounding, then toward the root
    circularly closest above the bass, then the lower root. The histogram
    holds integer step counts, so scores compare exactly, and the bass-anchored
    tie-break keeps extraction equivariant under transposition (an absolute
    lower-root rule would not rotate with the input).
    """
    sounding = hist > 0
    best_key = None
    best = None
    for root, quality, template in _TEMPLATES:
        score = float(hist @ template)
        overlap = float(sounding @ template) / template.sum()
        key = (score, overlap, -((root - bass) % 12), -root)
        if best_key is None or key > best_key:
            best_key, best = key, (root, quality)
    return Chord.from_quality(best[0], best[1])


def extract_chords(roll: PianoRoll) -> ChordSeq:
    """Beat-wise template matching over the roll's sounding cells.

    Silent beats carry the previous chord forward, or are absent at the start.
    The bass is the lowest sounding pitch class in the beat.
    """
    sounding = (roll.onsets | roll.sustains).astype(np.float64)  # [T, P]
    num_beats = roll.num_steps // STEPS_PER_BEAT
    chords: list[Chord] = []
    previous = Chord.absent()
    for b in range(num_beats):
        window = sounding[b * STEPS_PER_BEAT:(b + 1) * STEPS_PER_BEAT]
        weights = window.sum(axis=0)  # steps sounding per pitch
        if weights.sum() == 0:
            chords.append(previous)
            continue
        hist = np.zeros(12)
        for pitch in np.flatnonzero(weights):
            hist[pitch % 12] += weights[pitch]
        bass = int(np.flatnonzero(weights)[0]) % 12
        matched = _match_templates(hist, bass)
        chord = Chord(matched.root, bass, matched.chroma, True)
        chords.append(chord)
        previous = chord
    return ChordSeq(chords)


_SYMBOL_RE = re.compile(r"^([A-Ga-g][#b]?)(?::(\w+))?(?:/([A-Ga-g][#b]?))?$")


def parse_chord_symbol(symbol: str) -> Chord:
    """Parse text like "C:maj", "A:min/C", or "N" (no chord)."""
    symbol = symbol.strip()
    if symbol.upper() in ("N", "NC", ""):
        return Chord.absent()
    m = _SYMBOL_RE.match(symbol)
    if not m:
        raise ValueError(f"cannot parse chord symbol {symbol!r}")
    root = _NAME_TO_PC[m.group(1).upper()]
    quality = m.group(2) or "maj"
    if quality == "7":
        quality = "dom7"
    if quality not in QUALITIES:
        raise ValueError(f"unknown chord quality {quality!r}")
    bass = _NAME_TO_PC[m.group(3).upper()] if m.group(3) else None
    return Chord.from_quality(root, quality, bass)


def parse_chord_seq(text: str, beats: int = 32) -> ChordSeq:
    """Parse a comma/space separated list of symbols, each optionally "*n" repeated.

    "C:maj*16,G:maj*16" expands to 32 beats. The expansion must match `beats`.
    """
    chords: list[Chord] = []
    for token in re.split(r"[\s,]+", text.strip()):
        if not token:
            continue
        if "*" in token:
            symbol, _, count = token.partition("*")
            chords.extend([parse_chord_symbol(symbol)] * int(count))
        else:
            chords.append(parse_chord_symbol(token))
    if len(chords) != beats:
        raise ValueError(f"chord list expands to {len(chords)} beats, expected {beats}")
    return ChordSeq(chords)

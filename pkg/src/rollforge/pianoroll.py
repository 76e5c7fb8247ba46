"""Piano-roll tensors and the MIDI <-> roll codec.

A score segment is a 2-channel binary tensor of shape [2, T, P]: channel 0
holds note onsets, channel 1 the following sustain steps (the onset step
itself is never marked as sustain, so the channels are disjoint per cell).
Model I/O uses T = 128 time steps (8 bars at 1/4-beat resolution) and
P = 128 MIDI pitches.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .midi import MidiFormatError, MidiNote, MidiSong, parse_midi, write_midi

STEPS_PER_BEAT = 4
BEATS_PER_BAR = 4
STEPS_PER_BAR = STEPS_PER_BEAT * BEATS_PER_BAR  # 16
SEGMENT_BARS = 8
SEGMENT_STEPS = SEGMENT_BARS * STEPS_PER_BAR  # 128
NUM_PITCHES = 128

SUPPORTED_METERS = {(4, 4), (2, 4)}


class UnsupportedMeterError(ValueError):
    """Signals a piece whose meter is not 2/4 or 4/4; callers skip with a warning."""


class Part(str, enum.Enum):
    MELODY = "melody"
    ACCOMPANIMENT = "accompaniment"
    UNKNOWN = "unknown"


# Track-name fragments mapped to parts, POP909-style. Callers may override.
DEFAULT_PART_MAP = {
    "MELODY": Part.MELODY,
    "BRIDGE": Part.ACCOMPANIMENT,
    "PIANO": Part.ACCOMPANIMENT,
}


@dataclass
class NoteEvent:
    pitch: int
    onset_step: int
    duration_steps: int
    part: Part = Part.UNKNOWN

    def __post_init__(self):
        if not 0 <= self.pitch < NUM_PITCHES:
            raise ValueError(f"pitch {self.pitch} out of range")
        if self.onset_step < 0 or self.duration_steps < 1:
            raise ValueError("onset_step must be >= 0 and duration_steps >= 1")


@dataclass
class PianoRoll:
    """Binary onset/sustain tensor. data has dtype uint8 and entries in {0, 1}."""

    data: np.ndarray
    notes: list[NoteEvent] = field(default_factory=list, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise ValueError(f"expected shape [2, T, P], got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("piano roll entries must be 0 or 1")
        self.data = arr.astype(np.uint8)

    @classmethod
    def zeros(cls, num_steps: int = SEGMENT_STEPS) -> "PianoRoll":
        return cls(np.zeros((2, num_steps, NUM_PITCHES), dtype=np.uint8))

    @property
    def num_steps(self) -> int:
        return self.data.shape[1]

    @property
    def onsets(self) -> np.ndarray:
        return self.data[0]

    @property
    def sustains(self) -> np.ndarray:
        return self.data[1]

    def __eq__(self, other) -> bool:
        return isinstance(other, PianoRoll) and np.array_equal(self.data, other.data)


@dataclass
class DequantizedRoll:
    """Real-valued roll straight out of the sampler, values nominally in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise ValueError(f"expected shape [2, T, P], got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("dequantized roll has non-finite entries")
        self.data = arr

    def threshold(self, cutoff: float = 0.5) -> PianoRoll:
        return PianoRoll((self.data >= cutoff).astype(np.uint8))


@dataclass
class SegmentMeta:
    start_bar: int  # 1-based bar index of the window start within the song
    total_bars: int
    part_counts: dict[str, int] = field(default_factory=dict)


def resolve_overlaps(notes: list[NoteEvent]) -> list[NoteEvent]:
    """Merge overlapping same-pitch notes: a later onset truncates the note before it.

    Duplicate onsets at the same (step, pitch) collapse to the longest one. The
    binary roll cannot express same-pitch overlap, so this runs before encoding.
    """
    by_pitch: dict[int, list[NoteEvent]] = {}
    for n in notes:
        by_pitch.setdefault(n.pitch, []).append(n)
    out: list[NoteEvent] = []
    for pitch, group in by_pitch.items():
        group.sort(key=lambda n: (n.onset_step, -n.duration_steps))
        dedup: list[NoteEvent] = []
        for n in group:
            if dedup and dedup[-1].onset_step == n.onset_step:
                continue
            dedup.append(n)
        for i, n in enumerate(dedup):
            dur = n.duration_steps
            if i + 1 < len(dedup):
                dur = min(dur, dedup[i + 1].onset_step - n.onset_step)
            out.append(NoteEvent(pitch, n.onset_step, dur, n.part))
    out.sort(key=lambda n: (n.onset_step, n.pitch))
    return out


def notes_to_roll(notes: list[NoteEvent], start_step: int = 0,
                  num_steps: int = SEGMENT_STEPS) -> PianoRoll:
    """Rasterize notes whose onset falls in [start_step, start_step + num_steps).

    Sustains are clipped at the window end. Notes onsetting before the window
    contribute nothing (their sustain tail would decode as an invalid run).
    """
    data = np.zeros((2, num_steps, NUM_PITCHES), dtype=np.uint8)
    kept: list[NoteEvent] = []
    for n in resolve_overlaps(notes):
        t = n.onset_step - start_step
        if not 0 <= t < num_steps:
            continue
        end = min(t + n.duration_steps, num_steps)
        data[0, t, n.pitch] = 1
        data[1, t + 1:end, n.pitch] = 1
        kept.append(NoteEvent(n.pitch, t, end - t, n.part))
    return PianoRoll(data, notes=kept)


def roll_to_notes(roll: PianoRoll | DequantizedRoll,
                  threshold: float = 0.5) -> tuple[list[NoteEvent], int]:
    """Decode a roll into notes, dropping sustain runs that lack an onset.

    A note spans its onset step plus the consecutive sustain steps after it;
    the run stops early if another onset restarts the pitch. Returns the note
    list and the count of dropped onset-less sustain runs.
    """
    if isinstance(roll, DequantizedRoll):
        roll = roll.threshold(threshold)
    onsets, sustains = roll.onsets, roll.sustains
    num_steps = roll.num_steps
    notes: list[NoteEvent] = []
    dropped_runs = 0
    active_pitches = np.flatnonzero(onsets.any(axis=0) | sustains.any(axis=0))
    for p in active_pitches:
        on_col = onsets[:, p]
        sus_col = sustains[:, p]
        consumed = np.zeros(num_steps, dtype=bool)
        for t in np.flatnonzero(on_col):
            end = t + 1
            while end < num_steps and sus_col[end] and not on_col[end]:
                end += 1
            notes.append(NoteEvent(int(p), int(t), int(end - t)))
            consumed[t:end] = True
        leftover = sus_col.astype(bool) & ~consumed
        if leftover.any():
            # Each maximal run of unattached sustain cells counts once.
            padded = np.concatenate(([False], leftover))
            dropped_runs += int((padded[1:] & ~padded[:-1]).sum())
    notes.sort(key=lambda n: (n.onset_step, n.pitch))
    return notes, dropped_runs


def _meter_of(song: MidiSong) -> tuple[int, int]:
    meters = {(num, den) for _, num, den in song.time_signatures}
    if not meters:
        return (4, 4)  # SMF default
    if not meters <= SUPPORTED_METERS:
        raise UnsupportedMeterError(f"unsupported meter(s): {sorted(meters - SUPPORTED_METERS)}")
    if len(meters) > 1:
        raise UnsupportedMeterError("mixed 2/4 and 4/4 meters")
    return meters.pop()


def _part_for(track_name: str, overrides: dict[str, Part] | None) -> Part:
    name = track_name.upper()
    table = dict(DEFAULT_PART_MAP)
    if overrides:
        table.update({k.upper(): v for k, v in overrides.items()})
    for fragment, part in table.items():
        if fragment in name:
            return part
    return Part.UNKNOWN


def quantize_song(song: MidiSong, quantization: int = STEPS_PER_BEAT,
                  part_overrides: dict[str, Part] | None = None) -> tuple[list[NoteEvent], int]:
    """Quantize a parsed MIDI song to the step grid.

    Returns (notes, total_bars). Bars are fixed 4-beat units regardless of
    notated meter, so a 2/4 piece counts two notated bars per unit and T stays
    uniform across the corpus.
    """
    _meter_of(song)  # raises on unsupported meters
    step_ticks = song.ticks_per_beat / quantization
    notes = []
    for n in song.notes:
        onset = round(n.onset_tick / step_ticks)
        dur = max(1, round((n.onset_tick + n.duration_ticks) / step_ticks) - onset)
        if not 0 <= n.pitch < NUM_PITCHES:
            continue
        name = song.track_names[n.track] if n.track < len(song.track_names) else ""
        notes.append(NoteEvent(n.pitch, onset, dur, _part_for(name, part_overrides)))
    end_step = max((n.onset_step + n.duration_steps for n in notes), default=0)
    total_bars = -(-end_step // STEPS_PER_BAR)  # ceil
    return notes, total_bars


def midi_to_roll(midi_bytes: bytes, quantization: int = STEPS_PER_BEAT,
                 part_overrides: dict[str, Part] | None = None,
                 ) -> list[tuple[PianoRoll, SegmentMeta]]:
    """Split a MIDI file into 8-bar piano-roll windows with a 1-bar hop.

    Songs shorter than 8 bars produce one zero-padded window. Raises
    MidiFormatError for unparseable bytes and UnsupportedMeterError for
    meters other than 2/4 and 4/4.
    """
    song = parse_midi(midi_bytes)
    notes, total_bars = quantize_song(song, quantization, part_overrides)
    num_windows = max(1, total_bars - SEGMENT_BARS + 1)
    segments = []
    for w in range(num_windows):
        roll = notes_to_roll(notes, start_step=w * STEPS_PER_BAR)
        counts: dict[str, int] = {}
        for n in roll.notes:
            counts[n.part.value] = counts.get(n.part.value, 0) + 1
        segments.append((roll, SegmentMeta(start_bar=w + 1, total_bars=total_bars,
                                           part_counts=counts)))
    return segments


def roll_to_midi(roll: PianoRoll | DequantizedRoll, tempo_bpm: float = 120.0,
                 ticks_per_beat: int = 480) -> tuple[bytes, int]:
    """Render a roll as a format-0 SMF. Returns (midi_bytes, dropped_run_count)."""
    notes, dropped = roll_to_notes(roll)
    tick_per_step = ticks_per_beat // STEPS_PER_BEAT
    midi_notes = [MidiNote(pitch=n.pitch, onset_tick=n.onset_step * tick_per_step,
                           duration_ticks=n.duration_steps * tick_per_step)
                  for n in notes]
    return write_midi(midi_notes, ticks_per_beat, tempo_bpm), dropped


def transpose(roll: PianoRoll, k: int) -> PianoRoll:
    """Shift every note by k semitones; cells pushed outside [0, 127] are dropped."""
    if not -11 <= k <= 11:
        raise ValueError("transposition must lie in [-11, 11]")
    if k == 0:
        return PianoRoll(roll.data.copy())
    out = np.zeros_like(roll.data)
    if k > 0:
        out[:, :, k:] = roll.data[:, :, :-k]
    else:
        out[:, :, :k] = roll.data[:, :, -k:]
    return PianoRoll(out)


def transpose_clipped_cells(roll: PianoRoll, k: int) -> int:
    """Count active cells that transpose(roll, k) would push off the pitch range."""
    if k > 0:
        return int(roll.data[:, :, NUM_PITCHES - k:].sum())
    if k < 0:
        return int(roll.data[:, :, :-k].sum())
    return 0


def roll_to_json(roll: PianoRoll | DequantizedRoll) -> dict:
    """Sparse interchange form: {"shape", "onsets": [[t, p], ...], "sustains": ...}."""
    if isinstance(roll, DequantizedRoll):
        roll = roll.threshold()
    return {
        "shape": list(roll.data.shape),
        "onsets": np.argwhere(roll.onsets).tolist(),
        "sustains": np.argwhere(roll.sustains).tolist(),
    }


def roll_from_json(obj: dict) -> PianoRoll:
    shape = obj.get("shape", [2, SEGMENT_STEPS, NUM_PITCHES])
    if len(shape) != 3 or shape[0] != 2:
        raise ValueError(f"bad roll shape {shape}")
    data = np.zeros(tuple(shape), dtype=np.uint8)
    for t, p in obj.get("onsets", []):
        data[0, t, p] = 1
    for t, p in obj.get("sustains", []):
        data[1, t, p] = 1
    return PianoRoll(data)

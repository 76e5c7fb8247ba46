"""Controllable symbolic music generation with piano-roll diffusion."""

from .chords import Chord, ChordSeq, chord_to_vec36, extract_chords, parse_chord_seq
from .diffusion import NoiseSchedule, build_schedule, forward_sample, mse_loss, reverse_step
from .masks import Mask, MaskSpec, make_mask
from .pianoroll import (DequantizedRoll, NoteEvent, Part, PianoRoll, SegmentMeta,
                        UnsupportedMeterError, midi_to_roll, roll_from_json,
                        roll_to_json, roll_to_midi, transpose)

__all__ = [
    "Chord", "ChordSeq", "chord_to_vec36", "extract_chords", "parse_chord_seq",
    "NoiseSchedule", "build_schedule", "forward_sample", "mse_loss", "reverse_step",
    "Mask", "MaskSpec", "make_mask",
    "DequantizedRoll", "NoteEvent", "Part", "PianoRoll", "SegmentMeta",
    "UnsupportedMeterError", "midi_to_roll", "roll_from_json", "roll_to_json",
    "roll_to_midi", "transpose",
]

__version__ = "0.1.0"

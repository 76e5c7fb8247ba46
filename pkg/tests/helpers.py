import numpy as np
import torch
from torch import nn

from rollforge.denoiser import DenoiserConfig, UNetDenoiser
from rollforge.midi import MidiNote, write_midi
from rollforge.pianoroll import NoteEvent, PianoRoll, notes_to_roll

TINY_CONFIG = DenoiserConfig(base_channels=8, channel_mults=(1, 2), num_res_blocks=1,
                             attn_levels=(1,), cond_dim=16, time_embed_dim=32)


class RandomConvDenoiser(nn.Module):
    """Cheap randomly initialized denoiser for sampler-level properties that
    must hold for any denoiser."""

    def __init__(self, seed: int = 0, channels: int = 2):
        super().__init__()
        torch.manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(channels, 8, 3, padding=1), nn.SiLU(),
            nn.Conv2d(8, channels, 3, padding=1))
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x, t, cond=None):
        squeeze = x.ndim == 3
        if squeeze:
            x = x.unsqueeze(0)
        out = self.net(x)
        return out.squeeze(0) if squeeze else out


def random_roll(rng: np.random.Generator, density: float = 0.03,
                num_steps: int = 128) -> PianoRoll:
    return PianoRoll((rng.random((2, num_steps, 128)) < density).astype(np.uint8))


def random_note_song(rng: np.random.Generator, bars: int = 8,
                     notes_per_bar: int = 6, pitch_lo: int = 36,
                     pitch_hi: int = 96) -> list[NoteEvent]:
    """Random quantized notes without same-pitch overlap (codec-exact)."""
    used: dict[int, list[tuple[int, int]]] = {}
    notes = []
    total_steps = bars * 16
    for _ in range(bars * notes_per_bar):
        pitch = int(rng.integers(pitch_lo, pitch_hi))
        onset = int(rng.integers(0, total_steps))
        dur = int(rng.integers(1, 9))
        dur = min(dur, total_steps - onset)
        if dur < 1:
            continue
        clashes = any(onset < o + d and o < onset + dur for o, d in used.get(pitch, []))
        if clashes:
            continue
        used.setdefault(pitch, []).append((onset, dur))
        notes.append(NoteEvent(pitch, onset, dur))
    return notes


def notes_to_midi_bytes(notes: list[NoteEvent], ticks_per_beat: int = 480,
                        numerator: int = 4, track_name: str = "") -> bytes:
    tick = ticks_per_beat // 4
    midi_notes = [MidiNote(pitch=n.pitch, onset_tick=n.onset_step * tick,
                           duration_ticks=n.duration_steps * tick) for n in notes]
    return write_midi(midi_notes, ticks_per_beat, numerator=numerator,
                      track_name=track_name)


def pattern_corpus(count: int = 8) -> list[PianoRoll]:
    """Deterministic, distinct arpeggio patterns used as a memorizable corpus.

    Roots step by 5 semitones (coprime with 12) so every pattern has a
    distinct pitch-class root and therefore a distinct chord sequence."""
    patterns = []
    for i in range(count):
        notes = []
        root = 40 + 5 * i
        triad = [0, 4, 7] if i % 2 == 0 else [0, 3, 7]
        for bar in range(8):
            base = root + [0, 5, 7, 0][bar % 4]
            notes.append(NoteEvent(base - 12, bar * 16, 8))
            for beat in range(4):
                step = bar * 16 + beat * 4
                notes.append(NoteEvent(base + triad[beat % 3], step, 2))
                notes.append(NoteEvent(base + 12 + triad[(beat + 1) % 3], step + 2, 2))
        patterns.append(notes_to_roll(notes))
    return patterns

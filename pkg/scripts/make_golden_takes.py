"""Regenerate frontend/test/fixtures/golden_takes.json.

Each take pairs a roll (interchange JSON) with the note list of the MIDI the
server renders for it, so the browser decoder can be held to byte-level
agreement with the service. Run from the repository root:

    python3 scripts/make_golden_takes.py
"""
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from rollforge.midi import parse_midi
from rollforge.pianoroll import (DequantizedRoll, PianoRoll, roll_to_json,
                                 roll_to_midi, roll_to_notes)
from helpers import pattern_corpus, random_note_song
from rollforge.pianoroll import notes_to_roll


def midi_note_list(roll):
    """Notes as they appear in the rendered MIDI, in quantized steps."""
    midi_bytes, dropped = roll_to_midi(roll)
    song = parse_midi(midi_bytes)
    tick_per_step = song.ticks_per_beat // 4
    notes = sorted([n.pitch, n.onset_tick // tick_per_step,
                    max(1, round(n.duration_ticks / tick_per_step))]
                   for n in song.notes)
    return notes, dropped


def main():
    rng = np.random.default_rng(2025)
    takes = []

    rolls: list[PianoRoll] = []
    rolls.extend(pattern_corpus(6))
    for _ in range(8):
        rolls.append(notes_to_roll(random_note_song(rng, notes_per_bar=int(rng.integers(2, 8)))))
    # edge cases: empty, orphan sustains, onset-restart, dense random threshold
    rolls.append(PianoRoll(np.zeros((2, 128, 128), dtype=np.uint8)))
    orphan = np.zeros((2, 128, 128), dtype=np.uint8)
    orphan[1, 10:14, 60] = 1
    orphan[0, 40, 72] = 1
    orphan[1, 41:44, 72] = 1
    rolls.append(PianoRoll(orphan))
    restart = np.zeros((2, 128, 128), dtype=np.uint8)
    restart[0, 0, 64] = 1
    restart[1, 1:8, 64] = 1
    restart[0, 4, 64] = 1
    rolls.append(PianoRoll(restart))
    for seed in (1, 2, 3):
        dense = DequantizedRoll(rng.random((2, 128, 128)).astype(np.float32) * 0.6)
        rolls.append(dense.threshold())

    assert len(rolls) == 20
    for roll in rolls:
        notes, dropped = midi_note_list(roll)
        decoded, decoded_dropped = roll_to_notes(roll)
        direct = sorted([n.pitch, n.onset_step, n.duration_steps] for n in decoded)
        assert direct == notes, "server-side decode and MIDI render disagree"
        assert decoded_dropped == dropped
        takes.append({"roll": roll_to_json(roll), "notes": notes,
                      "dropped_runs": dropped})

    out = Path(__file__).resolve().parents[1] / "frontend/test/fixtures/golden_takes.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"takes": takes}))
    print(f"wrote {out} ({len(takes)} takes)")


if __name__ == "__main__":
    main()

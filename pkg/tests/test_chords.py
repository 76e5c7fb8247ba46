import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rollforge.chords import (QUALITIES, Chord, ChordSeq, chord_to_vec36,
                              extract_chords, parse_chord_seq, parse_chord_symbol)
from rollforge.pianoroll import NoteEvent, notes_to_roll, transpose

from helpers import random_note_song


def brute_force_best(hist: np.ndarray, bass: int) -> tuple[int, str]:
    """Independent template-matching oracle: exhaustive score over all 96
    templates with the documented tie-breaks."""
    best_key, best = None, None
    for root in range(12):
        for quality, intervals in QUALITIES.items():
            pcs = [(root + i) % 12 for i in intervals]
            score = sum(hist[pc] for pc in pcs)
            overlap = sum(1 for pc in pcs if hist[pc] > 0) / len(pcs)
            key = (score, overlap, -((root - bass) % 12), -root)
            if best_key is None or key > best_key:
                best_key, best = key, (root, quality)
    return best


def test_c_major_triad_beat():
    roll = notes_to_roll([NoteEvent(p, 0, 4) for p in (60, 64, 67)], num_steps=128)
    chord = extract_chords(roll)[0]
    hist = np.zeros(12)
    for p in (60, 64, 67):
        hist[p % 12] += 4
    assert brute_force_best(hist, bass=0) == (0, "maj")
    assert chord.root == 0
    assert chord.bass == 0
    assert chord.chroma == frozenset({0, 4, 7})


def test_silent_roll_all_absent():
    seq = extract_chords(notes_to_roll([], num_steps=128))
    assert len(seq) == 32
    assert all(not c.present for c in seq)


def test_silent_beats_carry_previous_chord():
    roll = notes_to_roll([NoteEvent(p, 0, 4) for p in (60, 64, 67)], num_steps=128)
    seq = extract_chords(roll)
    assert seq[0].present
    assert seq[1] == seq[0]  # carried forward over silence
    assert seq[31] == seq[0]


def test_bass_is_lowest_sounding_pitch_class():
    roll = notes_to_roll([NoteEvent(48, 0, 4), NoteEvent(64, 0, 4), NoteEvent(67, 0, 4),
                          NoteEvent(72, 0, 4)], num_steps=128)
    chord = extract_chords(roll)[0]
    assert chord.root == 0
    assert chord.bass == 0  # pitch 48 = C


def test_extraction_matches_brute_force_on_random_rolls():
    rng = np.random.default_rng(11)
    for _ in range(20):
        roll = notes_to_roll(random_note_song(rng, bars=8, notes_per_bar=4))
        seq = extract_chords(roll)
        sounding = (roll.onsets | roll.sustains).astype(float)
        previous = None
        for b in range(32):
            window = sounding[b * 4:(b + 1) * 4]
            weights = window.sum(axis=0)
            if weights.sum() == 0:
                continue
            hist = np.zeros(12)
            for pitch in np.flatnonzero(weights):
                hist[pitch % 12] += weights[pitch]
            bass = int(np.flatnonzero(weights)[0]) % 12
            root, quality = brute_force_best(hist, bass)
            assert seq[b].root == root
            assert seq[b].chroma == frozenset((root + i) % 12 for i in QUALITIES[quality])


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1),
       st.integers(min_value=-5, max_value=5))
def test_transposition_equivariance(seed, k):
    rng = np.random.default_rng(seed)
    roll = notes_to_roll(random_note_song(rng, pitch_lo=40, pitch_hi=80, notes_per_bar=4))
    base = extract_chords(roll)
    shifted = extract_chords(transpose(roll, k))
    for a, b in zip(base, shifted):
        assert b.present == a.present
        if a.present:
            assert b.root == (a.root + k) % 12
            assert b.bass == (a.bass + k) % 12
            assert b.chroma == frozenset((pc + k) % 12 for pc in a.chroma)


def test_vec36_examples():
    c_major = Chord(0, 0, frozenset({0, 4, 7}), True)
    assert set(np.flatnonzero(chord_to_vec36(c_major))) == {0, 12, 24, 28, 31}
    a_minor = Chord(9, 9, frozenset({9, 0, 4}), True)
    assert set(np.flatnonzero(chord_to_vec36(a_minor))) == {9, 21, 24, 28, 33}
    assert not chord_to_vec36(Chord.absent()).any()


def test_vec36_block_invariants():
    rng = np.random.default_rng(5)
    for _ in range(50):
        root = int(rng.integers(0, 12))
        quality = list(QUALITIES)[int(rng.integers(0, len(QUALITIES)))]
        bass = int(rng.integers(0, 12))
        vec = chord_to_vec36(Chord.from_quality(root, quality, bass))
        assert vec[:12].sum() == 1
        assert vec[12:24].sum() == 1
        assert vec[24:].sum() >= 1


def test_root_must_be_in_chroma():
    with pytest.raises(ValueError):
        Chord(0, 0, frozenset({4, 7}), True)


def test_symbol_parsing():
    c = parse_chord_symbol("C:maj")
    assert (c.root, c.bass, c.chroma) == (0, 0, frozenset({0, 4, 7}))
    am_c = parse_chord_symbol("A:min/C")
    assert (am_c.root, am_c.bass) == (9, 0)
    assert parse_chord_symbol("Bb:dom7").root == 10
    assert parse_chord_symbol("F#:min7").root == 6
    assert not parse_chord_symbol("N").present
    assert parse_chord_symbol("G").chroma == frozenset({7, 11, 2})
    with pytest.raises(ValueError):
        parse_chord_symbol("H:maj")
    with pytest.raises(ValueError):
        parse_chord_symbol("C:weird")


def test_symbol_round_trip():
    for text in ("C:maj", "A:min/C", "Eb:dom7", "N"):
        assert parse_chord_symbol(parse_chord_symbol(text).symbol()) == parse_chord_symbol(text)


def test_chord_seq_parsing_and_json():
    seq = parse_chord_seq("C:maj*16,G:maj*16")
    assert len(seq) == 32
    assert seq[0].root == 0 and seq[16].root == 7
    again = ChordSeq.from_json(seq.to_json())
    assert list(again) == list(seq)
    with pytest.raises(ValueError):
        parse_chord_seq("C:maj*3")
    assert seq.to_matrix().shape == (32, 36)


def test_chord_seq_json_absent_entries():
    seq = ChordSeq([Chord.absent(), *[Chord.from_quality(0, "maj")] * 31])
    obj = seq.to_json()
    assert obj[0] == {"root": None, "bass": None, "chroma": []}
    assert ChordSeq.from_json(obj)[0] == Chord.absent()

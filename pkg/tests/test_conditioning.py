import numpy as np
import pytest
import torch

from rollforge.chords import extract_chords
from rollforge.conditioning import (COND_DIMS, ConditionEncoders, EncoderTrainConfig,
                                    blur_onsets, condition_tokens, drop_condition,
                                    fit_encoders)
from rollforge.pianoroll import PianoRoll, transpose

from helpers import pattern_corpus


@pytest.fixture(scope="module")
def trained_encoders():
    corpus = pattern_corpus(8)
    return fit_encoders(corpus, EncoderTrainConfig(epochs=150, seed=0)), corpus


def test_chord_latent_dimension_and_determinism(trained_encoders):
    encoders, corpus = trained_encoders
    seq = extract_chords(corpus[0])
    a = encoders.encode_chords(seq)
    b = encoders.encode_chords(seq)
    assert a.shape == (512,)
    assert torch.equal(a, b)
    assert torch.isfinite(a).all()


def test_texture_latent_dimension(trained_encoders):
    encoders, corpus = trained_encoders
    latent = encoders.encode_texture(corpus[0])
    assert latent.shape == (1024,)
    assert torch.isfinite(latent).all()


def test_chord_seq_length_enforced(trained_encoders):
    encoders, _ = trained_encoders
    from rollforge.chords import Chord, ChordSeq
    short = ChordSeq([Chord.absent()] * 31)
    with pytest.raises(ValueError):
        encoders.encode_chords(short)


def test_texture_needs_eight_bars(trained_encoders):
    encoders, _ = trained_encoders
    with pytest.raises(ValueError):
        encoders.encode_texture(PianoRoll(np.zeros((2, 64, 128), dtype=np.uint8)))


def test_texture_blocks_permute_with_bar_swap(trained_encoders):
    encoders, corpus = trained_encoders
    roll = corpus[0]
    swapped_data = roll.data.copy()
    swapped_data[:, 0:32], swapped_data[:, 32:64] = (roll.data[:, 32:64].copy(),
                                                     roll.data[:, 0:32].copy())
    base = encoders.encode_texture(roll).reshape(4, 256)
    swapped = encoders.encode_texture(PianoRoll(swapped_data)).reshape(4, 256)
    assert torch.equal(swapped[0], base[1])
    assert torch.equal(swapped[1], base[0])
    assert torch.equal(swapped[2:], base[2:])


def test_texture_latents_tolerate_pitch_shift(trained_encoders):
    # pitch-blurred encoding: uniformly shifted pitches land near the original
    encoders, corpus = trained_encoders
    sims = []
    for roll in corpus:
        a = encoders.encode_texture(roll)
        b = encoders.encode_texture(transpose(roll, 2))
        sims.append(float(torch.nn.functional.cosine_similarity(a, b, dim=0)))
    assert min(sims) >= 0.9, sims


def test_chord_vae_reconstruction_and_retrieval(trained_encoders):
    encoders, corpus = trained_encoders
    seqs = [extract_chords(r) for r in corpus]
    matrices = [torch.from_numpy(s.to_matrix()) for s in seqs]
    # reconstruction accuracy over all 36-bit rows
    hits = total = 0
    for mat in matrices:
        mu, _ = encoders.chord_vae.encode(mat.unsqueeze(0))
        logits = encoders.chord_vae.decode(mu).reshape(32, 36)
        hits += int(((logits > 0).float() == mat).sum())
        total += mat.numel()
    assert hits / total >= 0.90

    # nearest-neighbor retrieval: each latent's closest neighbor is itself rank-1
    latents = torch.stack([encoders.encode_chords(s) for s in seqs])
    rank1 = 0
    for i in range(len(seqs)):
        query_mu, _ = encoders.chord_vae.encode(matrices[i].unsqueeze(0))
        distances = ((latents - query_mu.squeeze(0)) ** 2).sum(dim=1)
        rank1 += int(distances.argmin()) == i
    assert rank1 / len(seqs) >= 0.95


def test_kl_term_nonnegative():
    mu = torch.randn(4, 16)
    logvar = torch.randn(4, 16)
    kl = 0.5 * (mu ** 2 + logvar.exp() - 1.0 - logvar).mean()
    assert float(kl) >= 0.0


def test_encoders_freezing_checksum(trained_encoders):
    encoders, corpus = trained_encoders
    checksum = encoders.checksum()
    for roll in corpus:
        encoders.encode_texture(roll)
        encoders.encode_chords(extract_chords(roll))
    assert encoders.checksum() == checksum
    assert all(not p.requires_grad for p in encoders.chord_vae.parameters())


def test_encoder_blob_round_trip(trained_encoders):
    encoders, corpus = trained_encoders
    blob, meta = encoders.to_blob()
    again = ConditionEncoders.from_blob(blob, meta)
    assert again.checksum() == encoders.checksum()
    latent = encoders.encode_texture(corpus[0])
    assert torch.equal(again.encode_texture(corpus[0]), latent)
    with pytest.raises(ValueError):
        ConditionEncoders.from_blob(blob, dict(meta, version=99))


def test_fit_encoders_rejects_empty_corpus():
    with pytest.raises(ValueError):
        fit_encoders([])


def test_drop_condition_endpoints():
    cond = torch.randn(2, 8)
    gen = torch.Generator().manual_seed(0)
    for _ in range(20):
        kept = drop_condition(cond, 0.0, gen)
        assert kept is cond  # identity preserved, no copy
        assert drop_condition(cond, 1.0, gen) is None
    assert drop_condition(None, 0.5, gen) is None
    with pytest.raises(ValueError):
        drop_condition(cond, 1.5, gen)


def test_drop_condition_binomial_rate():
    cond = torch.zeros(1, 4)
    gen = torch.Generator().manual_seed(7)
    trials = 10_000
    dropped = sum(drop_condition(cond, 0.1, gen) is None for _ in range(trials))
    assert abs(dropped / trials - 0.1) < 0.01


def test_condition_token_shapes(trained_encoders):
    encoders, corpus = trained_encoders
    roll = corpus[0]
    assert condition_tokens("none") is None
    assert condition_tokens("chord", encoders, roll=roll).shape == (1, 512)
    assert condition_tokens("texture", encoders, roll=roll).shape == (4, 256)
    assert condition_tokens("chord_raw36", roll=roll).shape == (32, 36)
    assert condition_tokens("texture_raw", roll=roll).shape == (4, 256)
    for mode, dim in COND_DIMS.items():
        if mode != "none":
            tokens = condition_tokens(mode, encoders, roll=roll)
            assert tokens.shape[-1] == dim
    with pytest.raises(ValueError):
        condition_tokens("bogus", encoders, roll=roll)


def test_blur_onsets_spreads_across_pitch():
    onsets = np.zeros((8, 128), dtype=np.float32)
    onsets[3, 60] = 1.0
    blurred = blur_onsets(onsets, radius=6)
    assert blurred[3, 54:67].sum() == 13
    assert blurred[3, 53] == 0 and blurred[3, 67] == 0
    assert blurred[2].sum() == 0  # no bleed across time

"""Evaluation metric tests with independent oracles.

The cepstra are checked against a directly-coded DCT-II; alignment behavior
is pinned with hand-solvable distance matrices; the error-rate routine is
cross-checked against a memoized recursive edit distance (the exhaustive
version of that comparison lives in the acceptance suite).
"""

import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from scipy.io import wavfile

from factorvc.dataset import save_mel
from factorvc.evaluator import (
    MCD_SCALE,
    cosine_similarity,
    edit_distance,
    evaluate_pairs,
    mcd,
    mcd_from_cepstra,
    mel_cepstra,
    mel_stats_embedding,
    normalize_text,
    read_embeddings,
    similarity_report,
    wer,
    write_embeddings,
)
from factorvc.features import FeatureConfig, mel_spectrogram
from factorvc.synth import synth_utterance


def _naive_dct2_ortho(x):
    n = x.shape[1]
    out = np.zeros_like(x)
    for k in range(n):
        basis = np.cos(np.pi * k * (2 * np.arange(n) + 1) / (2 * n))
        scale = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        out[:, k] = scale * (x * basis).sum(axis=1)
    return out


# -- cepstra ----------------------------------------------------------------


def test_mel_cepstra_matches_naive_dct():
    rng = np.random.default_rng(0)
    mel = rng.normal(size=(5, 80))
    got = mel_cepstra(mel, n_coef=13)
    want = _naive_dct2_ortho(mel)[:, 1:14]
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)
    assert got.shape == (5, 13)


def test_mel_cepstra_excludes_energy_coefficient():
    rng = np.random.default_rng(1)
    mel = rng.normal(size=(4, 80))
    shifted = mel + 3.5  # a pure loudness change moves only c0
    np.testing.assert_allclose(
        mel_cepstra(mel), mel_cepstra(shifted), rtol=0, atol=1e-12
    )


def test_mel_cepstra_validates():
    with pytest.raises(ValueError):
        mel_cepstra(np.zeros(80))
    with pytest.raises(ValueError):
        mel_cepstra(np.zeros((3, 80)), n_coef=80)


# -- distortion -------------------------------------------------------------


def test_mcd_identity_is_exactly_zero():
    rng = np.random.default_rng(2)
    mel = rng.normal(size=(20, 80))
    assert mcd(mel, mel) == 0.0


def test_mcd_frame_duplication_is_exactly_zero():
    rng = np.random.default_rng(3)
    mel = rng.normal(size=(12, 80))
    doubled = np.repeat(mel, 2, axis=0)
    assert mcd(mel, doubled) == 0.0
    assert mcd(doubled, mel) == 0.0


def test_mcd_single_frame_unit_difference():
    a = np.zeros((1, 13))
    b = np.zeros((1, 13))
    b[0, 4] = 1.0
    value = mcd_from_cepstra(a, b)
    assert value == pytest.approx((10.0 / math.log(10.0)) * math.sqrt(2.0), rel=1e-12)
    assert value == pytest.approx(6.1418, abs=1e-4)


def test_mcd_scales_linearly_for_single_frames():
    a = np.zeros((1, 13))
    b = np.zeros((1, 13))
    b[0, 0] = 1.0
    one = mcd_from_cepstra(a, b)
    b[0, 0] = 2.0
    assert mcd_from_cepstra(a, b) == 2.0 * one


def test_mcd_hand_alignment():
    # two reference frames against one hypothesis frame: the path must visit
    # both rows, mean distance = (1 + 1) / 2 = 1
    ref = np.array([[0.0], [2.0]])
    hyp = np.array([[1.0]])
    assert mcd_from_cepstra(ref, hyp) == pytest.approx(MCD_SCALE, rel=1e-12)


def test_mcd_validates():
    with pytest.raises(ValueError):
        mcd_from_cepstra(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        mcd_from_cepstra(np.zeros((0, 3)), np.zeros((2, 3)))


# -- error rate -------------------------------------------------------------


def test_wer_hand_values():
    assert wer("a b c", "a x c") == pytest.approx(100.0 / 3.0, rel=1e-12)
    assert wer("a b", "") == 100.0
    assert wer("a b c", "a b c") == 0.0
    assert wer("Hello, World!", "hello world") == 0.0


def test_wer_empty_reference():
    assert wer("", "") == 0.0
    assert wer("...", "") == 0.0  # punctuation-only normalizes to empty
    with pytest.raises(ValueError):
        wer("", "word")


def test_normalize_text():
    assert normalize_text("A  b, C.") == ["a", "b", "c"]
    assert normalize_text("") == []


def test_edit_distance_against_recursive_oracle():
    @lru_cache(maxsize=None)
    def oracle(a, b):
        if not a:
            return len(b)
        if not b:
            return len(a)
        return min(
            oracle(a[1:], b[1:]) + (a[0] != b[0]),
            oracle(a[1:], b) + 1,
            oracle(a, b[1:]) + 1,
        )

    alphabet = "ab"
    seqs = [
        tuple(s)
        for n in range(4)
        for s in itertools.product(alphabet, repeat=n)
    ]
    for a in seqs:
        for b in seqs:
            assert edit_distance(list(a), list(b)) == oracle(a, b)


# -- similarity -------------------------------------------------------------


def test_cosine_similarity_basics():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 0.0
    with pytest.raises(ValueError):
        cosine_similarity(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros(3), np.ones(3))


def test_mel_stats_embedding_properties():
    rng = np.random.default_rng(4)
    mel = rng.normal(size=(30, 80))
    emb = mel_stats_embedding(mel)
    assert emb.shape == (160,)
    assert np.linalg.norm(emb) == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_array_equal(emb, mel_stats_embedding(mel))


def test_mel_stats_embedding_reflects_spectral_content():
    # tones an octave-plus apart must look less alike than re-takes of the
    # same tone; this pins that the embedding responds to the spectrum, which
    # is all it claims (it is not a speaker verifier)
    sr = 16000
    t = np.arange(int(0.4 * sr)) / sr

    def emb(freq, amp):
        return mel_stats_embedding(
            mel_spectrogram(amp * np.sin(2 * np.pi * freq * t), FeatureConfig())
        )

    same = cosine_similarity(emb(300.0, 0.5), emb(300.0, 0.3))
    cross = cosine_similarity(emb(300.0, 0.5), emb(3000.0, 0.5))
    assert same > cross


def test_embedding_file_roundtrip(tmp_path):
    embs = {
        "utt1": np.array([0.1, -0.25, 3.0]),
        "utt0": np.array([1e-17, 2.0]),
    }
    path = tmp_path / "emb.txt"
    write_embeddings(path, embs)
    back = read_embeddings(path)
    assert set(back) == set(embs)
    for k in embs:
        np.testing.assert_array_equal(back[k], embs[k])


def test_embedding_file_errors(tmp_path):
    path = tmp_path / "emb.txt"
    with pytest.raises(ValueError, match="spaces"):
        write_embeddings(path, {"bad id": np.ones(2)})
    path.write_text("u 3 1.0 2.0\n")
    with pytest.raises(ValueError, match="declared 3"):
        read_embeddings(path)
    path.write_text("u 1 1.0\nu 1 2.0\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_embeddings(path)


def test_similarity_report_contents():
    report = similarity_report(
        {"converted": [0.82, 0.78, 0.61, 1.5], "resynthesis": [0.9]}
    )
    assert "0.80" in report and "0.72" in report
    assert "not comparable" in report
    assert "converted: n=4" in report
    assert "resynthesis: n=1" in report
    assert "median=" in report
    # the 1.5 entry clips into the top bin
    assert "[0.95,1.00)" in report


# -- batch evaluation -------------------------------------------------------


def test_evaluate_pairs_writes_deterministic_csv(tmp_path):
    rng = np.random.default_rng(5)
    a = rng.normal(size=(10, 80))
    b = rng.normal(size=(10, 80))
    save_mel(tmp_path / "a.npz", a)
    save_mel(tmp_path / "b.npz", b)
    manifest = tmp_path / "pairs.txt"
    manifest.write_text(
        "a.npz|a.npz|hello there|hello there\n"
        "a.npz|b.npz\n"
    )
    rows = evaluate_pairs(manifest, tmp_path / "m1.csv")
    assert rows[0]["mcd"] == 0.0 and rows[0]["wer"] == 0.0
    assert rows[1]["mcd"] > 0.0 and rows[1]["wer"] is None
    evaluate_pairs(manifest, tmp_path / "m2.csv")
    assert (tmp_path / "m1.csv").read_bytes() == (tmp_path / "m2.csv").read_bytes()
    lines = (tmp_path / "m1.csv").read_text().splitlines()
    assert lines[0] == "ref,hyp,mcd,wer"
    assert lines[1].endswith(",0.0,0.0")
    assert lines[2].endswith(",")  # empty error-rate column


def test_evaluate_pairs_accepts_audio_inputs(tmp_path):
    wave, _ = synth_utterance(np.random.default_rng(6), 140.0, duration_s=0.4)
    wav = tmp_path / "u.wav"
    wavfile.write(wav, 16000, (wave * 32767).astype(np.int16))
    cfg = FeatureConfig()
    from factorvc.audio_io import load_audio

    save_mel(tmp_path / "u.npz", mel_spectrogram(load_audio(wav, 16000), cfg))
    manifest = tmp_path / "pairs.txt"
    manifest.write_text("u.wav|u.npz\n")
    rows = evaluate_pairs(manifest, tmp_path / "m.csv", cfg)
    assert rows[0]["mcd"] == 0.0


def test_evaluate_pairs_validation(tmp_path):
    manifest = tmp_path / "pairs.txt"
    manifest.write_text("a|b|c\n")
    with pytest.raises(ValueError, match="2 or 4"):
        evaluate_pairs(manifest, tmp_path / "m.csv")
    manifest.write_text("# nothing\n")
    with pytest.raises(ValueError, match="no evaluation pairs"):
        evaluate_pairs(manifest, tmp_path / "m.csv")

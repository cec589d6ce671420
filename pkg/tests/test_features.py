"""Feature front end: mel framing and floor, F0 tracking, pitch bins, resampling."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from factorvc.features import (
    FeatureConfig,
    SpeakerStats,
    extract_f0,
    mel_filterbank,
    mel_spectrogram,
    quantize_pitch,
    random_resample,
    speaker_stats_from_contours,
)

CFG = FeatureConfig()


def _sawtooth(freq, seconds=2.0, sr=16000, amp=0.3):
    t = np.arange(int(seconds * sr)) / sr
    return amp * (2.0 * ((freq * t) % 1.0) - 1.0)


class TestMelSpectrogram:
    def test_one_second_gives_80_frames(self):
        mel = mel_spectrogram(np.zeros(16000), CFG)
        assert mel.shape == (80, 80)

    def test_frame_count_is_floor_of_len_over_hop(self):
        assert mel_spectrogram(np.zeros(15800), CFG).shape[0] == 79
        assert mel_spectrogram(np.zeros(15999), CFG).shape[0] == 79
        assert mel_spectrogram(np.zeros(16001), CFG).shape[0] == 80

    def test_silence_hits_floor_exactly(self):
        mel = mel_spectrogram(np.zeros(8000), CFG)
        np.testing.assert_array_equal(mel, np.full_like(mel, np.log(0.01)))

    def test_pure_tone_peaks_in_band_containing_it(self):
        # Band edges derived here from the published mel map, independently of
        # the filterbank construction code.
        hz2mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
        mel2hz = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
        edges = mel2hz(np.linspace(hz2mel(125.0), hz2mel(7600.0), 82))
        containing = {m for m in range(80) if edges[m] < 1000.0 < edges[m + 2]}
        assert containing, "sanity: some band must straddle 1 kHz"

        t = np.arange(16000) / 16000.0
        mel = mel_spectrogram(0.5 * np.sin(2 * np.pi * 1000.0 * t), CFG)
        for frame in mel[5:-5]:
            assert int(np.argmax(frame)) in containing

    @given(st.integers(0, 2**32 - 1), st.integers(820, 4000))
    @settings(max_examples=20, deadline=None)
    def test_log_floor_is_global_lower_bound(self, seed, n):
        wave = np.random.default_rng(seed).uniform(-1, 1, n)
        assert mel_spectrogram(wave, CFG).min() >= np.log(0.01)

    def test_too_short_input_raises(self):
        with pytest.raises(ValueError):
            mel_spectrogram(np.zeros(799), CFG)

    def test_filterbank_rows_cover_every_band(self):
        fb = mel_filterbank(CFG)
        assert fb.shape == (80, 513)
        assert (fb.max(axis=1) > 0).all()
        assert fb.min() >= 0.0


class TestExtractF0:
    def test_sawtooth_median_within_3hz(self):
        f0 = extract_f0(_sawtooth(110.0), CFG)
        voiced = f0[f0 > 0]
        assert len(voiced) > 0.9 * len(f0)
        assert abs(np.median(voiced) - 110.0) < 3.0

    def test_agrees_with_global_autocorrelation_oracle(self):
        wave = _sawtooth(137.0)
        mid = wave[8000:8000 + 2048]
        ac = np.correlate(mid, mid, mode="full")[len(mid) - 1 :]
        lo, hi = int(16000 / 800.0), int(16000 / 71.0)
        lag = lo + int(np.argmax(ac[lo : hi + 1]))
        oracle_hz = 16000.0 / lag
        voiced = extract_f0(wave, CFG)
        voiced = voiced[voiced > 0]
        assert abs(np.median(voiced) - oracle_hz) < 2.0

    def test_length_matches_mel_frames(self):
        for n in (1200, 4000, 15999, 16000, 20040):
            wave = _sawtooth(150.0, seconds=n / 16000.0)
            assert len(extract_f0(wave, CFG)) == mel_spectrogram(wave, CFG).shape[0]

    def test_silence_is_all_unvoiced(self):
        assert np.all(extract_f0(np.zeros(8000), CFG) == 0.0)

    def test_noise_is_mostly_unvoiced(self):
        wave = np.random.default_rng(5).normal(0.0, 0.1, 16000)
        f0 = extract_f0(wave, CFG)
        assert np.mean(f0 == 0.0) > 0.9

    def test_high_low_registers_separate(self):
        lo = extract_f0(_sawtooth(95.0), CFG)
        hi = extract_f0(_sawtooth(240.0), CFG)
        assert np.median(lo[lo > 0]) < 110.0 < 200.0 < np.median(hi[hi > 0])


class TestQuantizePitch:
    STATS = SpeakerStats("spk", logf0_mean=np.log(150.0), logf0_std=0.25)

    def test_mean_pitch_lands_on_middle_bin(self):
        onehot = quantize_pitch(np.array([150.0]), self.STATS, CFG)
        assert onehot.shape == (1, 257)
        assert onehot[0, 129] == 1.0

    def test_clipping_pins_extremes_to_edge_bins(self):
        f0 = np.array([np.exp(self.STATS.logf0_mean + 9.0), np.exp(self.STATS.logf0_mean - 9.0)])
        onehot = quantize_pitch(f0, self.STATS, CFG)
        assert onehot[0, 256] == 1.0
        assert onehot[1, 1] == 1.0

    def test_unvoiced_goes_to_bin_zero(self):
        onehot = quantize_pitch(np.array([0.0, 150.0, 0.0]), self.STATS, CFG)
        assert onehot[0, 0] == 1.0 and onehot[2, 0] == 1.0
        assert onehot[1, 0] == 0.0

    def test_rows_are_exactly_one_hot(self):
        rng = np.random.default_rng(0)
        f0 = np.where(rng.uniform(size=200) < 0.3, 0.0, rng.uniform(80, 300, 200))
        onehot = quantize_pitch(f0, self.STATS, CFG)
        np.testing.assert_array_equal(onehot.sum(axis=1), np.ones(200))
        assert set(np.unique(onehot)) <= {0.0, 1.0}

    def test_rounding_is_half_to_even(self):
        # z chosen so the un-rounded bin offset is exactly 0.5 -> rounds to 0
        z = -3.0 + 6.0 * 0.5 / 255.0
        f0 = np.array([np.exp(self.STATS.logf0_mean + z * self.STATS.logf0_std)])
        onehot = quantize_pitch(f0, self.STATS, CFG)
        assert onehot[0, 1] == 1.0

    def test_negative_f0_raises(self):
        with pytest.raises(ValueError):
            quantize_pitch(np.array([-1.0]), self.STATS, CFG)

    def test_monotone_in_f0(self):
        f0 = np.linspace(80.0, 300.0, 64)
        bins = quantize_pitch(f0, self.STATS, CFG).argmax(axis=1)
        assert np.all(np.diff(bins) >= 0)


class TestSpeakerStats:
    def test_pooling_matches_manual_computation(self):
        a = np.array([0.0, 100.0, 110.0])
        b = np.array([121.0, 0.0])
        st_ = speaker_stats_from_contours("s", [a, b])
        logs = np.log(np.array([100.0, 110.0, 121.0]))
        assert st_.logf0_mean == pytest.approx(logs.mean(), rel=1e-12)
        assert st_.logf0_std == pytest.approx(logs.std(), rel=1e-12)

    def test_too_few_voiced_frames_raises(self):
        with pytest.raises(ValueError, match="voiced"):
            speaker_stats_from_contours("s", [np.array([0.0, 0.0, 150.0])])

    def test_degenerate_constant_pitch_raises(self):
        with pytest.raises(ValueError, match="degenerate"):
            speaker_stats_from_contours("s", [np.array([150.0, 150.0, 150.0])])

    def test_nonpositive_std_rejected_by_dataclass(self):
        with pytest.raises(ValueError):
            SpeakerStats("s", 5.0, 0.0)


class TestRandomResample:
    @given(st.integers(0, 2**32 - 1), st.integers(1, 90), st.integers(1, 6))
    @settings(max_examples=30, deadline=None)
    def test_unit_rate_is_exact_identity(self, seed, t, d):
        seq = np.random.default_rng(seed).normal(0.0, 3.0, (t, d))
        out = random_resample(seq, np.random.default_rng(seed + 1), rate_range=(1.0, 1.0))
        np.testing.assert_array_equal(out, seq)

    def test_half_rate_single_segment_matches_hand_interpolation(self):
        seq = np.arange(10.0)[:, None]
        out = random_resample(
            seq, np.random.default_rng(0), segment_range=(10, 10), rate_range=(0.5, 0.5)
        )
        np.testing.assert_array_equal(out[:, 0], [0.0, 2.25, 4.5, 6.75, 9.0])

    def test_double_rate_keeps_endpoints(self):
        seq = np.random.default_rng(2).normal(size=(10, 3))
        out = random_resample(
            seq, np.random.default_rng(0), segment_range=(10, 10), rate_range=(2.0, 2.0)
        )
        assert out.shape == (20, 3)
        np.testing.assert_array_equal(out[0], seq[0])
        np.testing.assert_array_equal(out[-1], seq[-1])

    @given(st.integers(0, 2**32 - 1), st.integers(2, 120))
    @settings(max_examples=30, deadline=None)
    def test_bounds_preserved_per_channel(self, seed, t):
        seq = np.random.default_rng(seed).normal(0.0, 5.0, (t, 4))
        out = random_resample(seq, np.random.default_rng(seed ^ 0xABC))
        assert np.all(out.min(axis=0) >= seq.min(axis=0))
        assert np.all(out.max(axis=0) <= seq.max(axis=0))

    def test_constant_sequence_stays_constant(self):
        seq = np.full((50, 2), 3.25)
        out = random_resample(seq, np.random.default_rng(9))
        assert np.all(out == 3.25)

    def test_same_seed_same_output(self):
        seq = np.random.default_rng(3).normal(size=(77, 5))
        a = random_resample(seq, np.random.default_rng(42))
        b = random_resample(seq, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_length_one_input(self):
        out = random_resample(np.array([[1.0, 2.0]]), np.random.default_rng(0))
        assert out.shape[1] == 2 and out.shape[0] >= 1
        assert np.all(out == [1.0, 2.0])

    def test_empty_input_raises(self):
        with pytest.raises(ValueError):
            random_resample(np.zeros((0, 3)), np.random.default_rng(0))


class TestFeatureConfig:
    def test_derived_lengths(self):
        assert CFG.frame_length == 800
        assert CFG.hop_length == 200

    def test_fingerprint_tracks_fields(self):
        assert CFG.fingerprint() == FeatureConfig().fingerprint()
        assert CFG.fingerprint() != FeatureConfig(mel_bins=64).fingerprint()

    def test_validation(self):
        with pytest.raises(ValueError):
            FeatureConfig(fmin_hz=0.0)
        with pytest.raises(ValueError):
            FeatureConfig(fmax_hz=9000.0)  # above Nyquist
        with pytest.raises(ValueError):
            FeatureConfig(magnitude_floor=0.0)
        with pytest.raises(ValueError):
            FeatureConfig(fft_size=512)  # shorter than the frame

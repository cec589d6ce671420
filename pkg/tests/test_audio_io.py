"""WAV/FLAC ingestion: roundtrips, decoder paths, normalization, resampling."""

import numpy as np
import pytest
from scipy.io import wavfile

from factorvc import audio_io
from factorvc.audio_io import (
    AudioFormatError,
    _BitWriter,
    _crc8,
    _crc16,
    _decode_flac,
    load_audio,
    resample,
    write_flac,
)


def _noise_int16(n, seed=0, scale=0.2):
    rng = np.random.default_rng(seed)
    return (rng.normal(0.0, scale, n).clip(-1, 1) * 32767).astype(np.int16)


class TestWav:
    def test_16k_mono_int16_is_exact_passthrough(self, tmp_path):
        data = _noise_int16(4000)
        p = tmp_path / "a.wav"
        wavfile.write(p, 16000, data)
        out = load_audio(p, 16000)
        assert out.dtype == np.float64
        np.testing.assert_array_equal(out, data.astype(np.float64) / 32768.0)

    def test_stereo_48k_downmixes_and_resamples(self, tmp_path):
        rng = np.random.default_rng(1)
        data = (rng.normal(0, 0.1, (48000, 2)) * 32767).astype(np.int16)
        p = tmp_path / "b.wav"
        wavfile.write(p, 48000, data)
        out = load_audio(p, 16000)
        assert out.shape == (16000,)
        assert np.all(np.abs(out) <= 1.0)

    def test_float32_wav(self, tmp_path):
        x = np.linspace(-0.5, 0.5, 3200, dtype=np.float32)
        p = tmp_path / "c.wav"
        wavfile.write(p, 16000, x)
        out = load_audio(p, 16000)
        np.testing.assert_allclose(out, x, atol=1e-7)

    def test_resample_preserves_tone(self, tmp_path):
        t = np.arange(48000) / 48000.0
        tone = (0.5 * np.sin(2 * np.pi * 440.0 * t) * 32767).astype(np.int16)
        p = tmp_path / "tone.wav"
        wavfile.write(p, 48000, tone)
        out = load_audio(p, 16000)
        spec = np.abs(np.fft.rfft(out))
        peak_hz = np.argmax(spec) * 16000 / len(out)
        assert abs(peak_hz - 440.0) < 2.0

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(OSError):
            load_audio(tmp_path / "nope.wav")

    def test_garbage_raises(self, tmp_path):
        p = tmp_path / "junk.wav"
        p.write_bytes(b"\x00\x01\x02\x03 definitely not audio")
        with pytest.raises(AudioFormatError):
            load_audio(p)

    def test_empty_file_raises(self, tmp_path):
        p = tmp_path / "empty.wav"
        p.write_bytes(b"")
        with pytest.raises(AudioFormatError):
            load_audio(p)


class TestFlacRoundtrip:
    @pytest.mark.parametrize("n", [1, 100, 4096, 5000, 12289])
    def test_mono_noise(self, tmp_path, n):
        data = _noise_int16(n, seed=n)
        p = tmp_path / "m.flac"
        write_flac(p, data, 16000)
        out = load_audio(p, 16000)
        np.testing.assert_array_equal(out, data.astype(np.float64) / 32768.0)

    def test_stereo(self, tmp_path):
        rng = np.random.default_rng(7)
        data = (rng.normal(0, 0.1, (6000, 2)) * 32767).astype(np.int16)
        p = tmp_path / "s.flac"
        write_flac(p, data, 22050)
        out, sr = _decode_flac(p.read_bytes())
        assert sr == 22050
        np.testing.assert_array_equal(out * 32768.0, data.astype(np.float64))

    def test_tonal_signal_uses_predictors_and_shrinks(self, tmp_path):
        t = np.arange(16000) / 16000.0
        saw = ((2.0 * ((110.0 * t) % 1.0) - 1.0) * 8000).astype(np.int16)
        p = tmp_path / "saw.flac"
        write_flac(p, saw, 16000)
        assert p.stat().st_size < saw.nbytes * 0.8
        out = load_audio(p, 16000)
        np.testing.assert_array_equal(out, saw.astype(np.float64) / 32768.0)

    def test_constant_signal(self, tmp_path):
        data = np.full(3000, -123, dtype=np.int16)
        p = tmp_path / "c.flac"
        write_flac(p, data, 16000)
        out = load_audio(p, 16000)
        np.testing.assert_array_equal(out, data.astype(np.float64) / 32768.0)

    def test_flac_and_wav_ingest_identically(self, tmp_path):
        data = _noise_int16(8000, seed=3)
        wavfile.write(tmp_path / "x.wav", 16000, data)
        write_flac(tmp_path / "x.flac", data, 16000)
        a = load_audio(tmp_path / "x.wav")
        b = load_audio(tmp_path / "x.flac")
        np.testing.assert_array_equal(a, b)

    def test_corrupted_frame_raises(self, tmp_path):
        data = _noise_int16(2000, seed=9)
        p = tmp_path / "bad.flac"
        write_flac(p, data, 16000)
        raw = bytearray(p.read_bytes())
        raw[-40] ^= 0xFF  # flip bits inside the last frame
        with pytest.raises(AudioFormatError):
            _decode_flac(bytes(raw))


def _streaminfo(sr, channels, bps, total, block):
    si = _BitWriter()
    si.write_uint(block, 16)
    si.write_uint(block, 16)
    si.write_uint(0, 24)
    si.write_uint(0, 24)
    si.write_uint(sr, 20)
    si.write_uint(channels - 1, 3)
    si.write_uint(bps - 1, 5)
    si.write_uint(total, 36)
    si.write_uint(0, 128)
    body = si.getvalue()
    return b"fLaC" + bytes([0x80, 0, 0, len(body)]) + body


def _frame_header(blocksize, channel_code, bps_code=4):
    bw = _BitWriter()
    bw.write_uint(0x3FFE, 14)
    bw.write_uint(0, 2)
    bw.write_uint(6, 4)  # 8-bit block size follows
    bw.write_uint(5, 4)  # 16 kHz
    bw.write_uint(channel_code, 4)
    bw.write_uint(bps_code, 3)
    bw.write_uint(0, 1)
    bw.write_uint(0, 8)  # frame number 0
    bw.write_uint(blocksize - 1, 8)
    header = bw.getvalue()
    return header + bytes([_crc8(header)])


def _finish_frame(header_and_body: _BitWriter) -> bytes:
    header_and_body.align()
    partial = header_and_body.getvalue()
    return partial + _crc16(partial).to_bytes(2, "big")


class TestFlacDecoderPaths:
    """Hand-assembled streams for paths the in-repo encoder never emits."""

    def test_lpc_subframe(self):
        samples = [5]
        residual = [1, -1, 2, 0, 3, -2, 1]
        for r in residual:
            samples.append(r + samples[-1])  # order-1 LPC, coefficient 1, shift 0
        bw = _BitWriter()
        for byte in _frame_header(8, channel_code=0):
            bw.write_uint(byte, 8)
        bw.write_uint(0, 1)
        bw.write_uint(32, 6)  # LPC order 1
        bw.write_uint(0, 1)
        bw.write_uint(samples[0], 16)  # warmup
        bw.write_uint(1, 4)  # precision 2
        bw.write_uint(0, 5)  # shift 0
        bw.write_uint(1, 2)  # coefficient +1 in 2 bits
        bw.write_uint(0, 2)  # rice method 0
        bw.write_uint(0, 4)  # partition order 0
        bw.write_uint(2, 4)  # rice parameter
        for v in residual:
            zig = (v << 1) if v >= 0 else (-v << 1) - 1
            bw.write_unary(zig >> 2)
            bw.write_uint(zig & 3, 2)
        raw = _streaminfo(16000, 1, 16, 8, 8) + _finish_frame(bw)
        out, sr = _decode_flac(raw)
        np.testing.assert_array_equal(out * 32768.0, np.array(samples, dtype=np.float64))

    def test_escape_partition(self):
        values = [-16, 15, 0, 7, -8, 1, 2, -3]
        bw = _BitWriter()
        for byte in _frame_header(8, channel_code=0):
            bw.write_uint(byte, 8)
        bw.write_uint(0, 1)
        bw.write_uint(8, 6)  # fixed order 0
        bw.write_uint(0, 1)
        bw.write_uint(0, 2)
        bw.write_uint(0, 4)
        bw.write_uint(15, 4)  # escape marker
        bw.write_uint(5, 5)  # 5 raw bits per sample
        for v in values:
            bw.write_uint(v, 5)
        raw = _streaminfo(16000, 1, 16, 8, 8) + _finish_frame(bw)
        out, _ = _decode_flac(raw)
        np.testing.assert_array_equal(out * 32768.0, np.array(values, dtype=np.float64))

    def test_wasted_bits(self):
        bw = _BitWriter()
        for byte in _frame_header(4, channel_code=0):
            bw.write_uint(byte, 8)
        bw.write_uint(0, 1)
        bw.write_uint(0, 6)  # constant
        bw.write_uint(1, 1)  # wasted flag
        bw.write_uint(1, 2)  # unary 1 -> 2 wasted bits
        bw.write_uint(100, 14)  # 16 - 2 bits
        raw = _streaminfo(16000, 1, 16, 4, 4) + _finish_frame(bw)
        out, _ = _decode_flac(raw)
        np.testing.assert_array_equal(out * 32768.0, np.full(4, 400.0))

    @pytest.mark.parametrize(
        "code,ch0,ch1,expect",
        [
            (8, [1000, 1000], [600, 600], [[1000, 400], [1000, 400]]),  # left/side
            (9, [600, 600], [400, 400], [[1000, 400], [1000, 400]]),  # right/side
            (10, [700, 700], [599, 599], [[1000, 401], [1000, 401]]),  # mid/side
        ],
    )
    def test_stereo_decorrelation(self, code, ch0, ch1, expect):
        bw = _BitWriter()
        for byte in _frame_header(2, channel_code=code):
            bw.write_uint(byte, 8)
        side_ch = 0 if code == 9 else 1
        for ch, vals in enumerate([ch0, ch1]):
            bits = 17 if ch == side_ch else 16
            bw.write_uint(0, 1)
            bw.write_uint(1, 6)  # verbatim
            bw.write_uint(0, 1)
            for v in vals:
                bw.write_uint(v, bits)
        raw = _streaminfo(16000, 2, 16, 2, 2) + _finish_frame(bw)
        out, _ = _decode_flac(raw)
        np.testing.assert_array_equal(out * 32768.0, np.array(expect, dtype=np.float64))


class TestResample:
    def test_same_rate_is_identity(self):
        x = np.random.default_rng(0).normal(0, 0.1, 1234)
        assert resample(x, 16000, 16000) is not None
        np.testing.assert_array_equal(resample(x, 16000, 16000), x)

    def test_rate_arithmetic(self):
        x = np.zeros(48000)
        assert resample(x, 48000, 16000).shape == (16000,)
        assert resample(np.zeros(8000), 8000, 16000).shape == (16000,)


def test_write_flac_rejects_wrong_dtype(tmp_path):
    with pytest.raises(AudioFormatError):
        write_flac(tmp_path / "x.flac", np.zeros(10, dtype=np.float64), 16000)


def test_write_flac_rejects_empty(tmp_path):
    with pytest.raises(AudioFormatError):
        write_flac(tmp_path / "x.flac", np.zeros(0, dtype=np.int16), 16000)

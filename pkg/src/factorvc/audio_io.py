"""Audio file ingestion: WAV and FLAC readers, a minimal FLAC writer, resampling.

Nothing here shells out to system codecs. FLAC support is a self-contained
decoder covering the core of the format as produced by standard encoders:
constant / verbatim / fixed / LPC subframes, Rice-coded residual partitions
including escape codes, wasted bits, all four channel assignments, with CRC-8
and CRC-16 verification. Decoding is pure Python, so it costs on the order of
a second per second of 16 kHz audio; fine for desk-scale corpora.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly


class AudioFormatError(ValueError):
    """Raised for malformed or unsupported audio files."""


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def load_audio(path: str | Path, target_sr: int = 16000) -> np.ndarray:
    """Load a WAV or FLAC file as mono float64 in [-1, 1] at target_sr.

    The container is sniffed from the file magic, not the extension.
    Multi-channel audio is averaged down to mono. Resampling is polyphase
    (scipy.signal.resample_poly); a file already at target_sr passes through
    untouched. Raises AudioFormatError on empty or malformed files.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise AudioFormatError(f"{path}: file too small to be audio")
    if raw[:4] == b"fLaC":
        data, sr = _decode_flac(raw)
    elif raw[:4] == b"RIFF":
        sr, wav = wavfile.read(path)
        data = _normalize(wav)
    else:
        raise AudioFormatError(f"{path}: not a WAV or FLAC file")
    if data.size == 0:
        raise AudioFormatError(f"{path}: zero-length audio")
    if data.ndim == 2:
        data = data.mean(axis=1)
    return resample(data, sr, target_sr)


def resample(wave: np.ndarray, sr: int, target_sr: int) -> np.ndarray:
    """Polyphase resampling; exact pass-through when rates already match."""
    wave = np.asarray(wave, dtype=np.float64)
    if sr == target_sr:
        return wave
    g = math.gcd(sr, target_sr)
    out = resample_poly(wave, target_sr // g, sr // g)
    return np.clip(out, -1.0, 1.0)


def _normalize(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return np.clip(data.astype(np.float64), -1.0, 1.0)
    raise AudioFormatError(f"unsupported WAV sample format {data.dtype}")


# ---------------------------------------------------------------------------
# FLAC bit-level plumbing
# ---------------------------------------------------------------------------


def _make_crc_table(poly: int, width: int) -> list[int]:
    top = 1 << (width - 1)
    mask = (1 << width) - 1
    table = []
    for byte in range(256):
        crc = byte << (width - 8)
        for _ in range(8):
            crc = ((crc << 1) ^ poly) if crc & top else (crc << 1)
        table.append(crc & mask)
    return table


_CRC8_TABLE = _make_crc_table(0x07, 8)
_CRC16_TABLE = _make_crc_table(0x8005, 16)


def _crc8(data: bytes) -> int:
    crc = 0
    for b in data:
        crc = _CRC8_TABLE[crc ^ b]
    return crc


def _crc16(data: bytes) -> int:
    crc = 0
    for b in data:
        crc = _CRC16_TABLE[((crc >> 8) ^ b) & 0xFF] ^ ((crc << 8) & 0xFFFF)
    return crc


class _BitReader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes, bytepos: int = 0):
        self.data = data
        self.pos = bytepos * 8

    def read_uint(self, n: int) -> int:
        p = self.pos
        self.pos = p + n
        end = (self.pos + 7) >> 3
        if end > len(self.data):
            raise AudioFormatError("truncated FLAC stream")
        chunk = int.from_bytes(self.data[p >> 3 : end], "big")
        return (chunk >> ((end << 3) - self.pos)) & ((1 << n) - 1)

    def read_int(self, n: int) -> int:
        v = self.read_uint(n)
        return v - (1 << n) if n and v >> (n - 1) else v

    def read_unary(self) -> int:
        q = 0
        while not self.read_uint(1):
            q += 1
        return q

    def align(self) -> None:
        self.pos = (self.pos + 7) & ~7

    @property
    def bytepos(self) -> int:
        return self.pos >> 3


class _BitWriter:
    def __init__(self):
        self.buf = bytearray()
        self.acc = 0
        self.nbits = 0

    def write_uint(self, value: int, n: int) -> None:
        self.acc = (self.acc << n) | (value & ((1 << n) - 1))
        self.nbits += n
        while self.nbits >= 8:
            self.nbits -= 8
            self.buf.append((self.acc >> self.nbits) & 0xFF)
        self.acc &= (1 << self.nbits) - 1

    def write_unary(self, q: int) -> None:
        self.write_uint(1, q + 1)

    def align(self) -> None:
        if self.nbits:
            self.write_uint(0, 8 - self.nbits)

    def getvalue(self) -> bytes:
        assert self.nbits == 0
        return bytes(self.buf)


# ---------------------------------------------------------------------------
# FLAC decoding
# ---------------------------------------------------------------------------

_BLOCK_SIZES = {
    1: 192, 2: 576, 3: 1152, 4: 2304, 5: 4608,
    8: 256, 9: 512, 10: 1024, 11: 2048, 12: 4096, 13: 8192, 14: 16384, 15: 32768,
}
_SAMPLE_RATES = {
    1: 88200, 2: 176400, 3: 192000, 4: 8000, 5: 16000, 6: 22050,
    7: 24000, 8: 32000, 9: 44100, 10: 48000, 11: 96000,
}
_SAMPLE_SIZES = {1: 8, 2: 12, 4: 16, 5: 20, 6: 24, 7: 32}
_FIXED_COEFS = {0: (), 1: (1,), 2: (2, -1), 3: (3, -3, 1), 4: (4, -6, 4, -1)}


def _decode_flac(raw: bytes) -> tuple[np.ndarray, int]:
    """Decode a FLAC byte string to (float64 array shaped (n,) or (n, ch), sr)."""
    pos = 4
    info = None
    while True:
        if pos + 4 > len(raw):
            raise AudioFormatError("FLAC metadata runs past end of file")
        header = raw[pos]
        length = int.from_bytes(raw[pos + 1 : pos + 4], "big")
        if header & 0x7F == 0:
            info = _parse_streaminfo(raw[pos + 4 : pos + 4 + length])
        pos += 4 + length
        if header & 0x80:
            break
    if info is None:
        raise AudioFormatError("FLAC stream has no STREAMINFO block")

    channels = [[] for _ in range(info["channels"])]
    while pos < len(raw):
        pos = _decode_frame(raw, pos, info, channels)
    data = np.array(channels, dtype=np.int64).T
    if info["total_samples"]:
        data = data[: info["total_samples"]]
    scale = float(1 << (info["bps"] - 1))
    out = data.astype(np.float64) / scale
    if info["channels"] == 1:
        out = out[:, 0]
    return out, info["sample_rate"]


def _parse_streaminfo(body: bytes) -> dict:
    if len(body) < 34:
        raise AudioFormatError("STREAMINFO block too short")
    br = _BitReader(body)
    br.read_uint(16)  # min block size
    br.read_uint(16)  # max block size
    br.read_uint(24)  # min frame size
    br.read_uint(24)  # max frame size
    sr = br.read_uint(20)
    channels = br.read_uint(3) + 1
    bps = br.read_uint(5) + 1
    total = br.read_uint(36)
    if sr == 0:
        raise AudioFormatError("STREAMINFO declares zero sample rate")
    return {"sample_rate": sr, "channels": channels, "bps": bps, "total_samples": total}


def _read_utf8_number(br: _BitReader) -> int:
    b0 = br.read_uint(8)
    if b0 < 0x80:
        return b0
    n = 0
    mask = 0x80
    while b0 & mask:
        n += 1
        mask >>= 1
    if n < 2 or n > 7:
        raise AudioFormatError("bad UTF-8 coded frame number")
    val = b0 & (0xFF >> (n + 1))
    for _ in range(n - 1):
        c = br.read_uint(8)
        if c >> 6 != 0b10:
            raise AudioFormatError("bad UTF-8 continuation byte in frame number")
        val = (val << 6) | (c & 0x3F)
    return val


def _decode_frame(raw: bytes, start: int, info: dict, channels: list[list[int]]) -> int:
    br = _BitReader(raw, start)
    if br.read_uint(14) != 0x3FFE:
        raise AudioFormatError(f"lost frame sync at byte {start}")
    br.read_uint(1)  # reserved
    br.read_uint(1)  # blocking strategy
    bs_code = br.read_uint(4)
    sr_code = br.read_uint(4)
    ch_code = br.read_uint(4)
    ss_code = br.read_uint(3)
    br.read_uint(1)  # reserved
    _read_utf8_number(br)

    if bs_code == 0:
        raise AudioFormatError("reserved block size code")
    elif bs_code == 6:
        blocksize = br.read_uint(8) + 1
    elif bs_code == 7:
        blocksize = br.read_uint(16) + 1
    else:
        blocksize = _BLOCK_SIZES[bs_code]

    if sr_code == 12:
        br.read_uint(8)
    elif sr_code in (13, 14):
        br.read_uint(16)
    elif sr_code == 15:
        raise AudioFormatError("invalid sample rate code")

    if ss_code == 0:
        bps = info["bps"]
    elif ss_code in _SAMPLE_SIZES:
        bps = _SAMPLE_SIZES[ss_code]
    else:
        raise AudioFormatError("reserved sample size code")

    header_bytes = raw[start : br.bytepos]
    if _crc8(header_bytes) != br.read_uint(8):
        raise AudioFormatError(f"frame header CRC mismatch at byte {start}")

    if ch_code <= 7:
        nch = ch_code + 1
        side = None
    elif ch_code in (8, 9, 10):
        nch = 2
        side = ch_code
    else:
        raise AudioFormatError("reserved channel assignment")
    if nch != info["channels"]:
        raise AudioFormatError("frame channel count disagrees with STREAMINFO")

    subs = []
    for ch in range(nch):
        ch_bps = bps
        # the difference channel carries one extra bit
        if side == 8 and ch == 1 or side == 9 and ch == 0 or side == 10 and ch == 1:
            ch_bps += 1
        subs.append(_read_subframe(br, blocksize, ch_bps))

    if side == 8:  # left/side
        left = subs[0]
        subs = [left, [l - s for l, s in zip(left, subs[1])]]
    elif side == 9:  # right/side
        right = subs[1]
        subs = [[r + s for r, s in zip(right, subs[0])], right]
    elif side == 10:  # mid/side
        left, right = [], []
        for m, s in zip(subs[0], subs[1]):
            m = (m << 1) | (s & 1)
            left.append((m + s) >> 1)
            right.append((m - s) >> 1)
        subs = [left, right]

    br.align()
    frame_bytes = raw[start : br.bytepos]
    if _crc16(frame_bytes) != br.read_uint(16):
        raise AudioFormatError(f"frame CRC-16 mismatch at byte {start}")

    for ch in range(nch):
        channels[ch].extend(subs[ch])
    return br.bytepos


def _read_subframe(br: _BitReader, n: int, bps: int) -> list[int]:
    if br.read_uint(1):
        raise AudioFormatError("subframe padding bit set")
    kind = br.read_uint(6)
    wasted = 0
    if br.read_uint(1):
        wasted = br.read_unary() + 1
        bps -= wasted

    if kind == 0:
        samples = [br.read_int(bps)] * n
    elif kind == 1:
        samples = [br.read_int(bps) for _ in range(n)]
    elif 8 <= kind <= 12:
        samples = _read_fixed(br, n, bps, kind - 8)
    elif kind >= 32:
        samples = _read_lpc(br, n, bps, (kind & 31) + 1)
    else:
        raise AudioFormatError(f"reserved subframe type {kind}")

    if wasted:
        samples = [s << wasted for s in samples]
    return samples


def _read_fixed(br: _BitReader, n: int, bps: int, order: int) -> list[int]:
    samples = [br.read_int(bps) for _ in range(order)]
    coefs = _FIXED_COEFS[order]
    for res in _read_residual(br, n, order):
        pred = 0
        for j, c in enumerate(coefs):
            pred += c * samples[-1 - j]
        samples.append(res + pred)
    return samples


def _read_lpc(br: _BitReader, n: int, bps: int, order: int) -> list[int]:
    samples = [br.read_int(bps) for _ in range(order)]
    prec = br.read_uint(4)
    if prec == 15:
        raise AudioFormatError("invalid LPC coefficient precision")
    prec += 1
    shift = br.read_int(5)
    if shift < 0:
        raise AudioFormatError("negative LPC shift")
    coefs = [br.read_int(prec) for _ in range(order)]
    for res in _read_residual(br, n, order):
        acc = 0
        for j, c in enumerate(coefs):
            acc += c * samples[-1 - j]
        samples.append(res + (acc >> shift))
    return samples


def _read_residual(br: _BitReader, n: int, order: int) -> list[int]:
    method = br.read_uint(2)
    if method > 1:
        raise AudioFormatError("reserved residual coding method")
    pbits = 4 + method
    escape = (1 << pbits) - 1
    porder = br.read_uint(4)
    nparts = 1 << porder
    if n % nparts:
        raise AudioFormatError("invalid residual partition order")
    out = []
    for part in range(nparts):
        count = (n >> porder) - (order if part == 0 else 0)
        if count < 0:
            raise AudioFormatError("invalid residual partition order")
        param = br.read_uint(pbits)
        if param == escape:
            rawbits = br.read_uint(5)
            if rawbits:
                out.extend(br.read_int(rawbits) for _ in range(count))
            else:
                out.extend([0] * count)
        else:
            for _ in range(count):
                q = br.read_unary()
                v = (q << param) | br.read_uint(param)
                out.append((v >> 1) ^ -(v & 1))
    return out


# ---------------------------------------------------------------------------
# FLAC encoding (16-bit, independent channels; enough for tests and previews)
# ---------------------------------------------------------------------------


def write_flac(path: str | Path, data: np.ndarray, sr: int, block: int = 4096) -> None:
    """Write 16-bit FLAC. data: int16 array shaped (n,) or (n, channels).

    Each subframe picks the cheaper of constant / fixed order 0-2 / verbatim,
    with a single Rice partition. Compression is modest; the point is a valid,
    dependency-free writer for round-trips and previews.
    """
    data = np.asarray(data)
    if data.dtype != np.int16:
        raise AudioFormatError("write_flac expects int16 samples")
    if data.ndim == 1:
        data = data[:, None]
    n, nch = data.shape
    if n == 0:
        raise AudioFormatError("refusing to write zero-length FLAC")
    if not 1 <= nch <= 8:
        raise AudioFormatError(f"unsupported channel count {nch}")

    out = bytearray(b"fLaC")
    si = _BitWriter()
    si.write_uint(block, 16)
    si.write_uint(block, 16)
    si.write_uint(0, 24)
    si.write_uint(0, 24)
    si.write_uint(sr, 20)
    si.write_uint(nch - 1, 3)
    si.write_uint(15, 5)  # bps - 1
    si.write_uint(n, 36)
    si.write_uint(0, 128)  # md5 unset
    body = si.getvalue()
    out.append(0x80)  # last metadata block, type 0
    out += len(body).to_bytes(3, "big")
    out += body

    for frame_idx, start in enumerate(range(0, n, block)):
        chunk = data[start : start + block]
        out += _encode_frame(chunk, sr, frame_idx)
    Path(path).write_bytes(bytes(out))


def _utf8_number(val: int) -> bytes:
    if val < 0x80:
        return bytes([val])
    for nbytes in range(2, 8):
        if val < 1 << (5 * nbytes + 1):
            break
    lead = (0xFF << (8 - nbytes)) & 0xFF
    head = lead | (val >> (6 * (nbytes - 1)))
    rest = [0x80 | ((val >> (6 * k)) & 0x3F) for k in range(nbytes - 2, -1, -1)]
    return bytes([head] + rest)


def _encode_frame(chunk: np.ndarray, sr: int, frame_idx: int) -> bytes:
    blocksize, nch = chunk.shape
    bw = _BitWriter()
    bw.write_uint(0x3FFE, 14)
    bw.write_uint(0, 1)
    bw.write_uint(0, 1)  # fixed blocking
    bw.write_uint(7, 4)  # 16-bit block size follows header
    bw.write_uint(13, 4)  # 16-bit sample rate in Hz follows header
    bw.write_uint(nch - 1, 4)
    bw.write_uint(4, 3)  # 16 bps
    bw.write_uint(0, 1)
    for b in _utf8_number(frame_idx):
        bw.write_uint(b, 8)
    bw.write_uint(blocksize - 1, 16)
    bw.write_uint(sr, 16)
    header = bw.getvalue()
    body = _BitWriter()
    for byte in header:
        body.write_uint(byte, 8)
    body.write_uint(_crc8(header), 8)

    for ch in range(nch):
        _encode_subframe(body, [int(v) for v in chunk[:, ch]])
    body.align()
    partial = body.getvalue()
    body2 = _BitWriter()
    for byte in partial:
        body2.write_uint(byte, 8)
    body2.write_uint(_crc16(partial), 16)
    return body2.getvalue()


def _rice_cost(res: list[int], param: int) -> int:
    cost = 0
    for v in res:
        zig = (v << 1) if v >= 0 else (-v << 1) - 1
        cost += (zig >> param) + 1 + param
    return cost


def _best_rice(res: list[int]) -> tuple[int, int]:
    best_p, best_c = 0, _rice_cost(res, 0)
    for p in range(1, 15):
        c = _rice_cost(res, p)
        if c < best_c:
            best_p, best_c = p, c
    return best_p, best_c


def _encode_subframe(bw: _BitWriter, samples: list[int]) -> None:
    n = len(samples)
    if all(s == samples[0] for s in samples):
        bw.write_uint(0, 1)
        bw.write_uint(0, 6)  # constant
        bw.write_uint(0, 1)
        bw.write_uint(samples[0], 16)
        return

    best = None  # (total_bits, order, residual, param)
    for order in range(0, 3):
        if n <= order:
            break
        coefs = _FIXED_COEFS[order]
        res = []
        for i in range(order, n):
            pred = sum(c * samples[i - 1 - j] for j, c in enumerate(coefs))
            res.append(samples[i] - pred)
        param, cost = _best_rice(res)
        total = order * 16 + 2 + 4 + 4 + cost
        if best is None or total < best[0]:
            best = (total, order, res, param)

    if best[0] >= n * 16:
        bw.write_uint(0, 1)
        bw.write_uint(1, 6)  # verbatim
        bw.write_uint(0, 1)
        for s in samples:
            bw.write_uint(s, 16)
        return

    _, order, res, param = best
    bw.write_uint(0, 1)
    bw.write_uint(8 + order, 6)  # fixed
    bw.write_uint(0, 1)
    for s in samples[:order]:
        bw.write_uint(s, 16)
    bw.write_uint(0, 2)  # 4-bit rice params
    bw.write_uint(0, 4)  # partition order 0
    bw.write_uint(param, 4)
    for v in res:
        zig = (v << 1) if v >= 0 else (-v << 1) - 1
        bw.write_unary(zig >> param)
        bw.write_uint(zig & ((1 << param) - 1), param)

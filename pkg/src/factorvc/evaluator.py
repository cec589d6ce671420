"""Objective evaluation: spectral distortion, transcript error rate, and
speaker-similarity reporting.

The distortion metric aligns two utterances with dynamic time warping over
mel-cepstral frames and averages the frame distances along the alignment
path, scaled by (10/ln 10) * sqrt(2). Identical inputs score exactly zero,
as does an input against a frame-duplicated copy of itself, since a zero-cost
alignment path exists in both cases.
"""

from __future__ import annotations

import math
import string
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .dataset import load_mel
from .features import FeatureConfig, mel_spectrogram

MCD_SCALE = (10.0 / math.log(10.0)) * math.sqrt(2.0)

# Published full-scale similarity medians, quoted in reports purely as
# context. Desk-scale runs with the built-in embedder are not comparable.
REFERENCE_SIMILARITY = {"parallel": 0.80, "non-parallel": 0.72}


def mel_cepstra(log_mel: np.ndarray, n_coef: int = 13) -> np.ndarray:
    """Orthonormal type-II DCT over mel channels, keeping c1..c<n_coef>.

    c0 (overall energy) is excluded so loudness differences do not count as
    spectral distortion.
    """
    log_mel = np.asarray(log_mel, dtype=np.float64)
    if log_mel.ndim != 2:
        raise ValueError("expected (T, mel_bins) input")
    if not 1 <= n_coef < log_mel.shape[1]:
        raise ValueError("n_coef out of range")
    return dct(log_mel, type=2, norm="ortho", axis=1)[:, 1 : n_coef + 1]


def _dtw_mean_distance(dist: np.ndarray) -> float:
    """Mean of frame distances along a minimum-total-cost monotone path.

    Steps are diagonal, right, and down; ties prefer the diagonal, then the
    shorter-reference side, which makes the backtrack deterministic.
    """
    n, m = dist.shape
    acc = np.full((n, m), np.inf)
    acc[0, 0] = dist[0, 0]
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
            if i > 0:
                best = min(best, acc[i - 1, j])
            if j > 0:
                best = min(best, acc[i, j - 1])
            acc[i, j] = dist[i, j] + best
    # backtrack to count the path length
    i, j = n - 1, m - 1
    steps = 1
    while i > 0 or j > 0:
        if i > 0 and j > 0 and acc[i - 1, j - 1] <= min(
            acc[i - 1, j] if i > 0 else np.inf,
            acc[i, j - 1] if j > 0 else np.inf,
        ):
            i, j = i - 1, j - 1
        elif i > 0 and (j == 0 or acc[i - 1, j] <= acc[i, j - 1]):
            i -= 1
        else:
            j -= 1
        steps += 1
    return float(acc[n - 1, m - 1] / steps)


def mcd_from_cepstra(ref: np.ndarray, hyp: np.ndarray) -> float:
    """Distortion between two cepstral sequences, (T, C) each."""
    ref = np.asarray(ref, dtype=np.float64)
    hyp = np.asarray(hyp, dtype=np.float64)
    if ref.ndim != 2 or hyp.ndim != 2 or ref.shape[1] != hyp.shape[1]:
        raise ValueError("cepstra must both be (T, C) with matching C")
    if ref.shape[0] == 0 or hyp.shape[0] == 0:
        raise ValueError("empty cepstra sequence")
    diff = ref[:, None, :] - hyp[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    return MCD_SCALE * _dtw_mean_distance(dist)


def mcd(ref_log_mel: np.ndarray, hyp_log_mel: np.ndarray, n_coef: int = 13) -> float:
    """Mel-cepstral distortion between two log-mel matrices, in dB."""
    return mcd_from_cepstra(
        mel_cepstra(ref_log_mel, n_coef), mel_cepstra(hyp_log_mel, n_coef)
    )


# ---------------------------------------------------------------------------
# transcript error rate
# ---------------------------------------------------------------------------


def normalize_text(text: str) -> list[str]:
    """Case-fold, strip punctuation, split on whitespace."""
    table = str.maketrans("", "", string.punctuation)
    return text.lower().translate(table).split()


def edit_distance(ref: list[str], hyp: list[str]) -> int:
    """Word-level Levenshtein distance (substitution, insertion, deletion)."""
    n, m = len(ref), len(hyp)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1])
            cur[j] = min(sub, prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[m]


def wer(ref: str, hyp: str) -> float:
    """Word error rate in percent of the reference length."""
    ref_words = normalize_text(ref)
    hyp_words = normalize_text(hyp)
    if not ref_words:
        if hyp_words:
            raise ValueError("empty reference with non-empty hypothesis")
        return 0.0
    return 100.0 * edit_distance(ref_words, hyp_words) / len(ref_words)


# ---------------------------------------------------------------------------
# speaker similarity
# ---------------------------------------------------------------------------


def mel_stats_embedding(log_mel: np.ndarray) -> np.ndarray:
    """Per-channel mean and standard deviation, L2-normalized.

    A deterministic stand-in for a trained speaker verifier: useful for
    relative comparisons inside one run, not comparable to published
    similarity numbers.
    """
    log_mel = np.asarray(log_mel, dtype=np.float64)
    if log_mel.ndim != 2 or log_mel.shape[0] < 1:
        raise ValueError("expected a non-empty (T, mel_bins) matrix")
    emb = np.concatenate([log_mel.mean(axis=0), log_mel.std(axis=0)])
    norm = np.linalg.norm(emb)
    if norm == 0:
        raise ValueError("degenerate all-zero embedding")
    return emb / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("embedding dimensions differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("zero-norm embedding")
    return float(np.dot(a, b) / (na * nb))


def write_embeddings(path: str | Path, embeddings: dict[str, np.ndarray]) -> None:
    """One line per utterance: id, dimension, then the values."""
    lines = []
    for utt_id in sorted(embeddings):
        vec = np.asarray(embeddings[utt_id], dtype=np.float64).ravel()
        if " " in utt_id or "|" in utt_id:
            raise ValueError(f"utterance id {utt_id!r} may not contain spaces or '|'")
        lines.append(f"{utt_id} {vec.size} " + " ".join(repr(float(v)) for v in vec))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"{path}:{ln}: malformed embedding line")
        utt_id, dim = parts[0], int(parts[1])
        values = np.array([float(v) for v in parts[2:]], dtype=np.float64)
        if values.size != dim:
            raise ValueError(
                f"{path}:{ln}: declared {dim} values, found {values.size}"
            )
        if utt_id in out:
            raise ValueError(f"{path}:{ln}: duplicate utterance id {utt_id!r}")
        out[utt_id] = values
    return out


def similarity_report(groups: dict[str, list[float]], bins: int = 20) -> str:
    """Histogram + median per group of cosine similarities, clipped to [0, 1].

    The header quotes the full-scale reference medians for context; scores
    from the built-in embedding are not on that scale.
    """
    lines = [
        "speaker similarity report",
        "reference medians at full scale: "
        + ", ".join(f"{k} {v:.2f}" for k, v in REFERENCE_SIMILARITY.items()),
        "(desk-scale scores from the built-in embedder are not comparable)",
        "",
    ]
    edges = np.linspace(0.0, 1.0, bins + 1)
    for name in sorted(groups):
        values = np.clip(np.asarray(groups[name], dtype=np.float64), 0.0, 1.0)
        if values.size == 0:
            lines.append(f"{name}: no pairs")
            lines.append("")
            continue
        hist, _ = np.histogram(values, bins=edges)
        frac = hist / values.size
        lines.append(f"{name}: n={values.size} median={np.median(values):.4f}")
        for k in range(bins):
            if hist[k]:
                bar = "#" * max(1, int(round(frac[k] * 40)))
                lines.append(
                    f"  [{edges[k]:.2f},{edges[k + 1]:.2f}) {hist[k]:4d} {bar}"
                )
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# batch evaluation
# ---------------------------------------------------------------------------


def load_mel_any(path: Path, cfg: FeatureConfig) -> np.ndarray:
    if path.suffix == ".npz":
        return load_mel(path)
    from .audio_io import load_audio

    return mel_spectrogram(load_audio(path, cfg.sample_rate), cfg)


def parse_pairs_manifest(
    manifest: str | Path,
) -> list[tuple[Path, Path, str | None, str | None]]:
    """Lines of ref_path|hyp_path[|ref_transcript|hyp_transcript].

    Relative paths resolve against the manifest; blank lines and '#' comments
    are skipped.
    """
    manifest = Path(manifest)
    pairs = []
    for ln, raw in enumerate(manifest.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) not in (2, 4):
            raise ValueError(
                f"{manifest}:{ln}: expected 2 or 4 '|'-separated fields"
            )
        ref_path, hyp_path = Path(parts[0]), Path(parts[1])
        if not ref_path.is_absolute():
            ref_path = manifest.parent / ref_path
        if not hyp_path.is_absolute():
            hyp_path = manifest.parent / hyp_path
        texts = (parts[2], parts[3]) if len(parts) == 4 else (None, None)
        pairs.append((ref_path, hyp_path, *texts))
    if not pairs:
        raise ValueError(f"{manifest}: no evaluation pairs")
    return pairs


def evaluate_pairs(
    manifest: str | Path,
    out_csv: str | Path,
    cfg: FeatureConfig = FeatureConfig(),
    n_coef: int = 13,
) -> list[dict]:
    """Score reference/converted pairs listed one per line.

    Pair paths may be saved mel matrices (.npz) or audio files. Writes a CSV
    in input order with full-precision floats so reruns are byte-identical.
    """
    rows = []
    for ref_path, hyp_path, ref_text, hyp_text in parse_pairs_manifest(manifest):
        ref_mel = load_mel_any(ref_path, cfg)
        hyp_mel = load_mel_any(hyp_path, cfg)
        rows.append(
            {
                "ref": ref_path.stem,
                "hyp": hyp_path.stem,
                "mcd": mcd(ref_mel, hyp_mel, n_coef),
                "wer": wer(ref_text, hyp_text) if ref_text is not None else None,
            }
        )
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w") as fh:
        fh.write("ref,hyp,mcd,wer\n")
        for row in rows:
            wer_txt = "" if row["wer"] is None else repr(row["wer"])
            fh.write(f"{row['ref']},{row['hyp']},{row['mcd']!r},{wer_txt}\n")
    return rows

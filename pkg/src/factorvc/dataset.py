"""Corpus preparation: manifests, feature caching, speaker pitch statistics.

A manifest is a text file with one utterance per line:

    path/to/audio.wav|speaker_id|optional transcript

Paths are resolved relative to the manifest's directory. build_dataset runs
the feature front end over every utterance, pools per-speaker log-F0 stats,
and caches one .npz per utterance so warm reruns skip all signal processing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import load_audio
from .features import (
    FeatureConfig,
    SpeakerStats,
    extract_f0,
    mel_spectrogram,
    quantize_pitch,
    speaker_stats_from_contours,
)


@dataclass
class ManifestEntry:
    audio_path: Path
    speaker_id: str
    transcript: str | None
    utterance_id: str


@dataclass
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    transcript: str | None
    mel: np.ndarray  # (T, mel_bins) log-mel
    f0: np.ndarray  # (T,) Hz, 0 = unvoiced
    pitch_onehot: np.ndarray  # (T, pitch_bins)

    @property
    def num_frames(self) -> int:
        return self.mel.shape[0]


@dataclass
class Dataset:
    records: list[UtteranceRecord]
    speaker_stats: dict[str, SpeakerStats]
    config: FeatureConfig = field(default_factory=FeatureConfig)

    @property
    def speakers(self) -> list[str]:
        return sorted(self.speaker_stats)

    def __len__(self) -> int:
        return len(self.records)


def parse_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    entries = []
    seen = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) < 2 or not parts[0] or not parts[1]:
            raise ValueError(f"{path}:{lineno}: expected 'audio|speaker[|transcript]'")
        audio = Path(parts[0])
        if not audio.is_absolute():
            audio = path.parent / audio
        transcript = parts[2] if len(parts) > 2 and parts[2] else None
        utt_id = audio.stem
        if utt_id in seen:
            raise ValueError(f"{path}:{lineno}: duplicate utterance id '{utt_id}'")
        seen.add(utt_id)
        entries.append(ManifestEntry(audio, parts[1], transcript, utt_id))
    if not entries:
        raise ValueError(f"{path}: manifest lists no utterances")
    return entries


def build_dataset(
    manifest_path: str | Path,
    cache_dir: str | Path,
    cfg: FeatureConfig = FeatureConfig(),
) -> Dataset:
    """Extract (or reload) features for every manifest entry.

    Cache layout: <cache_dir>/<utterance_id>.npz holding mel, f0, pitch_onehot
    and a JSON metadata string, plus <cache_dir>/speaker_stats.txt. A rerun
    over an unchanged manifest recomputes nothing and rewrites nothing.
    """
    entries = parse_manifest(manifest_path)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint()

    raw: list[tuple[ManifestEntry, np.ndarray, np.ndarray, dict | None]] = []
    for entry in entries:
        cached = _load_cache(cache_dir / f"{entry.utterance_id}.npz", entry, fp)
        if cached is not None:
            mel, f0, meta = cached
        else:
            if not entry.audio_path.exists():
                raise FileNotFoundError(f"manifest names missing audio file: {entry.audio_path}")
            wave = load_audio(entry.audio_path, cfg.sample_rate)
            mel = mel_spectrogram(wave, cfg)
            f0 = extract_f0(wave, cfg)
            meta = None
        raw.append((entry, mel, f0, meta))

    by_speaker: dict[str, list[np.ndarray]] = {}
    for entry, _, f0, _ in raw:
        by_speaker.setdefault(entry.speaker_id, []).append(f0)
    stats = {
        spk: speaker_stats_from_contours(spk, contours)
        for spk, contours in by_speaker.items()
    }

    records = []
    for entry, mel, f0, meta in raw:
        st = stats[entry.speaker_id]
        fresh_meta = {
            "utterance_id": entry.utterance_id,
            "speaker_id": entry.speaker_id,
            "transcript": entry.transcript,
            "fingerprint": fp,
            "logf0_mean": st.logf0_mean,
            "logf0_std": st.logf0_std,
        }
        cache_file = cache_dir / f"{entry.utterance_id}.npz"
        if meta == fresh_meta:
            onehot = np.load(cache_file)["pitch_onehot"]
        else:
            onehot = quantize_pitch(f0, st, cfg)
            np.savez(
                cache_file,
                mel=mel,
                f0=f0,
                pitch_onehot=onehot,
                meta=json.dumps(fresh_meta, sort_keys=True),
            )
        records.append(
            UtteranceRecord(entry.utterance_id, entry.speaker_id, entry.transcript, mel, f0, onehot)
        )

    _write_stats_file(cache_dir / "speaker_stats.txt", stats)
    return Dataset(records, stats, cfg)


def _load_cache(path: Path, entry: ManifestEntry, fp: str):
    if not path.exists():
        return None
    try:
        data = np.load(path, allow_pickle=False)
        meta = json.loads(str(data["meta"]))
    except (OSError, KeyError, ValueError):
        return None
    if meta.get("fingerprint") != fp or meta.get("speaker_id") != entry.speaker_id:
        return None
    if meta.get("transcript") != entry.transcript:
        return None
    return data["mel"], data["f0"], meta


def _write_stats_file(path: Path, stats: dict[str, SpeakerStats]) -> None:
    lines = [
        f"{spk} {stats[spk].logf0_mean!r} {stats[spk].logf0_std!r}" for spk in sorted(stats)
    ]
    content = "\n".join(lines) + "\n"
    if not path.exists() or path.read_text() != content:
        path.write_text(content)


def read_stats_file(path: str | Path) -> dict[str, SpeakerStats]:
    stats = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'speaker mean std'")
        stats[parts[0]] = SpeakerStats(parts[0], float(parts[1]), float(parts[2]))
    return stats


# mel files exchanged between the converter and the evaluator use the same
# container as the feature cache: .npz with a 'mel' array.


def save_mel(path: str | Path, mel: np.ndarray, meta: dict | None = None) -> None:
    np.savez(path, mel=np.asarray(mel), meta=json.dumps(meta or {}, sort_keys=True))


def load_mel(path: str | Path) -> np.ndarray:
    data = np.load(path, allow_pickle=False)
    if "mel" not in data:
        raise ValueError(f"{path}: not a mel container (no 'mel' array)")
    return data["mel"]

"""Command-line front end.

Subcommands:
    features   precompute cached features for a manifest
    train      run the training loop from an INI config
    convert    recombine factors from source/target utterances
    evaluate   score reference/converted pairs into a CSV

Every command validates its inputs up front and exits nonzero with a short
message on stderr rather than a traceback.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .audio_io import AudioFormatError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factorvc",
        description="Factorized voice conversion: train, convert, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_feat = sub.add_parser("features", help="precompute features for a manifest")
    p_feat.add_argument("--manifest", required=True, help="utterance manifest file")
    p_feat.add_argument("--cache-dir", required=True, help="feature cache directory")
    p_feat.add_argument("--config", help="INI file; its [features] section applies")

    p_train = sub.add_parser("train", help="train from an INI config")
    p_train.add_argument("--config", required=True, help="INI run configuration")
    p_train.add_argument("--resume", help="checkpoint to continue from")

    p_conv = sub.add_parser("convert", help="convert an utterance")
    p_conv.add_argument("--checkpoint", required=True)
    p_conv.add_argument("--source", required=True, help="source audio file")
    p_conv.add_argument(
        "--source-speaker", required=True,
        help="speaker id of the source utterance (must be known to the model)",
    )
    p_conv.add_argument("--rhythm-target", help="audio file providing rhythm/timing")
    p_conv.add_argument("--pitch-target", help="audio file providing the pitch contour")
    p_conv.add_argument(
        "--pitch-speaker",
        help="speaker id of the pitch target (required with --pitch-target "
        "unless --pitch-absolute)",
    )
    p_conv.add_argument("--timbre-target", help="speaker id providing the voice identity")
    p_conv.add_argument("--out-dir", default="converted")
    p_conv.add_argument(
        "--preview-audio", action="store_true",
        help="also write a rough waveform preview (slow)",
    )
    p_conv.add_argument(
        "--ablate", default="",
        help="comma-separated factors to zero out before decoding",
    )
    p_conv.add_argument(
        "--pitch-absolute", action="store_true",
        help="normalize pitch with pooled corpus statistics instead of "
        "per-speaker statistics",
    )

    p_eval = sub.add_parser("evaluate", help="score reference/converted pairs")
    p_eval.add_argument("--pairs", required=True, help="pair manifest file")
    p_eval.add_argument("--out", required=True, help="metrics CSV to write")
    p_eval.add_argument("--config", help="INI file; its [features] section applies")
    p_eval.add_argument(
        "--embeddings-out", help="also write mel-statistics embeddings here"
    )
    p_eval.add_argument(
        "--similarity-out", help="also write a per-pair similarity report here"
    )
    return parser


def _feature_config(config_path: str | None):
    from .features import FeatureConfig

    if config_path is None:
        return FeatureConfig()
    from .config import load_run_config

    return load_run_config(config_path).features


def _cmd_features(args) -> int:
    from .dataset import build_dataset

    cfg = _feature_config(args.config)
    ds = build_dataset(args.manifest, args.cache_dir, cfg)
    frames = sum(r.num_frames for r in ds.records)
    print(
        f"cached {len(ds.records)} utterances from {len(ds.speakers)} speakers "
        f"({frames} frames) in {args.cache_dir}"
    )
    return 0


def _cmd_train(args) -> int:
    from .trainer import train_from_config

    ckpt = train_from_config(args.config, resume=args.resume)
    print(f"checkpoint: {ckpt}")
    return 0


def _cmd_convert(args) -> int:
    from .converter import convert, encode_utterance, mel_to_audio, pooled_stats
    from .dataset import save_mel
    from .model import load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)

    def stats_for(speaker: str, role: str):
        if args.pitch_absolute:
            return pooled_stats(ckpt.speaker_stats)
        if speaker not in ckpt.speaker_stats:
            known = ", ".join(sorted(ckpt.speaker_stats))
            raise ValueError(f"unknown {role} speaker {speaker!r}; known: {known}")
        return ckpt.speaker_stats[speaker]

    source = encode_utterance(
        args.source, stats_for(args.source_speaker, "source"), ckpt.feat_cfg
    )
    rhythm = None
    if args.rhythm_target:
        rhythm = encode_utterance(
            args.rhythm_target, pooled_stats(ckpt.speaker_stats), ckpt.feat_cfg
        )
    pitch = None
    if args.pitch_target:
        if not args.pitch_absolute and not args.pitch_speaker:
            raise ValueError(
                "--pitch-target needs --pitch-speaker (or --pitch-absolute)"
            )
        pitch_stats = (
            pooled_stats(ckpt.speaker_stats)
            if args.pitch_absolute
            else stats_for(args.pitch_speaker, "pitch")
        )
        pitch = encode_utterance(args.pitch_target, pitch_stats, ckpt.feat_cfg)
    ablate = tuple(f.strip() for f in args.ablate.split(",") if f.strip())

    result = convert(
        ckpt,
        source,
        args.source_speaker,
        rhythm_target=rhythm,
        pitch_target=pitch,
        timbre_speaker=args.timbre_target,
        ablate=ablate,
    )
    if result.conversion_type == "reconstruction":
        print(
            "note: no conversion targets given; output is a reconstruction "
            "of the source",
            file=sys.stderr,
        )
    print(f"conversion type: {result.conversion_type}")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    label = result.conversion_type.split(" ")[0]
    if ablate:
        label += "_ablated-" + "-".join(ablate)
    base = f"{Path(args.source).stem}__{label}"
    mel_path = out_dir / f"{base}.npz"
    save_mel(
        mel_path,
        result.mel,
        meta={
            "conversion_type": result.conversion_type,
            "source": str(args.source),
            "source_speaker": args.source_speaker,
            "checkpoint_step": ckpt.step,
        },
    )
    print(f"mel: {mel_path}")
    if args.preview_audio:
        from scipy.io import wavfile

        wave = mel_to_audio(result.mel, ckpt.feat_cfg)
        wav_path = out_dir / f"{base}.wav"
        wavfile.write(
            wav_path, ckpt.feat_cfg.sample_rate, (wave * 32767).astype(np.int16)
        )
        print(f"preview: {wav_path}")
    return 0


def _cmd_evaluate(args) -> int:
    from .evaluator import (
        cosine_similarity,
        evaluate_pairs,
        load_mel_any,
        mel_stats_embedding,
        parse_pairs_manifest,
        similarity_report,
        write_embeddings,
    )

    cfg = _feature_config(args.config)
    rows = evaluate_pairs(args.pairs, args.out, cfg)
    mcds = [r["mcd"] for r in rows]
    print(f"pairs: {len(rows)}  mean mcd: {np.mean(mcds):.4f} dB")
    wers = [r["wer"] for r in rows if r["wer"] is not None]
    if wers:
        print(f"mean wer: {np.mean(wers):.2f}% over {len(wers)} transcribed pairs")
    print(f"metrics: {args.out}")

    if args.embeddings_out or args.similarity_out:
        pairs = parse_pairs_manifest(args.pairs)
        embeddings: dict[str, np.ndarray] = {}
        sims = []
        for ref_path, hyp_path, _, _ in pairs:
            for path in (ref_path, hyp_path):
                if path.stem not in embeddings:
                    embeddings[path.stem] = mel_stats_embedding(
                        load_mel_any(path, cfg)
                    )
            sims.append(
                cosine_similarity(embeddings[ref_path.stem], embeddings[hyp_path.stem])
            )
        if args.embeddings_out:
            write_embeddings(args.embeddings_out, embeddings)
            print(f"embeddings: {args.embeddings_out}")
        if args.similarity_out:
            Path(args.similarity_out).write_text(similarity_report({"pairs": sims}))
            print(f"similarity report: {args.similarity_out}")
    return 0


_COMMANDS = {
    "features": _cmd_features,
    "train": _cmd_train,
    "convert": _cmd_convert,
    "evaluate": _cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, FileNotFoundError, AudioFormatError, OSError) as exc:
        message = exc.args[0] if exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

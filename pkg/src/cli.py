"""
Command line entry point.

Usage:
    vara make-synthetic --seed 0 --n 200 --out data/syn
    vara train --data data/syn --out runs/base [--resume ckpt] [--loss.lam 0 ...]
    vara synthesize --ckpt runs/base/checkpoints/last.ckpt --text "abc" --out out/abc
    vara diagnose-kl --ckpt runs/base/checkpoints/last.ckpt --data data/syn --out out/kl
    vara ablate --grid grid.yaml --data data/syn --out runs/ablation

Exit codes: 0 ok, 2 usage/configuration/input, 3 file format or I/O, 4 numeric failure, 1 other.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

import pandas as pd

from .data import load_corpus, save_corpus
from .data.ingest import prepare_corpus
from .data.schemas import MelSpectrogram, Vocab
from .data.storage import write_feature_record
from .data.synthetic import make_synthetic_corpus
from .data.tokenizer import detokenize, tokenize
from .diagnostics.timing import growth_ratios, timing_probe
from .errors import (
    ConfigIncompatibleError,
    ConfigurationError,
    EvaluationError,
    FormatError,
    InvalidArgumentError,
    InvalidInputError,
    NumericFailure,
    UsageError,
)
from .model.checkpoint import load_checkpoint, read_checkpoint
from .model.vara import build_model
from .numerics import Rng
from .training.ablation import read_grid, run_ablation
from .training.telemetry import cumulative
from .training.trainer import Trainer
from .utils.config import TrainConfig, iter_config_keys, load_config
from .utils.heatmaps import write_alignments
from .utils.logging import set_global_level, setup_logger

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

_OVERRIDE_PREFIX = "override__"


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """--config plus one --section.key flag for every configuration leaf."""
    parser.add_argument("--config", type=Path, default=None, help="YAML settings file")
    group = parser.add_argument_group("configuration overrides")
    for key, field in iter_config_keys():
        group.add_argument(
            f"--{key}",
            dest=_OVERRIDE_PREFIX + key.replace(".", "__"),
            default=None,
            metavar="VALUE",
            help=field.description,
        )


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        name[len(_OVERRIDE_PREFIX):].replace("__", "."): value
        for name, value in vars(args).items()
        if name.startswith(_OVERRIDE_PREFIX) and value is not None
    }


def _config(args: argparse.Namespace) -> TrainConfig:
    return load_config(args.config, _overrides(args))


def _prepare_out(path: Path, force: bool, allow_existing: bool = False) -> Path:
    """Refuse to write into a non-empty directory unless forced."""
    if path.exists() and not path.is_dir():
        raise UsageError(f"--out {path} exists and is not a directory")
    if path.exists() and any(path.iterdir()) and not (force or allow_existing):
        raise UsageError(f"--out {path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_model(ckpt_path: Path):
    ckpt = read_checkpoint(ckpt_path)
    cfg = ckpt.config
    model = build_model(cfg.model, ckpt.n_mels, cfg.train.seed, cfg.train.precision, cfg.mel.floor)
    load_checkpoint(ckpt_path, model, cfg)
    model.eval()
    return ckpt, cfg, model


def cmd_make_synthetic(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")
    cfg = _config(args)
    vocab = args.vocab or cfg.model.vocab_size
    out = _prepare_out(args.out, args.force)
    corpus = make_synthetic_corpus(Rng(args.seed), args.n, vocab, cfg.mel, n_speakers=args.speakers)
    save_corpus(corpus, out)
    lo, hi = corpus.ratio_range("train") or (float("nan"), float("nan"))
    print(f"utterances={len(corpus.utterances)} train={len(corpus.split('train'))} "
          f"valid={len(corpus.split('valid'))} test={len(corpus.split('test'))} "
          f"ratio_min={lo:.6g} ratio_max={hi:.6g}")
    return EXIT_OK


def cmd_prepare_data(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out = _prepare_out(args.out, args.force)
    corpus = prepare_corpus(args.root, cfg.mel, Rng(args.seed), limit=args.limit)
    save_corpus(corpus, out)
    stats = corpus.speed_stats
    print(f"utterances={len(corpus.utterances)} vocab={corpus.vocab.size} "
          f"ratio_min={stats.min_ratio:.6g} ratio_max={stats.max_ratio:.6g}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out = _prepare_out(args.out, args.force, allow_existing=args.resume is not None)
    corpus = load_corpus(args.data)
    trainer = Trainer(cfg, corpus, out)
    records = trainer.fit(resume_from=args.resume)
    last = records[-1] if records else None
    summary = f"steps={trainer.step}"
    if last:
        summary += f" total={last.total:.6g} recon={last.recon:.6g} kl_total={last.kl_total:.6g}"
    print(summary)
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace) -> int:
    ckpt, cfg, model = _load_model(args.ckpt)
    vocab, stats = ckpt.vocab, ckpt.speed_stats
    if vocab is None or stats is None:
        raise FormatError("checkpoint carries no vocabulary or speed stats", args.ckpt)
    tokens = tokenize(args.text, vocab)
    if not tokens:
        raise InvalidInputError("--text is empty")
    text = detokenize(tokens, vocab)
    if Vocab.UNK in tokens:
        logger.warning(f"Characters outside the vocabulary map to UNK: {text!r}")
    out = _prepare_out(args.out, args.force)

    speaker = args.speaker if cfg.model.n_speakers > 1 else None
    result = model.synthesize(tokens, stats, Rng(args.seed), speaker_id=speaker, override_frames=args.frames)
    for warning in result.warnings:
        logger.warning(warning)

    frames = result.mel_hat.detach().cpu().numpy()
    write_feature_record(out / "mel.vara", MelSpectrogram(frames=frames, sample_rate=cfg.mel.sample_rate, hop=cfg.mel.hop))
    (out / "frames.json").write_text(json.dumps({
        "n_frames": result.n_frames,
        "t_max_red": result.t_max_red,
        "d_hat": float(result.d_hat),
        "tokens": tokens,
        "text": text,
        "warnings": result.warnings,
    }, indent=2), encoding="utf-8")
    write_alignments(out / "alignments", result.alignments)
    print(f"frames={result.n_frames} layers={len(result.alignments)}")
    return EXIT_OK


def cmd_diagnose_kl(args: argparse.Namespace) -> int:
    ckpt = read_checkpoint(args.ckpt)
    cfg = ckpt.config
    corpus = load_corpus(args.data)
    trainer = Trainer(cfg, corpus)
    load_checkpoint(args.ckpt, trainer.model, cfg)
    trainer.step = ckpt.step
    threshold = args.threshold if args.threshold is not None else cfg.loss.collapse_threshold

    record = trainer.evaluate("valid")
    frame = pd.DataFrame({
        "layer": list(range(len(record.kl_per_layer))),
        "kl_per_frame": record.kl_per_layer,
        "cumulative_kl": cumulative(record.kl_per_layer),
        "collapsed": [kl < threshold for kl in record.kl_per_layer],
    })
    out = _prepare_out(args.out, args.force)
    frame.to_csv(out / "kl_per_layer.csv", index=False)
    collapsed = frame.loc[frame["collapsed"], "layer"].tolist()
    print(f"layers={len(frame)} collapsed={collapsed} threshold={threshold:g}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    grid = read_grid(args.grid)
    if not grid.runs and not cfg.ablation.beta_sweep:
        raise UsageError(f"grid {args.grid} lists no runs")
    seeds = args.seeds or grid.seeds
    out = _prepare_out(args.out, args.force)
    corpus = load_corpus(args.data)
    report = run_ablation(cfg, grid.runs, corpus, out, seeds=seeds, total_steps=args.steps)
    print(report.medians.to_string(index=False))
    return EXIT_OK


def cmd_time_infer(args: argparse.Namespace) -> int:
    ckpt, cfg, model = _load_model(args.ckpt)
    if ckpt.speed_stats is None:
        raise FormatError("checkpoint carries no speed stats", args.ckpt)
    tokens = list(range(1, min(cfg.model.vocab_size, 9)))
    results = timing_probe(model, tokens, ckpt.speed_stats, args.frames, seed=args.seed)
    for r in results:
        print(f"T={r.n_frames} parallel_ms={r.parallel_seconds * 1e3:.3f} sequential_ms={r.sequential_seconds * 1e3:.3f}")
    if len(results) > 1:
        print(json.dumps(growth_ratios(results)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vara",
        description="Desk-scale hierarchical VAE acoustic model with residual attention",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Environment:
  VARA_LOG_LEVEL   error | info | debug
  VARA_LOG_FORMAT  json | text
  VARA_SEED, VARA_PRECISION override train.seed / train.precision
        """,
    )
    parser.add_argument("--log-level", choices=["error", "info", "debug"], default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="Generate a synthetic corpus with known alignments")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True, help="Number of utterances")
    p.add_argument("--vocab", type=int, default=None, help="Vocabulary size (default model.vocab_size)")
    p.add_argument("--speakers", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_make_synthetic)

    p = sub.add_parser("prepare-data", help="Ingest an LJSpeech-style directory")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_prepare_data)

    p = sub.add_parser("train", help="Train a model")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", type=Path, default=None, help="Checkpoint to resume from")
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("synthesize", help="Run the prior path for a text")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--speaker", type=int, default=None)
    p.add_argument("--frames", type=int, default=None, help="Bypass the speed predictor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=cmd_synthesize)

    p = sub.add_parser("diagnose-kl", help="Per-layer KL and posterior collapse report")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=None, help="Collapse threshold (default loss.collapse_threshold)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=cmd_diagnose_kl)

    p = sub.add_parser("ablate", help="Train a grid of config deltas with shared seeds")
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--steps", type=int, default=None, help="Steps per run (default train.total_steps)")
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("time-infer", help="Time the prior path against a per-frame baseline")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--frames", type=int, nargs="+", default=[64, 256])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_time_infer)

    return parser


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the process exit code."""
    if isinstance(error, (NumericFailure, EvaluationError)):
        return EXIT_NUMERIC
    if isinstance(error, (FormatError, OSError)):
        return EXIT_IO
    if isinstance(error, (UsageError, ConfigurationError, ConfigIncompatibleError,
                          InvalidArgumentError, InvalidInputError)):
        return EXIT_USAGE
    return EXIT_OTHER


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    set_global_level(args.log_level)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_OTHER:
            logger.exception(f"{args.command} failed: {e}")
        else:
            logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    raise SystemExit(main())

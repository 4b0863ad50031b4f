"""Command-line entry point: ``semclip {gen-data,train,eval,ablate,plot}``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, _kernels
from .ablation import VARIANT_ORDER, ablation_sweep, summary_csv, summary_zero_shot_csv, sweep_csv
from .errors import ContractError, DataError, NumericError
from .evaluate import evaluate_model, report_csv, zero_shot_csv
from .losses import VARIANTS
from .model import load_checkpoint
from .plotting import render_results
from .scene import generate_dataset, load_dataset
from .trainer import TrainConfig, train

log = logging.getLogger("semclip")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# argument types and config files
# --------------------------------------------------------------------------

def positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind in ("bool", bool):
        return parse_bool(raw)
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    return raw


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys are TrainConfig fields."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FIELD_TYPES:
            raise UsageError(f"{path}:{lineno}: expected key=value with a known key, got {line!r}")
        try:
            out[key] = _coerce(key, value.strip())
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from exc
    return out


def resolve_config(args) -> TrainConfig:
    """Flags override the config file, which overrides the defaults."""
    values = read_config_file(args.config) if args.config else {}
    for key in _FIELD_TYPES:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return TrainConfig(**values)


# --------------------------------------------------------------------------
# run directories
# --------------------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def make_run_dir(root, command: str, payload: dict) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    digest = hashlib.sha256(json.dumps([command, payload], sort_keys=True, default=str).encode()).hexdigest()[:8]
    base = Path(root) / f"{stamp}-{command}-{digest}"
    path, k = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(run_dir: Path, command: str, argv, config: dict, seed, dataset, artifacts,
                   started: str) -> Path:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "dataset": None if dataset is None else {"path": str(dataset.root), "hash": dataset.content_hash},
        "artifacts": {p.name: {"path": p.name, "sha256": _sha256(p)} for p in artifacts},
        "started": started,
        "finished": _now(),
        "version": __version__,
        "kernel_backend": _kernels.BACKEND,
    }
    missing = [p for p in artifacts if not p.is_file()]
    if missing:
        raise DataError(f"artifacts missing after run: {missing}")
    path = run_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_gen_data(args, argv) -> int:
    manifest = generate_dataset(args.count, args.seed, args.split, args.out)
    files = manifest["files"]
    print(f"wrote {args.out}: {files['train']['records']} train, {files['test']['records']} test, "
          f"{manifest['validation_rejections']} validator rejections")
    return EXIT_OK


def cmd_train(args, argv) -> int:
    started = _now()
    config = resolve_config(args)
    dataset = load_dataset(args.dataset)
    run_dir = make_run_dir(args.out, "train", {"config": config.to_dict(), "dataset": dataset.content_hash})
    result = train(config, dataset.train, out_dir=run_dir)
    artifacts = [run_dir / "checkpoint.bin", run_dir / "loss_log.csv"]
    write_manifest(run_dir, "train", argv, config.to_dict(), config.seed, dataset, artifacts, started)
    last = result.log_rows[-1]
    print(f"{run_dir}: {result.total_steps} steps, final total loss {last[2]:.4f}, tau {last[6]:.3f}")
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    started = _now()
    dataset = load_dataset(args.dataset)
    model = load_checkpoint(args.checkpoint)
    report = evaluate_model(model, dataset.test, args.variant, zero_shot=args.zero_shot, seed=model.seed)
    run_dir = make_run_dir(args.out, "eval", {"checkpoint": _sha256(Path(args.checkpoint)),
                                              "dataset": dataset.content_hash})
    artifacts = [run_dir / "report.csv"]
    artifacts[0].write_text(report_csv([report]))
    if args.zero_shot:
        artifacts.append(run_dir / "zero_shot.csv")
        artifacts[1].write_text(zero_shot_csv([report]))
    write_manifest(run_dir, "eval", argv, {"checkpoint": str(args.checkpoint), "variant": args.variant,
                                           "zero_shot": args.zero_shot}, model.seed, dataset, artifacts, started)
    print(f"{run_dir}: orig {report.acc_orig:.1f}  para {report.acc_para:.1f}  "
          f"orig>neg {report.acc_neg:.1f}  composite {report.composite:.1f}")
    return EXIT_OK


def cmd_ablate(args, argv) -> int:
    started = _now()
    config = resolve_config(args)
    dataset = load_dataset(args.dataset)
    run_dir = make_run_dir(args.out, "ablate", {"config": config.to_dict(), "dataset": dataset.content_hash,
                                                "variants": args.variants})
    rows = ablation_sweep(config, dataset.train, dataset.test, args.variants,
                          out_dir=run_dir / "cells" if args.keep_checkpoints else None, workers=args.workers)
    artifacts = [run_dir / "sweep.csv", run_dir / "summary.csv", run_dir / "zero_shot.csv"]
    for path, text in zip(artifacts, (sweep_csv(rows), summary_csv(rows), summary_zero_shot_csv(rows))):
        path.write_text(text)
    write_manifest(run_dir, "ablate", argv, config.to_dict(), config.seed, dataset, artifacts, started)
    failed = [r for r in rows if not r.ok]
    print(f"{run_dir}: {len(rows) - len(failed)} of {len(rows)} cells succeeded")
    for r in failed:
        print(f"  {r.cell}: {r.status}", file=sys.stderr)
    return EXIT_NUMERIC if len(failed) == len(rows) else EXIT_OK


def cmd_plot(args, argv) -> int:
    written = render_results(args.results, args.out)
    for p in written:
        print(p)
    return EXIT_OK


def _add_train_flags(p):
    p.add_argument("--config", help="key=value file of training settings")
    p.add_argument("--variant", choices=sorted(VARIANTS))
    p.add_argument("--n", dest="n_proj", type=int, choices=(1, 2), help="number of projection vectors")
    p.add_argument("--learnable", type=parse_bool, metavar="{true,false}")
    p.add_argument("--normalize", type=parse_bool, metavar="{true,false}")
    p.add_argument("--epochs", type=positive_int)
    p.add_argument("--batch-size", dest="batch_size", type=positive_int)
    p.add_argument("--lr", dest="peak_lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float, help="image-embedding noise level")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semclip", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate the synthetic caption dataset")
    p.add_argument("--count", type=positive_int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--split", type=fraction, default=0.8, help="train fraction")
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one loss variant")
    p.add_argument("--dataset", default="data")
    p.add_argument("--out", default="runs", help="parent of the run directory")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", default="data")
    p.add_argument("--variant", default="", help="label written into the report")
    p.add_argument("--zero-shot", dest="zero_shot", type=parse_bool, default=True, metavar="{true,false}")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sweep loss variants over the projection-bank grid")
    p.add_argument("--dataset", default="data")
    p.add_argument("--out", default="runs")
    p.add_argument("--variants", nargs="+", choices=VARIANT_ORDER, default=list(VARIANT_ORDER))
    p.add_argument("--workers", type=positive_int, default=1)
    p.add_argument("--keep-checkpoints", action="store_true", help="keep each cell's checkpoint and log")
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="render SVG charts from an ablate or eval run directory")
    p.add_argument("--results", required=True)
    p.add_argument("--out", help="output directory (default: the results directory)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

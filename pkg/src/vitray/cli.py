"""Command-line interface: ``vitray synth | train | eval | plot``.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

Settings resolve as preset defaults < ``--config`` file < command-line flags,
and ``VITRAY_SEED`` (when set) overrides every seed. Config files are flat
``key = value`` text with ``#`` comments; ``config.resolved`` uses the same
format and can be fed back through ``--config``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import dataio, metrics, plots
from .checkpoint import load_checkpoint
from .errors import ContractError, UndefinedMetricError, VitrayError
from .trainer import CKPT_NAME, LOG_NAME, TrainConfig, evaluate, fit
from .vit import PRESETS, ModelConfig

log = logging.getLogger("vitray")

SEED_ENV = "VITRAY_SEED"
MODEL_KEYS = ("image_size", "patch_size", "embed_dim", "num_layers", "num_heads", "ffn_dim", "num_classes")
TRAIN_KEYS = ("learning_rate", "batch_size", "max_epochs", "patience", "seed", "beta1", "beta2", "adam_eps", "split_ratio")
DERIVED_KEYS = ("num_patches", "seq_len", "head_dim")

# flag dest -> config key
TRAIN_FLAGS = {
    "image_size": ("--image-size", int),
    "patch_size": ("--patch-size", int),
    "embed_dim": ("--embed-dim", int),
    "num_layers": ("--layers", int),
    "num_heads": ("--heads", int),
    "ffn_dim": ("--ffn-dim", int),
    "num_classes": ("--num-classes", int),
    "learning_rate": ("--lr", float),
    "batch_size": ("--batch-size", int),
    "max_epochs": ("--epochs", int),
    "patience": ("--patience", int),
    "seed": ("--seed", int),
    "beta1": ("--beta1", float),
    "beta2": ("--beta2", float),
    "adam_eps": ("--adam-eps", float),
    "split_ratio": ("--split-ratio", float),
}


class UsageError(Exception):
    """Bad flags, config keys or config values; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    preset: str
    model: ModelConfig
    train: TrainConfig
    data: str = ""
    out: str = ""

    def to_text(self) -> str:
        lines = [f"preset = {self.preset}", f"data = {self.data}", f"out = {self.out}"]
        lines += [f"{k} = {getattr(self.model, k)!r}" for k in MODEL_KEYS]
        lines += [f"{k} = {getattr(self.train, k)!r}" for k in TRAIN_KEYS]
        lines += [
            f"num_patches = {self.model.num_patches}",
            f"seq_len = {self.model.seq_len}",
            f"head_dim = {self.model.head_dim}",
        ]
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _coerce(key: str, value):
    kind = TRAIN_FLAGS[key][1]
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise UsageError(f"invalid value for {key}: {value!r}") from None


def resolve_run_config(
    preset: str = "tiny",
    file_values: dict | None = None,
    overrides: dict | None = None,
    env: dict | None = None,
) -> RunConfig:
    """Merge preset defaults, config-file values and flag overrides (in that order)."""
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    env = os.environ if env is None else env
    preset = overrides.pop("preset", None) or file_values.pop("preset", None) or preset
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}")
    paths = {k: overrides.pop(k, None) or file_values.pop(k, None) or "" for k in ("data", "out")}
    merged = {k: getattr(PRESETS[preset], k) for k in MODEL_KEYS}
    merged.update({k: getattr(TrainConfig(), k) for k in TRAIN_KEYS})
    for source in (file_values, overrides):
        for key, value in source.items():
            if key in DERIVED_KEYS:
                continue
            if key not in TRAIN_FLAGS:
                raise UsageError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
    if env.get(SEED_ENV):
        merged["seed"] = _coerce("seed", env[SEED_ENV])
    try:
        model = ModelConfig(**{k: merged[k] for k in MODEL_KEYS})
        train = TrainConfig(**{k: merged[k] for k in TRAIN_KEYS})
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    return RunConfig(preset, model, train, str(paths["data"]), str(paths["out"]))


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _seed(value: int) -> int:
    return int(os.environ[SEED_ENV]) if os.environ.get(SEED_ENV) else value


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    pairs = dataio.generate_synthetic_images(args.per_class, args.size, args.size, _seed(args.seed))
    dataio.write_image_dataset(pairs, args.out)
    print(f"wrote {len(pairs)} images to {args.out}")
    return 0


def cmd_train(args) -> int:
    file_values = parse_config_text(Path(args.config).read_text()) if args.config else {}
    overrides = {key: getattr(args, key) for key in TRAIN_FLAGS}
    overrides.update(preset=args.preset, data=args.data, out=args.out)
    run = resolve_run_config("tiny", file_values, overrides)
    if not run.data or not run.out:
        raise UsageError("--data and --out are required (on the command line or in --config)")
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out / "config.resolved", run.to_text())
    dataset = dataio.load_directory_dataset(run.data, run.model.image_size)
    split = dataio.split_dataset(dataset, run.train.split_ratio, run.train.seed)
    result = fit(dataset, split, run.model, run.train, out)
    best = result.checkpoint
    print(f"best test accuracy {best.best_accuracy:.6f} at epoch {best.best_epoch} of {len(result.history)}")
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = _seed(args.seed)
    expected = PRESETS[args.preset] if args.preset else None
    ckpt = load_checkpoint(args.ckpt, expected)
    settings = [
        f"ckpt = {args.ckpt}", f"data = {args.data}", f"out = {args.out}", f"subset = {args.subset}",
        f"split_ratio = {args.split_ratio!r}", f"seed = {seed}", f"batch_size = {args.batch_size}",
    ]
    settings += [f"{k} = {v!r}" for k, v in ckpt.config.to_dict().items()]
    write_text_atomic(out / "config.resolved", "\n".join(settings) + "\n")
    dataset = dataio.load_directory_dataset(args.data, ckpt.config.image_size)
    if args.subset == "all":
        indices = list(range(len(dataset)))
    else:
        split = dataio.split_dataset(dataset, args.split_ratio, seed)
        indices = split.train if args.subset == "train" else split.test
    result = evaluate(ckpt.params, dataset, indices, ckpt.config, args.batch_size)
    cm = metrics.confusion(result.predictions, result.labels)
    s = metrics.summary(cm)
    try:
        curve = metrics.roc(result.scores, result.labels)
        auc = curve.auc
        write_text_atomic(out / "roc.csv", metrics.roc_csv(curve))
    except UndefinedMetricError:
        log.warning("only one class present; AUC is undefined and roc.csv is not written")
        auc = None
    report = {
        "accuracy": s.accuracy,
        "precision": s.precision,
        "recall": s.recall,
        "f1": s.f1,
        "auc": auc,
    }
    write_text_atomic(out / "metrics.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_text_atomic(out / "confusion.csv", metrics.confusion_csv(cm))
    print(f"n={len(indices)} " + " ".join(f"{k}={metrics.percent(v)}" for k, v in report.items()))
    return 0


SCHEMAS = {
    "log": ("epoch", "train_loss", "train_acc", "test_loss", "test_acc"),
    "roc": ("threshold", "fpr", "tpr"),
    "cm": ("actual", "predicted", "count", "fraction"),
}


def read_schema_csv(path, kind: str) -> list[dict]:
    """Read a CSV and check it against its documented columns; values become floats."""
    columns = SCHEMAS[kind]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in columns:
            if col not in header:
                raise UsageError(f"{path}: missing column {col!r}")
        rows = []
        for lineno, raw in enumerate(reader, 2):
            row = {}
            for col in columns:
                try:
                    row[col] = float(raw[col])
                except (TypeError, ValueError):
                    raise UsageError(f"{path}:{lineno}: bad value {raw[col]!r} in column {col!r}") from None
            rows.append(row)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return rows


def cmd_plot(args) -> int:
    if args.log:
        svg = plots.training_curves_svg(read_schema_csv(args.log, "log"))
    elif args.roc:
        rows = read_schema_csv(args.roc, "roc")
        pts = sorted(((r["fpr"], r["tpr"]) for r in rows))
        auc = sum((b[0] - a[0]) * (a[1] + b[1]) / 2 for a, b in zip(pts, pts[1:]))
        svg = plots.roc_svg(pts, auc)
    else:
        rows = read_schema_csv(args.cm, "cm")
        counts = [[0, 0], [0, 0]]
        fractions = [[0.0, 0.0], [0.0, 0.0]]
        for r in rows:
            a, p = int(r["actual"]), int(r["predicted"])
            if a not in (0, 1) or p not in (0, 1):
                raise UsageError(f"{args.cm}: actual/predicted must be 0 or 1")
            counts[a][p] = int(r["count"])
            fractions[a][p] = r["fraction"]
        svg = plots.confusion_svg(counts, fractions)
    write_text_atomic(args.out, svg)
    return 0


# -- argument parsing -----------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitray", description="Grayscale ViT classification pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic two-class image dataset")
    p.add_argument("--out", required=True, help="output directory (gets Normal/ and Abnormal/)")
    p.add_argument("--per-class", type=_positive_int, default=32)
    p.add_argument("--size", type=_positive_int, default=32, help="image side in pixels")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train with early stopping")
    p.add_argument("--data", help="dataset root with Normal/ and Abnormal/")
    p.add_argument("--out", help="output directory")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None, help="default: tiny")
    p.add_argument("--config", help="key = value config file")
    for dest, (flag, kind) in TRAIN_FLAGS.items():
        p.add_argument(flag, dest=dest, type=kind, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--subset", choices=("all", "train", "test"), default="all",
                   help="evaluate every image, or one side of the seeded split")
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="require the checkpoint to match this architecture")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render a CSV artifact as SVG")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--log", help=f"training log ({LOG_NAME})")
    src.add_argument("--roc", help="roc.csv")
    src.add_argument("--cm", help="confusion.csv")
    p.add_argument("--out", required=True, help="output .svg path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"vitray: error: {exc}", file=sys.stderr)
        return 2
    except (VitrayError, OSError) as exc:
        print(f"vitray: error: {exc}", file=sys.stderr)
        return 1


__all__ = ["main", "resolve_run_config", "RunConfig", "CKPT_NAME"]

if __name__ == "__main__":
    sys.exit(main())

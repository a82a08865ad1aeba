"""Command-line front end.

Subcommands::

    generate   write a synthetic inspection CSV
    validate   check an inspection CSV against the schema and ranges
    train      fit the selected models and write checkpoints, logs and windows
    evaluate   score saved checkpoints on a window CSV
    compare    render report CSVs as text tables (and optional SVG charts)
    predict    apply one checkpoint to a window CSV
    reproduce  full benchmark: train and evaluate every model on both targets

Settings come from an optional ``--config`` file of ``key = value`` lines;
command-line flags override it. Keys are the long flag names with dashes or
underscores (``window_length = 6``), plus ``fit.<name>``,
``transformer.<name>`` and ``synthetic.<name>`` for model and generator
hyperparameters.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import FitConfig, MLPTrainingError, SingularMatrixError
from .checkpoint import MODEL_KINDS, CheckpointError, CompatibilityError, load_checkpoint
from .data import DataError, SyntheticConfig, generate_synthetic, load_records, save_records, validate
from .evaluation import compare, load_report, render_table
from .pipeline import PipelineError, RunConfig, ValidationFailed, run_pipeline, save_predictions, write_report_files
from .sequences import load_windows, stack
from .tensor import NumericError
from .transformer import TrainingError, TransformerConfig

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(text: str, like, name: str):
    try:
        if isinstance(like, bool):
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return lowered in ("true", "1", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            return tuple(float(v) if isinstance(like[0], float) else int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None
    return text


def _apply_prefixed(obj, prefix: str, values: dict[str, str]):
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in values.items():
        if not key.startswith(prefix + "."):
            continue
        attr = key[len(prefix) + 1:]
        if attr not in names:
            raise ConfigError(f"unknown setting {key!r}")
        current = getattr(obj, attr)
        changes[attr] = _coerce(text, current if current is not None else 0, key)
    return obj.replace(**changes) if changes else obj


_RUN_KEYS = ("data", "synthetic", "seed", "window_length", "split_ratio", "split_mode", "task", "models",
             "out", "val_fraction", "allow_padding", "no_plot")


def build_run_config(args: argparse.Namespace, defaults: dict | None = None) -> RunConfig:
    """Merge config-file values with flags (flags win) into a RunConfig."""
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in values:
        if "." not in key and key not in _RUN_KEYS:
            raise ConfigError(f"unknown setting {key!r}")
    for key in _RUN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[key] = str(flag) if not isinstance(flag, bool) else "true"
    for key, value in (defaults or {}).items():
        values.setdefault(key, value)

    base = RunConfig(out="run")
    synthetic = _apply_prefixed(SyntheticConfig(), "synthetic", values)
    if "synthetic" in values:
        synthetic = synthetic.replace(n_sections=_coerce(values["synthetic"], 0, "synthetic"))
    tasks = base.tasks
    if "task" in values and values["task"] != "all":
        tasks = tuple(t.strip() for t in values["task"].split(",") if t.strip())
    models = base.models
    if "models" in values and values["models"] != "all":
        models = tuple(m.strip() for m in values["models"].split(",") if m.strip())
    try:
        return RunConfig(
            data=values.get("data"),
            synthetic=synthetic,
            tasks=tasks,
            window_length=_coerce(values.get("window_length", str(base.window_length)), 0, "window_length"),
            split_ratio=_coerce(values.get("split_ratio", str(base.split_ratio)), 0.0, "split_ratio"),
            split_mode=values.get("split_mode", base.split_mode),
            allow_padding=_coerce(values.get("allow_padding", "false"), False, "allow_padding"),
            models=models,
            fit=_apply_prefixed(FitConfig(), "fit", values),
            transformer=_apply_prefixed(TransformerConfig(), "transformer", values),
            val_fraction=_coerce(values.get("val_fraction", str(base.val_fraction)), 0.0, "val_fraction"),
            out=values.get("out", base.out),
            seed=_coerce(values.get("seed", str(base.seed)), 0, "seed"),
            plot=not _coerce(values.get("no_plot", "false"), False, "no_plot"),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = build_run_config(args)
    rs = generate_synthetic(cfg.synthetic, cfg.seed)
    out = Path(args.out or "synthetic.csv")
    save_records(rs, out)
    print(f"wrote {len(rs)} records for {cfg.synthetic.n_sections} sections to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if not args.data:
        raise ConfigError("validate needs --data")
    rs = load_records(args.data)
    report = validate(rs)
    for v in report.violations:
        print(f"{v.section_id} month {v.month} {v.field}: {v.message}")
    if not report.ok:
        print(f"{len(report.violations)} violation(s) in {args.data}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{args.data}: {len(rs)} records OK")
    return EXIT_OK


def _run(args, evaluate: bool, defaults: dict | None = None) -> int:
    cfg = build_run_config(args, defaults)
    result = run_pipeline(cfg, evaluate=evaluate)
    if evaluate:
        for report in result.reports.values():
            print(render_table(report))
    print(f"outputs in {result.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    return _run(args, evaluate=False)


def cmd_reproduce(args) -> int:
    return _run(args, evaluate=True, defaults={"out": "reproduce"})


def cmd_evaluate(args) -> int:
    if not args.windows:
        raise ConfigError("evaluate needs --windows")
    checkpoints = [Path(p) for p in args.checkpoints]
    paths = []
    for p in checkpoints:
        paths.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    if not paths:
        raise ConfigError("no checkpoints found")
    samples, _ = load_windows(args.windows)
    x, y = stack(samples)
    preds = {}
    task = None
    for p in paths:
        fm = load_checkpoint(p)
        if task is not None and fm.task != task:
            raise ConfigError(f"{p}: task {fm.task!r} differs from {task!r}")
        task = fm.task
        preds[fm.name] = fm.predict_windows(x)
    report = compare(preds, None, y, task)
    stem = Path(args.out or f"report_{task}")
    write_report_files(report, stem, not args.no_plot)
    print(render_table(report))
    return EXIT_OK


def cmd_compare(args) -> int:
    for path in args.reports:
        report = load_report(path, target=Path(path).stem)
        print(render_table(report))
        if args.chart:
            from .plotting import plot_r2

            plot_r2(report, Path(path).with_suffix(".svg"))
    return EXIT_OK


def cmd_predict(args) -> int:
    if not args.checkpoint or not args.windows:
        raise ConfigError("predict needs --checkpoint and --windows")
    fm = load_checkpoint(args.checkpoint)
    samples, L = load_windows(args.windows)
    if samples and L != fm.window:
        raise CompatibilityError(f"window length mismatch: expected L={fm.window}, found L={L}")
    preds = fm.predict_samples(samples)
    out = Path(args.out or "predictions.csv")
    save_predictions(samples, preds, out)
    print(f"wrote {len(samples)} predictions to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--data", help="inspection CSV (default: synthetic data)")
    p.add_argument("--synthetic", type=int, metavar="N", help="number of synthetic sections")
    p.add_argument("--seed", type=int, help="master seed (default 7)")
    p.add_argument("--window-length", dest="window_length", type=int, help="window length L (default 4)")
    p.add_argument("--split-ratio", dest="split_ratio", type=float, help="train fraction (default 0.8)")
    p.add_argument("--split-mode", dest="split_mode", choices=("sections", "rows"))
    p.add_argument("--task", help="skid, macrotexture, a comma list, or all")
    p.add_argument("--models", help=f"comma list from {','.join(MODEL_KINDS)}, or all")
    p.add_argument("--out", help="output path")
    p.add_argument("--no-plot", dest="no_plot", action="store_true", help="skip SVG charts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skidcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (("generate", cmd_generate, "write synthetic inspection data"),
                            ("train", cmd_train, "fit models and write checkpoints"),
                            ("reproduce", cmd_reproduce, "run the full benchmark")):
        p = sub.add_parser(name, help=help_)
        _run_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("validate", help="check an inspection CSV")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", help="score checkpoints on a window CSV")
    p.add_argument("checkpoints", nargs="+", help="checkpoint files or directories")
    p.add_argument("--windows", required=True)
    p.add_argument("--out", help="report path stem")
    p.add_argument("--no-plot", dest="no_plot", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="render report CSVs")
    p.add_argument("reports", nargs="+")
    p.add_argument("--chart", action="store_true", help="also write an SVG next to each report")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", help="apply a checkpoint to windows")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--windows", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)
    return parser


_NUMERIC = (NumericError, TrainingError, MLPTrainingError, SingularMatrixError, np.linalg.LinAlgError,
            FloatingPointError)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        exc = exc.cause
    if isinstance(exc, ValidationFailed):
        return EXIT_VALIDATION
    if isinstance(exc, _NUMERIC):
        return EXIT_NUMERIC
    if isinstance(exc, DataError):
        return EXIT_VALIDATION
    return EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, CompatibilityError, CheckpointError, PipelineError, DataError,
            *_NUMERIC, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())

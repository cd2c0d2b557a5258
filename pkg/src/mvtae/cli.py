"""Command-line harness: ``mvtae {generate,train,sweep,baseline,eval,hidden}``.

Every configuration key can be given in an INI file (``--config``) and
overridden by a flag of the same name, e.g. ``--window-size 50``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import baseline, persist
from .dataset import generate_series, write_series_csv
from .experiment import (
    GRID_HEADER,
    ExperimentConfig,
    build_split,
    format_table,
    load_config,
    run_sweep,
    train_mvtae,
    write_csv,
    write_sweep_csv,
)
from .metrics import evaluate
from .model import encode_all

log = logging.getLogger("mvtae")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

MODEL_FILE = "model.mvtae"
REPORT_FILE = "report.json"
SERIES_FILE = "series.csv"
GRID_FILE = "baseline_grid.csv"
TRACE_FILE = "trace.csv"
EVAL_FILE = "eval.json"
HIDDEN_FILE = "hidden.csv"

# keys that describe where/how to run, not what is trained
RUNTIME_KEYS = ("out", "workers")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="INI config file")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch losses")
    for f in fields(ExperimentConfig):
        p.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            type=f.metadata["parse"],
            default=None,
            help=f.metadata.get("help") or None,
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvtae", description="Multivariate temporal autoencoder experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "generate": "write the synthetic series CSV",
        "train": "two-stage training, writes model file and report",
        "sweep": "reproduce a hyperparameter sweep table",
        "baseline": "vanilla LSTM grid search",
        "eval": "evaluate a model file, write the prediction trace",
        "hidden": "dump hidden state vectors of the test windows",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _add_config_flags(p)
        if name in ("eval", "hidden"):
            p.add_argument("--model", metavar="PATH", help=f"model file (default OUT/{MODEL_FILE})")
    return parser


def _overrides(args) -> dict:
    return {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}


def _model_config(cfg: ExperimentConfig) -> dict:
    d = cfg.to_dict()
    for k in RUNTIME_KEYS:
        d.pop(k, None)
    return d


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# -- commands ------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig) -> Path:
    series = generate_series(cfg.series_config)
    path = _out_dir(cfg) / SERIES_FILE
    try:
        write_series_csv(series, path)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc
    print(f"wrote {path}: {series.length} timesteps")
    for name in series.names:
        col = series[name]
        print(f"  {name:16s} min {col.min(): .6f}  max {col.max(): .6f}")
    return path


def cmd_train(cfg: ExperimentConfig) -> dict:
    out = _out_dir(cfg)
    try:
        split = build_split(cfg)
    except ValueError as exc:
        raise UsageError(f"dataset: {exc}") from exc
    log.info("train %d windows, test %d windows", len(split.train), len(split.test))
    result = train_mvtae(cfg, split)
    persist.save_model(result.model, out / MODEL_FILE, _model_config(cfg))
    report = {"config": _model_config(cfg), **result.report(include_timing=False)}
    _dump_json(out / REPORT_FILE, report)
    log.info("encoder-decoder %.1fs, alpha %.1fs", result.encdec_report.seconds, result.alpha_report.seconds)
    print(f"test {result.summary}")
    print(f"wrote {out / MODEL_FILE} and {out / REPORT_FILE}")
    return report


def cmd_sweep(cfg: ExperimentConfig):
    out = _out_dir(cfg)
    rows = run_sweep(cfg)
    path = out / f"sweep_{cfg.sweep_axis}.csv"
    write_sweep_csv(path, rows)
    print(format_table(cfg.sweep_axis, rows))
    failed = [r for r in rows if r.error]
    if failed:
        print(f"{len(failed)} cell(s) failed: " + "; ".join(f"{r.axis_value}: {r.error}" for r in failed))
    print(f"wrote {path}")
    return rows


def cmd_baseline(cfg: ExperimentConfig):
    out = _out_dir(cfg)
    split = build_split(cfg)
    hyper = dict(epochs=cfg.epochs, lr=cfg.lr, dropout=cfg.dropout, clip_norm=cfg.clip_norm)
    result = baseline.grid_search(cfg.grid_batch_sizes, cfg.grid_lstm_sizes, split,
                                  seed=cfg.seed, workers=cfg.workers, **hyper)
    path = out / GRID_FILE
    write_csv(path, GRID_HEADER, [(c.batch_size, c.lstm_size, c.summary.mse, c.summary.mae, c.summary.r_squared)
                                  for c in result.rows])
    for c in result.rows:
        print(f"batch {c.batch_size:4d}  lstm {c.lstm_size:4d}  {c.summary}")
    b = result.best
    print(f"best: batch {b.batch_size}, lstm {b.lstm_size}, R2 {100 * b.r_squared:.2f}%")
    print(f"wrote {path}")
    return result


def _load_for_eval(args, cfg_overrides):
    model_path = Path(args.model) if args.model else Path(cfg_overrides.get("out") or "runs") / MODEL_FILE
    try:
        model, meta = persist.load_model(model_path)
    except FileNotFoundError as exc:
        raise UsageError(f"model file not found: {model_path}") from exc
    base = {k: v for k, v in meta.get("config", {}).items() if k in {f.name for f in fields(ExperimentConfig)}}
    base = {k: tuple(v) if isinstance(v, list) else v for k, v in base.items()}
    cfg = load_config(args.config, cfg_overrides, defaults=base)
    if cfg.window_size != model.window_len:
        raise persist.ModelFormatError(f"model was trained on windows of {model.window_len}, config asks for {cfg.window_size}")
    return model, cfg


def cmd_eval(model, cfg: ExperimentConfig):
    out = _out_dir(cfg)
    split = build_split(cfg)
    test = split.test
    if test.n_features != model.encdec.n_features:
        raise persist.ModelFormatError(f"model expects {model.encdec.n_features} input dims, data has {test.n_features}")
    pred = model.predict_normalized(test)
    summary = evaluate(pred, test.alpha_target)
    rows = zip(test.end_index.tolist(), test.denormalize_target(test.alpha_target), test.denormalize_target(pred))
    write_csv(out / TRACE_FILE, ("window_end_index", "target_denorm", "pred_denorm"), rows)
    _dump_json(out / EVAL_FILE, summary.to_dict())
    print(f"test {summary}")
    print(f"wrote {out / TRACE_FILE} and {out / EVAL_FILE}")
    return summary


def cmd_hidden(model, cfg: ExperimentConfig) -> Path:
    out = _out_dir(cfg)
    split = build_split(cfg)
    hsv = encode_all(split.test.inputs, model.encdec)
    path = out / HIDDEN_FILE
    write_csv(path, [f"h_{j}" for j in range(hsv.shape[1])], hsv.tolist())
    print(f"wrote {path}: {hsv.shape[0]} windows x {hsv.shape[1]} components")
    return path


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    overrides = _overrides(args)
    stage = args.command
    try:
        if stage in ("eval", "hidden"):
            model, cfg = _load_for_eval(args, overrides)
        else:
            cfg = load_config(args.config, overrides)
    except (OSError, ValueError, UsageError) as exc:
        print(f"mvtae {stage}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if stage == "eval":
            cmd_eval(model, cfg)
        elif stage == "hidden":
            cmd_hidden(model, cfg)
        else:
            {"generate": cmd_generate, "train": cmd_train, "sweep": cmd_sweep, "baseline": cmd_baseline}[stage](cfg)
    except (UsageError, persist.ModelFormatError) as exc:
        print(f"mvtae {stage}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"mvtae {stage}: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK

if __name__ == "__main__":
    sys.exit(main())

"""Experiment configuration and the end-to-end runners behind the CLI."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .dataset import DatasetSplit, SeriesConfig, format_float, generate_series, make_windows, split_dataset
from .metrics import EvalSummary, evaluate
from .model import MvTAe, TrainReport, train_alpha, train_encoder_decoder
from .numerics import derive_seed

log = logging.getLogger(__name__)

SWEEP_AXES = {
    "batch_size": "batch_size",
    "hidden_vector_size": "hidden_size",
    "window_size": "window_size",
}
SWEEP_HEADER = ("axis_value", "mse", "mae", "r_squared", "seed", "seconds")
GRID_HEADER = ("batch_size", "lstm_size", "mse", "mae", "r_squared")


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _opt_float(text):
    if text is None or str(text).lower() in ("", "none", "off"):
        return None
    return float(text)


def _opt_int(text):
    if text is None or str(text).lower() in ("", "none"):
        return None
    return int(text)


def _field(default, section, parse, help=""):
    if isinstance(default, (list, tuple)):
        return field(default_factory=lambda: tuple(default), metadata=dict(section=section, parse=parse, help=help))
    return field(default=default, metadata=dict(section=section, parse=parse, help=help))


@dataclass
class ExperimentConfig:
    # [dataset]
    length: int = _field(6000, "dataset", int, "series length in timesteps")
    sine1_period: float = _field(100.0, "dataset", float)
    sine1_amplitude: float = _field(1.0, "dataset", float)
    sine2_period: float = _field(1000.0, "dataset", float)
    sine2_amplitude: float = _field(5.0, "dataset", float)
    noise_stddev: float = _field(1.0 / 3.0, "dataset", float)
    noise_clip: float = _field(1.0, "dataset", float)
    series_seed: int = _field(0, "dataset", int, "seed of the noise dimension")
    train_fraction: float = _field(0.8, "dataset", float)
    window_size: int = _field(100, "dataset", int, "window length N")
    step: int = _field(1, "dataset", int, "stride S between windows")
    # [model]
    hidden_size: int = _field(64, "model", int, "hidden state vector size H")
    alpha_widths: tuple = _field((100, 100), "model", _ints, "alpha hidden layer widths, e.g. 100,100")
    lr: float = _field(1e-3, "model", float)
    epochs: int = _field(100, "model", int, "epochs for the encoder-decoder (and alpha unless set)")
    alpha_epochs: int | None = _field(None, "model", _opt_int, "epochs for the alpha branch")
    batch_size: int = _field(8, "model", int)
    clip_norm: float | None = _field(5.0, "model", _opt_float, "global gradient-norm clip; 'off' disables")
    seed: int = _field(0, "model", int, "training seed")
    # [sweep]
    sweep_axis: str = _field("batch_size", "sweep", str, "one of " + ", ".join(SWEEP_AXES))
    sweep_values: tuple = _field((1, 2, 4, 8, 16, 32, 64, 128), "sweep", _ints)
    # [baseline]
    grid_batch_sizes: tuple = _field((1, 2, 4, 8, 16, 32, 64, 128), "baseline", _ints)
    grid_lstm_sizes: tuple = _field((8, 16, 32, 64, 128, 256), "baseline", _ints)
    dropout: float = _field(0.2, "baseline", float)
    # [output]
    out: str = _field("runs", "output", str, "output directory")
    workers: int = _field(1, "output", int, "parallel sweep/grid cells")

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {sorted(SWEEP_AXES)}, got {self.sweep_axis!r}")
        if not self.sweep_values:
            raise ValueError("sweep_values must not be empty")
        for name in ("window_size", "hidden_size", "batch_size", "epochs", "step", "workers"):
            v = getattr(self, name)
            if v < (0 if name == "epochs" else 1):
                raise ValueError(f"{name} out of range: {v}")

    @property
    def series_config(self) -> SeriesConfig:
        return SeriesConfig(
            length=self.length,
            sine1_period=self.sine1_period,
            sine1_amplitude=self.sine1_amplitude,
            sine2_period=self.sine2_period,
            sine2_amplitude=self.sine2_amplitude,
            noise_stddev=self.noise_stddev,
            noise_clip=self.noise_clip,
            seed=self.series_seed,
        )

    @property
    def effective_alpha_epochs(self) -> int:
        return self.epochs if self.alpha_epochs is None else self.alpha_epochs

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for f in fields(self):
            sec = f.metadata["section"]
            if not cp.has_section(sec):
                cp.add_section(sec)
            v = getattr(self, f.name)
            cp.set(sec, f.name, ",".join(map(str, v)) if isinstance(v, tuple) else str(v))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def config_fields():
    return fields(ExperimentConfig)


def parse_value(name: str, text):
    f = {f.name: f for f in fields(ExperimentConfig)}[name]
    return f.metadata["parse"](text)


def load_config(path=None, overrides: dict | None = None, defaults: dict | None = None) -> ExperimentConfig:
    """Layer ``defaults``, then the INI file at ``path``, then non-None ``overrides``."""
    values = dict(defaults or {})
    known = {f.name: f for f in fields(ExperimentConfig)}
    if path is not None:
        cp = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
        for sec in cp.sections():
            for key, text in cp.items(sec):
                if key not in known:
                    raise ValueError(f"{path}: unknown key {key!r} in [{sec}]")
                if known[key].metadata["section"] != sec:
                    raise ValueError(f"{path}: key {key!r} belongs in [{known[key].metadata['section']}], not [{sec}]")
                values[key] = known[key].metadata["parse"](text)
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = v
    return ExperimentConfig(**values)


# -- runners -------------------------------------------------------------


def build_split(cfg: ExperimentConfig) -> DatasetSplit:
    series = generate_series(cfg.series_config)
    windows = make_windows(series, cfg.window_size, cfg.step)
    return split_dataset(windows, cfg.train_fraction)


@dataclass
class RunResult:
    model: MvTAe
    encdec_report: TrainReport
    alpha_report: TrainReport
    summary: EvalSummary

    def report(self, include_timing: bool = False) -> dict:
        return {
            "encoder_decoder": self.encdec_report.to_dict(include_timing),
            "alpha": self.alpha_report.to_dict(include_timing),
            "test": self.summary.to_dict(),
        }


def train_mvtae(cfg: ExperimentConfig, split: DatasetSplit | None = None, seed: int | None = None) -> RunResult:
    """Two-stage training for one configuration; metrics on the normalized test targets."""
    split = split or build_split(cfg)
    seed = cfg.seed if seed is None else seed
    encdec, r1 = train_encoder_decoder(
        split.train, split.test, hidden_size=cfg.hidden_size, batch_size=cfg.batch_size,
        epochs=cfg.epochs, lr=cfg.lr, seed=seed, clip_norm=cfg.clip_norm,
    )
    alpha, r2 = train_alpha(
        split.train, split.test, encdec, widths=tuple(cfg.alpha_widths), batch_size=cfg.batch_size,
        epochs=cfg.effective_alpha_epochs, lr=cfg.lr, seed=seed, clip_norm=cfg.clip_norm,
    )
    model = MvTAe(encdec, alpha, split.train.input_dims, split.train.target_dim, split.train.window_len)
    summary = evaluate(model.predict_normalized(split.test), split.test.alpha_target)
    return RunResult(model, r1, r2, summary)


def sweep_seed(seed: int, axis: str, value) -> int:
    return derive_seed(seed, axis, int(value))


@dataclass(frozen=True)
class SweepResult:
    axis_value: int
    mse: float
    mae: float
    r_squared: float
    seed: int
    seconds: float
    error: str | None = None


def run_sweep_cell(cfg: ExperimentConfig, value: int) -> SweepResult:
    seed = sweep_seed(cfg.seed, cfg.sweep_axis, value)
    t0 = time.perf_counter()
    try:
        cell_cfg = cfg.replace(**{SWEEP_AXES[cfg.sweep_axis]: int(value)})
        s = train_mvtae(cell_cfg, seed=seed).summary
    except Exception as exc:  # a failed cell must not abort the sweep
        log.error("sweep cell %s=%s failed: %s", cfg.sweep_axis, value, exc)
        return SweepResult(int(value), np.nan, np.nan, np.nan, seed, time.perf_counter() - t0, repr(exc))
    return SweepResult(int(value), s.mse, s.mae, s.r_squared, seed, time.perf_counter() - t0)


def run_sweep(cfg: ExperimentConfig) -> list[SweepResult]:
    values = list(cfg.sweep_values)
    if cfg.workers > 1 and len(values) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(run_sweep_cell, [cfg] * len(values), values))
    return [run_sweep_cell(cfg, v) for v in values]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else format_float(v))
                        for v in row])


def _number(text: str):
    # ints are written without a decimal point; keep 64-bit seeds exact
    try:
        return int(text)
    except ValueError:
        return float(text)


def read_csv(path) -> tuple[list[str], list[list]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[_number(v) for v in r] for r in rows[1:]]


def write_sweep_csv(path, results: list[SweepResult]) -> None:
    write_csv(path, SWEEP_HEADER, [(r.axis_value, r.mse, r.mae, r.r_squared, r.seed, r.seconds) for r in results])


def format_table(axis: str, rows) -> str:
    """Aligned text table; R^2 shown as a percentage with two decimals."""
    title = {"batch_size": "Batch Size", "hidden_vector_size": "Hidden Vector Size",
             "window_size": "Window Size"}.get(axis, axis)
    lines = [f"{title:>20}  {'MSE':>8}  {'MAE':>8}  {'R^2':>8}"]
    for r in rows:
        lines.append(f"{r.axis_value:>20}  {r.mse:8.5f}  {r.mae:8.5f}  {100 * r.r_squared:7.2f}%")
    return "\n".join(lines)

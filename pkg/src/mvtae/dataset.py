"""Synthetic multivariate series, sliding windows and per-window MinMax scaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numerics import make_rng, sample_normal

DIMENSIONS = ("sine_1", "sine_2", "noise", "combined_signal")
INPUT_DIMS = ("sine_1", "sine_2", "noise")
TARGET_DIM = "combined_signal"

# spread below which a window dimension is treated as constant
DEGENERATE_SPREAD = 1e-12


@dataclass(frozen=True)
class SeriesConfig:
    length: int = 6000
    sine1_period: float = 100.0
    sine1_amplitude: float = 1.0
    sine2_period: float = 1000.0
    sine2_amplitude: float = 5.0
    noise_stddev: float = 1.0 / 3.0
    noise_clip: float = 1.0
    sine1_phase: float = 0.0
    sine2_phase: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("sine1_period", "sine1_amplitude", "sine2_period", "sine2_amplitude"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.length <= self.sine2_period:
            raise ValueError(
                f"length ({self.length}) must exceed sine2_period ({self.sine2_period})"
            )
        if self.noise_stddev < 0 or self.noise_clip < 0:
            raise ValueError("noise_stddev and noise_clip must be non-negative")


@dataclass(frozen=True)
class MultivariateSeries:
    values: dict[str, np.ndarray]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.values)

    @property
    def length(self) -> int:
        return len(next(iter(self.values.values())))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def stack(self, dims: Sequence[str]) -> np.ndarray:
        """Columns ``dims`` as a (length, len(dims)) array."""
        missing = [d for d in dims if d not in self.values]
        if missing:
            raise KeyError(f"unknown dimension(s) {missing}; have {list(self.values)}")
        return np.column_stack([self.values[d] for d in dims])


def generate_series(cfg: SeriesConfig = SeriesConfig()) -> MultivariateSeries:
    cfg.validate()
    t = np.arange(cfg.length, dtype=np.float64)
    sine_1 = cfg.sine1_amplitude * np.sin(2.0 * math.pi * t / cfg.sine1_period + cfg.sine1_phase)
    sine_2 = cfg.sine2_amplitude * np.sin(2.0 * math.pi * t / cfg.sine2_period + cfg.sine2_phase)
    rng = make_rng(cfg.seed)
    noise = np.clip(sample_normal(rng, 0.0, cfg.noise_stddev, cfg.length), -cfg.noise_clip, cfg.noise_clip)
    return MultivariateSeries(
        {
            "sine_1": sine_1,
            "sine_2": sine_2,
            "noise": noise,
            "combined_signal": sine_1 + sine_2,
        }
    )


def write_series_csv(series: MultivariateSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + series.names)
        cols = [series[n] for n in series.names]
        for i in range(series.length):
            w.writerow([str(i)] + [format_float(c[i]) for c in cols])


def read_series_csv(path) -> MultivariateSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "t":
        raise ValueError(f"{path}: first column must be 't', got {header[0]!r}")
    data = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(len(body), -1)
    return MultivariateSeries({name: data[:, j].copy() for j, name in enumerate(header[1:])})


def format_float(x: float) -> str:
    return format(float(x), ".17g")


# -- normalization -------------------------------------------------------


@dataclass(frozen=True)
class NormParams:
    """Per-dimension window max (hi) and min (lo), in signal units."""

    dims: tuple[str, ...]
    hi: np.ndarray
    lo: np.ndarray

    def index(self, dim: str) -> int:
        try:
            return self.dims.index(dim)
        except ValueError:
            raise KeyError(f"NormParams has no dimension {dim!r}; have {self.dims}") from None

    def bounds(self, dim: str) -> tuple[float, float]:
        j = self.index(dim)
        return float(self.hi[j]), float(self.lo[j])


def _scale(x, lo, hi):
    spread = hi - lo
    degenerate = spread <= DEGENERATE_SPREAD
    safe = np.where(degenerate, 1.0, spread)
    return np.where(degenerate, 0.0, (x - lo) / safe)


def normalize_window(raw, dims: Sequence[str] | None = None) -> tuple[np.ndarray, NormParams]:
    """MinMax-scale each column of an N x K block by its own min and max.

    A constant column maps to zeros and keeps ``hi == lo``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.shape[0] < 2:
        raise ValueError(f"window needs at least 2 timesteps, got {raw.shape[0]}")
    if dims is None:
        dims = tuple(f"dim_{j}" for j in range(raw.shape[1]))
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    return _scale(raw, lo, hi), NormParams(tuple(dims), hi, lo)


def normalize_target(y_next: float, norm: NormParams, dim: str) -> float:
    hi, lo = norm.bounds(dim)
    return float(_scale(y_next, lo, hi))


def denormalize(values, norm: NormParams, dim: str):
    hi, lo = norm.bounds(dim)
    out = np.asarray(values, dtype=np.float64) * (hi - lo) + lo
    return float(out) if out.ndim == 0 else out


# -- windows -------------------------------------------------------------


@dataclass(frozen=True)
class WindowSample:
    inputs: np.ndarray
    alpha_target: float
    norm: NormParams
    window_end_index: int

    @property
    def recon_target(self) -> np.ndarray:
        return self.inputs[::-1]


@dataclass(frozen=True)
class WindowSet:
    """An ordered collection of normalized windows stored as stacked arrays.

    ``inputs`` is (M, N, K); ``hi``/``lo`` are (M, len(norm_dims)) and cover the
    input dimensions followed by the target dimension.
    """

    inputs: np.ndarray
    alpha_target: np.ndarray
    hi: np.ndarray
    lo: np.ndarray
    end_index: np.ndarray
    input_dims: tuple[str, ...]
    target_dim: str
    norm_dims: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.end_index)

    @property
    def window_len(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]

    @property
    def recon_target(self) -> np.ndarray:
        return self.inputs[:, ::-1, :]

    def target_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        j = self.norm_dims.index(self.target_dim)
        return self.hi[:, j], self.lo[:, j]

    def denormalize_target(self, values) -> np.ndarray:
        hi, lo = self.target_bounds()
        return np.asarray(values, dtype=np.float64) * (hi - lo) + lo

    def take(self, idx) -> "WindowSet":
        return WindowSet(
            self.inputs[idx],
            self.alpha_target[idx],
            self.hi[idx],
            self.lo[idx],
            self.end_index[idx],
            self.input_dims,
            self.target_dim,
            self.norm_dims,
        )

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.take(i)
        return WindowSample(
            inputs=self.inputs[i],
            alpha_target=float(self.alpha_target[i]),
            norm=NormParams(self.norm_dims, self.hi[i], self.lo[i]),
            window_end_index=int(self.end_index[i]),
        )

    def __iter__(self) -> Iterator[WindowSample]:
        for i in range(len(self)):
            yield self[i]


def make_windows(
    series: MultivariateSeries,
    window_len: int,
    step: int = 1,
    input_dims: Sequence[str] = INPUT_DIMS,
    target_dim: str = TARGET_DIM,
) -> WindowSet:
    """Slice ``series`` into windows ending at i = N-1, N-1+S, ... with i+1 in range."""
    n = int(window_len)
    step = int(step)
    if n < 2:
        raise ValueError(f"window length must be >= 2, got {n}")
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if series.length < n + 1:
        raise ValueError(f"series of length {series.length} too short for window {n} plus a next step")
    input_dims = tuple(input_dims)
    norm_dims = input_dims + ((target_dim,) if target_dim not in input_dims else ())

    raw = series.stack(norm_dims)
    ends = np.arange(n - 1, series.length - 1, step)
    # (num_windows, n_dims, N) -> (num_windows, N, n_dims)
    blocks = sliding_window_view(raw[: ends[-1] + 1], n, axis=0)[ends - (n - 1)].transpose(0, 2, 1)
    lo = blocks.min(axis=1)
    hi = blocks.max(axis=1)
    scaled = _scale(blocks, lo[:, None, :], hi[:, None, :])

    k = len(input_dims)
    jt = norm_dims.index(target_dim)
    y_next = series[target_dim][ends + 1]
    alpha = _scale(y_next, lo[:, jt], hi[:, jt])
    return WindowSet(
        inputs=np.ascontiguousarray(scaled[:, :, :k]),
        alpha_target=alpha,
        hi=hi,
        lo=lo,
        end_index=ends,
        input_dims=input_dims,
        target_dim=target_dim,
        norm_dims=norm_dims,
    )


@dataclass(frozen=True)
class DatasetSplit:
    train: WindowSet
    test: WindowSet
    split_fraction: float


def split_dataset(windows: WindowSet, train_fraction: float = 0.8) -> DatasetSplit:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(windows) == 0:
        raise ValueError("cannot split an empty window set")
    if np.any(np.diff(windows.end_index) <= 0):
        raise ValueError("windows must be ordered by window_end_index")
    cut = int(math.floor(train_fraction * len(windows)))
    return DatasetSplit(windows[:cut], windows[cut:], train_fraction)

"""Comparison model: one LSTM layer, dropout on its final output, a scalar dense head."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import DatasetSplit, WindowSet
from .metrics import EvalSummary, evaluate
from .model import EVAL_CHUNK, TrainReport, run_epochs
from .nn import AdamState, DenseParams, LstmParams
from .numerics import ShapeError, derive_seed, make_rng

DEFAULT_BATCH_AXIS = (1, 2, 4, 8, 16, 32, 64, 128)
DEFAULT_LSTM_AXIS = (8, 16, 32, 64, 128, 256)


@dataclass
class VanillaLstmParams:
    lstm: LstmParams
    head: DenseParams
    dropout_rate: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.head.in_size != self.lstm.hidden_size or self.head.out_size != 1:
            raise ShapeError("head must map the LSTM output to one value")

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "lstm.W": self.lstm.weights,
            "lstm.b": self.lstm.bias,
            "head.W": self.head.weights,
            "head.b": self.head.bias,
        }


def init_vanilla(rng: np.random.Generator, n_features: int, lstm_size: int, dropout_rate: float = 0.2):
    return VanillaLstmParams(
        nn.init_lstm(rng, n_features, lstm_size),
        nn.init_dense(rng, lstm_size, 1, "linear"),
        dropout_rate,
    )


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: kept units are scaled by 1/(1-rate)."""
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def vanilla_forward(window, p: VanillaLstmParams, training: bool = False, rng: np.random.Generator | None = None):
    w = np.asarray(window, dtype=np.float64)
    _, final, _ = nn.lstm_sequence_forward(w, None, p.lstm)
    h = final.h
    if training and p.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        h = h * dropout_mask(rng, h.shape, p.dropout_rate)
    y, _ = nn.dense_forward(h, p.head)
    return float(y[0]) if w.ndim == 2 else y[:, 0]


def vanilla_loss(p: VanillaLstmParams, batch, target, mask=None):
    """Training loss and gradients; ``mask`` is an inverted-dropout mask or None."""
    _, final, lstm_cache = nn.lstm_sequence_forward(batch, None, p.lstm)
    h = final.h if mask is None else final.h * mask
    y, head_cache = nn.dense_forward(h, p.head)
    loss, g = nn.mse_loss(y[:, 0], np.asarray(target, dtype=np.float64))
    gh, head_grads = nn.dense_backward(g[:, None], head_cache)
    if mask is not None:
        gh = gh * mask
    _, lstm_grads, _ = nn.lstm_backward(None, nn.LstmState(gh, np.zeros_like(gh)), lstm_cache)
    return loss, {
        "lstm.W": lstm_grads["W"],
        "lstm.b": lstm_grads["b"],
        "head.W": head_grads["W"],
        "head.b": head_grads["b"],
    }


def predict_vanilla(windows, p: VanillaLstmParams) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    return np.concatenate(
        [vanilla_forward(windows[s:s + EVAL_CHUNK], p) for s in range(0, len(windows), EVAL_CHUNK)]
    )


def train_vanilla(
    train: WindowSet,
    test: WindowSet | None = None,
    *,
    lstm_size: int = 64,
    batch_size: int = 8,
    epochs: int = 100,
    lr: float = 1e-3,
    dropout: float = 0.2,
    seed: int = 0,
    clip_norm: float | None = 5.0,
) -> tuple[VanillaLstmParams, TrainReport]:
    if len(train) == 0:
        raise ValueError("empty training set")
    t0 = time.perf_counter()
    p = init_vanilla(make_rng(derive_seed(seed, "vanilla", "init")), train.n_features, lstm_size, dropout)
    drop_rng = make_rng(derive_seed(seed, "vanilla", "dropout"))
    report = TrainReport(config=dict(lstm_size=lstm_size, batch_size=batch_size, window_len=train.window_len,
                                     lr=lr, dropout=dropout, seed=seed, clip_norm=clip_norm, epochs=epochs))
    params = p.arrays()
    adam = AdamState(lr=lr)
    x, y = train.inputs, train.alpha_target

    def step(idx):
        mask = dropout_mask(drop_rng, (len(idx), lstm_size), dropout) if dropout > 0 else None
        loss, grads = vanilla_loss(p, x[idx], y[idx], mask)
        nn.clip_global_norm(grads, clip_norm)
        nn.adam_step(params, grads, adam)
        return loss

    run_epochs(len(train), batch_size, epochs, seed, "vanilla", step, report)
    if test is not None and len(test):
        report.test_loss = nn.mse_loss(predict_vanilla(test.inputs, p), test.alpha_target)[0]
    report.seconds = time.perf_counter() - t0
    return p, report


@dataclass(frozen=True)
class GridCell:
    batch_size: int
    lstm_size: int
    summary: EvalSummary
    seed: int
    seconds: float = 0.0

    @property
    def r_squared(self) -> float:
        return self.summary.r_squared


@dataclass
class GridResult:
    rows: list[GridCell] = field(default_factory=list)

    @property
    def best(self) -> GridCell:
        """Maximal-R^2 cell; ties go to the earliest row."""
        if not self.rows:
            raise ValueError("empty grid")
        best = self.rows[0]
        for row in self.rows[1:]:
            if row.r_squared > best.r_squared:
                best = row
        return best


def cell_seed(seed: int, batch_size: int, lstm_size: int) -> int:
    return derive_seed(seed, "baseline", int(batch_size), int(lstm_size))


def run_cell(split: DatasetSplit, batch_size: int, lstm_size: int, *, seed: int = 0, **hyper) -> GridCell:
    s = cell_seed(seed, batch_size, lstm_size)
    t0 = time.perf_counter()
    p, _ = train_vanilla(split.train, None, lstm_size=lstm_size, batch_size=batch_size, seed=s, **hyper)
    summary = evaluate(predict_vanilla(split.test.inputs, p), split.test.alpha_target)
    return GridCell(batch_size, lstm_size, summary, s, time.perf_counter() - t0)


def grid_search(
    batch_sizes,
    lstm_sizes,
    split: DatasetSplit,
    *,
    seed: int = 0,
    workers: int = 1,
    **hyper,
) -> GridResult:
    """Train one baseline per (batch, lstm size) cell, rows in row-major axis order."""
    batch_sizes, lstm_sizes = list(batch_sizes), list(lstm_sizes)
    if not batch_sizes or not lstm_sizes:
        raise ValueError("grid axes must be non-empty")
    cells = [(b, l) for b in batch_sizes for l in lstm_sizes]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            futs = [pool.submit(run_cell, split, b, l, seed=seed, **hyper) for b, l in cells]
            rows = [f.result() for f in futs]
    else:
        rows = [run_cell(split, b, l, seed=seed, **hyper) for b, l in cells]
    return GridResult(rows)

"""Framework-free neural building blocks with hand-written backward passes.

Every forward function accepts either a single sample or a leading batch
axis. A batch of B samples is evaluated as one stacked matrix; since the loss
functions average over the batch, the resulting parameter gradients are the
mean of the B per-sample gradients.

LSTM gates are stored stacked in one (4H, D+H) matrix in the order
input, forget, cell-candidate, output; each gate's H rows act on the
concatenation [x_t, h_{t-1}].
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .numerics import ShapeError, sample_uniform

GATES = ("i", "f", "g", "o")
ACTIVATIONS = ("linear", "relu")


class GradientError(FloatingPointError):
    """A gradient or loss became non-finite."""


class CacheError(ValueError):
    """A backward pass was handed a cache from a different forward call."""


def _batched(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError(f"expected {ndim - 1}-D sample or {ndim}-D batch, got shape {x.shape}")
    return x, False


# -- dense ---------------------------------------------------------------


@dataclass
class DenseParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"dense weights {self.weights.shape} and bias {self.bias.shape} do not agree")

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W": self.weights, "b": self.bias}


@dataclass
class DenseCache:
    params: DenseParams
    x: np.ndarray
    z: np.ndarray
    squeeze: bool


def dense_forward(x, p: DenseParams) -> tuple[np.ndarray, DenseCache]:
    xb, squeeze = _batched(x, 2)
    if xb.shape[1] != p.in_size:
        raise ShapeError(f"dense layer expects input width {p.in_size}, got {xb.shape[1]}")
    z = xb @ p.weights.T + p.bias
    y = np.maximum(z, 0.0) if p.activation == "relu" else z
    cache = DenseCache(p, xb, z, squeeze)
    return (y[0] if squeeze else y), cache


def dense_backward(grad_y, cache: DenseCache, p: DenseParams | None = None):
    """Return (grad_x, {"W": dW, "b": db}) for upstream gradient ``grad_y``."""
    if p is not None and p is not cache.params:
        raise CacheError("dense cache was produced with different parameters")
    p = cache.params
    g = np.asarray(grad_y, dtype=np.float64)
    if cache.squeeze and g.ndim == 1:
        g = g[None]
    if g.shape != cache.z.shape:
        raise CacheError(f"grad_y shape {g.shape} does not match cached output {cache.z.shape}")
    if p.activation == "relu":
        g = g * (cache.z > 0.0)
    grads = {"W": g.T @ cache.x, "b": g.sum(axis=0)}
    gx = g @ p.weights
    return (gx[0] if cache.squeeze else gx), grads


# -- LSTM ----------------------------------------------------------------


@dataclass
class LstmParams:
    weights: np.ndarray  # (4H, D+H), gate blocks in GATES order
    bias: np.ndarray  # (4H,)

    def __post_init__(self):
        rows, cols = self.weights.shape
        if rows % 4 or self.bias.shape != (rows,) or cols <= rows // 4:
            raise ShapeError(f"bad LSTM shapes: weights {self.weights.shape}, bias {self.bias.shape}")

    @property
    def hidden_size(self) -> int:
        return self.weights.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.weights.shape[1] - self.hidden_size

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """View of one gate's (H, D+H) weight matrix and (H,) bias."""
        k = GATES.index(name)
        h = self.hidden_size
        return self.weights[k * h:(k + 1) * h], self.bias[k * h:(k + 1) * h]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W": self.weights, "b": self.bias}


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int, batch: int | None = None) -> "LstmState":
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class LstmCache:
    params: LstmParams
    x: np.ndarray  # (N, B, D) time-major
    hs: np.ndarray  # (N+1, B, H); hs[0] is the initial h
    cs: np.ndarray  # (N+1, B, H)
    acts: np.ndarray  # (N, B, 4H) post-activation gates
    tanh_c: np.ndarray  # (N, B, H)
    squeeze: bool

    def __len__(self) -> int:
        return self.x.shape[0]


@functools.lru_cache(maxsize=None)
def _gate_affine(hsz: int) -> tuple[np.ndarray, np.ndarray]:
    scale = np.full(4 * hsz, 0.5)
    scale[2 * hsz:3 * hsz] = 1.0
    shift = np.full(4 * hsz, 0.5)
    shift[2 * hsz:3 * hsz] = 0.0
    scale.flags.writeable = False
    shift.flags.writeable = False
    return scale, shift


def _split_w(p: LstmParams):
    d = p.input_size
    return p.weights[:, :d], p.weights[:, d:]


def lstm_sequence_forward(xs, init: LstmState | None, p: LstmParams):
    """Run the LSTM over a (N, D) sequence or a (B, N, D) batch.

    Returns ``(hs, final_state, cache)``; hs has shape (N, H) or (B, N, H).
    """
    xb, squeeze = _batched(xs, 3)
    bsz, n, d = xb.shape
    if n < 1:
        raise ShapeError("sequence must have at least one timestep")
    if d != p.input_size:
        raise ShapeError(f"LSTM expects input width {p.input_size}, got {d}")
    hsz = p.hidden_size
    if init is None:
        h0 = np.zeros((bsz, hsz))
        c0 = np.zeros((bsz, hsz))
    else:
        h0 = np.broadcast_to(np.asarray(init.h, dtype=np.float64), (bsz, hsz))
        c0 = np.broadcast_to(np.asarray(init.c, dtype=np.float64), (bsz, hsz))

    wx, wh = _split_w(p)
    x_tm = np.ascontiguousarray(xb.transpose(1, 0, 2))
    # sigmoid(z) = 0.5 * tanh(z / 2) + 0.5, so one tanh call covers all four gates
    # once the sigmoid-gate rows are pre-scaled by 1/2
    scale, shift = _gate_affine(hsz)
    xproj = ((x_tm.reshape(n * bsz, d) @ wx.T + p.bias) * scale).reshape(n, bsz, 4 * hsz)
    wh_t = wh.T * scale

    hs = np.empty((n + 1, bsz, hsz))
    cs = np.empty((n + 1, bsz, hsz))
    acts = np.empty((n, bsz, 4 * hsz))
    tanh_c = np.empty((n, bsz, hsz))
    hs[0] = h0
    cs[0] = c0
    h2, h3 = 2 * hsz, 3 * hsz
    for t in range(n):
        a = acts[t]
        np.dot(hs[t], wh_t, out=a)
        a += xproj[t]
        np.tanh(a, out=a)
        a *= scale
        a += shift
        c = cs[t + 1]
        np.multiply(a[:, hsz:h2], cs[t], out=c)
        c += a[:, :hsz] * a[:, h2:h3]
        np.tanh(c, out=tanh_c[t])
        np.multiply(a[:, h3:], tanh_c[t], out=hs[t + 1])

    cache = LstmCache(p, x_tm, hs, cs, acts, tanh_c, squeeze)
    out = hs[1:].transpose(1, 0, 2)
    final = LstmState(hs[n].copy(), cs[n].copy())
    if squeeze:
        return out[0], LstmState(final.h[0], final.c[0]), cache
    return out, final, cache


def lstm_cell_forward(x_t, prev: LstmState, p: LstmParams):
    """Single LSTM step; returns ``(next_state, cache)``."""
    x = np.asarray(x_t, dtype=np.float64)
    xs = x[None] if x.ndim == 1 else x[:, None, :]
    _, final, cache = lstm_sequence_forward(xs, prev, p)
    return final, cache


def lstm_backward(grad_hs, grad_final: LstmState | None, cache: LstmCache, p: LstmParams | None = None):
    """Backpropagation through time.

    ``grad_hs`` matches the hs returned by the forward pass (or is None);
    ``grad_final`` holds gradients w.r.t. the final (h, c). Returns
    ``(grad_xs, {"W": dW, "b": db}, LstmState of initial-state gradients)``.
    """
    if p is not None and p is not cache.params:
        raise CacheError("LSTM cache was produced with different parameters")
    p = cache.params
    n, bsz, d = cache.x.shape
    hsz = p.hidden_size

    if grad_hs is None:
        g_tm = None
    else:
        g = np.asarray(grad_hs, dtype=np.float64)
        if cache.squeeze and g.ndim == 2:
            g = g[None]
        if g.shape != (bsz, n, hsz):
            raise CacheError(f"grad_hs shape {g.shape} does not match cached sequence {(bsz, n, hsz)}")
        g_tm = g.transpose(1, 0, 2)

    dh_next = np.zeros((bsz, hsz))
    dc_next = np.zeros((bsz, hsz))
    if grad_final is not None:
        dh_next = dh_next + np.asarray(grad_final.h, dtype=np.float64).reshape(-1, hsz)
        dc_next = dc_next + np.asarray(grad_final.c, dtype=np.float64).reshape(-1, hsz)

    if g_tm is None:
        g_tm = np.zeros((n, bsz, hsz))
    else:
        g_tm = np.ascontiguousarray(g_tm)
    _, wh = _split_w(p)
    dz_all = np.empty((n, bsz, 4 * hsz))
    _kernels.lstm_backward(g_tm, dh_next, dc_next, np.ascontiguousarray(wh), cache.cs, cache.acts, cache.tanh_c, dz_all)

    dz_flat = dz_all.reshape(n * bsz, 4 * hsz)
    xh = np.concatenate(
        [cache.x.reshape(n * bsz, d), cache.hs[:n].reshape(n * bsz, hsz)], axis=1
    )
    grads = {"W": dz_flat.T @ xh, "b": dz_flat.sum(axis=0)}
    dx = (dz_flat @ p.weights[:, :d]).reshape(n, bsz, d).transpose(1, 0, 2)
    init_grad = LstmState(dh_next, dc_next)
    if cache.squeeze:
        return dx[0], grads, LstmState(dh_next[0], dc_next[0])
    return dx, grads, init_grad


# -- loss and optimisation -----------------------------------------------


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ShapeError("mse_loss of an empty block")
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient in parameter block {name!r}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {theta.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        theta -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping. ``None`` or a non-positive bound disables clipping.
    """
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if max_norm is not None and max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def gradient_check(
    loss_and_grad: Callable[[], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    eps: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grad`` evaluates the model at the current contents of ``params``
    (which are perturbed in place and restored).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    loss, analytic = loss_and_grad()
    if not math.isfinite(loss):
        raise GradientError("loss is not finite")
    worst = 0.0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        ana = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp, _ = loss_and_grad()
            flat[j] = orig - eps
            lm, _ = loss_and_grad()
            flat[j] = orig
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise GradientError(f"non-finite loss while perturbing {name}[{j}]")
            num = (lp - lm) / (2.0 * eps)
            a = ana[j]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst


# -- initialisation -----------------------------------------------------


def init_dense(rng: np.random.Generator, in_size: int, out_size: int, activation: str = "linear") -> DenseParams:
    """Glorot-uniform weights, zero bias."""
    limit = math.sqrt(6.0 / (in_size + out_size))
    w = sample_uniform(rng, -limit, limit, (out_size, in_size))
    return DenseParams(w, np.zeros(out_size), activation)


def init_lstm(rng: np.random.Generator, input_size: int, hidden_size: int) -> LstmParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases with forget bias 1."""
    limit = 1.0 / math.sqrt(hidden_size)
    w = sample_uniform(rng, -limit, limit, (4 * hidden_size, input_size + hidden_size))
    b = np.zeros(4 * hidden_size)
    b[hidden_size:2 * hidden_size] = 1.0
    return LstmParams(w, b)

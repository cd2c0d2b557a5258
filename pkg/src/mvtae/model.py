"""The two-branch temporal autoencoder.

The EncoderDecoder branch maps a normalized (N, K) window to its time-reversed
copy through the encoder's final hidden output (the hidden state vector). The
Alpha branch is a ReLU MLP from that vector to the normalized next-step value
of the target signal. Training is two-stage: the EncoderDecoder first, then
the Alpha branch on the frozen encoder.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import WindowSet, normalize_window
from .nn import AdamState, DenseParams, LstmParams, LstmState
from .numerics import ShapeError, derive_seed, make_rng, sample_normal

log = logging.getLogger(__name__)

DECODER_INIT_STD = 0.1
EVAL_CHUNK = 256


@dataclass
class EncoderDecoderParams:
    encoder: LstmParams
    decoder: LstmParams
    head: DenseParams
    decoder_init: LstmState

    def __post_init__(self):
        h = self.encoder.hidden_size
        if self.decoder.input_size != h or self.decoder.hidden_size != h or self.head.in_size != h:
            raise ShapeError("encoder hidden size, decoder input/hidden size and head input must all agree")
        if self.head.out_size != self.encoder.input_size:
            raise ShapeError("decoder head must emit one value per input feature")

    @property
    def hidden_size(self) -> int:
        return self.encoder.hidden_size

    @property
    def n_features(self) -> int:
        return self.encoder.input_size

    def arrays(self) -> dict[str, np.ndarray]:
        """Learnable blocks only; ``decoder_init`` is fixed for the run."""
        return {
            "encoder.W": self.encoder.weights,
            "encoder.b": self.encoder.bias,
            "decoder.W": self.decoder.weights,
            "decoder.b": self.decoder.bias,
            "head.W": self.head.weights,
            "head.b": self.head.bias,
        }


@dataclass
class AlphaParams:
    layer1: DenseParams
    layer2: DenseParams
    head: DenseParams

    @property
    def input_size(self) -> int:
        return self.layer1.in_size

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "layer1.W": self.layer1.weights,
            "layer1.b": self.layer1.bias,
            "layer2.W": self.layer2.weights,
            "layer2.b": self.layer2.bias,
            "head.W": self.head.weights,
            "head.b": self.head.bias,
        }


def init_encoder_decoder(rng: np.random.Generator, n_features: int, hidden_size: int) -> EncoderDecoderParams:
    encoder = nn.init_lstm(rng, n_features, hidden_size)
    decoder = nn.init_lstm(rng, hidden_size, hidden_size)
    head = nn.init_dense(rng, hidden_size, n_features, "linear")
    h0 = sample_normal(rng, 0.0, DECODER_INIT_STD, hidden_size)
    c0 = sample_normal(rng, 0.0, DECODER_INIT_STD, hidden_size)
    return EncoderDecoderParams(encoder, decoder, head, LstmState(h0, c0))


def init_alpha(rng: np.random.Generator, hidden_size: int, widths: tuple[int, int] = (100, 100)) -> AlphaParams:
    a1, a2 = widths
    return AlphaParams(
        nn.init_dense(rng, hidden_size, a1, "relu"),
        nn.init_dense(rng, a1, a2, "relu"),
        nn.init_dense(rng, a2, 1, "linear"),
    )


# -- forward passes ------------------------------------------------------


def encode(window, p: EncoderDecoderParams) -> np.ndarray:
    """Hidden state vector(s) for a (N, K) window or a (B, N, K) batch."""
    w = np.asarray(window, dtype=np.float64)
    if w.shape[-1] != p.n_features:
        raise ShapeError(f"window has {w.shape[-1]} features, encoder expects {p.n_features}")
    _, final, _ = nn.lstm_sequence_forward(w, None, p.encoder)
    return final.h


def decode(hsv, p: EncoderDecoderParams, n: int) -> np.ndarray:
    """Reconstruct the time-reversed window from hidden state vector(s)."""
    out, _ = _decode_with_cache(hsv, p, n)
    return out


def _decode_with_cache(hsv, p: EncoderDecoderParams, n: int):
    v = np.asarray(hsv, dtype=np.float64)
    if v.shape[-1] != p.hidden_size:
        raise ShapeError(f"hidden vector length {v.shape[-1]} != H={p.hidden_size}")
    squeeze = v.ndim == 1
    vb = v[None] if squeeze else v
    bsz, hsz = vb.shape
    dec_in = np.broadcast_to(vb[:, None, :], (bsz, n, hsz))
    hs, _, dec_cache = nn.lstm_sequence_forward(dec_in, p.decoder_init, p.decoder)
    flat, head_cache = nn.dense_forward(hs.reshape(bsz * n, hsz), p.head)
    out = flat.reshape(bsz, n, p.n_features)
    return (out[0] if squeeze else out), (dec_cache, head_cache)


def reconstruct(windows, p: EncoderDecoderParams) -> np.ndarray:
    """decode(encode(X)) for a (B, N, K) batch, chunked to bound memory."""
    windows = np.asarray(windows, dtype=np.float64)
    n = windows.shape[1]
    parts = [decode(encode(windows[s:s + EVAL_CHUNK], p), p, n) for s in range(0, len(windows), EVAL_CHUNK)]
    return np.concatenate(parts, axis=0)


def encode_all(windows, p: EncoderDecoderParams) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    return np.concatenate([encode(windows[s:s + EVAL_CHUNK], p) for s in range(0, len(windows), EVAL_CHUNK)])


def alpha_forward(hsv, p: AlphaParams):
    v = np.asarray(hsv, dtype=np.float64)
    if v.shape[-1] != p.input_size:
        raise ShapeError(f"hidden vector length {v.shape[-1]} != alpha input {p.input_size}")
    a, _ = nn.dense_forward(v, p.layer1)
    a, _ = nn.dense_forward(a, p.layer2)
    y, _ = nn.dense_forward(a, p.head)
    return float(y[0]) if v.ndim == 1 else y[:, 0]


# -- losses with gradients ---------------------------------------------------


def encoder_decoder_loss(p: EncoderDecoderParams, batch) -> tuple[float, dict[str, np.ndarray]]:
    """Reconstruction MSE against the reversed batch and gradients for ``p.arrays()``."""
    x = np.asarray(batch, dtype=np.float64)
    bsz, n, k = x.shape
    hsz = p.hidden_size
    _, final, enc_cache = nn.lstm_sequence_forward(x, None, p.encoder)
    out, (dec_cache, head_cache) = _decode_with_cache(final.h, p, n)
    loss, g_out = nn.mse_loss(out, x[:, ::-1, :])

    g_hs, head_grads = nn.dense_backward(g_out.reshape(bsz * n, k), head_cache)
    g_dec_in, dec_grads, _ = nn.lstm_backward(g_hs.reshape(bsz, n, hsz), None, dec_cache)
    g_hsv = g_dec_in.sum(axis=1)
    _, enc_grads, _ = nn.lstm_backward(None, LstmState(g_hsv, np.zeros_like(g_hsv)), enc_cache)
    grads = {
        "encoder.W": enc_grads["W"],
        "encoder.b": enc_grads["b"],
        "decoder.W": dec_grads["W"],
        "decoder.b": dec_grads["b"],
        "head.W": head_grads["W"],
        "head.b": head_grads["b"],
    }
    return loss, grads


def alpha_loss(p: AlphaParams, hsv, target) -> tuple[float, dict[str, np.ndarray]]:
    a1, c1 = nn.dense_forward(hsv, p.layer1)
    a2, c2 = nn.dense_forward(a1, p.layer2)
    y, c3 = nn.dense_forward(a2, p.head)
    loss, g = nn.mse_loss(y[:, 0], np.asarray(target, dtype=np.float64))
    g3, gr3 = nn.dense_backward(g[:, None], c3)
    g2, gr2 = nn.dense_backward(g3, c2)
    _, gr1 = nn.dense_backward(g2, c1)
    grads = {}
    for prefix, gr in (("layer1", gr1), ("layer2", gr2), ("head", gr3)):
        grads[f"{prefix}.W"] = gr["W"]
        grads[f"{prefix}.b"] = gr["b"]
    return loss, grads


# -- training ------------------------------------------------------------


@dataclass
class TrainReport:
    loss_history: list[float] = field(default_factory=list)
    test_loss: float | None = None
    epochs: int = 0
    seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "config": self.config,
            "epochs": self.epochs,
            "loss_history": self.loss_history,
            "test_loss": self.test_loss,
        }
        if include_timing:
            d["seconds"] = self.seconds
        return d


def run_epochs(n_train, batch_size, epochs, seed, tag, step_fn, report):
    """Shared epoch/mini-batch loop; ``step_fn(idx)`` returns the batch loss."""
    for epoch in range(epochs):
        order = make_rng(derive_seed(seed, tag, "shuffle", epoch)).permutation(n_train)
        total = 0.0
        for s in range(0, n_train, batch_size):
            idx = order[s:s + batch_size]
            total += step_fn(idx) * len(idx)
        report.loss_history.append(total / n_train)
        report.epochs = epoch + 1
        log.debug("%s epoch %d loss %.6g", tag, epoch + 1, report.loss_history[-1])


def train_encoder_decoder(
    train: WindowSet,
    test: WindowSet | None = None,
    *,
    hidden_size: int = 64,
    batch_size: int = 8,
    epochs: int = 100,
    lr: float = 1e-3,
    seed: int = 0,
    clip_norm: float | None = 5.0,
    init: EncoderDecoderParams | None = None,
) -> tuple[EncoderDecoderParams, TrainReport]:
    if len(train) == 0:
        raise ValueError("empty training set")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    t0 = time.perf_counter()
    p = init or init_encoder_decoder(make_rng(derive_seed(seed, "encdec", "init")), train.n_features, hidden_size)
    report = TrainReport(config=dict(hidden_size=p.hidden_size, batch_size=batch_size, window_len=train.window_len,
                                     lr=lr, seed=seed, clip_norm=clip_norm, epochs=epochs))
    params = p.arrays()
    adam = AdamState(lr=lr)
    x_all = train.inputs

    def step(idx):
        loss, grads = encoder_decoder_loss(p, x_all[idx])
        nn.clip_global_norm(grads, clip_norm)
        nn.adam_step(params, grads, adam)
        return loss

    run_epochs(len(train), batch_size, epochs, seed, "encdec", step, report)
    if test is not None and len(test):
        report.test_loss = reconstruction_loss(test.inputs, p)
    report.seconds = time.perf_counter() - t0
    return p, report


def reconstruction_loss(windows, p: EncoderDecoderParams) -> float:
    windows = np.asarray(windows, dtype=np.float64)
    recon = reconstruct(windows, p)
    return nn.mse_loss(recon, windows[:, ::-1, :])[0]


def train_alpha(
    train: WindowSet,
    test: WindowSet | None,
    encoder: EncoderDecoderParams,
    *,
    widths: tuple[int, int] = (100, 100),
    batch_size: int = 8,
    epochs: int = 100,
    lr: float = 1e-3,
    seed: int = 0,
    clip_norm: float | None = 5.0,
) -> tuple[AlphaParams, TrainReport]:
    """Fit the predictor on hidden vectors from a frozen encoder."""
    if len(train) == 0:
        raise ValueError("empty training set")
    t0 = time.perf_counter()
    # the encoder is frozen, so its vectors can be computed once
    hsv = encode_all(train.inputs, encoder)
    y = train.alpha_target
    p = init_alpha(make_rng(derive_seed(seed, "alpha", "init")), encoder.hidden_size, widths)
    report = TrainReport(config=dict(widths=list(widths), batch_size=batch_size, lr=lr, seed=seed,
                                     clip_norm=clip_norm, epochs=epochs))
    params = p.arrays()
    adam = AdamState(lr=lr)

    def step(idx):
        loss, grads = alpha_loss(p, hsv[idx], y[idx])
        nn.clip_global_norm(grads, clip_norm)
        nn.adam_step(params, grads, adam)
        return loss

    run_epochs(len(train), batch_size, epochs, seed, "alpha", step, report)
    if test is not None and len(test):
        pred = alpha_forward(encode_all(test.inputs, encoder), p)
        report.test_loss = nn.mse_loss(pred, test.alpha_target)[0]
    report.seconds = time.perf_counter() - t0
    return p, report


# -- the assembled model ---------------------------------------------------


@dataclass
class MvTAe:
    encdec: EncoderDecoderParams
    alpha: AlphaParams
    input_dims: tuple[str, ...]
    target_dim: str
    window_len: int

    def predict_normalized(self, windows: WindowSet) -> np.ndarray:
        return alpha_forward(encode_all(windows.inputs, self.encdec), self.alpha)

    def predict_windows(self, windows: WindowSet) -> np.ndarray:
        """De-normalized next-step predictions for every window."""
        return windows.denormalize_target(self.predict_normalized(windows))

    def predict(self, raw) -> float:
        """Next-step target value, in signal units, for one raw window.

        ``raw`` is (N, K+1): the input dimensions followed by the target dimension.
        """
        raw = np.asarray(raw, dtype=np.float64)
        k = len(self.input_dims)
        if raw.shape != (self.window_len, k + 1):
            raise ShapeError(f"raw window must be {(self.window_len, k + 1)}, got {raw.shape}")
        normed, norm = normalize_window(raw, self.input_dims + (self.target_dim,))
        y = alpha_forward(encode(normed[:, :k], self.encdec), self.alpha)
        hi, lo = norm.bounds(self.target_dim)
        return y * (hi - lo) + lo


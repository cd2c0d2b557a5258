"""Versioned model container.

Layout::

    MVTAE-MODEL\\n
    <JSON metadata, sorted keys>\\n
    END-HEADER\\n
    <float64 little-endian blocks, concatenated in BLOCK_ORDER>

The metadata records ``format_version``, the model sizes, the creation
config and, under ``blocks``, each block's name and shape in file order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import AlphaParams, EncoderDecoderParams, MvTAe
from .nn import DenseParams, LstmParams, LstmState

MAGIC = b"MVTAE-MODEL\n"
END = b"END-HEADER\n"
FORMAT_VERSION = 1
LE_F64 = np.dtype("<f8")

BLOCK_ORDER = (
    "encoder.W",
    "encoder.b",
    "decoder.W",
    "decoder.b",
    "decoder_head.W",
    "decoder_head.b",
    "decoder_init.h",
    "decoder_init.c",
    "alpha.layer1.W",
    "alpha.layer1.b",
    "alpha.layer2.W",
    "alpha.layer2.b",
    "alpha.head.W",
    "alpha.head.b",
)


class ModelFormatError(ValueError):
    """The file is not a compatible model container."""


def _blocks(model: MvTAe) -> dict[str, np.ndarray]:
    ed, al = model.encdec, model.alpha
    return {
        "encoder.W": ed.encoder.weights,
        "encoder.b": ed.encoder.bias,
        "decoder.W": ed.decoder.weights,
        "decoder.b": ed.decoder.bias,
        "decoder_head.W": ed.head.weights,
        "decoder_head.b": ed.head.bias,
        "decoder_init.h": np.asarray(ed.decoder_init.h),
        "decoder_init.c": np.asarray(ed.decoder_init.c),
        "alpha.layer1.W": al.layer1.weights,
        "alpha.layer1.b": al.layer1.bias,
        "alpha.layer2.W": al.layer2.weights,
        "alpha.layer2.b": al.layer2.bias,
        "alpha.head.W": al.head.weights,
        "alpha.head.b": al.head.bias,
    }


def expected_shapes(h: int, k: int, widths: tuple[int, int]) -> dict[str, tuple[int, ...]]:
    a1, a2 = widths
    return {
        "encoder.W": (4 * h, k + h),
        "encoder.b": (4 * h,),
        "decoder.W": (4 * h, 2 * h),
        "decoder.b": (4 * h,),
        "decoder_head.W": (k, h),
        "decoder_head.b": (k,),
        "decoder_init.h": (h,),
        "decoder_init.c": (h,),
        "alpha.layer1.W": (a1, h),
        "alpha.layer1.b": (a1,),
        "alpha.layer2.W": (a2, a1),
        "alpha.layer2.b": (a2,),
        "alpha.head.W": (1, a2),
        "alpha.head.b": (1,),
    }


def dumps(model: MvTAe, config: dict | None = None) -> bytes:
    blocks = _blocks(model)
    widths = (model.alpha.layer1.out_size, model.alpha.layer2.out_size)
    meta = {
        "format_version": FORMAT_VERSION,
        "hidden_size": model.encdec.hidden_size,
        "window_len": model.window_len,
        "n_features": model.encdec.n_features,
        "input_dims": list(model.input_dims),
        "target_dim": model.target_dim,
        "alpha_widths": list(widths),
        "seed": (config or {}).get("seed"),
        "config": config or {},
        "blocks": [[name, list(blocks[name].shape)] for name in BLOCK_ORDER],
    }
    header = json.dumps(meta, sort_keys=True, indent=1).encode("utf-8")
    body = b"".join(np.ascontiguousarray(blocks[name], dtype=LE_F64).tobytes() for name in BLOCK_ORDER)
    return MAGIC + header + b"\n" + END + body


def save_model(model: MvTAe, path, config: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, config))


def loads(data: bytes) -> tuple[MvTAe, dict]:
    if not data.startswith(MAGIC):
        raise ModelFormatError("missing MVTAE-MODEL magic line")
    end = data.find(b"\n" + END)
    if end < 0:
        raise ModelFormatError("unterminated header")
    try:
        meta = json.loads(data[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable metadata header: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version!r}; this build reads {FORMAT_VERSION}")

    h, k = int(meta["hidden_size"]), int(meta["n_features"])
    widths = tuple(int(w) for w in meta["alpha_widths"])
    expect = expected_shapes(h, k, widths)
    listed = [(name, tuple(shape)) for name, shape in meta["blocks"]]
    if [name for name, _ in listed] != list(BLOCK_ORDER):
        raise ModelFormatError("parameter blocks are missing or out of order")
    for name, shape in listed:
        if shape != expect[name]:
            raise ModelFormatError(f"block {name} has shape {shape}, expected {expect[name]} for H={h}, K={k}")
    if len(meta["input_dims"]) != k:
        raise ModelFormatError(f"{len(meta['input_dims'])} input dims listed but K={k}")

    body = memoryview(data)[end + 1 + len(END):]
    need = sum(int(np.prod(s)) for _, s in listed) * LE_F64.itemsize
    if len(body) != need:
        raise ModelFormatError(f"parameter payload is {len(body)} bytes, expected {need}")
    arrays, off = {}, 0
    for name, shape in listed:
        size = int(np.prod(shape)) * LE_F64.itemsize
        arrays[name] = np.frombuffer(body[off:off + size], dtype=LE_F64).astype(np.float64).reshape(shape)
        off += size

    encdec = EncoderDecoderParams(
        LstmParams(arrays["encoder.W"], arrays["encoder.b"]),
        LstmParams(arrays["decoder.W"], arrays["decoder.b"]),
        DenseParams(arrays["decoder_head.W"], arrays["decoder_head.b"], "linear"),
        LstmState(arrays["decoder_init.h"], arrays["decoder_init.c"]),
    )
    alpha = AlphaParams(
        DenseParams(arrays["alpha.layer1.W"], arrays["alpha.layer1.b"], "relu"),
        DenseParams(arrays["alpha.layer2.W"], arrays["alpha.layer2.b"], "relu"),
        DenseParams(arrays["alpha.head.W"], arrays["alpha.head.b"], "linear"),
    )
    model = MvTAe(encdec, alpha, tuple(meta["input_dims"]), meta["target_dim"], int(meta["window_len"]))
    return model, meta


def load_model(path) -> tuple[MvTAe, dict]:
    return loads(Path(path).read_bytes())

import json

import numpy as np
import pytest

from mvtae import model as M
from mvtae import persist
from mvtae.numerics import make_rng


def tiny_model(h=4, k=3, widths=(6, 5)):
    g = make_rng(1)
    return M.MvTAe(M.init_encoder_decoder(g, k, h), M.init_alpha(g, h, widths),
                   ("sine_1", "sine_2", "noise"), "combined_signal", 7)


def _all_blocks(m):
    return persist._blocks(m)


def test_roundtrip_bitwise(tmp_path):
    m = tiny_model()
    path = tmp_path / "m.mvtae"
    persist.save_model(m, path, {"seed": 3, "hidden_size": 4})
    back, meta = persist.load_model(path)
    for name, arr in _all_blocks(m).items():
        assert _all_blocks(back)[name].tobytes() == arr.tobytes()
    assert meta["seed"] == 3 and meta["format_version"] == persist.FORMAT_VERSION
    assert back.window_len == 7 and back.input_dims == m.input_dims
    x = np.random.default_rng(0).random((7, 3))
    assert M.alpha_forward(M.encode(x, back.encdec), back.alpha) == M.alpha_forward(M.encode(x, m.encdec), m.alpha)


def test_header_documents_block_order():
    data = persist.dumps(tiny_model())
    assert data.startswith(persist.MAGIC)
    meta = json.loads(data[len(persist.MAGIC):data.index(b"\n" + persist.END)])
    assert [b[0] for b in meta["blocks"]] == list(persist.BLOCK_ORDER)
    assert meta["hidden_size"] == 4 and meta["alpha_widths"] == [6, 5]


def _patch_meta(data, **changes):
    end = data.index(b"\n" + persist.END)
    meta = json.loads(data[len(persist.MAGIC):end])
    meta.update(changes)
    return persist.MAGIC + json.dumps(meta).encode() + data[end:]


def test_rejects_other_version():
    data = _patch_meta(persist.dumps(tiny_model()), format_version=2)
    with pytest.raises(persist.ModelFormatError, match="version"):
        persist.loads(data)


def test_rejects_shape_mismatch():
    data = persist.dumps(tiny_model())
    with pytest.raises(persist.ModelFormatError, match="shape"):
        persist.loads(_patch_meta(data, hidden_size=5))


def test_rejects_truncated_payload_and_garbage():
    data = persist.dumps(tiny_model())
    with pytest.raises(persist.ModelFormatError, match="payload"):
        persist.loads(data[:-8])
    with pytest.raises(persist.ModelFormatError, match="magic"):
        persist.loads(b"not a model")
    with pytest.raises(persist.ModelFormatError):
        persist.loads(persist.MAGIC + b"{no end")


def test_rejects_reordered_blocks():
    data = persist.dumps(tiny_model())
    end = data.index(b"\n" + persist.END)
    meta = json.loads(data[len(persist.MAGIC):end])
    meta["blocks"][0], meta["blocks"][1] = meta["blocks"][1], meta["blocks"][0]
    with pytest.raises(persist.ModelFormatError, match="order"):
        persist.loads(persist.MAGIC + json.dumps(meta).encode() + data[end:])


def test_expected_shapes_cover_every_block():
    assert set(persist.expected_shapes(4, 3, (6, 5))) == set(persist.BLOCK_ORDER)

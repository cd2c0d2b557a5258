"""Acceptance suite: one test per criterion, one PASS/FAIL line per criterion.

Criteria 1-6 train full-scale models (default dataset, 100 epochs per branch)
and only run with ``--run-slow``. Their per-run metrics are memoized under
``.acceptance_cache/``, keyed by the run config, the seed and a hash of the
package source, so an unchanged tree does not retrain; any source edit
invalidates every entry. Criteria 7-12 always run.
"""

import hashlib
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

import mvtae
from conftest import ACCEPTANCE_LINES
from mvtae import baseline, cli, model as M
from mvtae.dataset import denormalize, normalize_window
from mvtae.experiment import ExperimentConfig, build_split, train_mvtae
from mvtae.metrics import evaluate
from mvtae.nn import (
    AdamState,
    DenseParams,
    LstmParams,
    adam_step,
    dense_backward,
    dense_forward,
    gradient_check,
    lstm_backward,
    lstm_sequence_forward,
    mse_loss,
)
from mvtae.numerics import make_rng

SEEDS = (0, 1, 2)
# plumbing smoke only: a smaller epoch budget never counts as an acceptance result
EPOCHS = int(os.environ.get("MVTAE_ACCEPTANCE_EPOCHS", "100"))
SMOKE = EPOCHS != 100
CACHE_DIR = Path(__file__).resolve().parent.parent / ".acceptance_cache"
SLOW_CRITERIA = {
    1: "optimal config R2 >= 0.97, MSE <= 0.004",
    2: "R2(batch 128) at least 15pp below R2(batch 8)",
    3: "R2(N=5) at least 10pp below R2(N=100)",
    4: "H=8 R2 in [0.80, 0.95], H=64 beats it by >= 5pp",
    5: "baseline grid best R2 >= 0.97",
    6: "noise recon R2 < 0.1, sine recon R2 >= 0.95",
}
for _k, _text in SLOW_CRITERIA.items():
    ACCEPTANCE_LINES.setdefault(_k, f"criterion {_k:2d}: SKIP  {_text} (pass --run-slow)")


def record(k: int, ok: bool, detail: str) -> None:
    tag = "PASS" if ok else "FAIL"
    if SMOKE and k in SLOW_CRITERIA:
        tag += f" (smoke, {EPOCHS} epochs; not an acceptance result)"
    line = f"criterion {k:2d}: {tag}  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)


def _source_hash() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(mvtae.__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


SOURCE_HASH = _source_hash()


def memoized(kind: str, key: dict, compute):
    blob = json.dumps({"kind": kind, "src": SOURCE_HASH, **key}, sort_keys=True)
    path = CACHE_DIR / (hashlib.sha256(blob.encode()).hexdigest()[:24] + ".json")
    if path.exists():
        return json.loads(path.read_text())["result"]
    result = compute()
    CACHE_DIR.mkdir(exist_ok=True)
    path.write_text(json.dumps({"key": json.loads(blob), "result": result}, indent=1, sort_keys=True))
    return result


def recon_r2_by_dim(model, test):
    recon = M.reconstruct(test.inputs, model.encdec)[:, ::-1, :]  # un-reverse
    return {
        dim: evaluate(recon[:, :, j].ravel(), test.inputs[:, :, j].ravel()).r_squared
        for j, dim in enumerate(test.input_dims)
    }


def mvtae_run(seed: int, **changes) -> dict:
    cfg = ExperimentConfig(epochs=EPOCHS).replace(**changes)

    def compute():
        t0 = time.perf_counter()
        split = build_split(cfg)
        res = train_mvtae(cfg, split, seed=seed)
        test = split.test
        pred = res.model.predict_windows(test)
        target = test.denormalize_target(test.alpha_target)
        hsv = M.encode_all(test.inputs, res.model.encdec)
        unit = hsv / np.linalg.norm(hsv, axis=1, keepdims=True)
        return {
            "denorm_r_squared": evaluate(pred, target).r_squared,
            "trace_min": float(pred.min()),
            "trace_max": float(pred.max()),
            "adjacent_cosine": float(np.mean(np.sum(unit[1:] * unit[:-1], axis=1))),
            "mse": res.summary.mse,
            "mae": res.summary.mae,
            "r_squared": res.summary.r_squared,
            "recon_r2": recon_r2_by_dim(res.model, split.test),
            "final_train_loss": res.encdec_report.loss_history[-1],
            "seconds": time.perf_counter() - t0,
        }

    return memoized("mvtae", {"config": cfg.to_dict(), "seed": seed}, compute)


def best_of_seeds(**changes) -> tuple[dict, list[dict]]:
    runs = [mvtae_run(s, **changes) for s in SEEDS]
    return max(runs, key=lambda r: r["r_squared"]), runs


def _r2s(runs):
    return "/".join(f"{100 * r['r_squared']:.2f}" for r in runs)


# -- quantitative (slow) -----------------------------------------------------------


@pytest.mark.slow
def test_c1_optimal_config():
    best, runs = best_of_seeds(batch_size=8, hidden_size=64, window_size=100)
    ok = best["r_squared"] >= 0.97 and best["mse"] <= 0.004
    record(1, ok, f"batch 8, H 64, N 100: best R2 {100 * best['r_squared']:.2f}% MSE {best['mse']:.5f} "
                  f"MAE {best['mae']:.5f} (seeds {_r2s(runs)}%; {runs[0]['seconds'] / 60:.1f} min/run)")
    assert ok


@pytest.mark.slow
def test_c2_batch_size_trend():
    b8, _ = best_of_seeds(batch_size=8)
    b128, runs = best_of_seeds(batch_size=128)
    gap = b8["r_squared"] - b128["r_squared"]
    ok = gap >= 0.15
    record(2, ok, f"R2 batch 8 {100 * b8['r_squared']:.2f}% vs batch 128 {100 * b128['r_squared']:.2f}% "
                  f"(seeds {_r2s(runs)}%): gap {100 * gap:.2f}pp, need >= 15pp")
    assert ok


@pytest.mark.slow
def test_c3_window_size_trend():
    n100, _ = best_of_seeds(window_size=100)
    n5, runs = best_of_seeds(window_size=5)
    gap = n100["r_squared"] - n5["r_squared"]
    ok = gap >= 0.10
    record(3, ok, f"R2 N=100 {100 * n100['r_squared']:.2f}% vs N=5 {100 * n5['r_squared']:.2f}% "
                  f"(seeds {_r2s(runs)}%): gap {100 * gap:.2f}pp, need >= 10pp")
    assert ok


@pytest.mark.slow
def test_c4_hidden_size_compression():
    h64, _ = best_of_seeds(hidden_size=64)
    h8, runs = best_of_seeds(hidden_size=8)
    in_band = 0.80 <= h8["r_squared"] <= 0.95
    gap = h64["r_squared"] - h8["r_squared"]
    ok = in_band and gap >= 0.05
    record(4, ok, f"H=8 R2 {100 * h8['r_squared']:.2f}% (seeds {_r2s(runs)}%, band [80, 95]%), "
                  f"H=64 {100 * h64['r_squared']:.2f}%: gap {100 * gap:.2f}pp, need >= 5pp")
    assert ok


@pytest.mark.slow
def test_c5_baseline_grid():
    cfg = ExperimentConfig(epochs=EPOCHS)
    split = build_split(cfg)
    hyper = dict(epochs=cfg.epochs, lr=cfg.lr, dropout=cfg.dropout, clip_norm=cfg.clip_norm)
    cells = []
    for b in (8, 16, 32):
        for l in (32, 64, 128):
            def compute(b=b, l=l):
                c = baseline.run_cell(split, b, l, seed=cfg.seed, **hyper)
                return {"r_squared": c.summary.r_squared, "mse": c.summary.mse, "seconds": c.seconds}
            r = memoized("baseline", {"config": cfg.to_dict(), "batch": b, "lstm": l}, compute)
            cells.append((b, l, r))
    b, l, best = max(cells, key=lambda c: c[2]["r_squared"])
    mv, _ = best_of_seeds()
    ok = best["r_squared"] >= 0.97
    order = "exceeds" if mv["r_squared"] > best["r_squared"] else "does not exceed"
    grid = " ".join(f"{bb}x{ll}:{100 * r['r_squared']:.2f}" for bb, ll, r in cells)
    record(5, ok, f"best cell batch {b} lstm {l} R2 {100 * best['r_squared']:.2f}%; MvTAe best "
                  f"{100 * mv['r_squared']:.2f}% {order} it (informational) [{grid}]")
    assert ok


@pytest.mark.slow
def test_c6_noise_rejection():
    best, _ = best_of_seeds()
    r2 = best["recon_r2"]
    ok = r2["noise"] < 0.1 and r2["sine_1"] >= 0.95 and r2["sine_2"] >= 0.95
    record(6, ok, "held-out recon R2 " + ", ".join(f"{d} {100 * v:.2f}%" for d, v in r2.items()))
    assert ok


@pytest.mark.slow
def test_trained_model_examples():
    """Per-operation examples that need the trained optimal-config model."""
    best, _ = best_of_seeds()
    checks = {
        f"final recon train loss {best['final_train_loss']:.5f} < 0.01": best["final_train_loss"] < 0.01,
        f"de-normalized R2 {100 * best['denorm_r_squared']:.2f}% >= 97%": best["denorm_r_squared"] >= 0.97,
        f"trace [{best['trace_min']:.3f}, {best['trace_max']:.3f}] within [-6.5, 6.5]":
            -6.5 <= best["trace_min"] and best["trace_max"] <= 6.5,
        f"adjacent hidden-vector cosine {best['adjacent_cosine']:.4f} > 0.9": best["adjacent_cosine"] > 0.9,
    }
    for text, ok in checks.items():
        print(("ok    " if ok else "FAIL  ") + text)
    assert all(checks.values()), [t for t, ok in checks.items() if not ok]


# -- property criteria ---------------------------------------------------------------


def test_c7_normalization_roundtrip():
    g = np.random.default_rng(7)
    worst = 0.0
    for i in range(1000):
        n, k = int(g.integers(2, 60)), int(g.integers(1, 5))
        w = g.normal(0, g.uniform(0.01, 6), (n, k)) + g.uniform(-6, 6, k)
        if i % 3 == 0:
            w[:, int(g.integers(k))] = g.uniform(-6, 6)  # a constant dimension
        dims = [f"d{j}" for j in range(k)]
        scaled, norm = normalize_window(w, dims)
        back = np.column_stack([denormalize(scaled[:, j], norm, d) for j, d in enumerate(dims)])
        worst = max(worst, float(np.max(np.abs(back - w))))
    ok = worst <= 1e-12
    record(7, ok, f"1000 windows (a third with a constant dim): max |error| {worst:.2e} <= 1e-12")
    assert ok


def _grad_cases():
    """(name, eps, [closures]) with 20 random small instances per layer type."""
    cases = {"dense": [], "lstm": [], "encoder-decoder": [], "alpha": []}
    for t in range(20):
        g = np.random.default_rng(9000 + t)
        dp = DenseParams(g.normal(size=(4, 5)), g.normal(size=4), "relu" if t % 2 else "linear")
        x, y = g.normal(size=(3, 5)), g.normal(size=(3, 4))

        def dense_f(dp=dp, x=x, y=y):
            out, cache = dense_forward(x, dp)
            loss, gy = mse_loss(out, y)
            return loss, dense_backward(gy, cache)[1]

        cases["dense"].append((dense_f, dp.arrays()))

        lp = LstmParams(g.normal(0, 0.5, (16, 7)), g.normal(0, 0.5, 16))
        xs = g.normal(size=(5, 3))

        def lstm_f(lp=lp, xs=xs):
            hs, _, cache = lstm_sequence_forward(xs, None, lp)
            return float(hs.sum()), lstm_backward(np.ones_like(hs), None, cache)[1]

        cases["lstm"].append((lstm_f, lp.arrays()))

        ep = M.init_encoder_decoder(make_rng(9100 + t), 3, 4)
        xb = g.random((2, 5, 3))
        cases["encoder-decoder"].append((lambda ep=ep, xb=xb: M.encoder_decoder_loss(ep, xb), ep.arrays()))

        ap = M.AlphaParams(DenseParams(g.normal(size=(6, 4)), g.normal(size=6), "relu"),
                           DenseParams(g.normal(size=(6, 6)), g.normal(size=6), "relu"),
                           DenseParams(g.normal(size=(1, 6)), g.normal(size=1)))
        hv, tv = np.tanh(g.normal(size=(4, 4))), g.random(4)
        cases["alpha"].append((lambda ap=ap, hv=hv, tv=tv: M.alpha_loss(ap, hv, tv), ap.arrays()))
    # at 1e-6 the central-difference roundoff floor swamps encoder-decoder
    # coordinates whose gradient is below ~1e-6; that loss is smooth, so it takes
    # a wider step, while the ReLU alpha branch keeps a narrow one
    eps = {"dense": 1e-6, "lstm": 1e-6, "encoder-decoder": 1e-4, "alpha": 1e-5}
    return [(name, eps[name], fns) for name, fns in cases.items()]


def test_c8_gradient_fidelity():
    parts, ok = [], True
    for name, eps, instances in _grad_cases():
        worst = max(gradient_check(f, arrays, eps) for f, arrays in instances)
        ok &= worst < 1e-4
        parts.append(f"{name} {worst:.1e} (eps {eps:g}, n={len(instances)})")
    record(8, ok, "max relative error < 1e-4: " + "; ".join(parts))
    assert ok


def test_c9_adam_oracle():
    theta = {"w": np.array([0.0])}
    st = AdamState(lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8)
    ref, m, v, worst = 0.0, 0.0, 0.0, 0.0
    for t in range(1, 101):
        # L = (w - 3)^2 / 2, gradient w - 3
        adam_step(theta, {"w": np.array([theta["w"][0] - 3.0])}, st)
        gr = ref - 3.0
        m = 0.9 * m + 0.1 * gr
        v = 0.999 * v + 0.001 * gr * gr
        ref = ref - 1e-3 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        worst = max(worst, abs(theta["w"][0] - ref))
    ok = worst <= 1e-12
    record(9, ok, f"100 Adam steps vs scalar recurrence: max |diff| {worst:.1e} <= 1e-12 (final w {ref:.10f})")
    assert ok


def test_c10_determinism(tmp_path):
    flags = ["--window-size", "10", "--step", "25", "--hidden-size", "4", "--alpha-widths", "6,6",
             "--epochs", "2", "--seed", "42"]
    for name in ("a", "b"):
        assert cli.main(["train", "--out", str(tmp_path / name)] + flags) == 0
    same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
            for f in (cli.MODEL_FILE, cli.REPORT_FILE)}
    ok = all(same.values())
    record(10, ok, "two cmd_train runs, same config and seed: " +
           ", ".join(f"{f} {'identical' if s else 'DIFFERENT'}" for f, s in same.items()))
    assert ok


def test_c11_metric_identities():
    g = np.random.default_rng(11)
    checks = []
    for _ in range(1000):
        n = int(g.integers(2, 40))
        t, p = g.normal(size=n), g.normal(size=n)
        checks.append(evaluate(t, t).r_squared == 1.0)
        checks.append(abs(evaluate(np.full(n, t.mean()), t).r_squared) <= 1e-12)
        s = evaluate(p, t)
        checks.append(s.mae ** 2 <= s.mse * (1 + 1e-12))
    ok = all(checks)
    record(11, ok, f"perfect R2 = 1, mean predictor R2 = 0, mae^2 <= mse: {sum(checks)}/{len(checks)} checks hold")
    assert ok


def test_c12_structural():
    cfg = ExperimentConfig(window_size=10, step=25, hidden_size=4, epochs=2)
    split = build_split(cfg)
    ws = split.train
    involution = np.array_equal(ws.recon_target[:, ::-1, :], ws.inputs) and all(
        np.array_equal(s.recon_target[::-1], s.inputs) for s in ws)
    p, _ = M.train_encoder_decoder(ws, hidden_size=4, epochs=2, seed=1)
    before = {k: v.tobytes() for k, v in p.arrays().items()}
    before_init = p.decoder_init.h.tobytes() + p.decoder_init.c.tobytes()
    M.train_alpha(ws, split.test, p, widths=(6, 6), epochs=2, seed=1)
    frozen = all(v.tobytes() == before[k] for k, v in p.arrays().items()) and \
        before_init == p.decoder_init.h.tobytes() + p.decoder_init.c.tobytes()
    g = np.random.default_rng(12)
    wild = M.init_encoder_decoder(make_rng(3), 3, 16)
    for blk in wild.arrays().values():
        blk *= 8.0
    hsvs = [M.encode_all(split.test.inputs, p), M.encode_all(g.normal(0, 50, (64, 40, 3)), wild)]
    bounded = all(bool(np.all(np.abs(h) < 1.0)) for h in hsvs)
    n_comp = sum(h.size for h in hsvs)
    ok = involution and frozen and bounded
    record(12, ok, f"reversal involution {involution}, encoder frozen bitwise {frozen}, "
                   f"|hsv| < 1 for {n_comp} components {bounded}")
    assert ok

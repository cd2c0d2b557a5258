"""Dense float64 linear algebra helpers and seeded random streams.

Matrices are plain C-contiguous ``numpy.ndarray`` objects of dtype float64.
Random streams use numpy's ``PCG64`` bit generator wrapped in
``numpy.random.Generator``; PCG64 output is platform independent for a given
seed, which keeps sweep tables reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np

DTYPE = np.float64
RNG_ALGORITHM = "PCG64"


class ShapeError(ValueError):
    """Raised when array shapes do not conform for an operation."""


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``data`` to a 2-D row-major float64 array, optionally checking its shape."""
    m = np.ascontiguousarray(data, dtype=DTYPE)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got shape {m.shape}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def make_rng(seed: int) -> np.random.Generator:
    """Return a fresh generator for a 64-bit unsigned seed."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def sample_normal(rng: np.random.Generator, mean: float, stddev: float, n: int) -> np.ndarray:
    if stddev < 0:
        raise ValueError(f"stddev must be non-negative, got {stddev}")
    # draw even for stddev == 0 so the stream advances identically
    z = rng.standard_normal(n)
    return mean + stddev * z


def sample_uniform(rng: np.random.Generator, lo: float, hi: float, n) -> np.ndarray:
    if lo > hi:
        raise ValueError(f"uniform bounds out of order: lo={lo} > hi={hi}")
    u = rng.random(n)
    return lo + (hi - lo) * u


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from an arbitrary tuple of ints/strings/floats.

    Uses BLAKE2b over the ``repr`` of each part, so the value does not depend on
    Python's per-process hash randomisation.
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")

"""Correctly rounded dot products and matrix-vector products.

Controls at small ``eps`` have norms many orders of magnitude above the
residual they certify, so plain float64 sums cancel away the answer. Each
product is split exactly into ``p + e`` (Dekker's TwoProduct) and every row
is summed with :func:`math.fsum`, which rounds the exact sum once.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["two_product", "exact_dot", "exact_matvec"]

_SPLIT = 134217729.0  # 2**27 + 1


def _split(a: np.ndarray):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def two_product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``p = fl(a*b)`` and ``e`` with ``a*b = p + e`` exactly (barring over/underflow)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = a * b
    with np.errstate(over="ignore", invalid="ignore"):
        ah, al = _split(a)
        bh, bl = _split(b)
        e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    e = np.where(np.isfinite(e), e, 0.0)
    return p, e


def exact_dot(a: np.ndarray, b: np.ndarray) -> float:
    p, e = two_product(a, b)
    return math.fsum(np.concatenate([p.ravel(), e.ravel()]).tolist())


def exact_matvec(M: np.ndarray, v: np.ndarray, shift: np.ndarray | None = None) -> np.ndarray:
    """Correctly rounded ``M @ v - shift``."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    p, e = two_product(M, v[None, :])
    terms = np.concatenate([p, e], axis=1)
    if shift is not None:
        terms = np.concatenate([terms, -np.asarray(shift, dtype=float)[:, None]], axis=1)
    return np.array([math.fsum(row) for row in terms.tolist()])

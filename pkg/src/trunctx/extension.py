"""Neumann harmonic extension into the upper half-space and its derivative traces.

The extension of boundary data ``f`` (supported on a 1-D or 2-D box) is the
quadrature sum ``u(x) = sum_k w_k G(x - (t_k, 0)) f_k`` with

* ``G(x) = ln|x|`` for n = 1,
* ``G(x) = -|x|^(1-n)/(n-1)`` for n = 2,

so that ``grad' G`` is exactly the transform kernel used in
:mod:`trunctx.operators` and ``d_{n+1} u -> kappa_n f`` on the boundary.
Derivatives are taken analytically inside the sum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

from .errors import GeometryError, GridMismatchError, ValidationError
from .grids import BoxDomain, Grid, GridFn, as_box, box_distance

__all__ = [
    "ExtensionField",
    "kappa",
    "extend_neumann",
    "derivative_trace",
    "harmonicity_residual",
    "neumann_recovery_error",
    "write_field_csv",
]

_CHUNK = 2048


def kappa(n: int) -> float:
    """Total vertical flux of the kernel: ``pi^((n+1)/2) / Gamma((n+1)/2)``."""
    return pi ** ((n + 1) / 2) / gamma((n + 1) / 2)


@dataclass(frozen=True, eq=False)
class ExtensionField:
    source: GridFn
    points: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    kappa: float
    grid: Grid | None = None

    @property
    def n(self) -> int:
        return self.source.grid.dim


def _as_points(where, n: int) -> tuple[np.ndarray, Grid | None]:
    if isinstance(where, Grid):
        if where.dim != n + 1:
            raise ValidationError(f"evaluation grid must be {n + 1}-dimensional")
        return where.nodes, where
    pts = np.atleast_2d(np.asarray(where, dtype=float))
    if pts.shape[1] != n + 1:
        raise ValidationError(f"evaluation points need {n + 1} coordinates")
    return pts, None


def _horizontal_distance(points: np.ndarray, box: BoxDomain) -> np.ndarray:
    gaps = []
    for k, (a, b) in enumerate(box.bounds):
        x = points[:, k]
        gaps.append(np.maximum(0.0, np.maximum(a - x, x - b)))
    return np.sqrt(np.sum(np.square(gaps), axis=0))


def _check_boundary_points(points: np.ndarray, source: Grid):
    n = source.dim
    if np.any(points[:, n] < 0):
        raise GeometryError("evaluation points must lie in the closed upper half-space")
    on_boundary = points[:, n] == 0.0
    if np.any(on_boundary):
        dist = _horizontal_distance(points[on_boundary], as_box(source.domain))
        if np.any(dist < max(source.spacing)):
            raise GeometryError(
                "evaluation at height 0 must keep at least one cell from the source support"
            )


def _kernel_sum(points: np.ndarray, f: GridFn, fn) -> np.ndarray:
    """``sum_k w_k f_k fn(diff, r2)`` over chunks of evaluation points."""
    src = f.grid
    n = src.dim
    y = np.hstack([src.nodes, np.zeros((src.size, 1))])
    wf = src.weights * f.values
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], _CHUNK):
        p = points[start:start + _CHUNK]
        diff = p[:, None, :] - y[None, :, :]
        r2 = np.einsum("mkd,mkd->mk", diff, diff)
        out[start:start + _CHUNK] = fn(diff, r2, n) @ wf
    return out


def _green(diff, r2, n):
    if n == 1:
        return 0.5 * np.log(r2)
    return -(r2 ** ((1 - n) / 2)) / (n - 1)


def extend_neumann(f: GridFn, where) -> ExtensionField:
    """Evaluate the Neumann extension of ``f`` at a grid or an array of points."""
    n = f.grid.dim
    if n not in (1, 2):
        raise ValidationError("extension supports n = 1 and n = 2")
    points, grid = _as_points(where, n)
    _check_boundary_points(points, f.grid)
    values = _kernel_sum(points, f, _green)
    return ExtensionField(f, points, values, kappa(n), grid)


def derivative_trace(field_: ExtensionField | GridFn, direction, delta: float,
                     trace_grid: Grid) -> GridFn:
    """Analytic derivative of the extension on ``trace_grid x {delta}``.

    ``direction`` is a 1-based horizontal axis, or ``"vertical"`` (equivalently
    ``n + 1``).
    """
    f = field_.source if isinstance(field_, ExtensionField) else field_
    n = f.grid.dim
    if trace_grid.dim != n:
        raise GridMismatchError("trace grid must have the dimension of the source")
    if direction == "vertical":
        direction = n + 1
    if not 1 <= int(direction) <= n + 1:
        raise ValidationError(f"direction must be 1..{n + 1} or 'vertical'")
    if delta < 0:
        raise ValidationError("height must be nonnegative")
    if delta == 0 and box_distance(trace_grid.domain, f.grid.domain) <= 0.0:
        raise GeometryError(
            "a trace at height 0 needs a trace domain disjoint from the source support"
        )
    axis = int(direction) - 1
    points = np.hstack([trace_grid.nodes, np.full((trace_grid.size, 1), float(delta))])

    def dkernel(diff, r2, n):
        return diff[:, :, axis] / r2 ** ((n + 1) / 2)

    return GridFn(trace_grid, _kernel_sum(points, f, dkernel))


def harmonicity_residual(field_: ExtensionField) -> float:
    """Max over interior nodes of the standard (2n+1)-point discrete Laplacian of u."""
    grid = field_.grid
    if grid is None:
        raise ValidationError("harmonicity residual needs a uniform evaluation grid")
    if any(c < 3 for c in grid.counts):
        raise ValidationError("need at least 3 nodes per axis")
    u = field_.values.reshape(grid.counts)
    inner = tuple(slice(1, -1) for _ in grid.counts)
    lap = np.zeros(tuple(c - 2 for c in grid.counts))
    for ax, h in enumerate(grid.spacing):
        fwd = list(inner)
        bwd = list(inner)
        fwd[ax] = slice(2, None)
        bwd[ax] = slice(None, -2)
        lap += (u[tuple(fwd)] - 2 * u[inner] + u[tuple(bwd)]) / h**2
    return float(np.max(np.abs(lap)))


def neumann_recovery_error(g: GridFn, delta: float, margin: float = 0.0) -> float:
    """``|| d_{n+1} u(., delta)/kappa_n - g ||_L2`` over ``g``'s grid shrunk by ``margin``."""
    trace = derivative_trace(g, "vertical", delta, g.grid)
    err = trace.values / kappa(g.grid.dim) - g.values
    mask = np.ones(g.grid.size, dtype=bool)
    for k, (a, b) in enumerate(g.grid.domain.bounds):
        x = g.grid.nodes[:, k]
        mask &= (x > a + margin) & (x < b - margin)
    if not mask.any():
        raise GeometryError("no nodes left after shrinking by the margin")
    w = g.grid.weights[mask]
    return float(np.sqrt(np.dot(w, err[mask] ** 2)))


def write_field_csv(field_: ExtensionField, path) -> None:
    n = field_.n
    header = [f"x{k + 1}" for k in range(n + 1)] + ["u"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p, v in zip(field_.points, field_.values):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

"""Domains, midpoint quadrature grids, interval normalization and discrete norms.

Every other module works with :class:`GridFn` samples on a :class:`Grid`.
Grids use the midpoint rule: all nodes are cell centres, so they sit strictly
inside the (open) domain and every weight is the cell volume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DisjointnessError,
    GridMismatchError,
    InvalidResolutionError,
    NormalizationError,
    ValidationError,
)

__all__ = [
    "IntervalDomain",
    "BoxDomain",
    "Grid",
    "GridFn",
    "AffineMap",
    "GeometryParams",
    "make_grid",
    "as_box",
    "closures_disjoint",
    "box_distance",
    "normalize_pair",
    "geometry_params",
    "inner_product",
    "l2_norm",
    "sobolev_norms",
    "forward_difference",
]


@dataclass(frozen=True)
class IntervalDomain:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValidationError(f"interval needs lo < hi, got ({self.lo}, {self.hi})")

    @property
    def dim(self) -> int:
        return 1

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return ((float(self.lo), float(self.hi)),)

    @property
    def volume(self) -> float:
        return float(self.hi - self.lo)

    @property
    def length(self) -> float:
        return self.volume

    @property
    def diameter(self) -> float:
        return self.volume

    def fattened(self, width: float) -> "IntervalDomain":
        return IntervalDomain(self.lo - width, self.hi + width)


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``prod_k (lo_k, hi_k)`` in one or two dimensions."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ValidationError("box lo/hi have different lengths")
        if len(lo) not in (1, 2, 3):
            raise ValidationError(f"unsupported box dimension {len(lo)}")
        for k, (a, b) in enumerate(zip(lo, hi)):
            if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
                raise ValidationError(f"box axis {k} needs lo < hi, got ({a}, {b})")

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]]) -> "BoxDomain":
        return cls(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return tuple(zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.bounds]))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum((b - a) ** 2 for a, b in self.bounds)))


Domain = IntervalDomain | BoxDomain


def as_box(domain: Domain) -> BoxDomain:
    if isinstance(domain, BoxDomain):
        return domain
    return BoxDomain((domain.lo,), (domain.hi,))


def box_distance(a: Domain, b: Domain) -> float:
    """Euclidean distance between two boxes (0 if they touch or overlap)."""
    A, B = as_box(a), as_box(b)
    if A.dim != B.dim:
        raise ValidationError("domains of different dimension")
    gaps = [max(0.0, b0 - a1, a0 - b1) for (a0, a1), (b0, b1) in zip(A.bounds, B.bounds)]
    return float(np.hypot.reduce(gaps)) if len(gaps) > 1 else gaps[0]


def closures_disjoint(a: Domain, b: Domain) -> bool:
    return box_distance(a, b) > 0.0


@dataclass(frozen=True, eq=False)
class Grid:
    """Midpoint-rule grid on an interval or box.

    ``nodes`` has shape ``(N, dim)`` with the first axis varying slowest
    (C order), ``weights`` has shape ``(N,)``.
    """

    domain: Domain
    counts: tuple[int, ...]
    axes: tuple[np.ndarray, ...] = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / n for (a, b), n in zip(self.domain.bounds, self.counts))

    @property
    def x(self) -> np.ndarray:
        """Node coordinates of a one-dimensional grid."""
        if self.dim != 1:
            raise ValidationError("x is only defined for 1-D grids")
        return self.nodes[:, 0]

    def same_as(self, other: "Grid") -> bool:
        return self is other or (
            self.counts == other.counts
            and self.domain.bounds == other.domain.bounds
        )

    def fn(self, values) -> "GridFn":
        """Wrap samples (array or callable of the node coordinates) as a GridFn."""
        if callable(values):
            cols = [self.nodes[:, k] for k in range(self.dim)]
            values = np.broadcast_to(np.asarray(values(*cols), dtype=float), (self.size,))
        return GridFn(self, np.array(values, dtype=float))

    def zeros(self) -> "GridFn":
        return GridFn(self, np.zeros(self.size))

    def to_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.domain.bounds], "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        bounds = data["bounds"]
        counts = data["counts"]
        if len(bounds) == 1:
            return make_grid(IntervalDomain(*bounds[0]), counts[0])
        return make_grid(BoxDomain.from_bounds(bounds), counts)


def make_grid(domain: Domain, counts: int | Sequence[int]) -> Grid:
    """Midpoint grid with ``counts`` cells per axis.

    >>> make_grid(IntervalDomain(0, 1), 4).x
    array([0.125, 0.375, 0.625, 0.875])
    """
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) == 1 and domain.dim > 1:
        counts = counts * domain.dim
    if len(counts) != domain.dim:
        raise InvalidResolutionError(f"need {domain.dim} counts, got {len(counts)}")
    if any(c < 2 for c in counts):
        raise InvalidResolutionError(f"need at least 2 cells per axis, got {counts}")
    axes = []
    for (a, b), n in zip(domain.bounds, counts):
        h = (b - a) / n
        axes.append(a + (np.arange(n) + 0.5) * h)
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    cell = np.prod([(b - a) / n for (a, b), n in zip(domain.bounds, counts)])
    weights = np.full(nodes.shape[0], cell)
    for arr in (nodes, weights, *axes):
        arr.setflags(write=False)
    return Grid(domain, counts, tuple(axes), nodes, weights)


@dataclass(frozen=True, eq=False)
class GridFn:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise GridMismatchError(
                f"{values.size} samples for a grid with {self.grid.size} nodes"
            )
        object.__setattr__(self, "values", values)

    def __add__(self, other: "GridFn") -> "GridFn":
        _check_same(self.grid, other.grid)
        return GridFn(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFn") -> "GridFn":
        _check_same(self.grid, other.grid)
        return GridFn(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFn":
        return GridFn(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "GridFn":
        return GridFn(self.grid, -self.values)

    def norm(self) -> float:
        return l2_norm(self)


def _check_same(a: Grid, b: Grid):
    if not a.same_as(b):
        raise GridMismatchError("functions live on different grids")


def inner_product(u: GridFn, v: GridFn) -> float:
    """Weighted L2 pairing ``sum_k w_k u_k v_k``."""
    _check_same(u.grid, v.grid)
    return float(np.dot(u.grid.weights * u.values, v.values))


def l2_norm(u: GridFn) -> float:
    return float(np.sqrt(max(inner_product(u, u), 0.0)))


def forward_difference(u: GridFn) -> list[np.ndarray]:
    """Per-axis forward differences; the last cell repeats the previous difference."""
    grid = u.grid
    vals = u.values.reshape(grid.counts)
    out = []
    for axis, h in enumerate(grid.spacing):
        d = np.diff(vals, axis=axis) / h
        last = np.take(d, [-1], axis=axis)
        out.append(np.concatenate([d, last], axis=axis).ravel())
    return out


def sobolev_norms(u: GridFn) -> tuple[float, float]:
    """Discrete ``(||u||_L2, ||u||_H1)`` with ``H1^2 = L2^2 + ||Du||^2``."""
    l2 = l2_norm(u)
    if min(u.grid.counts) < 3:
        raise InvalidResolutionError("H1 norm needs at least 3 nodes per axis")
    w = u.grid.weights
    grad_sq = sum(float(np.dot(w, d * d)) for d in forward_difference(u))
    return l2, float(np.sqrt(l2 * l2 + grad_sq))


@dataclass(frozen=True)
class AffineMap:
    """``x -> scale * x + shift``; a negative scale records a reflection."""

    scale: float
    shift: float

    @property
    def reflects(self) -> bool:
        return self.scale < 0

    def __call__(self, x):
        return self.scale * np.asarray(x, dtype=float) + self.shift

    def inverse(self, y):
        return (np.asarray(y, dtype=float) - self.shift) / self.scale

    def interval(self, dom: IntervalDomain) -> IntervalDomain:
        a, b = sorted((float(self(dom.lo)), float(self(dom.hi))))
        return IntervalDomain(a, b)


def normalize_pair(I: IntervalDomain, J: IntervalDomain):
    """Map ``J`` onto ``(0, 1)`` with ``I`` to its left.

    Returns ``(I', J', phi)``. When ``I`` lies right of ``J`` the map reflects
    about the midpoint of ``J`` first, so ``phi(x) = (J.hi - x) / |J|``.
    """
    if not closures_disjoint(I, J):
        raise DisjointnessError(
            f"closures of I={I.bounds[0]} and J={J.bounds[0]} must be disjoint"
        )
    length = J.hi - J.lo
    if I.hi < J.lo:
        phi = AffineMap(1.0 / length, -J.lo / length)
    else:
        phi = AffineMap(-1.0 / length, J.hi / length)
    Jn = phi.interval(J)
    # pin exactly; phi(J) is (0, 1) up to rounding
    Jn = IntervalDomain(0.0, 1.0) if np.allclose(Jn.bounds[0], (0, 1), atol=1e-14) else Jn
    return phi.interval(I), Jn, phi


@dataclass(frozen=True)
class GeometryParams:
    d: float
    l: float
    h1: float


def geometry_params(I: IntervalDomain, J: IntervalDomain | None = None) -> GeometryParams:
    """Distance ``d``, length ``l`` and fattening ``h1 = min(d/4, 1/4)`` of a normalized pair."""
    if J is not None and not np.allclose(J.bounds[0], (0.0, 1.0), rtol=0, atol=1e-12):
        raise NormalizationError(f"J must be (0, 1) after normalization, got {J.bounds[0]}")
    if not I.hi < 0:
        raise NormalizationError(f"normalized I must lie left of 0, got {I.bounds[0]}")
    d = abs(I.hi)
    return GeometryParams(d=d, l=I.hi - I.lo, h1=min(d / 4, 0.25))

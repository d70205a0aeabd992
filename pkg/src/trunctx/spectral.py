"""SVD-based measurements of ill-posedness and empirical fits of the stability bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, FitError, GridMismatchError, ValidationError
from .extension import derivative_trace, kappa, neumann_recovery_error
from .grids import Grid, GridFn, IntervalDomain, BoxDomain, make_grid, sobolev_norms
from .operators import (
    apply_operator,
    assemble_truncated_hilbert,
    assemble_truncated_riesz,
    stack_components,
    target_norm,
)

__all__ = [
    "SIGMA_GRID",
    "SpectralData",
    "DecayFit",
    "StabilityFit",
    "SmallnessRecord",
    "SmallnessFit",
    "TraceGapFit",
    "weighted_svd",
    "decay_fit",
    "picard_analysis",
    "stability_samples",
    "stability_fit",
    "smallness_probe",
    "fit_smallness",
    "smallness_violations",
    "trace_gap_probe",
]

#: log grid 2^(j/2), j = -4..6, i.e. 0.25 ... 8
SIGMA_GRID = tuple(float(2.0 ** (j / 2)) for j in range(-4, 7))

# relative slack when checking a fitted inequality (absorbs rounding at equality)
_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Singular triplets w.r.t. the weighted inner products of ``op``.

    Columns of ``right``/``left`` are the singular vectors as node samples.
    """

    values: np.ndarray
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    op: object = field(repr=False, default=None)

    def right_fn(self, k: int) -> GridFn:
        """k-th right singular vector (0-based) as a GridFn on the source grid."""
        return GridFn(self.op.source, self.right[:, k])

    def left_fn(self, k: int) -> GridFn:
        grid = self.op.target
        if not isinstance(grid, Grid):
            raise ValidationError("stacked targets have no single grid; use .left")
        return GridFn(grid, self.left[:, k])


def weighted_svd(A) -> SpectralData:
    """SVD of ``W_t^(1/2) M W_s^(-1/2)`` mapped back to weighted-orthonormal vectors.

    Signs are fixed so that the first non-negligible entry of every right
    singular vector is positive.
    """
    M = A.matrix
    ds = np.sqrt(A.source_weights)
    dt = np.sqrt(A.target_weights)
    try:
        U, s, Vt = np.linalg.svd(dt[:, None] * M / ds[None, :], full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"SVD did not converge: {exc}") from exc
    V = Vt.T
    for k in range(V.shape[1]):
        col = V[:, k]
        big = np.flatnonzero(np.abs(col) > 1e-8 * np.max(np.abs(col)))
        if big.size and col[big[0]] < 0:
            V[:, k] *= -1
            U[:, k] *= -1
    return SpectralData(s, V / ds[:, None], U / dt[:, None], A)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r2: float
    count: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        r2 = None if self.degenerate else self.r2
        return {"c": self.rate, "intercept": self.intercept, "r2": r2,
                "count": self.count, "degenerate": self.degenerate}


def decay_fit(S: SpectralData | Sequence[float], floor: float = 1e-12,
              min_count: int = 8) -> DecayFit:
    """Least-squares line through ``(k, ln sigma_k)`` for ``sigma_k > floor``.

    Returns the decay rate ``c`` (slope is ``-c``). A flat spectrum gives a
    degenerate fit (``r2`` undefined).
    """
    values = np.asarray(S.values if isinstance(S, SpectralData) else S, dtype=float)
    if values.size == 0 or values[0] <= 0:
        raise FitError("no positive singular values")
    keep = values > floor
    k = np.arange(1, values.size + 1)[keep]
    y = np.log(values[keep])
    if k.size < min_count:
        raise FitError(f"only {k.size} singular values above the floor; need {min_count}")
    slope, intercept = np.polyfit(k, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * k + intercept)) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(y * y))):
        return DecayFit(0.0, float(y.mean()), float("nan"), int(k.size), degenerate=True)
    return DecayFit(float(-slope), float(intercept), 1.0 - ss_res / ss_tot, int(k.size))


def picard_analysis(h: GridFn, S: SpectralData, side: str = "target") -> np.ndarray:
    """Rows ``(k, sigma_k, |<h, u_k>|)`` with 1-based ``k``.

    ``side="source"`` pairs against the right singular vectors instead.
    """
    if side == "target":
        weights, basis = S.op.target_weights, S.left
    elif side == "source":
        weights, basis = S.op.source_weights, S.right
    else:
        raise ValidationError("side must be 'target' or 'source'")
    if h.values.size != weights.size:
        raise GridMismatchError("h does not live on the requested side of the operator")
    if side == "source" and not h.grid.same_as(S.op.source):
        raise GridMismatchError("h does not live on the operator's source grid")
    coef = np.abs(basis.T @ (weights * h.values))
    k = np.arange(1, S.values.size + 1)
    return np.column_stack([k, S.values, coef])


# -- conditional stability -------------------------------------------------------


@dataclass(frozen=True)
class StabilityFit:
    C: float
    sigma_tilde: float
    samples: np.ndarray = field(repr=False)
    per_sigma: dict = field(repr=False, default_factory=dict)
    violations: int = 0
    holdout_violations: int | None = None
    description: str = ""

    def bound(self, h1: float, l2: float) -> float:
        """Multiplier ``exp(C (1 + (h1/l2)^s))``."""
        return float(np.exp(self.C * (1.0 + (h1 / l2) ** self.sigma_tilde)))

    def count_violations(self, samples: np.ndarray) -> int:
        """Samples are rows ``(||g||_H1, ||g||_L2, ||Ag||)``."""
        return _stability_violations(samples, self.C, self.sigma_tilde)

    def to_dict(self) -> dict:
        return {"C": self.C, "sigma_tilde": self.sigma_tilde,
                "violations": self.violations,
                "holdout_violations": self.holdout_violations}


def _stability_violations(samples, C, s) -> int:
    h1, l2, data = samples[:, 0], samples[:, 1], samples[:, 2]
    with np.errstate(over="ignore"):
        rhs = np.exp(C * (1.0 + (h1 / l2) ** s)) * data
    return int(np.sum(h1 > rhs * (1 + _SLACK)))


def stability_samples(A, family: Sequence[GridFn]) -> np.ndarray:
    rows = []
    for g in family:
        l2, h1 = sobolev_norms(g)
        if l2 == 0.0:
            raise ValidationError("stability samples must be nonzero")
        out = apply_operator(A, g)
        vals = np.concatenate([o.values for o in out]) if isinstance(out, list) else out.values
        rows.append((h1, l2, target_norm(A, vals)))
    return np.asarray(rows, dtype=float)


def _lexicographic_fit(required: dict[float, float], floor: float = 1.0):
    """Pick the smallest ``(C, sigma)`` from per-sigma minimal constants."""
    table = {s: max(floor, c) for s, c in required.items()}
    best = min(table.items(), key=lambda kv: (kv[1], kv[0]))
    return best[1], best[0], table


def stability_fit(A, family: Sequence[GridFn], holdout: Sequence[GridFn] | None = None,
                  sigma_grid: Sequence[float] = SIGMA_GRID,
                  description: str = "") -> StabilityFit:
    """Fit ``||g||_H1 <= exp(C (1 + r^s)) ||A g||`` with ``r = ||g||_H1/||g||_L2``.

    For every ``s`` on the grid ``C`` is the smallest value (at least 1) for
    which all training samples satisfy the bound; the smallest ``(C, s)`` pair
    wins. Holdout samples, if given, are only counted for violations.
    """
    samples = stability_samples(A, family)
    h1, l2, data = samples.T
    if np.any(data <= 0):
        raise FitError("a training sample has ||A g|| = 0; no finite constant exists")
    need = np.log(h1 / data)
    required = {float(s): float(np.max(need / (1.0 + (h1 / l2) ** s))) for s in sigma_grid}
    C, s, table = _lexicographic_fit(required)
    held = None
    if holdout is not None:
        held = _stability_violations(stability_samples(A, holdout), C, s)
    return StabilityFit(C, s, samples, table, _stability_violations(samples, C, s),
                        held, description)


# -- propagation of smallness --------------------------------------------------


@dataclass(frozen=True)
class SmallnessRecord:
    delta: float
    trace: float
    data: float
    source: float


def _data_operator(g: GridFn, I):
    """Transform from ``g``'s domain onto ``I`` (Hilbert for 1-D, stacked Riesz for 2-D)."""
    grid = g.grid
    if isinstance(I, Grid):
        target = I
    elif isinstance(I, (IntervalDomain, BoxDomain)):
        target = make_grid(I, grid.counts)
    else:
        raise ValidationError("I must be a Grid or a domain")
    if grid.dim == 1:
        return assemble_truncated_hilbert(grid, target)
    return stack_components([assemble_truncated_riesz(j, grid, target)
                             for j in range(1, grid.dim + 1)])


def smallness_probe(g: GridFn, I, deltas: Sequence[float]) -> list[SmallnessRecord]:
    """Per height ``delta``: vertical trace norm over J (divided by kappa_n),
    data norm ``||H_J g||_{L2(I)}`` and ``||g||_{L2(J)}``."""
    if any(d <= 0 for d in deltas):
        raise ValidationError("heights must be positive")
    A = _data_operator(g, I)
    out = apply_operator(A, g)
    vals = np.concatenate([o.values for o in out]) if isinstance(out, list) else out.values
    data = target_norm(A, vals)
    src = g.norm()
    kap = kappa(g.grid.dim)
    records = []
    for d in deltas:
        tr = derivative_trace(g, "vertical", d, g.grid)
        records.append(SmallnessRecord(float(d), tr.norm() / kap, data, src))
    return records


@dataclass(frozen=True)
class SmallnessFit:
    C: float
    sigma: float
    per_sigma: dict = field(repr=False, default_factory=dict)
    violations: int = 0

    def bound(self, record: SmallnessRecord, eps: float) -> float:
        expo = self.C * (abs(np.log(eps)) + 1.0) / record.delta ** self.sigma
        with np.errstate(over="ignore"):
            return float(np.exp(expo) * record.data + 0.5 * eps * record.source)

    def to_dict(self) -> dict:
        return {"C": self.C, "sigma": self.sigma, "violations": self.violations}


def _smallness_required(records, eps_list, s) -> float:
    worst = -np.inf
    for r in records:
        for eps in eps_list:
            excess = r.trace - 0.5 * eps * r.source
            if excess <= 0:
                continue
            if r.data <= 0:
                return np.inf
            c = r.delta ** s * np.log(excess / r.data) / (abs(np.log(eps)) + 1.0)
            worst = max(worst, c)
    return worst


def smallness_violations(fit: SmallnessFit, records, eps_list) -> int:
    bad = 0
    for r in records:
        for eps in eps_list:
            if r.trace > fit.bound(r, eps) * (1 + _SLACK):
                bad += 1
    return bad


def fit_smallness(records: Sequence[SmallnessRecord], eps_list: Sequence[float],
                  sigma_grid: Sequence[float] = SIGMA_GRID) -> SmallnessFit:
    """Fit ``trace <= exp(C(|ln eps| + 1)/delta^s) data + eps/2 source`` over all
    records and every ``eps``; same selection rule as :func:`stability_fit`."""
    required = {float(s): _smallness_required(records, eps_list, s) for s in sigma_grid}
    if all(np.isinf(c) for c in required.values()):
        raise FitError("some record has zero data but a nonzero trace excess")
    C, s, table = _lexicographic_fit(required)
    fit = SmallnessFit(C, s, table)
    return SmallnessFit(C, s, table, smallness_violations(fit, records, eps_list))


@dataclass(frozen=True)
class TraceGapFit:
    exponent: float
    C: float
    deltas: np.ndarray
    errors: np.ndarray

    def to_dict(self) -> dict:
        return {"p": self.exponent, "C": self.C,
                "deltas": self.deltas.tolist(), "errors": self.errors.tolist()}


def trace_gap_probe(g: GridFn, deltas: Sequence[float], margin: float) -> TraceGapFit:
    """Fit ``||d_{n+1}u(., delta)/kappa - g||_{L2(J')} ~ C delta^p`` on the
    margin-shrunk interior ``J'``."""
    if margin <= 0:
        raise ValidationError("margin must be positive")
    sobolev_norms(g)  # finite discrete H1 norm required
    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    errors = np.array([neumann_recovery_error(g, d, margin) for d in deltas])
    if np.all(errors == 0):
        return TraceGapFit(float("inf"), 0.0, deltas, errors)
    if np.any(errors <= 0):
        raise FitError("zero error at some heights but not others")
    p, logc = np.polyfit(np.log(deltas), np.log(errors), 1)
    return TraceGapFit(float(p), float(np.exp(logc)), deltas, errors)

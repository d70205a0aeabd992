"""Approximate preimages from the nonsmooth functional

    G(g) = 1/2 ||A g||^2 + eps ||g|| - <h, g>

The minimizer g* gives the control ``f = -A g*``, whose image under the
reverse transform ``-A*`` approximates ``h`` to accuracy ``eps``. Two
independent solvers are provided: accelerated proximal gradient and a
spectral root-find of the equivalent Tikhonov system
``(A*A + lam) g = h`` with ``lam ||g|| = eps``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import mpmath

import numpy as np

from .accurate import exact_dot, exact_matvec
from .errors import ConvergenceError, GridMismatchError, ValidationError
from .grids import Grid, GridFn, IntervalDomain, make_grid, sobolev_norms
from .operators import StackedOp
from .spectral import SIGMA_GRID

log = logging.getLogger(__name__)

__all__ = [
    "ControlProblem",
    "ControlResult",
    "Controls",
    "CostCurve",
    "functional_value",
    "minimize_prox",
    "minimize_spectral_root",
    "build_control",
    "cost_curve",
    "taper_compact_support",
    "TaperResult",
]


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """``op`` maps the g-space (where ``h`` lives) to the observation space."""

    op: object
    h: GridFn
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")
        if isinstance(self.op, StackedOp) and self.op.adjoint:
            raise ValidationError("the operator must have a single source grid")
        if not self.h.grid.same_as(self.op.source):
            raise GridMismatchError("h must live on the operator's source grid")


class _Scaled:
    """The problem in unweighted coordinates: ``x = W_s^(1/2) g``."""

    def __init__(self, p: ControlProblem):
        self.ds = np.sqrt(p.op.source_weights)
        dt = np.sqrt(p.op.target_weights)
        self.A = dt[:, None] * p.op.matrix / self.ds[None, :]
        self.h = self.ds * p.h.values
        self.eps = float(p.eps)

    def to_fn(self, p: ControlProblem, x: np.ndarray) -> GridFn:
        return GridFn(p.op.source, x / self.ds)


@dataclass(frozen=True, eq=False)
class ControlResult:
    g: GridFn
    controls: list = field(repr=False)
    residual: float
    cost: float
    value: float
    solver: str
    iterations: int
    optimality: float
    lam: float | None
    converged: bool = True

    @property
    def f(self):
        """The control (a single GridFn unless the operator is stacked)."""
        return self.controls[0] if len(self.controls) == 1 else self.controls

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "cost": self.cost,
            "residual": self.residual,
            "functional_value": self.value,
            "lambda": self.lam,
            "iterations": self.iterations,
            "optimality_residual": self.optimality,
            "g_norm": self.g.norm(),
            "converged": self.converged,
        }


def functional_value(p: ControlProblem, g: GridFn) -> float:
    """``1/2 ||A g||^2 + eps ||g|| - <h, g>`` with weighted norms.

    Products are summed with correct rounding, so the value stays meaningful
    when ``g`` is huge and ``A g`` is the result of heavy cancellation.
    """
    if not g.grid.same_as(p.op.source):
        raise GridMismatchError("g must live on the operator's source grid")
    Ag = exact_matvec(p.op.matrix, g.values)
    wt = p.op.target_weights
    ws = g.grid.weights
    quad = exact_dot(wt * Ag, Ag)
    gnorm = np.sqrt(max(exact_dot(ws * g.values, g.values), 0.0))
    return math.fsum([0.5 * quad, p.eps * gnorm, -exact_dot(ws * p.h.values, g.values)])


@dataclass(frozen=True, eq=False)
class Controls:
    controls: list
    approximation: GridFn
    residual: float
    cost: float


def _blocks(op) -> tuple[Grid, ...]:
    return op.blocks if isinstance(op, StackedOp) else (op.target,)


def _split_blocks(op, flat: np.ndarray) -> list[GridFn]:
    out, start = [], 0
    for grid in _blocks(op):
        out.append(GridFn(grid, flat[start:start + grid.size]))
        start += grid.size
    return out


def _controls_report(p: ControlProblem, f_flat: np.ndarray) -> Controls:
    """Approximation ``-A* f`` and its distance to ``h``, correctly rounded."""
    op = p.op
    wt, ws = op.target_weights, op.source_weights
    # -A* f - h = -(A^T (wt f) + ws h) / ws
    diff = -exact_matvec(op.matrix.T, wt * f_flat, shift=-(ws * p.h.values)) / ws
    approx = GridFn(op.source, diff + p.h.values)
    residual = float(np.sqrt(max(exact_dot(ws * diff, diff), 0.0)))
    cost = float(np.sqrt(max(exact_dot(wt * f_flat, f_flat), 0.0)))
    return Controls(_split_blocks(op, f_flat), approx, residual, cost)


def build_control(p: ControlProblem, g: GridFn) -> Controls:
    """``f_j = -A_j g`` per component and the approximation ``-sum_j A_j* f_j``."""
    if not g.grid.same_as(p.op.source):
        raise GridMismatchError("g must live on the operator's source grid")
    return _controls_report(p, -exact_matvec(p.op.matrix, g.values))


def _optimality(sc, x) -> float:
    nx = float(np.linalg.norm(x))
    if nx == 0:
        return max(0.0, float(np.linalg.norm(sc.h)) - sc.eps)
    grad = sc.A.T @ (sc.A @ x) - sc.h
    return float(np.linalg.norm(grad + sc.eps * x / nx))


def _result(p, sc, x, solver, iterations, lam, converged=True) -> ControlResult:
    g = sc.to_fn(p, x)
    ctl = build_control(p, g)
    return ControlResult(g, ctl.controls, ctl.residual, ctl.cost, functional_value(p, g),
                         solver, iterations, _optimality(sc, x), lam, converged)


def _shrink(z: np.ndarray, t: float) -> np.ndarray:
    nz = float(np.linalg.norm(z))
    if nz <= t:
        return np.zeros_like(z)
    return (1.0 - t / nz) * z


def minimize_prox(p: ControlProblem, tol: float = 1e-10, maxiter: int = 200_000,
                  accelerate: bool = True) -> ControlResult:
    """Accelerated proximal gradient with gradient-based restart.

    Step ``1/||A||^2``; the prox of ``eps ||.||`` is radial shrinkage. Stops
    once the fixed-point residual ``||x - prox(x - t grad)||/t`` drops below
    ``tol (1 + ||h||)``.
    """
    sc = _Scaled(p)
    hn = float(np.linalg.norm(sc.h))
    if hn <= sc.eps:
        return _result(p, sc, np.zeros_like(sc.h), "prox", 0, None)
    gram = sc.A.T @ sc.A
    lip = float(np.linalg.eigvalsh(gram)[-1])
    if lip <= 0:
        raise ValidationError("zero operator with ||h|| > eps: functional unbounded below")
    tau = 1.0 / lip
    stop = tol * (1.0 + hn)
    x = np.zeros_like(sc.h)
    y = x.copy()
    t = 1.0
    for it in range(1, maxiter + 1):
        x_new = _shrink(y - tau * (gram @ y - sc.h), sc.eps * tau)
        if accelerate and np.dot(y - x_new, x_new - x) > 0:
            t = 1.0
            y = x_new.copy()
        elif accelerate:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        else:
            y = x_new
        x = x_new
        if it % 10 == 0:
            fp = np.linalg.norm(x - _shrink(x - tau * (gram @ x - sc.h), sc.eps * tau)) / tau
            if fp <= stop:
                nx = np.linalg.norm(x)
                lam = sc.eps / nx if nx > 0 else None
                return _result(p, sc, x, "prox", it, lam)
    last = _result(p, sc, x, "prox", maxiter, None, converged=False)
    raise ConvergenceError(f"proximal gradient did not converge in {maxiter} iterations",
                           last=last, iterations=maxiter)


def _phi2(lam, s2, c2):
    return float(np.sum(c2 * (lam / (s2 + lam)) ** 2))


def _root(s2: np.ndarray, c2: np.ndarray, eps: float, hn: float, rtol: float):
    """Unique ``lam > 0`` with ``lam ||g(lam)|| = eps``; returns ``(lam, steps)``."""
    hi = float(s2.max()) * eps / (hn - eps)
    lo = hi
    while _phi2(lo, s2, c2) >= eps * eps:
        lo *= 1e-4
        if lo < 1e-300:
            raise ConvergenceError("could not bracket the multiplier")
    it = 0
    a, b = np.log(lo), np.log(hi)
    while b - a > 1e-13 * max(1.0, abs(a)) and it < 400:
        mid = 0.5 * (a + b)
        it += 1
        if _phi2(np.exp(mid), s2, c2) < eps * eps:
            a = mid
        else:
            b = mid
    lam = float(np.exp(0.5 * (a + b)))
    for _ in range(8):
        q = lam / (s2 + lam)
        F = float(np.sum(c2 * q * q)) - eps * eps
        dF = float(np.sum(2 * c2 * q * s2 / (s2 + lam) ** 2))
        if dF <= 0:
            break
        lam_new = lam - F / dF
        it += 1
        if not lam_new > 0:
            break
        done = abs(lam_new - lam) <= rtol * lam
        lam = lam_new
        if done:
            break
    return lam, it


def _check_null_space(s2, c2, eps):
    if float(np.sqrt(np.sum(c2[s2 == 0]))) >= eps:
        raise ValidationError(
            "h has a null-space component larger than eps; the functional is unbounded below"
        )


class _MPDecomposition:
    """SVD of the scaled operator in ``dps``-digit arithmetic.

    The float64 entries of the operator are taken as exact, so the discrete
    problem is the same one the float64 path solves.
    """

    def __init__(self, op, dps: int):
        self.dps = dps
        with mpmath.workdps(dps):
            self.ds = [mpmath.sqrt(mpmath.mpf(w)) for w in op.source_weights]
            self.dt = [mpmath.sqrt(mpmath.mpf(w)) for w in op.target_weights]
            self.A = mpmath.matrix(op.matrix.tolist())
            m, n = self.A.rows, self.A.cols
            Ah = mpmath.matrix(m, n)
            for i in range(m):
                for k in range(n):
                    Ah[i, k] = self.dt[i] * self.A[i, k] / self.ds[k]
            self.Ahat = Ah
            _, S, self.Vt = mpmath.svd_r(Ah, full_matrices=n > m, compute_uv=True)
            self.s2 = [S[k] ** 2 for k in range(len(S))] + [mpmath.mpf(0)] * (n - len(S))

    def solve(self, p: ControlProblem, rtol: float):
        eps = float(p.eps)
        with mpmath.workdps(self.dps):
            h = mpmath.matrix([self.ds[k] * mpmath.mpf(v) for k, v in enumerate(p.h.values)])
            c = self.Vt * h
            cf = np.array([float(v) for v in c])
            s2f = np.array([float(v) for v in self.s2])
            hn = float(mpmath.norm(h))
            if hn <= eps:
                return None
            _check_null_space(s2f, cf**2, eps)
            lam, it = _root(s2f, cf**2, eps, hn, rtol)
            lm = mpmath.mpf(lam)
            coef = mpmath.matrix([c[k] / (self.s2[k] + lm) for k in range(len(self.s2))])
            x = self.Vt.T * coef
            g = mpmath.matrix([x[k] / self.ds[k] for k in range(len(x))])
            f = -(self.A * g)
            Ax = self.Ahat * x
            nx = mpmath.norm(x)
            grad = self.Ahat.T * Ax - h
            opt = mpmath.norm(grad + (eps / nx) * x)
            value = mpmath.fdot(_entries(Ax), _entries(Ax)) / 2 + eps * nx \
                - mpmath.fdot(_entries(h), _entries(x))
            out = {
                "g": np.array([float(v) for v in g]),
                "f": np.array([float(v) for v in f]),
                "residual": float(mpmath.norm(grad)),
                "cost": float(mpmath.norm(Ax)),
                "value": float(value),
                "optimality": float(opt),
            }
        return lam, it, out


def _entries(v) -> list:
    return [v[k] for k in range(v.rows)]


@lru_cache(maxsize=4)
def _mp_decomposition(op, dps: int) -> _MPDecomposition:
    return _MPDecomposition(op, dps)


AUTO_DIGITS = 50
AUTO_MAX_ENTRIES = 128 * 128
AUTO_TOL = 1e-9


def minimize_spectral_root(p: ControlProblem, rtol: float = 1e-12,
                           precision: int | str | None = "auto") -> ControlResult:
    """Solve ``(A*A + lam) g = h`` through the SVD and root-find ``lam ||g(lam)|| = eps``.

    ``phi(lam) = lam ||g(lam)||`` increases from the null-space part of ``h``
    to ``||h||``; bisection in ``log lam`` brackets the root and Newton steps
    on ``phi^2 - eps^2`` polish it.

    With ``precision`` (decimal digits) the SVD, the minimizer and the control
    are computed in multiprecision arithmetic and rounded at the end. This is
    needed once ``||f||`` exceeds about ``1e-9 / (eps * unit roundoff)``; it is
    only practical for a few hundred unknowns. ``"auto"`` solves in float64
    and repeats the solve with 50 digits when the certified residual misses
    ``eps`` by more than ``1e-9`` relative and the matrix has at most
    ``128**2`` entries.
    """
    if precision == "auto":
        res = minimize_spectral_root(p, rtol, precision=None)
        off = res.lam is not None and abs(res.residual / p.eps - 1.0) > AUTO_TOL
        if off and p.op.matrix.size <= AUTO_MAX_ENTRIES:
            log.info("residual off by %.1e; repeating with %d digits",
                     res.residual / p.eps - 1.0, AUTO_DIGITS)
            return minimize_spectral_root(p, rtol, precision=AUTO_DIGITS)
        return res
    sc = _Scaled(p)
    eps = sc.eps
    hn = float(np.linalg.norm(sc.h))
    if hn <= eps:
        return _result(p, sc, np.zeros_like(sc.h), "spectral-root", 0, None)
    if precision is not None:
        solved = _mp_decomposition(p.op, int(precision)).solve(p, rtol)
        if solved is None:
            return _result(p, sc, np.zeros_like(sc.h), "spectral-root", 0, None)
        lam, it, out = solved
        g = GridFn(p.op.source, out["g"])
        ctl = _controls_report(p, out["f"])
        return ControlResult(g, ctl.controls, out["residual"], out["cost"], out["value"],
                             "spectral-root-mp", it, out["optimality"], lam)
    full = sc.A.shape[1] > sc.A.shape[0]
    _, s, Vt = np.linalg.svd(sc.A, full_matrices=full)
    s2 = np.zeros(Vt.shape[0])
    s2[: s.size] = s**2
    c = Vt @ sc.h
    _check_null_space(s2, c**2, eps)
    lam, it = _root(s2, c**2, eps, hn, rtol)
    x = Vt.T @ (c / (s2 + lam))
    return _result(p, sc, x, "spectral-root", it, lam)


# -- cost of approximation -----------------------------------------------------


@dataclass(frozen=True)
class CostCurve:
    rows: np.ndarray
    h_l2: float
    h_h1: float
    C: float
    sigma: float
    power_slope: float
    dominates: bool
    holdout: np.ndarray | None = field(default=None, repr=False)
    columns: tuple = ("eps", "cost", "residual", "lambda", "iterations")

    def bound(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        with np.errstate(over="ignore"):
            return np.exp(self.C * (1.0 + (self.h_h1 / eps) ** self.sigma)) * self.h_l2

    def to_dict(self) -> dict:
        return {"C": self.C, "sigma": self.sigma, "power_slope": self.power_slope,
                "dominates": self.dominates, "h_l2": self.h_l2, "h_h1": self.h_h1}


def _solve_row(p, solver, precision="auto"):
    if solver == "spectral-root":
        return minimize_spectral_root(p, precision=precision)
    return minimize_prox(p)


def _row(res, eps):
    lam = np.nan if res.lam is None else res.lam
    return [eps, res.cost, res.residual, lam, res.iterations]


def cost_curve(op, h: GridFn, eps_list: Sequence[float],
               holdout: Sequence[float] = (), solver: str = "spectral-root",
               sigma_grid: Sequence[float] = SIGMA_GRID,
               precision: int | str | None = "auto") -> CostCurve:
    """One solve per ``eps`` and a fit of ``cost <= exp(C(1 + (||h||_H1/eps)^s)) ||h||_L2``.

    The fit uses the rows of ``eps_list`` only (smallest ``(C, s)``, ``C >= 1``);
    ``dominates`` reports whether the fitted bound covers every row including
    the ``holdout`` ones.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValidationError("eps values must be positive")
    if eps_list != sorted(eps_list, reverse=True):
        raise ValidationError("eps values must be sorted in descending order")
    rows, held = [], []
    for i, eps in enumerate(eps_list):
        try:
            res = _solve_row(ControlProblem(op, h, eps), solver, precision)
        except ConvergenceError as exc:
            raise ConvergenceError(f"row {i} (eps={eps}): {exc}", exc.last, exc.iterations)
        if res.residual > eps * (1 + 1e-6):
            log.warning("row %d: residual %.3e exceeds eps %.3e", i, res.residual, eps)
        rows.append(_row(res, eps))
    for eps in holdout:
        held.append(_row(_solve_row(ControlProblem(op, h, float(eps)), solver, precision), float(eps)))
    rows = np.asarray(rows, dtype=float)
    held_arr = np.asarray(held, dtype=float) if held else None
    hl2, hh1 = sobolev_norms(h)
    with np.errstate(divide="ignore"):
        need = np.log(rows[:, 1] / hl2)
    required = {float(s): float(np.max(need / (1.0 + (hh1 / rows[:, 0]) ** s)))
                for s in sigma_grid}
    table = {s: max(1.0, c) for s, c in required.items()}
    C, sigma = min(((c, s) for s, c in table.items()))
    positive = rows[:, 1] > 0
    slope = float("nan")
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(1 / rows[positive, 0]), np.log(rows[positive, 1]), 1)[0])
    curve = CostCurve(rows, hl2, hh1, C, sigma, slope, False, held_arr)
    everything = rows if held_arr is None else np.vstack([rows, held_arr])
    ok = bool(np.all(everything[:, 1] <= curve.bound(everything[:, 0]) * (1 + 1e-12)))
    return CostCurve(rows, hl2, hh1, C, sigma, slope, ok, held_arr)


# -- compact-support extension ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class TaperResult:
    h: GridFn
    collar: float
    c_l2: float
    c_h1: float


def taper_compact_support(h: GridFn, h1: float) -> TaperResult:
    """Extend ``h`` from ``J`` to ``J_{h1}`` with a C^1 cosine ramp down to zero.

    The collar is rounded to a whole number of cells so the nodes of ``J``
    are nodes of the extended grid and the restriction is exactly ``h``.
    """
    if not h1 > 0:
        raise ValidationError("fattening width must be positive")
    grid = h.grid
    if grid.dim != 1:
        raise ValidationError("taper is defined for 1-D grids")
    dx = grid.spacing[0]
    m = max(1, int(round(h1 / dx)))
    width = m * dx
    lo, hi = grid.domain.bounds[0]
    big = make_grid(IntervalDomain(lo - width, hi + width), grid.counts[0] + 2 * m)
    s = (np.arange(m) + 0.5) * dx
    ramp = 0.5 * (1.0 + np.cos(np.pi * s / width))
    left = h.values[0] * ramp[::-1]
    right = h.values[-1] * ramp
    ext = GridFn(big, np.concatenate([left, h.values, right]))
    l2, hh1 = sobolev_norms(h)
    el2, eh1 = sobolev_norms(ext)
    c_l2 = el2 / l2 if l2 > 0 else 1.0
    c_h1 = eh1 / hh1 if hh1 > 0 else 1.0
    return TaperResult(ext, width, c_l2, c_h1)

"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Tolerances are the stated ones. Run with ``pytest tests/test_acceptance.py``;
the verdicts are listed in the terminal summary.
"""

from contextlib import contextmanager

import numpy as np
import pytest

from trunctx.accurate import exact_dot, exact_matvec
from trunctx.cli import main
from trunctx.control import (
    ControlProblem,
    cost_curve,
    functional_value,
    minimize_prox,
    minimize_spectral_root,
)
from trunctx.extension import derivative_trace, extend_neumann, harmonicity_residual, kappa
from trunctx.grids import BoxDomain, IntervalDomain, inner_product, l2_norm, make_grid
from trunctx.operators import (
    apply_operator,
    assemble_truncated_hilbert,
    assemble_truncated_riesz,
    stack_components,
)
from trunctx.spectral import (
    decay_fit,
    fit_smallness,
    smallness_probe,
    smallness_violations,
    stability_fit,
    weighted_svd,
)
from trunctx.varcoef import (
    assemble_generalized_stack,
    coefficient_preset,
    fd_box_for,
    lattice_grid,
)

from conftest import ACCEPTANCE, I_MODEL, J_MODEL, OMEGA1, OMEGA2

# "residual <= eps" holds with equality at the optimum; allow solver-level rounding
SOLVER_SLACK = 1e-9


@contextmanager
def criterion(number: int, title: str):
    detail: dict = {}
    try:
        yield detail
    except BaseException as exc:
        line = f"[FAIL] criterion {number}: {title} ({type(exc).__name__}: {exc})"
        ACCEPTANCE.append(line.splitlines()[0])
        print(line)
        raise
    text = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}"
                     for k, v in detail.items())
    line = f"[PASS] criterion {number}: {title}" + (f" ({text})" if text else "")
    ACCEPTANCE.append(line)
    print(line)


def _hilbert_control(n):
    """Control operator H_J: g on J -> observations on I."""
    gi, gj = make_grid(I_MODEL, n), make_grid(J_MODEL, n)
    return assemble_truncated_hilbert(gj, gi)


@pytest.fixture(scope="module")
def control64():
    A = _hilbert_control(64)
    return A, weighted_svd(A)


@pytest.fixture(scope="module")
def solved():
    """Every solved control instance, collected for the energy identity."""
    return []


def _energy_gap(p, res):
    f2 = res.cost**2
    return abs(functional_value(p, res.g) + 0.5 * f2) / (1 + f2)


# -- 1 ------------------------------------------------------------------------------


def test_c01_adjoint_identity():
    with criterion(1, "discrete adjoint identity") as d:
        gi, gj = make_grid(I_MODEL, 256), make_grid(J_MODEL, 256)
        HI = assemble_truncated_hilbert(gi, gj)
        HJ = assemble_truncated_hilbert(gj, gi)
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(20):
            f = gi.fn(rng.standard_normal(256))
            g = gj.fn(rng.standard_normal(256))
            s = inner_product(apply_operator(HI, f), g) + inner_product(apply_operator(HJ, g), f)
            worst = max(worst, abs(s) / (l2_norm(f) * l2_norm(g)))
        d["max_rel"] = worst
        assert worst <= 1e-12


# -- 2 ------------------------------------------------------------------------------


def test_c02_closed_form():
    with criterion(2, "closed form H_I(1) and quadrature order") as d:
        a, b = I_MODEL.lo, I_MODEL.hi
        gj = make_grid(J_MODEL, 64)
        exact = np.log((gj.x - a) / (gj.x - b))

        def err(n):
            gi = make_grid(I_MODEL, n)
            v = apply_operator(assemble_truncated_hilbert(gi, gj), gi.fn(lambda t: 1 + 0 * t))
            return np.abs(v.values - exact) / np.abs(exact)

        rel = float(np.max(err(1024)))
        errs = [float(np.max(err(n))) for n in (32, 64, 128, 256)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        d["rel_err_1024"] = rel
        d["min_order"] = float(orders.min())
        assert rel <= 1e-5
        assert orders.min() >= 1.9


# -- 3 ------------------------------------------------------------------------------


def test_c03_trace_equivalence():
    with criterion(3, "extension trace equals operator; height traces converge") as d:
        gi, gj = make_grid(I_MODEL, 128), make_grid(J_MODEL, 128)
        f = gi.fn(lambda t: 1 + np.cos(3 * t))
        ref = apply_operator(assemble_truncated_hilbert(gi, gj), f).values
        tr0 = derivative_trace(f, 1, 0.0, gj).values
        rel = float(np.linalg.norm(tr0 - ref) / np.linalg.norm(ref))
        deltas = np.array([0.1, 0.05, 0.025])
        dev = [l2_norm(derivative_trace(f, 1, dl, gj) - gj.fn(ref)) for dl in deltas]
        order = float(np.polyfit(np.log(deltas), np.log(dev), 1)[0])
        d["rel_gap"] = rel
        d["order"] = order
        assert rel <= 1e-12
        assert order >= 0.9


# -- 4 ------------------------------------------------------------------------------


def test_c04_harmonicity():
    with criterion(4, "harmonicity residual order") as d:
        f = make_grid(I_MODEL, 128).fn(lambda t: 1 + t * np.sin(4 * t))
        orders = []
        # stencil residual at fixed points, h -> h/2
        for center in ((0.2, 0.6), (0.5, 1.0), (0.9, 0.3), (-0.5, 0.5)):
            c = np.asarray(center)
            res = []
            for h in (0.1, 0.05, 0.025):
                grid = make_grid(BoxDomain(tuple(c - 1.5 * h), tuple(c + 1.5 * h)), 3)
                res.append(harmonicity_residual(extend_neumann(f, grid)))
            orders += list(np.log2(np.array(res[:-1]) / np.array(res[1:])))
        # maximum over a whole evaluation box
        box = BoxDomain((0.0, 0.5), (1.0, 1.5))
        r32, r64 = (harmonicity_residual(extend_neumann(f, make_grid(box, n))) for n in (32, 64))
        orders.append(float(np.log2(r32 / r64)))
        d["min_order"] = float(min(orders))
        assert min(orders) >= 1.8


# -- 5 ------------------------------------------------------------------------------


def test_c05_exponential_ill_posedness():
    with criterion(5, "exponential singular value decay") as d:
        A = assemble_truncated_hilbert(make_grid(I_MODEL, 256), make_grid(J_MODEL, 256))
        fit = decay_fit(weighted_svd(A), floor=1e-12, min_count=5)
        rates = []
        for dist in (0.5, 1.0, 2.0):
            I = IntervalDomain(-dist - 1, -dist)
            B = assemble_truncated_hilbert(make_grid(I, 256), make_grid(J_MODEL, 256))
            rates.append(decay_fit(weighted_svd(B), floor=1e-12, min_count=5).rate)
        d["r2"] = fit.r2
        d["values_fitted"] = fit.count
        d["rates"] = "/".join(f"{r:.3f}" for r in rates)
        assert fit.r2 >= 0.99
        assert rates[0] < rates[1] < rates[2]


# -- 6 ------------------------------------------------------------------------------


def test_c06_variational_construction(control64, solved):
    with criterion(6, "residual equals eps; zero minimizer for eps >= ||h||") as d:
        A, _ = control64
        h = A.source.fn(lambda x: np.sin(np.pi * x))
        # independent assembly of the reverse transform I -> J
        HI = assemble_truncated_hilbert(A.target, A.source)
        ws = A.source.weights
        worst = 0.0
        for eps in (1e-1, 1e-2, 1e-3):
            p = ControlProblem(A, h, eps)
            res = minimize_spectral_root(p)
            solved.append((p, res))
            diff = exact_matvec(HI.matrix, res.f.values, shift=h.values)
            resid = float(np.sqrt(exact_dot(ws * diff, diff)))
            worst = max(worst, abs(resid / eps - 1))
        zero_ok = True
        for eps in (l2_norm(h), 1.0, 2.0):
            for solver in (minimize_spectral_root, minimize_prox):
                res = solver(ControlProblem(A, h, eps))
                zero_ok &= bool(np.all(res.g.values == 0)) and res.cost == 0
        d["max_rel_dev"] = worst
        d["zero_minimizer"] = zero_ok
        assert worst <= 1e-6
        assert zero_ok


# -- 8 ------------------------------------------------------------------------------


def test_c08_solver_cross_validation(control64, solved):
    with criterion(8, "proximal gradient and spectral root agree") as d:
        A, S = control64
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(20):
            # beyond three modes the multiplier falls far below sigma_4^2 and the
            # first-order method needs millions of iterations
            modes = int(rng.integers(2, 4))
            h = A.source.fn(S.right[:, :modes] @ rng.standard_normal(modes))
            eps = float(np.exp(rng.uniform(np.log(0.05), np.log(0.5)))) * l2_norm(h)
            p = ControlProblem(A, h, eps)
            a, b = minimize_prox(p), minimize_spectral_root(p)
            solved.extend([(p, a), (p, b)])
            worst = max(worst, l2_norm(a.g - b.g) / l2_norm(b.g))
        d["max_rel_diff"] = worst
        assert worst <= 1e-6


# -- 9 ------------------------------------------------------------------------------


def test_c09_cost_curve(control64, solved):
    with criterion(9, "cost curve monotone; fitted bound covers held-out eps") as d:
        A, _ = control64
        h = A.source.fn(lambda x: np.sin(np.pi * x))
        curve = cost_curve(A, h, [1e-1, 1e-2, 1e-3], holdout=[3e-4])
        for eps in (1e-1, 1e-2, 1e-3, 3e-4):
            p = ControlProblem(A, h, eps)
            solved.append((p, minimize_spectral_root(p)))
        eps_all = np.concatenate([curve.rows[:, 0], curve.holdout[:, 0]])
        cost_all = np.concatenate([curve.rows[:, 1], curve.holdout[:, 1]])
        order = np.argsort(eps_all)
        monotone = bool(np.all(np.diff(cost_all[order]) <= 0))
        held = curve.holdout[0]
        d["C"] = curve.C
        d["sigma"] = curve.sigma
        d["holdout_cost"] = float(held[1])
        d["bound"] = float(curve.bound(held[0]))
        assert monotone
        assert held[1] <= curve.bound(held[0])
        assert curve.dominates


# -- 10 -----------------------------------------------------------------------------


def test_c10_stability_fit():
    with criterion(10, "stability fit has no held-out violations") as d:
        A = _hilbert_control(128)
        S = weighted_svd(A)
        family = [S.right_fn(k) for k in range(20)]
        rng = np.random.default_rng(10)
        hold = []
        for _ in range(20):
            c = rng.standard_normal(20)
            hold.append(A.source.fn(S.right[:, :20] @ (c / np.linalg.norm(c))))
        fit = stability_fit(A, family, holdout=hold)
        d["C"] = fit.C
        d["sigma_tilde"] = fit.sigma_tilde
        d["holdout_violations"] = fit.holdout_violations
        assert fit.violations == 0
        assert fit.holdout_violations == 0


# -- 11 -----------------------------------------------------------------------------


def test_c11_smallness():
    with criterion(11, "smallness bound on held-out grid; Neumann recovery") as d:
        A = _hilbert_control(128)
        S = weighted_svd(A)
        gs = [A.source.fn(lambda x: np.sin(np.pi * x))] + [S.right_fn(k) for k in (0, 4, 9)]
        train_eps, train_delta = [1e-1, 3e-2, 1e-2, 3e-3], [0.2, 0.1, 0.05, 0.025]
        hold_eps, hold_delta = [5e-2, 5e-3, 1e-3], [0.15, 0.075, 0.0375]
        train = [r for g in gs for r in smallness_probe(g, I_MODEL, train_delta)]
        held = [r for g in gs for r in smallness_probe(g, I_MODEL, hold_delta)]
        fit = fit_smallness(train, train_eps)
        bad = smallness_violations(fit, held, hold_eps)
        g = make_grid(J_MODEL, 512).fn(lambda x: np.sin(np.pi * x))
        deltas = (0.1, 0.05, 0.025, 0.0125)
        errs = []
        for dl in deltas:
            tr = derivative_trace(g, "vertical", dl, g.grid)
            errs.append(l2_norm((1 / kappa(1)) * tr - g))
        d["C"] = fit.C
        d["sigma"] = fit.sigma
        d["holdout_violations"] = bad
        d["recovery"] = "/".join(f"{e:.3g}" for e in errs)
        assert fit.violations == 0
        assert bad == 0
        assert all(a > b for a, b in zip(errs, errs[1:]))


# -- 12 -----------------------------------------------------------------------------


def test_c12_riesz(solved):
    with criterion(12, "stacked Riesz: sigma_min > 0 and residual <= eps") as d:
        s, t = make_grid(OMEGA2, 32), make_grid(OMEGA1, 32)
        A = stack_components([assemble_truncated_riesz(j, s, t) for j in (1, 2)])
        smin = float(weighted_svd(A).values[-1])
        h = s.fn(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        # independent reverse assemblies Omega_1 -> Omega_2
        rev = [assemble_truncated_riesz(j, t, s).matrix for j in (1, 2)]
        worst = 0.0
        for eps in (0.2, 0.1):
            p = ControlProblem(A, h, eps)
            res = minimize_spectral_root(p)
            solved.append((p, res))
            f1, f2 = res.controls
            M = np.hstack(rev)
            diff = exact_matvec(M, np.concatenate([f1.values, f2.values]), shift=h.values)
            resid = float(np.sqrt(exact_dot(s.weights * diff, diff)))
            stacked = np.hypot(l2_norm(f1), l2_norm(f2))
            assert stacked == pytest.approx(res.cost, rel=1e-12)
            worst = max(worst, resid / eps)
        d["sigma_min"] = smin
        d["max_residual_over_eps"] = worst
        assert smin > 0
        assert worst <= 1 + SOLVER_SLACK


# -- 13 -----------------------------------------------------------------------------


def test_c13_variable_coefficients(solved):
    with criterion(13, "FD generalized Riesz vs kernel; bump-coefficient control") as d:
        ident = coefficient_preset("identity")
        errors = []
        for cells in (64, 128, 256):
            box = fd_box_for(OMEGA1, OMEGA2, cells=cells)
            src, tgt = lattice_grid(OMEGA1, box), lattice_grid(OMEGA2, box)
            gen = assemble_generalized_stack(ident, src, tgt, box)
            worst = 0.0
            for j, comp in enumerate(gen.components, start=1):
                ref = assemble_truncated_riesz(j, src, tgt).matrix
                worst = max(worst, float(np.linalg.norm(comp.matrix - ref) / np.linalg.norm(ref)))
            errors.append(worst)
        bump = coefficient_preset("smooth-bump")
        box = fd_box_for(OMEGA2, OMEGA1, cells=64)
        src, tgt = lattice_grid(OMEGA2, box), lattice_grid(OMEGA1, box)
        A = assemble_generalized_stack(bump, src, tgt, box)
        h = src.fn(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        ratios = []
        for eps in (0.1, 0.05, 0.01):
            p = ControlProblem(A, h, eps)
            res = minimize_spectral_root(p)
            solved.append((p, res))
            ratios.append(res.residual / eps)
        d["rel_frobenius"] = "/".join(f"{e:.4f}" for e in errors)
        d["max_residual_over_eps"] = float(max(ratios))
        assert errors[0] <= 5e-2
        assert errors[0] > errors[1] > errors[2]
        assert max(ratios) <= 1 + SOLVER_SLACK


# -- 7 (uses the instances solved above) --------------------------------------------


def test_c07_energy_identity(control64, solved):
    with criterion(7, "energy identity min G = -1/2 ||f||^2") as d:
        if not solved:
            # the criterion is meaningful on its own as well
            A, _ = control64
            h = A.source.fn(lambda x: np.sin(np.pi * x))
            for eps in (1e-1, 1e-2, 1e-3, 3e-4):
                p = ControlProblem(A, h, eps)
                solved.append((p, minimize_spectral_root(p)))
        gaps = [_energy_gap(p, r) for p, r in solved if r.cost > 0]
        d["instances"] = len(gaps)
        d["max_gap"] = float(max(gaps))
        assert max(gaps) <= 1e-8


# -- 14 -----------------------------------------------------------------------------


def test_c14_cli_determinism(tmp_path):
    with criterion(14, "CLI determinism of results.csv") as d:
        import json

        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": "stability-fit",
                                   "geometry": {"I": [-2, -1], "J": [0, 1]},
                                   "resolution": 64, "modes": 20, "holdout": 20}))
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["run", str(cfg), "--out", str(out), "--seed", "5"]) == 0
            outs.append((out / "results.csv").read_bytes())
        d["bytes"] = len(outs[0])
        assert outs[0] == outs[1]

import numpy as np
import pytest

from trunctx.errors import GeometryError, ValidationError
from trunctx.extension import (
    derivative_trace,
    extend_neumann,
    harmonicity_residual,
    kappa,
    neumann_recovery_error,
    write_field_csv,
)
from trunctx.grids import BoxDomain, IntervalDomain, l2_norm, make_grid
from trunctx.operators import apply_operator, assemble_truncated_hilbert, assemble_truncated_riesz

from conftest import I_MODEL, J_MODEL, OMEGA1, OMEGA2

BOX = BoxDomain((0.0, 0.5), (1.0, 1.5))


def test_kappa():
    assert kappa(1) == pytest.approx(np.pi)
    assert kappa(2) == pytest.approx(2 * np.pi)


def test_zero_data():
    g = make_grid(I_MODEL, 16)
    field = extend_neumann(g.zeros(), make_grid(BOX, 8))
    assert np.all(field.values == 0)
    assert harmonicity_residual(field) == 0.0


def test_far_field_bump():
    # narrow bump of width 0.01 around t0 = 0; compare with mass * ln|x - t0|
    g = make_grid(IntervalDomain(-0.005, 0.005), 32)
    f = g.fn(lambda t: np.cos(np.pi * t / 0.01))
    mass = float(np.sum(g.weights * f.values))
    pts = np.array([[0.2, 0.0], [0.0, 0.3], [-1.0, 0.5], [3.0, 2.0]])
    u = extend_neumann(f, pts).values
    ref = mass * np.log(np.linalg.norm(pts, axis=1))
    np.testing.assert_allclose(u, ref, rtol=1e-3)


def test_boundary_points_near_support_rejected():
    f = make_grid(I_MODEL, 16).fn(lambda t: 1 + 0 * t)
    with pytest.raises(GeometryError):
        extend_neumann(f, np.array([[-1.5, 0.0]]))
    with pytest.raises(GeometryError):
        extend_neumann(f, np.array([[0.0, -1.0]]))
    with pytest.raises(ValidationError):
        extend_neumann(f, np.array([[0.0, 1.0, 2.0]]))


def test_zero_height_trace_matches_operator(model_grids):
    gi, gj = model_grids
    f = gi.fn(lambda t: np.sin(3 * t) + 1)
    tr = derivative_trace(f, 1, 0.0, gj)
    Hf = apply_operator(assemble_truncated_hilbert(gi, gj), f)
    np.testing.assert_allclose(tr.values, Hf.values, rtol=1e-12)


def test_zero_height_trace_matches_riesz():
    s, t = make_grid(OMEGA1, 12), make_grid(OMEGA2, 12)
    f = s.fn(lambda y1, y2: 1 + y1 * y2)
    for j in (1, 2):
        tr = derivative_trace(extend_neumann(f, np.array([[0.5, 0.5, 1.0]])), j, 0.0, t)
        ref = apply_operator(assemble_truncated_riesz(j, s, t), f)
        np.testing.assert_allclose(tr.values, ref.values, rtol=1e-12)


def test_height_trace_converges_linearly(model_grids):
    gi, gj = model_grids
    f = gi.fn(lambda t: 1 + 0 * t)
    base = derivative_trace(f, 1, 0.0, gj).values
    deltas = np.array([0.1, 0.05, 0.025])
    devs = [np.max(np.abs(derivative_trace(f, 1, d, gj).values - base)) for d in deltas]
    order = np.polyfit(np.log(deltas), np.log(devs), 1)[0]
    assert order >= 0.9


def test_vertical_trace_approximate_identity():
    g = make_grid(J_MODEL, 400).fn(lambda x: 1 + 0 * x)
    inner = make_grid(IntervalDomain(0.25, 0.75), 50)
    v = derivative_trace(g, "vertical", 0.01, inner).values / kappa(1)
    np.testing.assert_allclose(v, 1.0, atol=2e-2)


def test_horizontal_zero_height_over_support_rejected(model_grids):
    gi, _ = model_grids
    with pytest.raises(GeometryError):
        derivative_trace(gi.zeros(), 1, 0.0, gi)
    with pytest.raises(ValidationError):
        derivative_trace(gi.zeros(), 1, -0.1, gi)
    with pytest.raises(ValidationError):
        derivative_trace(gi.zeros(), 5, 0.1, gi)


def _local_residual(f, center, h):
    """Residual of the 5-point stencil of spacing h centered at a fixed point."""
    c = np.asarray(center)
    grid = make_grid(BoxDomain(c - 1.5 * h, c + 1.5 * h), 3)
    return harmonicity_residual(extend_neumann(f, grid))


@pytest.mark.parametrize("center", [(0.2, 0.6), (0.5, 1.0), (0.9, 0.3)])
def test_harmonicity_second_order(center):
    f = make_grid(I_MODEL, 64).fn(lambda t: np.exp(t))
    res = [_local_residual(f, center, h) for h in (0.1, 0.05, 0.025)]
    assert res[0] / res[1] >= 3.5
    assert res[1] / res[2] >= 3.5


def test_harmonicity_grid_residual_decreases():
    f = make_grid(I_MODEL, 64).fn(lambda t: np.exp(t))
    res = [harmonicity_residual(extend_neumann(f, make_grid(BOX, n))) for n in (16, 32, 64)]
    assert res[0] / res[1] >= 3.0 and res[1] / res[2] >= 3.5


def test_harmonicity_random_constant_stable(rng):
    gi = make_grid(I_MODEL, 64)
    consts = []
    for _ in range(5):
        f = gi.fn(rng.standard_normal(64))
        grid = make_grid(BOX, 16)
        res = harmonicity_residual(extend_neumann(f, grid))
        consts.append(res / (grid.spacing[0] ** 2 * l2_norm(f)))
    assert max(consts) < 10 * min(consts)


def test_harmonicity_needs_grid():
    f = make_grid(I_MODEL, 8).fn(lambda t: t)
    with pytest.raises(ValidationError):
        harmonicity_residual(extend_neumann(f, np.array([[0.5, 0.5]])))


def test_neumann_recovery_decreases():
    g = make_grid(J_MODEL, 512).fn(lambda x: np.sin(np.pi * x))
    errs = [neumann_recovery_error(g, d, margin=0.2) for d in (0.1, 0.05, 0.025, 0.0125)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    with pytest.raises(GeometryError):
        neumann_recovery_error(g, 0.1, margin=0.6)


def test_write_field_csv(tmp_path):
    f = make_grid(I_MODEL, 8).fn(lambda t: t)
    field = extend_neumann(f, make_grid(BOX, 3))
    path = tmp_path / "u.csv"
    write_field_csv(field, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,x2,u"
    assert len(lines) == 10
    assert float(lines[1].split(",")[2]) == field.values[0]

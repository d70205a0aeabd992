import csv
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trunctx.accurate import exact_dot, exact_matvec, two_product
from trunctx.control import ControlProblem, minimize_spectral_root
from trunctx.errors import ValidationError
from trunctx.grids import make_grid
from trunctx.io import export_operator, import_operator, read_csv, write_control_result, write_csv
from trunctx.operators import assemble_truncated_hilbert, assemble_truncated_riesz, stack_components
from trunctx.svg import Series, line_plot

from conftest import I_MODEL, J_MODEL, OMEGA1, OMEGA2

# magnitudes chosen so that no product over- or underflows
finite = st.floats(-1e100, 1e100, allow_nan=False, allow_infinity=False).filter(
    lambda x: x == 0 or abs(x) > 1e-100)


@given(a=finite, b=finite)
@settings(max_examples=100)
def test_two_product_exact(a, b):
    p, e = two_product(a, b)
    assert Fraction(float(p)) + Fraction(float(e)) == Fraction(a) * Fraction(b)


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=30))
@settings(max_examples=60)
def test_exact_dot_correctly_rounded(pairs):
    a, b = (np.array(v) for v in zip(*pairs))
    exact = sum(Fraction(x) * Fraction(y) for x, y in pairs)
    assert exact_dot(a, b) == float(exact)


def test_exact_matvec_cancellation():
    M = np.array([[1e16, 1.0, -1e16], [3.0, 0.1, 0.2]])
    v = np.array([1.0, 1.0, 1.0])
    out = exact_matvec(M, v, shift=np.array([0.0, 0.3]))
    assert out[0] == 1.0
    assert out[1] == float(Fraction(3) + Fraction(0.1) + Fraction(0.2) - Fraction(0.3))


def test_csv_roundtrip(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "b"], [[0.1, 1 / 3], [1e-300, np.nan]])
    header, data = read_csv(path)
    assert header == ["a", "b"]
    assert data[0, 0] == 0.1 and data[0, 1] == 1 / 3 and data[1, 0] == 1e-300
    assert np.isnan(data[1, 1])
    assert path.read_bytes().startswith(b"a,b\r\n")
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(ValidationError):
        read_csv(tmp_path / "e.csv")


def test_operator_roundtrip(tmp_path):
    A = assemble_truncated_hilbert(make_grid(I_MODEL, 9), make_grid(J_MODEL, 7))
    jp, cp = export_operator(A, tmp_path / "h")
    assert json.loads(jp.read_text())["kind"] == "hilbert"
    B = import_operator(jp)
    np.testing.assert_array_equal(B.entries, A.entries)
    assert B.source.same_as(A.source) and B.target.same_as(A.target)


def test_stacked_roundtrip(tmp_path):
    s, t = make_grid(OMEGA1, 3), make_grid(OMEGA2, (4, 2))
    S = stack_components([assemble_truncated_riesz(j, s, t) for j in (1, 2)])
    export_operator(S, tmp_path / "r.json")
    T = import_operator(tmp_path / "r")
    np.testing.assert_array_equal(T.matrix, S.matrix)
    assert [c.axis for c in T.components] == [1, 2]


def test_import_rejects_foreign(tmp_path):
    (tmp_path / "x.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValidationError):
        import_operator(tmp_path / "x.json")


def test_control_result_files(tmp_path):
    gi, gj = make_grid(I_MODEL, 8), make_grid(J_MODEL, 8)
    A = assemble_truncated_hilbert(gj, gi)
    res = minimize_spectral_root(ControlProblem(A, gj.fn(np.sin), 0.1))
    jp, cp = write_control_result(res, tmp_path / "c.json", tmp_path / "c.csv", {"eps": 0.1})
    data = json.loads(jp.read_text())
    assert data["eps"] == 0.1 and data["cost"] == res.cost
    with open(cp, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["field", "component", "x1", "x2", "value"]
    assert len(rows) == 17
    assert {r[0] for r in rows[1:]} == {"g", "f"}
    assert float(rows[1][4]) == res.g.values[0]


def test_svg_plot():
    svg = line_plot([Series("a<b", [1, 2, 3], [1e-1, 1e-3, 0.0])], "T & t", "x", "y", logy=True)
    assert svg.startswith("<?xml") and svg.rstrip().endswith("</svg>")
    assert "a&lt;b" in svg and "T &amp; t" in svg
    assert svg.count("<polyline") == 1
    assert "nan" not in svg.lower()
    empty = line_plot([], "none", "x", "y")
    assert "<polyline" not in empty

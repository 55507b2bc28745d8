import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homobl import coeffs
from conftest import LAYERED_SPEC, TRIG_SPEC, cos_mode_datum


def test_constant_identity_builder(ident16):
    assert ident16.lam == pytest.approx(1.0)
    eye = np.eye(2)[:, :, None, None]
    assert np.array_equal(ident16.values[3, 7], eye)


def test_layered_extrema(layered64):
    rep = coeffs.validate_ellipticity(layered64, 1.0)
    assert rep.passed
    assert rep.lam_min == pytest.approx(1.0, abs=1e-12)
    assert rep.lam_max == pytest.approx(3.0, abs=1e-12)


def test_trigonometric_min_location():
    # independent oracle: evaluate the formula on the grid and take the min
    field = coeffs.build_tensor(TRIG_SPEC, 64)
    y = coeffs.torus_nodes(64, 2)
    a = 2.0 + np.cos(2 * np.pi * y[..., 0]) * np.cos(2 * np.pi * y[..., 1])
    assert np.allclose(field.values[..., 0, 0, 0, 0], a)
    rep = coeffs.validate_ellipticity(field, 1.0)
    assert rep.lam_min == pytest.approx(a.min())
    # minimizer sits where both cosines are extremal with opposite sign,
    # i.e. at nodes nearest (0, 1/2) mod 1/2 shifts
    node = np.array(rep.worst_node) / 64.0
    half = np.mod(2 * node, 1.0)
    assert np.allclose(np.minimum(half, 1 - half), 0.0, atol=1e-12)


def test_builder_formula_matches_grid(layered64, trig64):
    for field in (layered64, trig64):
        nodes = coeffs.torus_nodes(field.resolution, field.d)
        assert np.array_equal(field.formula(nodes), field.values)


def test_nonpositive_profile_rejected():
    spec = {"kind": "layered", "axis": 1,
            "profile": {"constant": 0.5, "terms": [{"amplitude": 1.0, "mode": 1}]}}
    with pytest.raises(coeffs.BuilderError, match="not positive"):
        coeffs.build_tensor(spec, 32)


def test_coarse_resolution_rejected():
    with pytest.raises(coeffs.BuilderError, match="M >= 4"):
        coeffs.build_tensor({"kind": "constant", "value": 1.0}, 3)


def test_indefinite_tensor_fails_validation():
    mat = np.diag([1.0, -1.0])
    field = coeffs.build_tensor({"kind": "constant", "matrix": mat.tolist()}, 8)
    rep = coeffs.validate_ellipticity(field, 0.5)
    assert not rep.passed
    assert rep.lam_min < 0


def test_datum_constant_in_y():
    datum = cos_mode_datum(envelope=0.0, slow=0.4)
    x = np.array([[0.2, 0.0]])
    for y in ([[0.1, 0.9]], [[0.7, 0.3]]):
        assert coeffs.evaluate_datum(datum, x, np.array(y)) == pytest.approx(0.4)


def test_datum_cosine_zero_and_periodicity():
    datum = cos_mode_datum(mode=(1, 0))
    x = np.array([[0.0, 0.0]])
    val = coeffs.evaluate_datum(datum, x, np.array([[0.25, 0.6]]))
    assert val == pytest.approx(0.0, abs=1e-14)
    val = coeffs.evaluate_datum(datum, x, np.array([[1.25, 0.0]]))
    assert val == pytest.approx(0.0, abs=1e-14)


def test_datum_chart_error():
    datum = coeffs.DirichletDatum(
        slow=lambda x: np.zeros(x.shape[:-1] + (1,)),
        chart=lambda x: x[..., 1] == 0.0)
    with pytest.raises(coeffs.DomainError):
        coeffs.evaluate_datum(datum, np.array([[0.3, 0.5]]), np.array([[0.0, 0.0]]))


def test_tabulated_interpolation_second_order():
    series = coeffs.TrigSeries(2, 0.0, (coeffs.TrigTerm(1.0, (1, 0), "cos"),))
    errs = []
    pts = np.random.default_rng(3).uniform(0, 1, size=(200, 2))
    for m in (16, 32):
        tab = coeffs.TorusFunction(d=2, series=None,
                                   grid=series.evaluate(coeffs.torus_nodes(m, 2)))
        errs.append(np.abs(tab.evaluate(pts) - series.evaluate(pts)).max())
    assert errs[0] < 0.5 * (2 * np.pi / 16) ** 2
    assert errs[1] < 0.30 * errs[0]


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1, allow_nan=False), st.floats(0, 1, allow_nan=False),
       st.integers(-3, 3), st.integers(-3, 3))
def test_torus_interp_periodicity(y1, y2, k1, k2):
    rng = np.random.default_rng(11)
    grid = rng.standard_normal((8, 8))
    base = coeffs.torus_interp(grid, np.array([y1, y2]))
    shifted = coeffs.torus_interp(grid, np.array([y1 + k1, y2 + k2]))
    assert shifted == pytest.approx(base, rel=1e-12, abs=1e-12)


def test_tensor_csv_export(tmp_path, layered64):
    path = tmp_path / "tensor.csv"
    coeffs.tensor_to_csv(layered64, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:2] == ["y1", "y2"]
    assert len(lines) == 1 + 64 * 64
    assert len(lines[1].split(",")) == 2 + 4

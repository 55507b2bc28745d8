import numpy as np
import pytest

from homobl import cell, coeffs

LAYERED_SPEC = {
    "kind": "layered", "axis": 1,
    "profile": {"constant": 2.0, "terms": [{"amplitude": 1.0, "mode": 1}]},
}

TRIG_SPEC = {
    "kind": "trigonometric",
    "series": {"constant": 2.0,
               "terms": [{"amplitude": 1.0, "mode": [1, 1], "form": "cosprod"}]},
}


@pytest.fixture(scope="session")
def ident16():
    return coeffs.build_tensor({"kind": "constant", "value": 1.0}, 16)


@pytest.fixture(scope="session")
def layered64():
    return coeffs.build_tensor(LAYERED_SPEC, 64)


@pytest.fixture(scope="session")
def trig64():
    return coeffs.build_tensor(TRIG_SPEC, 64)


@pytest.fixture(scope="session")
def layered_correctors(layered64):
    return cell.compute_correctors(layered64)


@pytest.fixture(scope="session")
def golden_normal():
    g = (1.0 + np.sqrt(5.0)) / 2.0
    n = np.array([1.0, g])
    return tuple(n / np.linalg.norm(n))


def cos_mode_datum(mode=(1, 0), envelope=1.0, slow=0.0):
    """phi(x, y) = slow + envelope * cos(2 pi mode . y)."""
    series = coeffs.TrigSeries(2, 0.0, (coeffs.TrigTerm(1.0, tuple(mode), "cos"),))
    return coeffs.DirichletDatum(
        slow=lambda x: np.full(x.shape[:-1] + (1,), float(slow)),
        parts=(coeffs.DatumPart(
            envelope=lambda x: np.full(x.shape[:-1] + (1,), float(envelope)),
            oscillation=coeffs.TorusFunction.from_series(series)),))

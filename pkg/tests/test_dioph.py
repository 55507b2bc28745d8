import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homobl import dioph


def brute_force_kappa(n, truncation, exponent=2.0):
    best = np.inf
    for x1 in range(-truncation, truncation + 1):
        for x2 in range(-truncation, truncation + 1):
            if x1 == 0 and x2 == 0:
                continue
            best = min(best, abs(n[0] * x1 + n[1] * x2)
                       * (x1 * x1 + x2 * x2) ** (exponent / 2))
    return best


def test_axis_normal_is_resonant():
    cert = dioph.diophantine_constant((0.0, 1.0), truncation=10)
    assert cert.kappa_normal == 0.0
    xi = cert.xi_normal
    assert xi[1] == 0 and xi[0] != 0


def test_rational_normal_is_resonant():
    n = np.array([1.0, 2.0]) / np.sqrt(5.0)
    cert = dioph.diophantine_constant(tuple(n), truncation=10)
    assert cert.kappa_normal == pytest.approx(0.0, abs=1e-12)
    # minimizer is some lattice multiple of (2, -1), the orthogonal direction
    xi = cert.xi_normal
    assert xi != (0, 0) and xi[0] + 2 * xi[1] == 0


def test_golden_normal_certificate(golden_normal):
    cert = dioph.diophantine_constant(golden_normal, truncation=50)
    assert cert.kappa_normal > 0.2
    # independent brute-force oracle at small truncation
    assert brute_force_kappa(golden_normal, 12) == pytest.approx(
        dioph.diophantine_constant(golden_normal, truncation=12).kappa_normal)
    # d=2: the two conventions agree (perp is a lattice bijection)
    assert cert.kappa_tangent == pytest.approx(cert.kappa_normal, rel=1e-12)


def test_membership(golden_normal):
    cert = dioph.diophantine_constant(golden_normal, truncation=50)
    assert dioph.in_A_kappa(golden_normal, cert.kappa_normal / 2, truncation=50)
    assert not dioph.in_A_kappa((0.0, 1.0), 1e-9, truncation=50)
    for n in (golden_normal, (0.6, 0.8), (np.cos(0.3), np.sin(0.3))):
        n = np.asarray(n) / np.linalg.norm(n)
        assert not dioph.in_A_kappa(tuple(n), 1.01, truncation=50)


def test_membership_requires_positive_kappa(golden_normal):
    with pytest.raises(ValueError, match="positive"):
        dioph.in_A_kappa(golden_normal, 0.0)


angles = st.floats(0.0, 2 * np.pi, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(angles)
def test_truncation_monotonicity(theta):
    n = (np.cos(theta), np.sin(theta))
    small = dioph.diophantine_constant(n, truncation=20).kappa_normal
    large = dioph.diophantine_constant(n, truncation=40).kappa_normal
    assert large <= small + 1e-15


@settings(max_examples=25, deadline=None)
@given(angles)
def test_lattice_symmetries(theta):
    n = np.array([np.cos(theta), np.sin(theta)])
    base = dioph.diophantine_constant(tuple(n), truncation=25).kappa_normal
    for image in (-n, n[::-1], np.array([n[0], -n[1]])):
        other = dioph.diophantine_constant(tuple(image), truncation=25).kappa_normal
        assert other == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_measure_extremes():
    frac, lo, hi = dioph.measure_complement(1e-6, samples=1000, truncation=50,
                                            seed=42)
    assert frac <= 0.01
    assert lo <= frac <= hi
    frac1, _, _ = dioph.measure_complement(1.0, samples=1000, truncation=50,
                                           seed=42)
    assert frac1 >= 0.99


def test_measure_monotone_in_kappa():
    rows = dioph.measure_sweep([0.02, 0.04, 0.08], samples=500, truncation=50,
                               seed=5)
    fracs = [r["fraction"] for r in rows]
    assert fracs == sorted(fracs)


def test_measure_deterministic():
    a = dioph.measure_complement(0.05, samples=300, truncation=30, seed=9)
    b = dioph.measure_complement(0.05, samples=300, truncation=30, seed=9)
    assert a == b


def test_measure_requires_samples():
    with pytest.raises(ValueError, match="samples"):
        dioph.measure_complement(0.05, samples=10)

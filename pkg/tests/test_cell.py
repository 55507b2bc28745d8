import numpy as np
import pytest
from scipy.integrate import quad

from homobl import cell, coeffs
from conftest import LAYERED_SPEC, cos_mode_datum


@pytest.fixture(scope="module")
def ident_correctors(ident16):
    return cell.compute_correctors(ident16)


def test_constant_coefficients_degenerate(ident_correctors):
    cs = ident_correctors
    assert np.abs(cs.chi).max() <= 1e-10
    assert np.abs(cs.upsilon).max() <= 1e-10
    assert np.abs(cs.a0[..., 0, 0] - np.eye(2)).max() <= 1e-10
    assert np.abs(cs.c3).max() <= 1e-10


def test_identity_b_fields_constant(ident_correctors):
    b = ident_correctors.b_fields
    for al in range(2):
        for be in range(2):
            expected = 1.0 if al == be else 0.0
            assert np.abs(b[al, be] - expected).max() <= 1e-12


def test_layered_chi_closed_form(layered64, layered_correctors):
    # oracle: the through-flux equals the harmonic mean of the profile,
    # computed independently by adaptive quadrature
    inv_mean, _ = quad(lambda t: 1.0 / (2.0 + np.cos(2 * np.pi * t)), 0.0, 1.0)
    hmean = 1.0 / inv_mean
    assert hmean == pytest.approx(np.sqrt(3.0), abs=1e-12)
    chi1 = layered_correctors.chi[0][..., 0, 0]
    m = layered64.resolution
    h = 1.0 / m
    a = layered64.values[..., 0, 0, 0, 0]
    a_face = 2 * a * np.roll(a, -1, 0) / (a + np.roll(a, -1, 0))
    grad_face = (np.roll(chi1, -1, axis=0) - chi1) / h
    assert np.abs(grad_face - (hmean / a_face - 1.0)).max() < 1e-9
    assert np.abs(layered_correctors.chi[1]).max() <= 1e-12


def test_layered_effective_tensor(layered_correctors):
    a0 = layered_correctors.a0[..., 0, 0]
    assert a0[0, 0] == pytest.approx(np.sqrt(3.0), abs=1e-10)
    assert a0[1, 1] == pytest.approx(2.0, abs=1e-12)
    assert abs(a0[0, 1]) + abs(a0[1, 0]) <= 1e-12


def test_grid_self_convergence():
    spec = {"kind": "scalar-isotropic",
            "series": {"constant": 2.0,
                       "terms": [{"amplitude": 1.0, "mode": [1, 1],
                                  "form": "cosprod"}]}}
    sols = {}
    for m in (16, 32, 64):
        field = coeffs.build_tensor(spec, m)
        chi, _ = cell.solve_cell(field)
        sols[m] = chi[0][..., 0, 0]
    # compare on the common coarse lattice
    e16 = np.abs(sols[16] - sols[64][::4, ::4]).max()
    e32 = np.abs(sols[32] - sols[64][::2, ::2]).max()
    assert e32 < 0.35 * e16
    assert e16 < 1e-3


def test_effective_tensor_symmetric(trig64):
    cs = cell.compute_correctors(trig64, with_second_order=False)
    a0 = cs.a0[..., 0, 0]
    assert abs(a0[0, 1] - a0[1, 0]) <= 1e-8


def test_mean_b_equals_effective_tensor(trig64):
    chi, _ = cell.solve_cell(trig64)
    a0 = cell.homogenized_tensor(trig64, chi)
    b, ups, _ = cell.solve_upsilon(trig64, chi, a0)
    mean_b = b.mean(axis=(2, 3))
    assert np.abs(mean_b - a0).max() <= 1e-8


def test_zero_mean_constraints(layered_correctors):
    assert np.abs(layered_correctors.chi.mean(axis=(1, 2))).max() <= 1e-12
    assert np.abs(layered_correctors.upsilon.mean(axis=(2, 3))).max() <= 1e-10


def test_layered_upsilon_one_dimensional(layered_correctors):
    ups = layered_correctors.upsilon
    assert np.abs(ups - ups[:, :, :, :1]).max() <= 1e-9


def test_even_profile_kills_third_order(layered_correctors):
    assert np.abs(layered_correctors.c3).max() <= 1e-10


def test_skew_profile_third_order_converges():
    spec = {"kind": "layered", "axis": 1,
            "profile": {"constant": 2.0,
                        "terms": [{"amplitude": 1.0, "mode": 1},
                                  {"amplitude": 0.5, "mode": 2, "form": "sin"}]}}
    c = {}
    for m in (32, 64, 128):
        cs = cell.compute_correctors(coeffs.build_tensor(spec, m))
        c[m] = cs.c3[0, 0, 0, 0, 0]
    assert c[128] != 0.0
    assert abs(c[64] - c[128]) < 0.35 * abs(c[32] - c[128]) + 1e-12
    assert abs(c[32] - c[128]) < 1e-3


def test_residuals_below_tolerance(layered_correctors):
    assert max(layered_correctors.residuals["chi"]) <= 1e-10
    assert max(layered_correctors.residuals["upsilon"]) <= 1e-10


def test_effective_tensor_ellipticity(layered64, layered_correctors):
    # Rayleigh quotients of A0 stay inside the medium's spectral bounds
    a0 = layered_correctors.a0[..., 0, 0]
    eigs = np.linalg.eigvalsh(0.5 * (a0 + a0.T))
    rep = coeffs.validate_ellipticity(layered64, layered64.lam)
    assert eigs.min() >= rep.lam_min - 1e-10
    assert eigs.max() <= rep.lam_max + 1e-10


# --- expansion assembly ----------------------------------------------------

def _domain_grid(n):
    x = np.linspace(0.0, 1.0, n)
    coords = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
    return coords, (x[1] - x[0], x[1] - x[0])


def test_expansion_order_zero_identity(layered_correctors):
    coords, spacing = _domain_grid(17)
    u0 = (coords[..., 0] ** 2)[..., None]
    out = cell.assemble_expansion(u0, None, layered_correctors, 0.1, 0,
                                  coords, spacing, periodic0=False)
    assert np.array_equal(out, u0)


def test_expansion_identity_medium_unchanged(ident_correctors):
    coords, spacing = _domain_grid(17)
    u0 = np.sin(coords[..., 0])[..., None]
    out = cell.assemble_expansion(u0, None, ident_correctors, 0.05, 1,
                                  coords, spacing, periodic0=False)
    assert np.abs(out - u0).max() <= 1e-10


def test_expansion_affine_second_order(layered_correctors):
    coords, spacing = _domain_grid(17)
    u0 = (2.0 * coords[..., 0] - 0.7 * coords[..., 1])[..., None]
    eps = 1.0 / 8.0
    out1 = cell.assemble_expansion(u0, None, layered_correctors, eps, 1,
                                   coords, spacing, periodic0=False)
    out2 = cell.assemble_expansion(u0, None, layered_correctors, eps, 2,
                                   coords, spacing, periodic0=False)
    # second-order contribution vanishes for affine slow fields
    assert np.abs(out2 - out1).max() <= 1e-10
    # first-order term is the pure cell oscillation chi . grad u0
    chi_at = layered_correctors.chi_at(np.mod(coords / eps, 1.0))
    expected = u0 + eps * (chi_at[..., 0, :, 0] * 2.0 - chi_at[..., 1, :, 0] * 0.7)
    assert np.abs(out1 - expected).max() <= 1e-12


def test_expansion_rejects_high_order(layered_correctors):
    coords, spacing = _domain_grid(9)
    u0 = np.zeros((9, 9, 1))
    with pytest.raises(ValueError, match="order"):
        cell.assemble_expansion(u0, None, layered_correctors, 0.1, 3,
                                coords, spacing)

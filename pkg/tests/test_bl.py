import numpy as np
import pytest

from homobl import bl, coeffs
from conftest import TRIG_SPEC


def scalar_datum(fn):
    return lambda y: fn(np.asarray(y, float))


# --- rotation ---------------------------------------------------------------

def test_rotate_identity_vertical(ident16):
    strip = bl.rotate_to_strip(ident16, (0.0, 1.0),
                               scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0])))
    assert strip.period == pytest.approx(1.0)
    z = np.array([[0.3, 0.8], [0.1, 2.0]])
    assert np.allclose(strip.coeff(z)[..., 0, 0, 0, 0], 1.0)
    assert np.allclose(strip.coeff(z)[..., 0, 1, 0, 0], 0.0)


def test_rotate_identity_diagonal(ident16):
    n = np.array([1.0, 1.0]) / np.sqrt(2.0)
    strip = bl.rotate_to_strip(ident16, tuple(n), scalar_datum(lambda y: y[..., 0]))
    assert strip.period == pytest.approx(np.sqrt(2.0))
    z = np.array([[0.2, 0.5]])
    # isotropic media are rotation invariant
    assert np.allclose(strip.coeff(z)[0, ..., 0, 0], np.eye(2))


def test_rotate_layered_no_rotation(layered64):
    strip = bl.rotate_to_strip(layered64, (0.0, 1.0),
                               scalar_datum(lambda y: 0 * y[..., 0]))
    z1 = np.linspace(0, 1, 9)
    z = np.stack([z1, 0.4 * np.ones_like(z1)], axis=-1)
    got = strip.coeff(z)[..., 0, 0, 0, 0]
    assert np.allclose(got, 2.0 + np.cos(2 * np.pi * z1), atol=1e-12)


def test_rotate_irrational_classification(ident16, golden_normal):
    with pytest.raises(bl.ClassificationError):
        bl.rotate_to_strip(ident16, golden_normal, scalar_datum(lambda y: y[..., 0]))


# --- rational strip ---------------------------------------------------------

def test_strip_constant_datum(ident16):
    prob = bl.BLProblem(a_field=ident16, n=(0.0, 1.0),
                        datum=scalar_datum(lambda y: 0 * y[..., 0] + 0.7),
                        height=2.0, tangential_resolution=32)
    sol = bl.solve_bl(prob)
    assert np.abs(sol.field - 0.7).max() <= 1e-10
    assert sol.u_inf[0] == pytest.approx(0.7, abs=1e-12)
    assert sol.decay.max() <= 1e-16
    assert not sol.truncation_warning


def test_strip_laplace_mode_oracle(ident16):
    prob = bl.BLProblem(a_field=ident16, n=(0.0, 1.0),
                        datum=scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0])),
                        height=1.5, tangential_resolution=96)
    sol = bl.solve_bl(prob)
    t = sol.t_samples
    sel = (t >= 0.1) & (t <= 0.5)
    exact = np.pi * np.exp(-4 * np.pi * t[sel])
    assert np.abs((sol.decay[sel] - exact) / exact).max() < 0.02
    assert abs(sol.u_inf[0]) < 1e-10
    assert sol.decay_class == "exponential"


def test_strip_linearity_and_shift(ident16):
    base = scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0]))
    prob = bl.BLProblem(a_field=ident16, n=(0.0, 1.0),
                        datum=scalar_datum(
                            lambda y: np.cos(2 * np.pi * y[..., 0]) + 0.3),
                        height=1.5, tangential_resolution=48)
    sol = bl.solve_bl(prob)
    assert sol.u_inf[0] == pytest.approx(0.3, abs=1e-8)
    assert sol.decay_class == "exponential"

    # random superposition
    rng = np.random.default_rng(7)
    c = rng.standard_normal(2)
    d1 = scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0]))
    d2 = scalar_datum(lambda y: np.sin(4 * np.pi * y[..., 0]))
    combo = scalar_datum(lambda y: c[0] * np.cos(2 * np.pi * y[..., 0])
                         + c[1] * np.sin(4 * np.pi * y[..., 0]))
    kw = dict(a_field=ident16, n=(0.0, 1.0), height=1.0,
              tangential_resolution=48)
    s1 = bl.solve_bl(bl.BLProblem(datum=d1, **kw))
    s2 = bl.solve_bl(bl.BLProblem(datum=d2, **kw))
    sc = bl.solve_bl(bl.BLProblem(datum=combo, **kw))
    assert np.abs(c[0] * s1.field + c[1] * s2.field - sc.field).max() < 1e-8


def test_thin_truncation_ratio_ceiling(ident16):
    # for wall-concentrated layer energy the mid-height tail ratio caps at
    # 1/(2 cosh(kL)) < 1/2, so even unresolved solves approach the warning
    # threshold only from below
    prob = bl.BLProblem(a_field=ident16, n=(0.0, 1.0),
                        datum=scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0])),
                        height=0.02, tangential_resolution=48)
    sol = bl.solve_bl(prob)
    ratio = sol.decay[len(sol.decay) // 2] / sol.decay[0]
    assert 0.4 < ratio <= 0.5
    assert not sol.truncation_warning


def test_tail_unreliable_on_truncation_warning(ident16):
    from dataclasses import replace
    prob = bl.BLProblem(a_field=ident16, n=(0.0, 1.0),
                        datum=scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0])),
                        height=1.0, tangential_resolution=32)
    sol = replace(bl.solve_bl(prob), truncation_warning=True)
    with pytest.raises(bl.TailUnreliableError):
        bl.tail_constant(sol)


def test_decay_profile_nonincreasing(ident16):
    prob = bl.BLProblem(a_field=ident16, n=(0.0, 1.0),
                        datum=scalar_datum(
                            lambda y: np.cos(2 * np.pi * y[..., 0])
                            + 0.5 * np.sin(4 * np.pi * y[..., 0])),
                        height=1.0, tangential_resolution=48)
    sol = bl.solve_bl(prob)
    assert np.all(np.diff(sol.decay) <= 1e-18)


# --- quasiperiodic lifting --------------------------------------------------

def test_lift_identity(ident16, golden_normal):
    enl = bl.lift_quasiperiodic(ident16, golden_normal,
                                scalar_datum(lambda y: 0 * y[..., 0]))
    th = np.random.default_rng(0).uniform(0, 2 * np.pi, (5, 2))
    b = enl.coeff(th, np.array([0.3, 1.0, 2.0, 7.0, 0.0]))
    assert np.allclose(b[..., 0, 0, 0, 0], 1.0)
    n = np.asarray(golden_normal)
    assert np.allclose(enl.lam, [-n[1], n[0]])


def test_lift_consistent_with_rotation(layered64):
    n = (0.0, 1.0)
    datum = scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0]))
    strip = bl.rotate_to_strip(layered64, n, datum)
    enl = bl.lift_quasiperiodic(layered64, n, datum)
    z1 = np.linspace(0.0, 2.0, 17)
    z2 = np.linspace(0.0, 1.5, 17)
    z = np.stack([z1, z2], axis=-1)
    direct = strip.coeff(z)
    lifted = enl.coeff(bl.ANGLE_SCALE * z1[:, None] * enl.lam,
                       bl.ANGLE_SCALE * z2)
    assert np.abs(direct - lifted).max() < 1e-12


def test_lift_single_mode_trace(ident16, golden_normal):
    m = (2, -1)
    datum = scalar_datum(
        lambda y: np.cos(2 * np.pi * (m[0] * y[..., 0] + m[1] * y[..., 1])))
    enl = bl.lift_quasiperiodic(ident16, golden_normal, datum)
    th = np.random.default_rng(1).uniform(0, 2 * np.pi, (40, 2))
    assert np.allclose(enl.trace(th), np.cos(m[0] * th[..., 0] + m[1] * th[..., 1]),
                       atol=1e-12)


# --- enlarged solves ----------------------------------------------------------

def test_enlarged_constant_trace(ident16, golden_normal):
    enl = bl.lift_quasiperiodic(ident16, golden_normal,
                                scalar_datum(lambda y: 0 * y[..., 0] + 1.3))
    sol = bl.solve_enlarged(enl, 0.0, 8.0, theta_modes=3)
    assert sol.u_inf[0] == pytest.approx(1.3, abs=1e-12)
    assert np.abs(sol.field - 1.3).max() <= 1e-12
    assert sol.decay_class == "exponential"


def test_enlarged_single_mode(ident16, golden_normal):
    m = (1, 1)
    enl = bl.lift_quasiperiodic(
        ident16, golden_normal,
        scalar_datum(lambda y: np.cos(2 * np.pi * (y[..., 0] + y[..., 1]))))
    lam = enl.lam
    rate = abs(lam[0] * m[0] + lam[1] * m[1])
    sol = bl.solve_enlarged(enl, 0.0, 12.0 / rate, theta_modes=3,
                            ht=0.05 / rate)
    G = sol.field.shape[0]
    th = 2 * np.pi * np.arange(G) / G
    t1, t2 = np.meshgrid(th, th, indexing="ij")
    exact = (np.cos(m[0] * t1 + m[1] * t2)[..., None]
             * np.exp(-rate * sol.t_samples)[None, None, :])[..., None] \
        .reshape(sol.field.shape)
    assert np.abs(sol.field - exact).max() < 1e-4
    assert sol.decay_class == "exponential"
    assert sol.fit["exp_rate"] == pytest.approx(2 * rate, rel=0.02)


def test_enlarged_multimode_mean(ident16, golden_normal):
    enl = bl.lift_quasiperiodic(
        ident16, golden_normal,
        scalar_datum(lambda y: 0.5 + np.cos(2 * np.pi * y[..., 0])
                     + 0.3 * np.cos(2 * np.pi * (y[..., 0] - y[..., 1]))
                     + 0.2 * np.sin(2 * np.pi * (3 * y[..., 0] + 2 * y[..., 1]))))
    sol = bl.solve_enlarged(enl, 0.0, 60.0, theta_modes=4)
    assert sol.u_inf[0] == pytest.approx(0.5, abs=1e-6)


def test_enlarged_resonant_mode_is_boundary_constant(ident16):
    # a trace mode resonant with the tangent is constant along the physical
    # boundary line: the extension is exact and carries no tail energy
    n = (1.0, 0.0)   # lam = (0, 1): mode (1, 0) has lam . m = 0
    enl = bl.lift_quasiperiodic(ident16, n,
                                scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0])))
    sol = bl.solve_enlarged(enl, 0.0, 10.0, theta_modes=3)
    G = sol.field.shape[0]
    th = 2 * np.pi * np.arange(G) / G
    assert np.abs(sol.field[..., 0] - np.cos(th)[:, None, None]).max() < 1e-8
    assert sol.decay.max() <= 1e-10


def test_unobserved_decay_classified_none(ident16, golden_normal):
    # window far shorter than the slowest mode scale: the truncated tail
    # energy is nearly linear in t and fits neither straight-line model
    enl = bl.lift_quasiperiodic(
        ident16, golden_normal,
        scalar_datum(lambda y: np.cos(2 * np.pi * (5 * y[..., 0] + 8 * y[..., 1]))))
    sol = bl.solve_enlarged(enl, 0.0, 2.0, theta_modes=8, ht=0.01)
    assert sol.decay_class == "none"
    assert sol.fit["exp_r2"] < 0.99
    assert sol.fit["pow_r2"] < 0.95


def test_polynomial_decay_classification(ident16, golden_normal):
    # log-spaced rate ladder with rate-weighted amplitudes: the tail energy
    # mimics a power law across the observation window
    lam = np.array([-golden_normal[1], golden_normal[0]])
    modes = [(5, 8), (3, 5), (2, 3), (1, 2), (4, 6), (1, 1), (2, 4), (0, 1),
             (2, 2), (4, 8), (0, 2), (4, 4), (5, 5)]

    def datum(y):
        out = np.zeros(y.shape[:-1])
        for m1, m2 in modes:
            r = abs(lam[0] * m1 + lam[1] * m2)
            out += np.sqrt(r) * np.cos(2 * np.pi * (m1 * y[..., 0] + m2 * y[..., 1]))
        return out

    enl = bl.lift_quasiperiodic(ident16, golden_normal, datum)
    sol = bl.solve_enlarged(enl, 0.0, 25.0, theta_modes=8)
    assert sol.decay_class == "polynomial"
    assert sol.fit["pow_r2"] >= 0.95
    assert sol.fit["exp_r2"] < 0.99
    assert sol.fit["pow_exponent"] > 0


# --- tails -------------------------------------------------------------------

def test_tail_offset_independence_diophantine(ident16, golden_normal):
    prob = bl.BLProblem(
        a_field=ident16, n=golden_normal,
        datum=scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0])
                           + 0.4 * np.cos(2 * np.pi * (y[..., 0] + y[..., 1]))),
        theta_modes=4)
    sol = bl.solve_bl(prob)
    report = bl.tail_constant(sol, offset_prime=0.37)
    assert report.offset_sensitivity <= 1e-6


def test_tail_offset_dependence_rational():
    field = coeffs.build_tensor(TRIG_SPEC, 64)
    prob = bl.BLProblem(a_field=field, n=(0.0, 1.0),
                        datum=scalar_datum(lambda y: np.cos(2 * np.pi * y[..., 0])),
                        height=6.0, tangential_resolution=64)
    sol = bl.solve_bl(prob)
    report = bl.tail_constant(sol, offset_prime=0.5)
    assert report.offset_sensitivity > 1e-3


def test_tail_constant_datum_sensitivity(ident16):
    prob = bl.BLProblem(a_field=ident16, n=(0.0, 1.0),
                        datum=scalar_datum(lambda y: 0 * y[..., 0] + 0.4),
                        height=1.0, tangential_resolution=32)
    report = bl.tail_constant(bl.solve_bl(prob), offset_prime=0.25)
    assert report.offset_sensitivity == pytest.approx(0.0, abs=1e-12)


# --- harmonic-extension oracle ----------------------------------------------

def test_poisson_kernel_unit_mass():
    val = bl.poisson_kernel_reference(lambda t: 1.0, 0.7)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_poisson_kernel_cosine():
    val = bl.poisson_kernel_reference(lambda t: np.cos(2 * np.pi * t), 0.5)
    assert val == pytest.approx(np.exp(-np.pi), abs=1e-10)


def test_poisson_kernel_large_height_mean():
    # zero-mean data: the extension dies exponentially fast with height
    v1 = bl.poisson_kernel_reference(lambda t: np.cos(2 * np.pi * t), 1.0)
    v3 = bl.poisson_kernel_reference(lambda t: np.cos(2 * np.pi * t), 3.0)
    assert abs(v3) < 1e-7
    assert abs(v3) < abs(v1) * 1e-3


def test_poisson_kernel_rejects_nonpositive_height():
    with pytest.raises(ValueError):
        bl.poisson_kernel_reference(lambda t: 1.0, 0.0)

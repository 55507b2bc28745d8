"""Half-space boundary layers: periodic strips and quasiperiodic liftings.

A boundary-layer problem lives on the half space {y . n > a} with coefficients
from a periodic medium and boundary trace w(y) on the bounding line.  Two
solution paths:

* rational normal: after rotating to strip coordinates z = (tangential,
  normal) the coefficients and trace are periodic in z1, and the problem is
  solved on one tangential period x [a, a+L] with a homogeneous conormal
  condition at the truncated top.  The tail energy F(t) = int_{z2>t} |grad V|^2
  decays exponentially.

* irrational normal: the rotated coefficients are quasiperiodic in z1 with
  frequency lambda = n^perp.  The solve is lifted to the enlarged cylinder
  T^2 x [a, a+L] with the degenerate gradient D = (lambda . grad_theta, d_t);
  the enlarged torus uses angle variables theta in [0, 2pi)^2 and the t axis
  is scaled accordingly (t = 2 pi z2), so a Fourier mode cos(m . theta) of the
  trace decays exactly like exp(-|lambda . m| t) when the medium is constant.
  Small divisors lambda . m control the conditioning, hence the Diophantine
  certificates from :mod:`homobl.dioph`.

The tail constant U_inf is the average of the solution over the truncated top;
it equals the homogenized boundary value of the trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .coeffs import TensorField
from .fd import BoxOperator, SolverError, krylov_solve

ANGLE_SCALE = 2.0 * np.pi


class ClassificationError(ValueError):
    """Normal not recognizably rational; use the quasiperiodic path."""


class TailUnreliableError(RuntimeError):
    """Tail constant requested from a truncated, non-decayed solve."""


# ---------------------------------------------------------------------------
# problems and solutions
# ---------------------------------------------------------------------------

@dataclass
class BLProblem:
    """Half-space problem: medium, unit normal, offset, boundary trace.

    ``datum`` maps torus points (..., 2) to (..., n_comp) trace values.
    ``height`` is the physical truncation height (None selects the default
    and enables the automatic doubling rule).
    """
    a_field: TensorField
    n: tuple
    datum: Callable
    offset: float = 0.0
    height: Optional[float] = None
    tangential_resolution: int = 96
    theta_modes: int = 8
    rtol: float = 1e-10
    maxiter: int = 10_000

    def with_offset(self, offset):
        return replace(self, offset=float(offset))


@dataclass
class BLSolution:
    problem: BLProblem
    path: str                      # "rational" | "quasiperiodic"
    field: np.ndarray
    t_samples: np.ndarray          # heights (physical units for strips,
    u_inf: np.ndarray              # t-units for the enlarged system)
    decay: np.ndarray
    decay_class: str
    fit: dict
    truncation_warning: bool
    height: float
    residual: float
    iterations: int


@dataclass
class TailReport:
    u_inf: np.ndarray
    decay_class: str
    fit: dict
    offset_sensitivity: Optional[float] = None


# ---------------------------------------------------------------------------
# decay diagnostics
# ---------------------------------------------------------------------------

def _linear_fit(x, y):
    coeffs = np.polyfit(x, y, 1)
    resid = y - np.polyval(coeffs, x)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid**2).sum() / ss_tot if ss_tot > 0 else 1.0
    return float(coeffs[0]), float(coeffs[1]), float(r2), float(np.sqrt((resid**2).mean()))


def fit_exponential(t, F, window=(1.0 / 3.0, 2.0 / 3.0)):
    """Straight-line fit of log F over a relative window of [t0, t1]."""
    t = np.asarray(t, float)
    F = np.asarray(F, float)
    keep = F > max(F.max(), 0.0) * 1e-13
    if keep.sum() < 3:
        return {"rate": None, "r2": None, "rms": None}
    t, F = t[keep], F[keep]
    lo = t[0] + window[0] * (t[-1] - t[0])
    hi = t[0] + window[1] * (t[-1] - t[0])
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 3:
        sel = slice(None)
    slope, intercept, r2, rms = _linear_fit(t[sel], np.log(F[sel]))
    return {"rate": -slope, "intercept": intercept, "r2": r2, "rms": rms}


def classify_decay(t, F, scale=None):
    """Exponential / polynomial / none, by goodness of the two straight fits.

    Exponential when the log-linear fit has R^2 >= 0.99; otherwise polynomial
    when the log-log fit has R^2 >= 0.95; otherwise none.  ``scale`` is an
    energy scale below which the tail counts as identically zero (fitting
    solver roundoff would misclassify constant data).
    """
    t = np.asarray(t, float)
    F = np.asarray(F, float)
    total = F.max(initial=0.0)
    floor = 1e-16 * scale if scale else 0.0
    if total <= floor or F[0] <= floor:
        return "exponential", {"note": "zero tail energy", "r2": 1.0}
    keep = F > total * 1e-12
    span = t[keep]
    if len(span) < 5:
        return "exponential", {"note": "immediate decay", "r2": 1.0}
    lo = span[0] + 0.05 * (span[-1] - span[0])
    hi = span[0] + 0.95 * (span[-1] - span[0])
    sel = keep & (t >= lo) & (t <= hi)
    ts, Fs = t[sel], F[sel]
    slope_e, _, r2_exp, _ = _linear_fit(ts, np.log(Fs))
    fit = {"exp_rate": -slope_e, "exp_r2": r2_exp}
    s = ts - t[0]
    pos = s > 0
    if pos.sum() >= 3:
        slope_p, _, r2_pow, _ = _linear_fit(np.log(s[pos]), np.log(Fs[pos]))
        fit.update({"pow_exponent": -slope_p, "pow_r2": r2_pow})
    else:
        r2_pow = -np.inf
    if r2_exp >= 0.99:
        return "exponential", fit
    if r2_pow >= 0.95:
        return "polynomial", fit
    return "none", fit


def _tail_profile(per_slab):
    """F at slab interfaces from nonnegative per-slab energies (exactly
    nonincreasing by construction)."""
    return np.concatenate([np.cumsum(per_slab[::-1])[::-1], [0.0]])


# ---------------------------------------------------------------------------
# rational path
# ---------------------------------------------------------------------------

def rational_direction(n, max_denominator=1000, tol=1e-9):
    """Primitive integer vector parallel to n, or None."""
    n = np.asarray(n, float)
    if abs(n[0]) < tol:
        return np.array([0, 1 if n[1] > 0 else -1])
    if abs(n[1]) < tol:
        return np.array([1 if n[0] > 0 else -1, 0])
    from fractions import Fraction

    frac = Fraction(float(n[1] / n[0])).limit_denominator(max_denominator)
    p = np.array([frac.denominator, frac.numerator])
    if abs(n[0] * p[1] - n[1] * p[0]) > tol * np.linalg.norm(p):
        return None
    if p[0] * n[0] + p[1] * n[1] < 0:
        p = -p
    g = math.gcd(int(abs(p[0])), int(abs(p[1])))
    return p // max(g, 1)


@dataclass
class StripProblem:
    """Rotated half-space problem, periodic in the tangential coordinate."""
    coeff: Callable                 # z pts (..., 2) -> (..., 2, 2, N, N)
    trace: Callable                 # z1 (...,) -> (..., N)
    period: float
    rotation: np.ndarray            # rows: tangent, normal
    n_comp: int


def rotate_to_strip(a_field: TensorField, n, datum) -> StripProblem:
    """Rotate medium and trace into strip coordinates for a rational normal.

    Raises ClassificationError when no integer direction matches n within the
    continued-fraction tolerance (denominator <= 1000).
    """
    n = np.asarray(n, float)
    n = n / np.linalg.norm(n)
    p = rational_direction(n)
    if p is None:
        raise ClassificationError(
            f"normal {tuple(n)} has no integer direction with denominator <= 1000; "
            "use the quasiperiodic path")
    tangent = np.array([-n[1], n[0]])
    rot = np.stack([tangent, n])    # z = rot @ y
    period = float(np.linalg.norm(p))
    n_comp = a_field.n_comp

    def coeff(z):
        z = np.asarray(z, float)
        y = z[..., 0, None] * tangent + z[..., 1, None] * n
        a = a_field.evaluate(y)
        return np.einsum("ag,bd,...gdij->...abij", rot, rot, a)

    def trace(z1, offset=0.0):
        z1 = np.asarray(z1, float)
        y = z1[..., None] * tangent + offset * n
        return np.atleast_1d(datum(y))

    return StripProblem(coeff=coeff, trace=trace, period=period, rotation=rot,
                        n_comp=n_comp)


def solve_strip_rational(strip: StripProblem, offset, height, resolution=96,
                         rtol=1e-10, maxiter=10_000, problem=None) -> BLSolution:
    """Solve the periodic strip on one tangential period x [a, a+L].

    Dirichlet trace at the bottom, periodic laterally, zero conormal flux at
    the truncated top.  U_inf is the tangential average of the top trace and
    F(t) the tail energy of the gradient.
    """
    P = strip.period
    m1 = int(resolution)
    h1 = P / m1
    m2 = max(8, int(round(height / h1)))
    h2 = height / m2
    z1 = np.arange(m1) * h1
    z2 = offset + np.arange(m2 + 1) * h2
    Z = np.stack(np.meshgrid(z1, z2, indexing="ij"), axis=-1)
    a_nodes = strip.coeff(Z)
    op = BoxOperator(a_nodes, (h1, h2), periodic0=True,
                     bc_bottom="dirichlet", bc_top="neumann")
    fixed = np.zeros((m1, m2 + 1, strip.n_comp))
    psi = strip.trace(z1, offset)
    fixed[:, 0, :] = psi.reshape(m1, strip.n_comp)
    V, residual, its = op.solve(fixed, rtol=rtol, maxiter=maxiter)

    u_inf = V[:, -1, :].mean(axis=0)
    # tail energy per z2-slab from face gradients averaged to cell centers
    g1f = (np.roll(V, -1, axis=0) - V) / h1
    g1c = 0.5 * (g1f[:, 1:] + g1f[:, :-1])
    g2f = (V[:, 1:] - V[:, :-1]) / h2
    g2c = 0.5 * (g2f + np.roll(g2f, -1, axis=0))
    per_slab = ((g1c**2 + g2c**2).sum(axis=(0, 2))) * h1 * h2
    F = _tail_profile(per_slab)
    t = z2
    scale = float((V**2).mean()) + 1e-300
    decay_class, fit = classify_decay(t, F, scale=scale)
    warn = bool(F[0] > 1e-16 * scale and F[len(F) // 2] / F[0] > 0.5)
    return BLSolution(problem=problem, path="rational", field=V, t_samples=t,
                      u_inf=u_inf, decay=F, decay_class=decay_class, fit=fit,
                      truncation_warning=warn, height=float(height),
                      residual=residual, iterations=its)


# ---------------------------------------------------------------------------
# quasiperiodic path
# ---------------------------------------------------------------------------

@dataclass
class EnlargedProblem:
    """Enlarged cylinder problem on T^2 x R_+ in angle units (theta in
    [0, 2pi)^2, t = 2 pi z2)."""
    coeff: Callable                 # (theta (..., 2), t (...,)) -> tensor
    trace: Callable                 # theta (..., 2) -> (..., N)
    lam: np.ndarray                 # tangential frequency vector n^perp
    n_comp: int


def lift_quasiperiodic(a_field: TensorField, n, datum, offset=0.0) -> EnlargedProblem:
    """Lift the rotated half-space problem onto the enlarged torus.

    The physical line is recovered through theta = 2 pi lambda z1,
    t = 2 pi z2: coeff(2 pi lambda z1, 2 pi z2) equals the rotated
    coefficient at z exactly, and a unit-frequency trace mode maps to one
    enlarged Fourier mode.
    """
    n = np.asarray(n, float)
    n = n / np.linalg.norm(n)
    tangent = np.array([-n[1], n[0]])
    rot = np.stack([tangent, n])

    def coeff(theta, t):
        theta = np.asarray(theta, float)
        t = np.asarray(t, float)
        y = theta / ANGLE_SCALE + n * t[..., None] / ANGLE_SCALE
        a = a_field.evaluate(y)
        return np.einsum("ag,bd,...gdij->...abij", rot, rot, a)

    def trace(theta):
        theta = np.asarray(theta, float)
        y = theta / ANGLE_SCALE + n * float(offset)
        return np.atleast_1d(datum(y))

    return EnlargedProblem(coeff=coeff, trace=trace, lam=tangent,
                           n_comp=a_field.n_comp)


class _EnlargedOperator:
    """Degenerate operator -D.(B D .) on the theta-grid x t-grid.

    Spectral lambda-derivative in theta (Nyquist row zeroed so the operator
    stays exactly symmetric), flux-form second-order differences in t, and a
    per-mode tridiagonal preconditioner built from the theta-averaged
    coefficient profiles: preconditioned CG then converges at a rate set by
    the coefficient contrast, independent of the small divisors.
    """

    def __init__(self, enlarged: EnlargedProblem, a_t, height, grid_size, nt):
        self.G = int(grid_size)
        self.nt = int(nt)
        self.ht = height / nt
        self.n_comp = enlarged.n_comp
        self.lam = np.asarray(enlarged.lam, float)
        G = self.G
        modes = np.fft.fftfreq(G, d=1.0 / G)
        modes[G // 2] = 0.0 if G % 2 == 0 else modes[G // 2]
        m1, m2 = np.meshgrid(modes, modes, indexing="ij")
        self.lmode = self.lam[0] * m1 + self.lam[1] * m2
        theta = ANGLE_SCALE * np.arange(G) / G
        th = np.stack(np.meshgrid(theta, theta, indexing="ij"), axis=-1)
        t_nodes = a_t + np.arange(nt + 1) * self.ht
        self.t_nodes = t_nodes
        b = enlarged.coeff(th[:, :, None, :], np.broadcast_to(t_nodes, (G, G, nt + 1)))
        self.b11 = b[..., 0, 0, :, :]
        self.b22 = b[..., 1, 1, :, :]
        self.b12 = b[..., 0, 1, :, :]
        self.b21 = b[..., 1, 0, :, :]
        self.cross = bool(max(np.abs(self.b12).max(), np.abs(self.b21).max()) > 0)
        lo, hi = self.b22[..., :-1, :, :], self.b22[..., 1:, :, :]
        f = 0.5 * (lo + hi)
        for i in range(self.n_comp):
            pos = (lo[..., i, i] > 0) & (hi[..., i, i] > 0)
            f[..., i, i] = np.where(
                pos, 2 * lo[..., i, i] * hi[..., i, i] / (lo[..., i, i] + hi[..., i, i]),
                f[..., i, i])
        self.b22f = f
        self.b21f = 0.5 * (self.b21[..., :-1, :, :] + self.b21[..., 1:, :, :])
        sym = np.allclose(self.b11, np.swapaxes(self.b11, -1, -2))
        sym &= np.allclose(self.b22, np.swapaxes(self.b22, -1, -2))
        self.symmetric = bool(sym and not self.cross)

    def s_theta(self, V):
        Vh = np.fft.fft2(V, axes=(0, 1))
        Vh *= 1j * self.lmode[..., None, None]
        return np.real(np.fft.ifft2(Vh, axes=(0, 1)))

    def apply_full(self, V):
        ht = self.ht
        s = self.s_theta(V)
        phi1 = np.einsum("...ij,...j->...i", self.b11, s)
        gt = (V[..., 1:, :] - V[..., :-1, :]) / ht
        if self.cross:
            gt_nodes = np.zeros_like(V)
            gt_nodes[..., 1:-1, :] = 0.5 * (gt[..., 1:, :] + gt[..., :-1, :])
            gt_nodes[..., 0, :] = gt[..., 0, :]
            gt_nodes[..., -1, :] = gt[..., -1, :]
            phi1 += np.einsum("...ij,...j->...i", self.b12, gt_nodes)
        out = -self.s_theta(phi1)
        phi2 = np.einsum("...ij,...j->...i", self.b22f, gt)
        if self.cross:
            sf = 0.5 * (s[..., 1:, :] + s[..., :-1, :])
            phi2 += np.einsum("...ij,...j->...i", self.b21f, sf)
        out[..., 1:-1, :] -= (phi2[..., 1:, :] - phi2[..., :-1, :]) / ht
        out[..., -1, :] -= (0.0 - phi2[..., -1, :]) / ht
        out[..., 0, :] = 0.0
        return out

    def solve(self, P, rtol=1e-10, maxiter=10_000):
        G, nt, ht = self.G, self.nt, self.ht
        n = self.n_comp
        V0 = np.zeros((G, G, nt + 1, n))
        V0[..., 0, :] = P
        rhs = -self.apply_full(V0)[..., 1:, :]
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            return V0, 0.0, 0

        # preconditioner: theta-mean diagonal profiles, tridiagonal per mode
        b1m = np.einsum("...ii->...i", self.b11).mean(axis=(0, 1))   # (nt+1, n)
        b2m = np.einsum("...ii->...i", self.b22f).mean(axis=(0, 1))  # (nt, n)
        lm2 = (self.lmode**2)[..., None, None]                       # (G, G, 1, 1)
        diag = np.empty((G, G, nt, n))
        diag[..., :-1, :] = b1m[1:-1] * lm2 + (b2m[:-1] + b2m[1:]) / ht**2
        diag[..., -1, :] = b1m[-1] * lm2[..., 0, :] + b2m[-1] / ht**2
        off = -b2m[1:] / ht**2                                       # (nt-1, n)
        dmod = diag.copy()
        for j in range(1, nt):
            dmod[..., j, :] = diag[..., j, :] - off[j - 1] ** 2 / dmod[..., j - 1, :]

        def prec(v):
            r = np.fft.fft2(v.reshape(G, G, nt, n), axes=(0, 1))
            y = r.copy()
            for j in range(1, nt):
                y[..., j, :] -= (off[j - 1] / dmod[..., j - 1, :]) * y[..., j - 1, :]
            y[..., -1, :] /= dmod[..., -1, :]
            for j in range(nt - 2, -1, -1):
                y[..., j, :] = (y[..., j, :] - off[j] * y[..., j + 1, :]) / dmod[..., j, :]
            return np.real(np.fft.ifft2(y, axes=(0, 1))).ravel()

        from scipy.sparse.linalg import LinearOperator, bicgstab, cg

        size = G * G * nt * n

        def mv(v):
            W = np.zeros((G, G, nt + 1, n))
            W[..., 1:, :] = v.reshape(G, G, nt, n)
            return self.apply_full(W)[..., 1:, :].ravel()

        op = LinearOperator((size, size), dtype=float, matvec=mv)
        pc = LinearOperator((size, size), dtype=float, matvec=prec)
        count = [0]
        method = cg if self.symmetric else bicgstab
        x, info = method(op, rhs.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter,
                         M=pc, callback=lambda *_: count.__setitem__(0, count[0] + 1))
        residual = np.linalg.norm(rhs.ravel() - mv(x)) / rhs_norm
        if info != 0 or residual > 10 * rtol:
            raise SolverError(
                f"enlarged solve did not converge: info={info}, "
                f"residual={residual:.3e} after {count[0]} iterations",
                residual=residual, iterations=count[0])
        V = V0
        V[..., 1:, :] = x.reshape(G, G, nt, n)
        return V, residual, count[0]


def _constant_extension(P, nt):
    return np.repeat(P[..., None, :], nt + 1, axis=-2)


def solve_enlarged(enlarged: EnlargedProblem, offset, height, theta_modes=8,
                   ht=None, rtol=1e-10, maxiter=10_000, problem=None) -> BLSolution:
    """Solve the degenerate enlarged system on T^2 x [a, a+L] (t-units).

    Dirichlet trace at t = a, zero conormal flux at the top; U_inf is the
    torus average of the top slice, F(t) the tail of |D V|^2.
    """
    lam = np.asarray(enlarged.lam, float)
    G = 2 * int(theta_modes) + 8
    rates = _mode_rates(lam, theta_modes)
    r_max = rates.max()
    if ht is None:
        ht = min(0.2 / max(r_max, 1e-12), height / 400.0)
    nt = max(64, int(math.ceil(height / ht)))
    op = _EnlargedOperator(enlarged, offset, height, G, nt)
    theta = ANGLE_SCALE * np.arange(G) / G
    th = np.stack(np.meshgrid(theta, theta, indexing="ij"), axis=-1)
    P = enlarged.trace(th).reshape(G, G, enlarged.n_comp)
    if np.abs(P - P.reshape(-1, enlarged.n_comp).mean(axis=0)).max() == 0.0:
        # constant trace: exact constant solution, zero tail energy
        V = _constant_extension(P, nt)
        t = op.t_nodes
        F = np.zeros(nt + 1)
        cls, fit = classify_decay(t, F)
        return BLSolution(problem=problem, path="quasiperiodic", field=V,
                          t_samples=t, u_inf=P.reshape(-1, enlarged.n_comp).mean(axis=0),
                          decay=F, decay_class=cls, fit=fit,
                          truncation_warning=False, height=float(height),
                          residual=0.0, iterations=0)
    V, residual, its = op.solve(P, rtol=rtol, maxiter=maxiter)
    u_inf = V[..., -1, :].reshape(-1, enlarged.n_comp).mean(axis=0)
    s = op.s_theta(V)
    gt = (V[..., 1:, :] - V[..., :-1, :]) / op.ht
    sc = 0.5 * (s[..., 1:, :] + s[..., :-1, :])
    w_theta = (ANGLE_SCALE / G) ** 2
    per_slab = ((sc**2 + gt**2).sum(axis=(0, 1, 3))) * w_theta * op.ht
    F = _tail_profile(per_slab)
    t = op.t_nodes
    scale = float((V**2).mean()) + 1e-300
    decay_class, fit = classify_decay(t, F, scale=scale)
    warn = bool(F[0] > 1e-16 * scale and F[len(F) // 2] / F[0] > 0.5)
    return BLSolution(problem=problem, path="quasiperiodic", field=V,
                      t_samples=t, u_inf=u_inf, decay=F, decay_class=decay_class,
                      fit=fit, truncation_warning=warn, height=float(height),
                      residual=residual, iterations=its)


def _mode_rates(lam, theta_modes):
    r = np.arange(-theta_modes, theta_modes + 1)
    m1, m2 = np.meshgrid(r, r, indexing="ij")
    rates = np.abs(lam[0] * m1 + lam[1] * m2)
    rates = rates[(m1 != 0) | (m2 != 0)]
    return rates


# ---------------------------------------------------------------------------
# driver and tails
# ---------------------------------------------------------------------------

def solve_bl(problem: BLProblem, path=None) -> BLSolution:
    """Dispatch to the periodic-strip or enlarged solver with automatic height.

    The initial height is 10 tangential periods (rational) or 10 over the
    slowest resolved mode rate (quasiperiodic); it doubles (cap 3) until the
    tail energy at mid-height has dropped below 1e-3 of the total.
    """
    n = np.asarray(problem.n, float)
    n = n / np.linalg.norm(n)
    if path is None:
        path = "rational" if rational_direction(n) is not None else "quasiperiodic"

    def datum_vec(y):
        out = np.asarray(problem.datum(y), float)
        if out.ndim == np.asarray(y).ndim - 1:
            out = out[..., None]
        return out

    if path == "rational":
        strip = rotate_to_strip(problem.a_field, n, datum_vec)
        height = problem.height or 10.0 * strip.period
        solver = lambda L: solve_strip_rational(
            strip, problem.offset, L, resolution=problem.tangential_resolution,
            rtol=problem.rtol, maxiter=problem.maxiter, problem=problem)
    else:
        enlarged = lift_quasiperiodic(problem.a_field, n, datum_vec,
                                      offset=problem.offset)
        rates = _mode_rates(enlarged.lam, problem.theta_modes)
        height = problem.height or 10.0 / max(rates.min(), 1e-6) / ANGLE_SCALE
        solver = lambda L: solve_enlarged(
            enlarged, ANGLE_SCALE * problem.offset, ANGLE_SCALE * L,
            theta_modes=problem.theta_modes, rtol=problem.rtol,
            maxiter=problem.maxiter, problem=problem)

    sol = solver(height)
    doublings = 0
    zero_floor = 1e-16 * (float((sol.field**2).mean()) + 1e-300)
    while problem.height is None and doublings < 3 and sol.decay[0] > zero_floor:
        mid = sol.decay[len(sol.decay) // 2] / sol.decay[0]
        if mid < 1e-3:
            break
        height *= 2.0
        doublings += 1
        sol = solver(height)
    return sol


def tail_constant(sol: BLSolution, offset_prime=None) -> TailReport:
    """Tail constant with optional offset-sensitivity rerun.

    Raises TailUnreliableError when the solve carries a truncation warning.
    """
    if sol.truncation_warning:
        raise TailUnreliableError(
            "tail energy has not decayed across the truncated height")
    sensitivity = None
    if offset_prime is not None:
        if sol.problem is None:
            raise ValueError("solution does not carry its problem; cannot rerun")
        other = solve_bl(sol.problem.with_offset(offset_prime), path=sol.path)
        sensitivity = float(np.max(np.abs(sol.u_inf - other.u_inf)))
    return TailReport(u_inf=sol.u_inf, decay_class=sol.decay_class, fit=sol.fit,
                      offset_sensitivity=sensitivity)


# ---------------------------------------------------------------------------
# harmonic-extension oracle
# ---------------------------------------------------------------------------

def poisson_kernel_reference(phi, y2, nsum=500):
    """Harmonic extension of a 1-periodic trace at (0, y2), y2 > 0.

    Periodized half-plane kernel summed over |k| <= nsum with a midpoint tail
    correction, integrated over one period by adaptive quadrature.
    """
    if y2 <= 0:
        raise ValueError("height must be positive")
    ks = np.arange(-nsum, nsum + 1)

    def kernel(t):
        s = (y2 / (y2**2 + (t + ks) ** 2)).sum() / np.pi
        hi = nsum + 0.5
        tail = (np.pi - np.arctan((hi + t) / y2) - np.arctan((hi - t) / y2)) / np.pi
        return s + tail

    val, err = quad(lambda t: kernel(t) * phi(t), 0.0, 1.0,
                    epsabs=1e-12, epsrel=1e-12, limit=200)
    if not np.isfinite(val) or err > 1e-8:
        raise SolverError(f"kernel quadrature did not converge (err={err:.2e})",
                          residual=err)
    return float(val)

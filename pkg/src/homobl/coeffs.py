"""Periodic coefficient tensors and oscillating Dirichlet data on torus grids.

Media are tensors A(y) in M_d(M_N(R)) sampled on a uniform grid over the unit
torus [0,1)^d.  Builders are restricted to finite trigonometric polynomials
and smooth positive profiles, so every shipped medium is smooth and its
ellipticity can be checked exactly on the grid.  Dirichlet data split into a
slow part g(x) plus finitely many separable oscillating parts v_p(x) w_p(y),
with w_p 1-periodic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class BuilderError(ValueError):
    """Invalid builder descriptor (non-positive profile, bad resolution, ...)."""


class DomainError(ValueError):
    """Evaluation point outside the declared boundary chart."""


# ---------------------------------------------------------------------------
# trigonometric series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigTerm:
    """amplitude * form(2 pi mode . y); 'cosprod' multiplies per-axis cosines."""
    amplitude: float
    mode: tuple
    form: str = "cos"

    def evaluate(self, y):
        y = np.asarray(y, float)
        mode = np.asarray(self.mode, float)
        if self.form == "cosprod":
            out = np.ones(y.shape[:-1])
            for ax, m in enumerate(mode):
                if m:
                    out = out * np.cos(2 * np.pi * m * y[..., ax])
            return self.amplitude * out
        phase = 2 * np.pi * (y @ mode)
        if self.form == "cos":
            return self.amplitude * np.cos(phase)
        if self.form == "sin":
            return self.amplitude * np.sin(phase)
        raise BuilderError(f"unknown trig term form {self.form!r}")


@dataclass(frozen=True)
class TrigSeries:
    """Finite trigonometric polynomial on the d-torus."""
    d: int
    constant: float = 0.0
    terms: tuple = ()

    def evaluate(self, y):
        y = np.asarray(y, float)
        out = np.full(y.shape[:-1], float(self.constant))
        for t in self.terms:
            out = out + t.evaluate(y)
        return out

    @staticmethod
    def from_descriptor(desc, d):
        terms = []
        for t in desc.get("terms", []):
            mode = t["mode"]
            if np.isscalar(mode):
                mode = (int(mode),) + (0,) * (d - 1)
            else:
                mode = tuple(int(m) for m in mode)
                if len(mode) != d:
                    raise BuilderError(f"mode {mode} does not match dimension {d}")
            terms.append(TrigTerm(float(t.get("amplitude", 1.0)), mode,
                                  t.get("form", "cos")))
        return TrigSeries(d, float(desc.get("constant", 0.0)), tuple(terms))


def torus_interp(grid_vals, pts):
    """Multilinear periodic interpolation of node values at torus points.

    ``grid_vals``: (M,)*d + tail; ``pts``: (..., d) reduced mod 1 internally.
    """
    grid_vals = np.asarray(grid_vals)
    pts = np.asarray(pts, float)
    d = pts.shape[-1]
    dims = grid_vals.shape[:d]
    scaled = [np.mod(pts[..., ax], 1.0) * dims[ax] for ax in range(d)]
    lo = [np.floor(s).astype(int) % dims[ax] for ax, s in enumerate(scaled)]
    frac = [s - np.floor(s) for s in scaled]
    tail = grid_vals.ndim - d
    out = None
    for corner in range(1 << d):
        idx = []
        wgt = np.ones(pts.shape[:-1])
        for ax in range(d):
            if corner >> ax & 1:
                idx.append((lo[ax] + 1) % dims[ax])
                wgt = wgt * frac[ax]
            else:
                idx.append(lo[ax])
                wgt = wgt * (1.0 - frac[ax])
        vals = grid_vals[tuple(idx)]
        wgt = wgt.reshape(wgt.shape + (1,) * tail)
        out = vals * wgt if out is None else out + vals * wgt
    return out


def torus_nodes(M, d):
    """Node coordinates (M,)*d + (d,) of the uniform grid on [0,1)^d."""
    axes = [np.arange(M) / M for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


# ---------------------------------------------------------------------------
# tensor fields
# ---------------------------------------------------------------------------

@dataclass
class TensorField:
    """Periodic coefficient tensor sampled at the nodes of a torus grid.

    values[y-index..., alpha, beta, i, j]; periodicity is structural (indices
    wrap), the claimed ellipticity constant is a lower Rayleigh bound.
    """
    d: int
    n_comp: int
    resolution: int
    values: np.ndarray
    lam: float
    formula: Optional[Callable] = None

    def evaluate(self, pts):
        """Tensor at arbitrary torus points: exact via the builder formula
        when available, bilinear interpolation of node values otherwise."""
        if self.formula is not None:
            return self.formula(np.asarray(pts, float))
        return self.interpolate(pts)

    def interpolate(self, pts):
        return torus_interp(self.values, pts)

    def is_symmetric(self, tol=1e-12):
        swapped = np.swapaxes(np.swapaxes(self.values, -4, -3), -2, -1)
        return bool(np.allclose(self.values, swapped, atol=tol))


@dataclass
class EllipticityReport:
    lam_min: float
    lam_max: float
    passed: bool
    worst_node: tuple
    lam_claimed: float
    tol: float = 1e-12


ELLIPTICITY_TOL = 1e-12


def _quadratic_form_matrix(values, d, n_comp):
    """Symmetrized (dN x dN) matrix of the form xi . A xi at every node."""
    grid = values.shape[:-4]
    q = values.transpose(tuple(range(len(grid))) + (-4, -2, -3, -1))
    q = q.reshape(grid + (d * n_comp, d * n_comp))
    return 0.5 * (q + np.swapaxes(q, -1, -2))


def build_tensor(spec, M):
    """Construct a TensorField from a builder descriptor.

    Descriptor kinds: ``constant`` (matrix or scalar value), ``layered``
    (1-periodic positive profile along one axis), ``trigonometric`` /
    ``scalar-isotropic`` (finite trig series, scalar -> a(y) Id).
    """
    if M < 4:
        raise BuilderError(f"resolution M={M} too coarse; need M >= 4")
    kind = spec.get("kind")
    d = int(spec.get("d", 2))
    n_comp = int(spec.get("n", 1))
    nodes = torus_nodes(M, d)

    if kind == "constant":
        if "matrix" in spec:
            mat = np.asarray(spec["matrix"], float)
            if mat.shape == (d, d):
                mat = mat[:, :, None, None]
            if mat.shape != (d, d, n_comp, n_comp):
                raise BuilderError(f"constant matrix has shape {mat.shape}")
        else:
            mat = float(spec.get("value", 1.0)) * np.eye(d)[:, :, None, None]
            mat = mat * np.eye(n_comp)
        def formula(pts, mat=mat):
            return np.broadcast_to(mat, pts.shape[:-1] + mat.shape).copy()
    elif kind in ("layered", "scalar-isotropic", "trigonometric") and "entries" not in spec:
        if kind == "layered":
            axis = int(spec.get("axis", 1)) - 1
            series = TrigSeries.from_descriptor(spec["profile"], 1)
            def scalar(pts):
                return series.evaluate(pts[..., axis:axis + 1])
        else:
            series = TrigSeries.from_descriptor(spec["series"], d)
            scalar = series.evaluate
        eye = np.eye(d)[:, :, None, None] * np.eye(n_comp)
        def formula(pts, scalar=scalar, eye=eye):
            a = scalar(np.asarray(pts, float))
            return a[..., None, None, None, None] * eye
        prof = scalar(nodes)
        if prof.min() <= 0:
            worst = np.unravel_index(int(np.argmin(prof)), prof.shape)
            raise BuilderError(
                f"profile is not positive: value {prof.min():.6g} at node {worst}")
    elif kind == "trigonometric":
        entries = []
        for ent in spec["entries"]:
            al, be, i, j = (int(v) - 1 for v in ent["indices"])
            entries.append((al, be, i, j, TrigSeries.from_descriptor(ent["series"], d)))
        def formula(pts, entries=entries):
            pts = np.asarray(pts, float)
            out = np.zeros(pts.shape[:-1] + (d, d, n_comp, n_comp))
            for al, be, i, j, series in entries:
                out[..., al, be, i, j] = series.evaluate(pts)
            return out
    else:
        raise BuilderError(f"unknown builder kind {spec.get('kind')!r}")

    values = formula(nodes)
    q = _quadratic_form_matrix(values, d, n_comp)
    eigs = np.linalg.eigvalsh(q)
    lam = float(eigs.min())
    return TensorField(d=d, n_comp=n_comp, resolution=M, values=values,
                       lam=lam, formula=formula)


def validate_ellipticity(a, lam, samples=64, seed=0):
    """Check the lower Rayleigh bound lam at every grid node.

    Random xi samples probe the quadratic form everywhere; for N = 1 the exact
    eigenvalue bounds of the symmetrized d x d matrix are used as well.  The
    report records the observed extremal Rayleigh quotients; ``passed`` means
    lam_min >= lam - tol.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    d, n_comp = a.d, a.n_comp
    grid = a.values.shape[:-4]
    q = _quadratic_form_matrix(a.values, d, n_comp)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((samples, d * n_comp))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    rq = np.einsum("si,...ij,sj->...s", xi, q, xi)
    lam_min = float(rq.min())
    lam_max = float(rq.max())
    node = np.unravel_index(int(np.argmin(rq.min(axis=-1))), grid)
    if n_comp == 1:
        eigs = np.linalg.eigvalsh(q)
        emin = float(eigs[..., 0].min())
        if emin < lam_min:
            lam_min = emin
            node = np.unravel_index(int(np.argmin(eigs[..., 0])), grid)
        lam_max = max(lam_max, float(eigs[..., -1].max()))
    passed = lam_min >= lam - ELLIPTICITY_TOL
    return EllipticityReport(lam_min=lam_min, lam_max=lam_max, passed=passed,
                             worst_node=tuple(int(v) for v in node),
                             lam_claimed=float(lam), tol=ELLIPTICITY_TOL)


# ---------------------------------------------------------------------------
# Dirichlet data
# ---------------------------------------------------------------------------

@dataclass
class TorusFunction:
    """Scalar 1-periodic function: trig series and/or grid tabulation."""
    d: int
    series: Optional[TrigSeries] = None
    grid: Optional[np.ndarray] = None

    @staticmethod
    def from_series(series, M=64):
        nodes = torus_nodes(M, series.d)
        return TorusFunction(d=series.d, series=series, grid=series.evaluate(nodes))

    def evaluate(self, y):
        y = np.asarray(y, float)
        if self.series is not None:
            return self.series.evaluate(y)
        return torus_interp(self.grid, y)

    def mean(self):
        if self.series is not None:
            return self.series.constant
        return float(self.grid.mean())


@dataclass
class DatumPart:
    """One separable oscillating contribution envelope(x) * oscillation(y)."""
    envelope: Callable
    oscillation: TorusFunction


@dataclass
class DirichletDatum:
    """phi(x, y) = slow(x) + sum_p envelope_p(x) * oscillation_p(y), R^N valued."""
    slow: Callable
    parts: Sequence[DatumPart] = field(default_factory=tuple)
    n_comp: int = 1
    chart: Optional[Callable] = None

    def evaluate(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.chart is not None and not np.all(self.chart(x)):
            raise DomainError("boundary point outside the declared chart")
        out = np.broadcast_to(np.asarray(self.slow(x), float),
                              x.shape[:-1] + (self.n_comp,)).copy()
        for part in self.parts:
            env = np.asarray(part.envelope(x), float)
            env = np.broadcast_to(env, x.shape[:-1] + (self.n_comp,))
            out = out + env * part.oscillation.evaluate(y)[..., None]
        return out


def evaluate_datum(phi, x, y):
    """phi(x, y) with y reduced mod Z^d (reduction is built into the torus
    evaluation); bilinear between grid nodes when only tabulated."""
    return phi.evaluate(x, y)


def constant_datum(value, n_comp=1):
    vec = np.broadcast_to(np.asarray(value, float), (n_comp,))
    return DirichletDatum(slow=lambda x: np.broadcast_to(vec, x.shape[:-1] + (n_comp,)),
                          n_comp=n_comp)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def tensor_to_csv(a, path):
    """One row per node: torus coordinates then flattened tensor entries."""
    d, n_comp = a.d, a.n_comp
    nodes = torus_nodes(a.resolution, d).reshape(-1, d)
    vals = a.values.reshape(-1, d * d * n_comp * n_comp)
    header = [f"y{ax + 1}" for ax in range(d)]
    for al in range(d):
        for be in range(d):
            for i in range(n_comp):
                for j in range(n_comp):
                    header.append(f"A_{al + 1}{be + 1}_{i + 1}{j + 1}")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.hstack([nodes, vals]):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

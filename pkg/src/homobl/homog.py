"""Oscillating Dirichlet problems on 2D domains and convergence measurement.

The fine problem -div(A(x/eps) grad u) = f with trace phi(x, x/eps) is solved
on node grids resolving the oscillation (h <= eps/8, enforced).  Its
homogenized limit uses the effective tensor from :mod:`homobl.cell` and the
homogenized boundary datum phi*, assembled side by side from boundary-layer
tail constants: rational normals through the periodic strip path, irrational
normals through the enlarged quasiperiodic path filtered by the Diophantine
certificate, with excluded samples filled from their nearest included
neighbor along the boundary.

Supported geometries have piecewise-flat boundaries: the x1-periodic unit
strip (the primary regression geometry), axis-aligned rectangles, convex
polygons, and disks approximated by inscribed polygons.  Polygon interiors
are discretized by a masked staircase grid (first-order accurate at the
boundary; the strip and rectangle paths are clean second order).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import bl as bl_mod
from .cell import CorrectorSet, assemble_expansion, compute_correctors
from .coeffs import DirichletDatum, TensorField, torus_interp
from .dioph import diophantine_constant
from .fd import BoxOperator


class UnderResolvedError(ValueError):
    """Mesh does not resolve the oscillation; carries the required spacing."""

    def __init__(self, h, required):
        super().__init__(f"mesh spacing h={h:g} does not resolve the "
                         f"oscillation; need h <= {required:g}")
        self.required = required


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass
class DomainSpec:
    """Computational domain with piecewise-flat boundary.

    kinds: 'strip' (x1-periodic slab 0 < x2 < 1), 'rectangle' (bounds),
    'polygon' (convex vertex list, counterclockwise), 'disk' (center, radius,
    inscribed polygon with ``sides`` vertices, optional phase).
    """
    kind: str
    bounds: Optional[tuple] = None
    vertices: Optional[np.ndarray] = None
    center: tuple = (0.5, 0.5)
    radius: float = 0.4
    sides: Optional[int] = None
    phase: float = 0.0

    def polygon_vertices(self, sides=None):
        if self.kind == "polygon":
            return np.asarray(self.vertices, float)
        if self.kind == "disk":
            k = int(sides or self.sides or 16)
            if k < 3:
                raise ConfigurationError("disk approximation needs >= 3 sides")
            ang = self.phase + 2 * np.pi * np.arange(k) / k
            return np.stack([self.center[0] + self.radius * np.cos(ang),
                             self.center[1] + self.radius * np.sin(ang)], axis=1)
        raise ConfigurationError(f"domain kind {self.kind!r} has no vertex list")


@dataclass
class Side:
    """One flat boundary piece with constant inward normal."""
    index: int
    p0: np.ndarray
    p1: np.ndarray
    inner_normal: np.ndarray
    length: float
    arc_start: float

    def points(self, s):
        """Boundary points at arc positions s in [0, length]."""
        s = np.asarray(s, float)
        tang = (self.p1 - self.p0) / self.length
        return self.p0 + s[..., None] * tang


def domain_sides(domain: DomainSpec, sides=None):
    if domain.kind == "strip":
        bottom = Side(0, np.array([0.0, 0.0]), np.array([1.0, 0.0]),
                      np.array([0.0, 1.0]), 1.0, 0.0)
        top = Side(1, np.array([0.0, 1.0]), np.array([1.0, 1.0]),
                   np.array([0.0, -1.0]), 1.0, 1.0)
        return [bottom, top]
    if domain.kind == "rectangle":
        (a1, b1), (a2, b2) = domain.bounds
        verts = np.array([[a1, a2], [b1, a2], [b1, b2], [a1, b2]], float)
    else:
        verts = domain.polygon_vertices(sides=sides)
    out = []
    arc = 0.0
    k = len(verts)
    for i in range(k):
        p0, p1 = verts[i], verts[(i + 1) % k]
        edge = p1 - p0
        length = float(np.linalg.norm(edge))
        normal = np.array([-edge[1], edge[0]]) / length   # inward for CCW order
        out.append(Side(i, p0, p1, normal, length, arc))
        arc += length
    return out


@dataclass
class DomainGrid:
    domain: DomainSpec
    coords: np.ndarray            # (n0, n1, 2)
    h: tuple
    periodic0: bool
    unknown: np.ndarray           # (n0, n1) bool
    weights: np.ndarray           # L2 quadrature weights, zero outside
    fixed_idx: tuple              # index arrays of Dirichlet nodes
    fixed_points: np.ndarray      # (n_fixed, 2) data-evaluation points
    fixed_side: np.ndarray        # (n_fixed,) side index
    distance: np.ndarray          # inner distance to the boundary


def build_grid(domain: DomainSpec, h, sides=None) -> DomainGrid:
    if domain.kind == "strip":
        m = int(round(1.0 / h))
        h = 1.0 / m
        x1 = np.arange(m) * h
        x2 = np.arange(m + 1) * h
        coords = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
        unknown = np.ones((m, m + 1), bool)
        unknown[:, 0] = unknown[:, -1] = False
        weights = np.full((m, m + 1), h * h)
        weights[:, 0] *= 0.5
        weights[:, -1] *= 0.5
        fixed_idx = np.where(~unknown)
        fixed_points = coords[fixed_idx]
        fixed_side = np.where(coords[fixed_idx][:, 1] < 0.5, 0, 1)
        distance = np.minimum(coords[..., 1], 1.0 - coords[..., 1])
        return DomainGrid(domain, coords, (h, h), True, unknown, weights,
                          fixed_idx, fixed_points, fixed_side, distance)

    if domain.kind == "rectangle":
        (a1, b1), (a2, b2) = domain.bounds
        n0 = int(round((b1 - a1) / h)) + 1
        n1 = int(round((b2 - a2) / h)) + 1
        h0 = (b1 - a1) / (n0 - 1)
        h1 = (b2 - a2) / (n1 - 1)
        x1 = a1 + np.arange(n0) * h0
        x2 = a2 + np.arange(n1) * h1
        coords = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
        unknown = np.zeros((n0, n1), bool)
        unknown[1:-1, 1:-1] = True
        weights = np.full((n0, n1), h0 * h1)
        for axis, n in ((0, n0), (1, n1)):
            sl0 = (0,) if axis == 0 else (slice(None), 0)
            sl1 = (n - 1,) if axis == 0 else (slice(None), n - 1)
            weights[sl0] *= 0.5
            weights[sl1] *= 0.5
        fixed_idx = np.where(~unknown)
        fixed_points = coords[fixed_idx]
        dist_sides = np.stack([coords[..., 0] - a1, b1 - coords[..., 0],
                               coords[..., 1] - a2, b2 - coords[..., 1]])
        # sides from domain_sides: 0 bottom, 1 right, 2 top, 3 left
        nearest = np.argmin(np.stack([
            coords[..., 1] - a2, b1 - coords[..., 0],
            b2 - coords[..., 1], coords[..., 0] - a1]), axis=0)
        fixed_side = nearest[fixed_idx]
        distance = dist_sides.min(axis=0)
        return DomainGrid(domain, coords, (h0, h1), False, unknown, weights,
                          fixed_idx, fixed_points, fixed_side, distance)

    # polygon / disk: masked staircase grid over the bounding box
    verts = domain.polygon_vertices(sides=sides)
    side_list = domain_sides(domain, sides=sides)
    lo = verts.min(axis=0) - 2 * h
    hi = verts.max(axis=0) + 2 * h
    n0 = int(math.ceil((hi[0] - lo[0]) / h)) + 1
    n1 = int(math.ceil((hi[1] - lo[1]) / h)) + 1
    x1 = lo[0] + np.arange(n0) * h
    x2 = lo[1] + np.arange(n1) * h
    coords = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
    signed = np.stack([ (coords - s.p0) @ s.inner_normal for s in side_list ])
    distance = signed.min(axis=0)
    inside = distance > 1e-12
    unknown = inside.copy()
    for ax, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        unknown &= np.roll(inside, shift, axis=ax)
    unknown[0, :] = unknown[-1, :] = False
    unknown[:, 0] = unknown[:, -1] = False
    fixed_mask = inside & ~unknown
    fixed_idx = np.where(fixed_mask)
    pts = coords[fixed_idx]
    nearest_side = np.argmin(np.stack([(pts - s.p0) @ s.inner_normal
                                       for s in side_list]), axis=0)
    proj = np.empty_like(pts)
    for i, s_idx in enumerate(nearest_side):
        s = side_list[s_idx]
        tang = (s.p1 - s.p0) / s.length
        t = float(np.clip((pts[i] - s.p0) @ tang, 0.0, s.length))
        proj[i] = s.p0 + t * tang
    weights = np.where(inside, h * h, 0.0)
    return DomainGrid(domain, coords, (h, h), False, unknown, weights,
                      fixed_idx, proj, nearest_side, np.where(inside, distance, 0.0))


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass
class FineSolution:
    eps: float
    grid: DomainGrid
    field: np.ndarray
    residual: float
    iterations: int
    boundary_values: np.ndarray


@dataclass
class HomogenizedSolution:
    grid: DomainGrid
    field: np.ndarray
    residual: float
    iterations: int
    boundary_label: str


@dataclass
class ConvergenceReport:
    eps_list: list
    l2_errors: list
    h1_interior_errors: list
    interior_margin: float
    order: int
    alpha_l2: Optional[float]
    alpha_l2_residual: Optional[float]
    alpha_h1: Optional[float]
    alpha_h1_residual: Optional[float]
    theorem_threshold: float
    below_noise: bool
    running_alpha: list
    phi_star_flags: dict
    failures: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def _tensor_on_grid(values_fn, grid: DomainGrid):
    return values_fn(grid.coords)


def _operator_for(grid: DomainGrid, a_nodes):
    if grid.domain.kind == "strip":
        return BoxOperator(a_nodes, grid.h, periodic0=True,
                           bc_bottom="dirichlet", bc_top="dirichlet")
    if grid.domain.kind == "rectangle":
        return BoxOperator(a_nodes, grid.h, periodic0=False,
                           bc_bottom="dirichlet", bc_top="dirichlet")
    return BoxOperator(a_nodes, grid.h, periodic0=False,
                       bc_bottom="dirichlet", bc_top="dirichlet",
                       mask=grid.unknown)


def _solve_on_grid(grid, a_nodes, boundary_values, f_field, rtol, maxiter):
    op = _operator_for(grid, a_nodes)
    n_comp = a_nodes.shape[-1]
    fixed = np.zeros(grid.coords.shape[:2] + (n_comp,))
    fixed[grid.fixed_idx] = boundary_values
    sol, residual, its = op.solve(fixed, f=f_field, rtol=rtol, maxiter=maxiter)
    return sol, residual, its


def solve_fine(a_field: TensorField, phi: DirichletDatum, f, eps,
               domain: DomainSpec, h=None, sides=None, rtol=1e-10,
               maxiter=30_000) -> FineSolution:
    """Fine oscillating solve with trace imposed nodewise.

    ``f`` is a callable f(x)->(..., N) or a constant; ``h`` defaults to eps/8
    and must satisfy h <= eps/8.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    required = eps / 8.0
    if h is None:
        h = required
    if h > required * (1 + 1e-12):
        raise UnderResolvedError(h, required)
    grid = build_grid(domain, h, sides=sides)
    a_nodes = a_field.evaluate(grid.coords / eps)
    bvals = phi.evaluate(grid.fixed_points, grid.fixed_points / eps)
    f_field = _source_field(f, grid, a_field.n_comp)
    sol, residual, its = _solve_on_grid(grid, a_nodes, bvals, f_field, rtol, maxiter)
    return FineSolution(eps=float(eps), grid=grid, field=sol, residual=residual,
                        iterations=its, boundary_values=bvals)


def _source_field(f, grid, n_comp):
    if f is None:
        return None
    if callable(f):
        out = np.asarray(f(grid.coords), float)
        if out.ndim == 2:
            out = out[..., None]
        return out
    return np.full(grid.coords.shape[:2] + (n_comp,), float(f))


def solve_homogenized(a0, boundary, f, domain: DomainSpec, h, sides=None,
                      rtol=1e-10, maxiter=30_000,
                      label="phi*") -> HomogenizedSolution:
    """Constant-tensor solve; ``boundary`` maps (points, side_idx) to values."""
    grid = build_grid(domain, h, sides=sides)
    n_comp = a0.shape[-1]
    a_nodes = np.broadcast_to(a0, grid.coords.shape[:2] + a0.shape).copy()
    bvals = boundary(grid.fixed_points, grid.fixed_side)
    f_field = _source_field(f, grid, n_comp)
    sol, residual, its = _solve_on_grid(grid, a_nodes, bvals, f_field, rtol, maxiter)
    return HomogenizedSolution(grid=grid, field=sol, residual=residual,
                               iterations=its, boundary_label=label)


# ---------------------------------------------------------------------------
# homogenized boundary data
# ---------------------------------------------------------------------------

@dataclass
class BoundaryData:
    """phi* on the boundary: slow part plus per-side tail constants.

    Excluded sides (normal outside the admissible set) are filled with the
    value of the nearest included side at the closest arc position and are
    flagged.
    """
    phi: DirichletDatum
    sides: list
    part_tails: dict              # (side index, part index) -> U_inf (N,)
    included: dict                # side index -> bool
    diagnostics: dict

    def evaluate(self, points, side_idx):
        points = np.asarray(points, float)
        side_idx = np.asarray(side_idx, int)
        out = np.asarray(self.phi.slow(points), float)
        out = np.broadcast_to(out, points.shape[:-1] + (self.phi.n_comp,)).copy()
        for p, part in enumerate(self.phi.parts):
            env = np.broadcast_to(np.asarray(part.envelope(points), float),
                                  out.shape)
            tails = np.stack([self.part_tails[(self._source_side(k), p)]
                              for k in side_idx])
            out = out + env * tails
        return out

    def _source_side(self, k):
        k = int(k)
        if self.included[k]:
            return k
        best, best_d = None, np.inf
        mid_k = 0.5 * (self.sides[k].p0 + self.sides[k].p1)
        for s in self.sides:
            if not self.included[s.index]:
                continue
            d = np.linalg.norm(0.5 * (s.p0 + s.p1) - mid_k)
            if d < best_d:
                best, best_d = s.index, d
        return best

    def flags(self):
        return {k: not v for k, v in self.included.items()}


def boundary_data_star(a_field: TensorField, phi: DirichletDatum,
                       domain: DomainSpec, kappa, correctors=None, eps=None,
                       sides=None, truncation=1000, exponent=2.0,
                       bl_kwargs=None) -> BoundaryData:
    """Homogenized Dirichlet datum phi* side by side.

    Rational normals go through the periodic-strip path (offset from eps when
    given, otherwise the aligned offset 0); irrational normals must pass the
    Diophantine test at level kappa to be solved on the enlarged torus, and
    are otherwise filled from the nearest included side.  The slow part of phi
    passes through unchanged, so phi* == phi exactly for data without fast
    oscillation.
    """
    if kappa <= 0:
        raise ConfigurationError("kappa must be positive")
    side_list = domain_sides(domain, sides=sides)
    bl_kwargs = dict(bl_kwargs or {})
    included = {}
    paths = {}
    for s in side_list:
        nu = s.inner_normal
        if bl_mod.rational_direction(nu) is not None:
            included[s.index] = True
            paths[s.index] = "rational"
        else:
            cert = diophantine_constant(tuple(nu), truncation=truncation,
                                        exponent=exponent)
            ok = cert.kappa_normal >= kappa
            included[s.index] = ok
            paths[s.index] = "quasiperiodic" if ok else "excluded"
    if not any(included.values()):
        raise ConfigurationError(
            f"no boundary normal admitted at kappa={kappa}; lower kappa")

    part_tails = {}
    cache = {}
    for s in side_list:
        if not included[s.index]:
            continue
        nu = s.inner_normal
        offset = 0.0
        if eps is not None and paths[s.index] == "rational":
            offset = float(np.dot(s.p0, nu) / eps) % 1.0
        for p, part in enumerate(phi.parts):
            key = (tuple(np.round(nu, 12)), round(offset, 12), p)
            if key not in cache:
                osc = part.oscillation
                problem = bl_mod.BLProblem(
                    a_field=a_field, n=tuple(nu),
                    datum=lambda y, osc=osc: osc.evaluate(y),
                    offset=offset, **bl_kwargs)
                sol = bl_mod.solve_bl(problem, path=paths[s.index])
                cache[key] = bl_mod.tail_constant(sol).u_inf
            part_tails[(s.index, p)] = cache[key]
    diagnostics = {"paths": paths, "kappa": kappa,
                   "solves": len(cache)}
    return BoundaryData(phi=phi, sides=side_list, part_tails=part_tails,
                        included=included, diagnostics=diagnostics)


def corrector_boundary_tails(a_field: TensorField, correctors: CorrectorSet,
                             domain: DomainSpec, sides=None, bl_kwargs=None):
    """Tail constants of the corrector traces, per side and direction.

    Feeds the slow first-order term: its boundary values are
    -sum_a tail[side, a] . d_a u0(x0), the far-field of the oscillating part
    of the first-order trace with reversed sign.
    """
    side_list = domain_sides(domain, sides=sides)
    bl_kwargs = dict(bl_kwargs or {})
    n = correctors.n_comp
    tails = {}
    for s in side_list:
        nu = s.inner_normal
        for al in range(correctors.d):
            chi_grid = correctors.chi[al]
            if np.abs(chi_grid).max() < 1e-14:
                tails[(s.index, al)] = np.zeros((n, n))
                continue
            cols = []
            for k in range(n):
                grid_col = chi_grid[..., k]

                def datum(y, grid_col=grid_col):
                    return torus_interp(grid_col, y)

                problem = bl_mod.BLProblem(a_field=a_field, n=tuple(nu),
                                           datum=datum, **bl_kwargs)
                sol = bl_mod.solve_bl(problem)
                cols.append(bl_mod.tail_constant(sol).u_inf)
            tails[(s.index, al)] = np.stack(cols, axis=-1)
    return tails


def solve_ubar1(a0, c3, u0: HomogenizedSolution, corrector_tails,
                rtol=1e-10, maxiter=30_000) -> HomogenizedSolution:
    """Slow first-order term: constant-tensor solve driven by third
    derivatives of u0, with boundary data from the corrector tails.

    Third derivatives are repeated centered differences with one-sided
    closure at the boundary.
    """
    grid = u0.grid
    n_comp = a0.shape[-1]
    d3 = _third_derivatives(u0.field, grid)
    rhs = np.zeros_like(u0.field)
    d = a0.shape[0]
    if c3 is not None and np.abs(c3).max() > 0:
        for al in range(d):
            for be in range(d):
                for g in range(d):
                    rhs += np.einsum("ij,...j->...i", c3[al, be, g],
                                     d3[(al, be, g)])
    grad = _gradient(u0.field, grid)
    bvals = np.zeros((len(grid.fixed_points), n_comp))
    for i, (pt_idx, side) in enumerate(zip(zip(*grid.fixed_idx), grid.fixed_side)):
        val = np.zeros(n_comp)
        for al in range(d):
            val -= corrector_tails[(int(side), al)] @ grad[al][pt_idx]
        bvals[i] = val
    a_nodes = np.broadcast_to(a0, grid.coords.shape[:2] + a0.shape).copy()
    sol, residual, its = _solve_on_grid(grid, a_nodes, bvals, rhs, rtol, maxiter)
    return HomogenizedSolution(grid=grid, field=sol, residual=residual,
                               iterations=its, boundary_label="ubar1")


def _gradient(u, grid: DomainGrid):
    h0, h1 = grid.h
    if grid.periodic0:
        g0 = (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)) / (2 * h0)
    else:
        g0 = np.gradient(u, h0, axis=0, edge_order=2)
    g1 = np.gradient(u, h1, axis=1, edge_order=2)
    return [g0, g1]


def _third_derivatives(u, grid: DomainGrid):
    out = {}
    first = _gradient(u, grid)
    second = {}
    for al in range(2):
        g = _gradient(first[al], grid)
        for be in range(2):
            second[(al, be)] = g[be]
    for al in range(2):
        for be in range(2):
            g = _gradient(second[(al, be)], grid)
            for c in range(2):
                out[(al, be, c)] = g[c]
    return out


# ---------------------------------------------------------------------------
# error norms and rates
# ---------------------------------------------------------------------------

def error_norms(fine: FineSolution, v, interior_margin):
    """(L2(Omega), H1(omega)) distances between the fine field and v.

    omega = {x : dist(x, boundary) > margin}; gradients are centered
    differences.  Raises when the margin empties omega.
    """
    grid = fine.grid
    diff = fine.field - v
    l2 = float(np.sqrt((diff**2 * grid.weights[..., None]).sum()))
    omega = (grid.distance > interior_margin) & (grid.weights > 0)
    if not omega.any():
        raise ValueError(f"interior margin {interior_margin} leaves no nodes")
    grads = _gradient(diff, grid)
    dens = diff**2
    for g in grads:
        dens = dens + g**2
    h1 = float(np.sqrt((dens * (omega * grid.h[0] * grid.h[1])[..., None]).sum()))
    return l2, h1


def fit_rate(eps_values, errors):
    """Least-squares slope of log error against log eps.

    Requires >= 3 strictly decreasing eps values and positive errors; returns
    (alpha, rms residual of the fit).
    """
    eps_values = np.asarray(eps_values, float)
    errors = np.asarray(errors, float)
    if len(eps_values) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    if not np.all(np.diff(eps_values) < 0):
        raise ValueError("eps values must be strictly decreasing")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive for a log-log fit")
    x = np.log(eps_values)
    y = np.log(errors)
    coeffs = np.polyfit(x, y, 1)
    resid = y - np.polyval(coeffs, x)
    return float(coeffs[0]), float(np.sqrt((resid**2).mean()))


def _running_alpha(eps_values, errors):
    out = []
    for k in range(len(eps_values)):
        if k == 0 or np.any(np.asarray(errors[: k + 1]) <= 0):
            out.append(None)
            continue
        x = np.log(eps_values[: k + 1])
        y = np.log(errors[: k + 1])
        out.append(float(np.polyfit(x, y, 1)[0]))
    return out


# ---------------------------------------------------------------------------
# sweep orchestration
# ---------------------------------------------------------------------------

THEOREM_THRESHOLD_2D = 1.0 / 11.0   # (d-1)/(3d+5) at d = 2


@dataclass
class SweepConfig:
    eps_list: Sequence[float]
    order: int = 1
    kappa: float = 0.01
    interior_margin: float = 0.2
    points_per_eps: int = 8
    rtol: float = 1e-10
    threads: int = 1
    below_noise_level: float = 1e-8
    alpha_geom: float = 0.5
    bl_kwargs: Optional[dict] = None
    sides: Optional[int] = None


def run_sweep(a_field: TensorField, phi: DirichletDatum, f,
              domain: DomainSpec, config: SweepConfig) -> ConvergenceReport:
    """Correctors -> phi* -> per-eps fine/homogenized solves -> rates.

    Per-eps jobs are independent and may run on a thread pool; aggregation is
    by index so the report does not depend on completion order.  Failures of
    individual stages are recorded and leave the remaining entries intact.
    """
    timings = {}
    failures = []
    t0 = time.time()
    correctors = compute_correctors(a_field, with_second_order=config.order >= 1,
                                    rtol=config.rtol)
    timings["correctors"] = time.time() - t0

    def disk_sides(eps):
        if domain.kind != "disk" or domain.sides:
            return config.sides
        target = eps ** config.alpha_geom
        return max(8, int(math.ceil(2 * np.pi * domain.radius / target)))

    t0 = time.time()
    star_cache = {}

    def star_for(eps):
        key = disk_sides(eps)
        if key not in star_cache:
            star_cache[key] = boundary_data_star(
                a_field, phi, domain, config.kappa, correctors=correctors,
                eps=eps, sides=key, bl_kwargs=config.bl_kwargs)
        return star_cache[key]

    star0 = star_for(config.eps_list[0])
    tails = None
    if config.order >= 1:
        tails = corrector_boundary_tails(a_field, correctors, domain,
                                         sides=disk_sides(config.eps_list[0]),
                                         bl_kwargs=config.bl_kwargs)
    timings["boundary_layers"] = time.time() - t0

    def job(eps):
        h = eps / config.points_per_eps
        k_sides = disk_sides(eps)
        star = star_for(eps)
        fine = solve_fine(a_field, phi, f, eps, domain, h=h, sides=k_sides,
                          rtol=config.rtol)
        u0 = solve_homogenized(correctors.a0, star.evaluate, f, domain, h,
                               sides=k_sides, rtol=config.rtol)
        v = u0.field
        if config.order >= 1:
            ub1 = solve_ubar1(correctors.a0, correctors.c3, u0, tails,
                              rtol=config.rtol)
            v = assemble_expansion(u0.field, ub1.field, correctors, eps,
                                   config.order, fine.grid.coords, fine.grid.h,
                                   periodic0=fine.grid.periodic0)
        l2, _ = error_norms(fine, u0.field, config.interior_margin)
        _, h1 = error_norms(fine, v, config.interior_margin)
        return l2, h1

    t0 = time.time()
    results = [None] * len(config.eps_list)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            futures = {i: pool.submit(job, eps)
                       for i, eps in enumerate(config.eps_list)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:   # recorded, not fatal
                    failures.append({"eps": config.eps_list[i], "error": str(exc)})
    else:
        for i, eps in enumerate(config.eps_list):
            try:
                results[i] = job(eps)
            except Exception as exc:
                failures.append({"eps": eps, "error": str(exc)})
    timings["sweep"] = time.time() - t0

    l2_errors = [r[0] if r else None for r in results]
    h1_errors = [r[1] if r else None for r in results]
    ok = [i for i, r in enumerate(results) if r]
    eps_ok = [config.eps_list[i] for i in ok]
    below_noise = bool(ok) and max(l2_errors[i] for i in ok) < config.below_noise_level
    alpha_l2 = alpha_l2_res = alpha_h1 = alpha_h1_res = None
    if len(ok) >= 3 and not below_noise:
        try:
            alpha_l2, alpha_l2_res = fit_rate(eps_ok, [l2_errors[i] for i in ok])
            alpha_h1, alpha_h1_res = fit_rate(eps_ok, [h1_errors[i] for i in ok])
        except ValueError as exc:
            failures.append({"stage": "fit", "error": str(exc)})
    return ConvergenceReport(
        eps_list=list(config.eps_list), l2_errors=l2_errors,
        h1_interior_errors=h1_errors, interior_margin=config.interior_margin,
        order=config.order, alpha_l2=alpha_l2, alpha_l2_residual=alpha_l2_res,
        alpha_h1=alpha_h1, alpha_h1_residual=alpha_h1_res,
        theorem_threshold=THEOREM_THRESHOLD_2D, below_noise=below_noise,
        running_alpha=_running_alpha([config.eps_list[i] for i in ok],
                                     [l2_errors[i] for i in ok]),
        phi_star_flags={"excluded_sides": star0.flags(),
                        **star0.diagnostics},
        failures=failures, timings=timings)

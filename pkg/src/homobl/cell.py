"""Periodic cell problems, effective tensor, and higher-order correctors.

For a periodic medium A the first correctors chi^g solve, on the unit torus,

    -div(A grad chi^g) = div_a A^{ag},        mean(chi^g) = 0,

column by column in the component index.  The effective (homogenized) tensor
is the face-consistent average of the total flux of each cell problem, which
for layered media reproduces the harmonic/arithmetic means to quadrature
precision.  The second correctors Upsilon^{ab} solve the same operator with
right side B^{ab} - mean(B^{ab}), where

    B^{ab} = A^{ab} + A^{ag} d_g chi^b + d_g (A^{ga} chi^b),

assembled so that mean(B^{ab}) equals the effective tensor exactly on the
grid (the divergence term telescopes to zero).  The constant third-order
coefficients are c^{abg} = mean(A^{ge} d_e Upsilon^{ab} + A^{ab} chi^g).

Sign conventions are fixed so the two-scale expansion actually corrects the
oscillating solution:  u ~ u0 + eps (chi^a d_a u0 + ubar1)
                          + eps^2 (Upsilon^{ab} d_ab u0 + chi^g d_g ubar1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeffs import TensorField, torus_interp
from .fd import TorusOperator


@dataclass
class CorrectorSet:
    """Cell correctors and effective constants for one medium."""
    d: int
    n_comp: int
    resolution: int
    chi: np.ndarray            # (d, *grid, N, N)
    a0: np.ndarray             # (d, d, N, N)
    b_fields: np.ndarray | None = None   # (d, d, *grid, N, N)
    upsilon: np.ndarray | None = None    # (d, d, *grid, N, N)
    c3: np.ndarray | None = None          # (d, d, d, N, N)
    residuals: dict = field(default_factory=dict)

    def chi_at(self, pts):
        """chi interpolated on the torus at pts (..., d) -> (..., d, N, N)."""
        stacked = np.moveaxis(self.chi, 0, -3)  # (*grid, d, N, N)
        return torus_interp(stacked, pts)

    def upsilon_at(self, pts):
        stacked = np.moveaxis(self.upsilon, (0, 1), (-4, -3))
        return torus_interp(stacked, pts)


def _check_same_grid(a, arr):
    if arr.shape[1:1 + a.d] != a.values.shape[:a.d]:
        raise ValueError("corrector grid does not match the tensor grid")


def solve_cell(a: TensorField, rtol=1e-10, maxiter=10_000):
    """First correctors chi^g, zero mean, one torus solve per column.

    Returns (chi, residuals): chi has shape (d, *grid, N, N); residuals is a
    list of relative residuals, one per (direction, column) solve.
    """
    op = TorusOperator(a.values)
    d, n = a.d, a.n_comp
    grid = op.grid
    chi = np.zeros((d,) + grid + (n, n))
    residuals = []
    for g in range(d):
        # divergence of the face-averaged column A^{.g}: same face values as
        # the operator, so constants plus linear drift are exactly consistent
        rhs_full = np.zeros(grid + (n, n))
        for al in range(d):
            fa = op.faces[al][..., g, :, :]
            rhs_full += (fa - np.roll(fa, 1, axis=al)) / op.h[al]
        for k in range(n):
            rhs = rhs_full[..., k]
            if np.abs(rhs).max() == 0.0:
                residuals.append(0.0)
                continue
            sol, res, _ = op.solve(rhs, rtol=rtol, maxiter=maxiter)
            chi[g, ..., k] = sol
            residuals.append(res)
    return chi, residuals


def _total_flux(op, chi, beta, k, al):
    """alpha-component of A (grad chi^b e_k + e_b e_k) at +faces along al."""
    return op.flux(chi[beta][..., k], al) + op.faces[al][..., beta, :, k]


def homogenized_tensor(a: TensorField, chi):
    """Effective tensor by periodic trapezoidal quadrature of the total flux.

    The average runs over cell faces, where the discrete fluxes live; on the
    periodic grid this is the trapezoidal rule (exact for resolved
    trigonometric polynomials).
    """
    _check_same_grid(a, chi)
    op = TorusOperator(a.values)
    d, n = a.d, a.n_comp
    axes = tuple(range(d))
    a0 = np.zeros((d, d, n, n))
    for be in range(d):
        for k in range(n):
            for al in range(d):
                a0[al, be, :, k] = _total_flux(op, chi, be, k, al).mean(axis=axes)
    return a0


def solve_upsilon(a: TensorField, chi, a0, rtol=1e-10, maxiter=10_000):
    """Second correctors: B fields first, then one torus solve per column.

    Returns (b_fields, upsilon, residuals).  mean(B^{ab}) reproduces a0 to
    machine precision by construction; upsilon has zero mean.
    """
    _check_same_grid(a, chi)
    op = TorusOperator(a.values)
    d, n = a.d, a.n_comp
    grid = op.grid
    b_fields = np.zeros((d, d) + grid + (n, n))
    for al in range(d):
        for be in range(d):
            for k in range(n):
                flux = _total_flux(op, chi, be, k, al)
                b_fields[al, be, ..., k] = 0.5 * (flux + np.roll(flux, 1, axis=al))
            # divergence part d_g (A^{ga} chi^b): centered, telescopes to zero mean
            for g in range(d):
                prod = np.einsum("...ij,...jk->...ik", a.values[..., g, al, :, :],
                                 chi[be])
                b_fields[al, be] += (np.roll(prod, -1, axis=g)
                                     - np.roll(prod, 1, axis=g)) / (2.0 * op.h[g])
    mean_b = b_fields.mean(axis=tuple(range(2, 2 + d)))
    if not np.allclose(mean_b, a0, atol=1e-8 * max(1.0, np.abs(a0).max())):
        raise ValueError("mean of B fields does not reproduce the effective tensor")

    upsilon = np.zeros_like(b_fields)
    residuals = []
    for al in range(d):
        for be in range(d):
            rhs_full = b_fields[al, be] - mean_b[al, be]
            for k in range(n):
                rhs = rhs_full[..., k]
                if np.abs(rhs).max() == 0.0:
                    residuals.append(0.0)
                    continue
                sol, res, _ = op.solve(rhs, rtol=rtol, maxiter=maxiter)
                upsilon[al, be, ..., k] = sol
                residuals.append(res)
    return b_fields, upsilon, residuals


def third_order_coeffs(a: TensorField, chi, upsilon):
    """Constant coefficients c^{abg} by periodic trapezoidal quadrature."""
    _check_same_grid(a, chi)
    d, n = a.d, a.n_comp
    h = tuple(1.0 / m for m in a.values.shape[:d])
    axes = tuple(range(d))
    c3 = np.zeros((d, d, d, n, n))
    for al in range(d):
        for be in range(d):
            grad = [
                (np.roll(upsilon[al, be], -1, axis=e) - np.roll(upsilon[al, be], 1, axis=e))
                / (2.0 * h[e])
                for e in range(d)
            ]
            for g in range(d):
                term = sum(
                    np.einsum("...ij,...jk->...ik", a.values[..., g, e, :, :], grad[e])
                    for e in range(d)
                )
                term = term + np.einsum("...ij,...jk->...ik",
                                        a.values[..., al, be, :, :], chi[g])
                c3[al, be, g] = term.mean(axis=axes)
    return c3


def compute_correctors(a: TensorField, with_second_order=True, rtol=1e-10,
                       maxiter=10_000) -> CorrectorSet:
    """Full corrector pipeline for one medium."""
    chi, res_chi = solve_cell(a, rtol=rtol, maxiter=maxiter)
    a0 = homogenized_tensor(a, chi)
    cs = CorrectorSet(d=a.d, n_comp=a.n_comp, resolution=a.resolution,
                      chi=chi, a0=a0, residuals={"chi": res_chi})
    if with_second_order:
        b_fields, upsilon, res_ups = solve_upsilon(a, chi, a0, rtol=rtol,
                                                   maxiter=maxiter)
        cs.b_fields = b_fields
        cs.upsilon = upsilon
        cs.c3 = third_order_coeffs(a, chi, upsilon)
        cs.residuals["upsilon"] = res_ups
    return cs


def _grad(u, spacing, periodic0):
    """Centered gradient of a node field (n0, n1, N); one-sided closure at
    bounded edges."""
    if periodic0:
        g0 = (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)) / (2.0 * spacing[0])
    else:
        g0 = np.gradient(u, spacing[0], axis=0, edge_order=2)
    g1 = np.gradient(u, spacing[1], axis=1, edge_order=2)
    return [g0, g1]


def assemble_expansion(u0, ubar1, correctors: CorrectorSet, eps, order, coords,
                       spacing, periodic0=True):
    """Two-scale approximation on a 2D domain grid.

    order 0: u0; order 1: + eps (chi^a(x/eps) d_a u0 + ubar1);
    order 2: + eps^2 (Upsilon^{ab}(x/eps) d_ab u0 + chi^g(x/eps) d_g ubar1),
    with the second slow corrector fixed to zero.  Correctors are evaluated by
    torus interpolation at x/eps; slow derivatives are centered differences
    with one-sided closure at the domain boundary.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"unsupported expansion order {order}")
    out = u0.copy()
    if order == 0:
        return out
    pts = np.mod(np.asarray(coords, float) / eps, 1.0)
    chi_at = correctors.chi_at(pts)                    # (n0, n1, d, N, N)
    grad_u0 = _grad(u0, spacing, periodic0)
    first = np.zeros_like(u0)
    for al in range(correctors.d):
        first += np.einsum("...ij,...j->...i", chi_at[..., al, :, :], grad_u0[al])
    if ubar1 is not None:
        first = first + ubar1
    out = out + eps * first
    if order == 2:
        if correctors.upsilon is None:
            raise ValueError("order 2 requires second correctors")
        ups_at = correctors.upsilon_at(pts)            # (n0, n1, d, d, N, N)
        second = np.zeros_like(u0)
        for al in range(correctors.d):
            d_al = _grad(grad_u0[al], spacing, periodic0)
            for be in range(correctors.d):
                second += np.einsum("...ij,...j->...i",
                                    ups_at[..., al, be, :, :], d_al[be])
        if ubar1 is not None:
            grad_ub = _grad(ubar1, spacing, periodic0)
            for g in range(correctors.d):
                second += np.einsum("...ij,...j->...i", chi_at[..., g, :, :],
                                    grad_ub[g])
        out = out + eps * eps * second
    return out

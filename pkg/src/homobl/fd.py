"""Matrix-free flux stencils for -div(A grad u) on structured grids.

The divergence-form operator is discretized conservatively: coefficients are
averaged onto cell faces (harmonic mean for the positive diagonal entries
A^{aa}_{ii}, arithmetic for everything else), the normal gradient at a face is
the compact two-point difference, and tangential gradients at a face are
face-averaged centered differences.  The discrete operator therefore preserves
constants exactly and, for media with no off-diagonal blocks, is symmetric
positive semidefinite and solved with diagonally preconditioned CG; media with
cross blocks fall back to BiCGStab.

Fields carry a trailing component axis: shape ``(*grid, N)``.  Coefficient
tensors have shape ``(*grid, d, d, N, N)`` with entry order ``A[alpha, beta,
i, j]``.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import LinearOperator, bicgstab, cg


class SolverError(RuntimeError):
    """Iterative solve failed; carries the final relative residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def harmonic_or_arithmetic(lo, hi, harmonic):
    """Face average of two node values; harmonic only where both are positive."""
    out = 0.5 * (lo + hi)
    if harmonic:
        pos = (lo > 0) & (hi > 0)
        num = 2.0 * lo * hi
        den = lo + hi
        out = np.where(pos, np.divide(num, den, out=np.zeros_like(num), where=den != 0), out)
    return out


def face_tensor(a, axis, periodic):
    """Average coefficient rows A^{axis, .} onto +faces along ``axis``.

    ``a``: (*grid, d, d, N, N).  Returns (*faces, d, N, N) where the face count
    equals the node count (periodic) or nodes-1 (bounded).
    """
    row = a[..., axis, :, :, :]
    if periodic:
        lo, hi = row, np.roll(row, -1, axis=axis)
    else:
        sl_lo = [slice(None)] * row.ndim
        sl_hi = [slice(None)] * row.ndim
        sl_lo[axis] = slice(None, -1)
        sl_hi[axis] = slice(1, None)
        lo, hi = row[tuple(sl_lo)], row[tuple(sl_hi)]
    out = harmonic_or_arithmetic(lo, hi, harmonic=False)
    # harmonic mean on the doubly-diagonal entries A^{aa}_{ii}
    n_comp = a.shape[-1]
    for i in range(n_comp):
        out[..., axis, i, i] = harmonic_or_arithmetic(
            lo[..., axis, i, i], hi[..., axis, i, i], harmonic=True
        )
    return out


def _roll_diff(w, axis, h):
    return (np.roll(w, -1, axis=axis) - w) / h


def _centered(w, axis, h, periodic):
    if periodic:
        return (np.roll(w, -1, axis=axis) - np.roll(w, 1, axis=axis)) / (2.0 * h)
    return np.gradient(w, h, axis=axis, edge_order=2)


def stencil_is_symmetric(a, rtol=1e-13):
    """True when all off-diagonal Greek blocks vanish and diagonal blocks are
    symmetric in the component indices; CG applies then."""
    d = a.shape[a.ndim - 4]
    scale = np.abs(a).max() or 1.0
    for al in range(d):
        for be in range(d):
            if al == be:
                blk = a[..., al, al, :, :]
                if not np.allclose(blk, np.swapaxes(blk, -1, -2), atol=rtol * scale):
                    return False
            elif np.abs(a[..., al, be, :, :]).max() > rtol * scale:
                return False
    return True


def krylov_solve(apply_fn, rhs, diag, symmetric, rtol, maxiter, x0=None):
    """Solve apply_fn(x) = rhs with diagonal preconditioning.

    Returns (x, relative_residual, iterations); raises SolverError when the
    Krylov iteration does not reach ``rtol`` within ``maxiter``.
    """
    n = rhs.size
    rhs_flat = rhs.ravel()
    rhs_norm = np.linalg.norm(rhs_flat)
    if rhs_norm == 0.0:
        return np.zeros_like(rhs_flat), 0.0, 0
    dflat = diag.ravel()
    op = LinearOperator((n, n), dtype=float, matvec=lambda v: apply_fn(v).ravel())
    prec = LinearOperator((n, n), dtype=float, matvec=lambda v: v / dflat)
    count = [0]

    def _cb(_):
        count[0] += 1

    method = cg if symmetric else bicgstab
    x, info = method(op, rhs_flat, rtol=rtol, atol=0.0, maxiter=maxiter, M=prec,
                     x0=None if x0 is None else x0.ravel(), callback=_cb)
    residual = np.linalg.norm(rhs_flat - apply_fn(x).ravel()) / rhs_norm
    if info != 0 or not np.isfinite(residual) or residual > 10 * rtol:
        raise SolverError(
            f"Krylov solve did not converge: info={info}, residual={residual:.3e} "
            f"after {count[0]} iterations",
            residual=residual, iterations=count[0],
        )
    return x, residual, count[0]


class TorusOperator:
    """-div(A grad .) on the unit torus [0,1)^d, M_axis nodes per axis."""

    def __init__(self, a):
        self.a = np.asarray(a, float)
        self.d = self.a.shape[self.a.ndim - 4]
        self.grid = self.a.shape[: self.d]
        self.n_comp = self.a.shape[-1]
        self.h = tuple(1.0 / m for m in self.grid)
        self.faces = [face_tensor(self.a, al, periodic=True) for al in range(self.d)]
        self._cross = [
            any(np.abs(self.faces[al][..., be, :, :]).max() > 0 for be in range(self.d) if be != al)
            for al in range(self.d)
        ]
        self.symmetric = stencil_is_symmetric(self.a)

    def apply(self, w):
        w = w.reshape(self.grid + (self.n_comp,))
        out = np.zeros_like(w)
        for al in range(self.d):
            flux = self.flux(w, al)
            out -= (flux - np.roll(flux, 1, axis=al)) / self.h[al]
        return out

    def flux(self, w, al):
        """alpha-component of A grad w at +faces along axis ``al``."""
        fa = self.faces[al]
        flux = np.einsum("...ij,...j->...i", fa[..., al, :, :], _roll_diff(w, al, self.h[al]))
        if self._cross[al]:
            for be in range(self.d):
                if be == al:
                    continue
                dc = _centered(w, be, self.h[be], periodic=True)
                gface = 0.5 * (dc + np.roll(dc, -1, axis=al))
                flux += np.einsum("...ij,...j->...i", fa[..., be, :, :], gface)
        return flux

    def diagonal(self):
        diag = np.zeros(self.grid + (self.n_comp,))
        for al in range(self.d):
            fdiag = np.einsum("...ii->...i", self.faces[al][..., al, :, :])
            diag += (fdiag + np.roll(fdiag, 1, axis=al)) / self.h[al] ** 2
        return diag

    def solve(self, rhs, rtol=1e-10, maxiter=10_000):
        """Zero-mean solution of -div(A grad u) = rhs on the torus.

        The right side is projected onto zero mean first (compatibility), and
        the gauge freedom is fixed by a zero-mean solution.
        """
        rhs = rhs.reshape(self.grid + (self.n_comp,))
        rhs = rhs - rhs.mean(axis=tuple(range(self.d)))
        x, residual, its = krylov_solve(
            lambda v: self.apply(v.reshape(rhs.shape)),
            rhs, self.diagonal(), self.symmetric, rtol, maxiter,
        )
        u = x.reshape(rhs.shape)
        u = u - u.mean(axis=tuple(range(self.d)))
        return u, residual, its


class BoxOperator:
    """-div(A grad .) on a 2D box grid with mixed boundary conditions.

    Axis 0 is periodic or Dirichlet; axis 1 is bounded with configurable
    bottom/top conditions ('dirichlet' or 'neumann', the latter meaning zero
    conormal flux through the outer face).  Unknowns are the nodes of ``mask``;
    all other nodes hold prescribed values.
    """

    def __init__(self, a, spacing, periodic0=True, bc_bottom="dirichlet",
                 bc_top="dirichlet", mask=None):
        self.a = np.asarray(a, float)
        self.h = (float(spacing[0]), float(spacing[1]))
        self.grid = self.a.shape[:2]
        self.n_comp = self.a.shape[-1]
        self.periodic0 = bool(periodic0)
        self.bc = (bc_bottom, bc_top)
        self.faces = [face_tensor(self.a, al, periodic=(al == 0 and self.periodic0))
                      for al in range(2)]
        self._cross = [
            any(np.abs(self.faces[al][..., be, :, :]).max() > 0 for be in range(2) if be != al)
            for al in range(2)
        ]
        self.symmetric = stencil_is_symmetric(self.a)
        if mask is None:
            mask = np.ones(self.grid, bool)
            if not self.periodic0:
                mask[0, :] = False
                mask[-1, :] = False
            if bc_bottom == "dirichlet":
                mask[:, 0] = False
            if bc_top == "dirichlet":
                mask[:, -1] = False
        self.mask = mask

    def _face_gradient(self, w, al):
        fa = self.faces[al]
        periodic = al == 0 and self.periodic0
        if periodic:
            g = _roll_diff(w, al, self.h[al])
        else:
            sl_hi = (slice(1, None),) if al == 0 else (slice(None), slice(1, None))
            sl_lo = (slice(None, -1),) if al == 0 else (slice(None), slice(None, -1))
            g = (w[sl_hi] - w[sl_lo]) / self.h[al]
        flux = np.einsum("...ij,...j->...i", fa[..., al, :, :], g)
        if self._cross[al]:
            be = 1 - al
            dc = _centered(w, be, self.h[be], periodic=(be == 0 and self.periodic0))
            if periodic:
                gface = 0.5 * (dc + np.roll(dc, -1, axis=al))
            else:
                gface = 0.5 * (dc[sl_hi] + dc[sl_lo])
            flux += np.einsum("...ij,...j->...i", fa[..., be, :, :], gface)
        return flux

    def apply_full(self, w):
        """Operator applied to the full node field (boundary rows included).

        Equations at Dirichlet rows are meaningless and masked off by callers;
        Neumann rows see a zero outer-face flux.
        """
        out = np.zeros_like(w)
        # axis 0
        flux = self._face_gradient(w, 0)
        if self.periodic0:
            out -= (flux - np.roll(flux, 1, axis=0)) / self.h[0]
        else:
            out[1:-1] -= (flux[1:] - flux[:-1]) / self.h[0]
        # axis 1
        flux = self._face_gradient(w, 1)
        out[:, 1:-1] -= (flux[:, 1:] - flux[:, :-1]) / self.h[1]
        if self.bc[0] == "neumann":
            out[:, 0] -= (flux[:, 0] - 0.0) / self.h[1]
        if self.bc[1] == "neumann":
            out[:, -1] -= (0.0 - flux[:, -1]) / self.h[1]
        return out

    def diagonal(self):
        diag = np.zeros(self.grid + (self.n_comp,))
        f0 = np.einsum("...ii->...i", self.faces[0][..., 0, :, :])
        if self.periodic0:
            diag += (f0 + np.roll(f0, 1, axis=0)) / self.h[0] ** 2
        else:
            diag[1:-1] += (f0[1:] + f0[:-1]) / self.h[0] ** 2
            diag[0] += f0[0] / self.h[0] ** 2
            diag[-1] += f0[-1] / self.h[0] ** 2
        f1 = np.einsum("...ii->...i", self.faces[1][..., 1, :, :])
        diag[:, 1:-1] += (f1[:, 1:] + f1[:, :-1]) / self.h[1] ** 2
        diag[:, 0] += f1[:, 0] / self.h[1] ** 2
        diag[:, -1] += f1[:, -1] / self.h[1] ** 2
        return diag

    def solve(self, fixed, f=None, rtol=1e-10, maxiter=10_000):
        """Solve with prescribed values on non-mask nodes.

        ``fixed``: full field carrying boundary/exterior values (entries under
        the mask are ignored).  ``f``: volumetric right side.  Returns the full
        solution field plus (residual, iterations).
        """
        fixed = fixed.reshape(self.grid + (self.n_comp,))
        base = fixed.copy()
        base[self.mask] = 0.0
        if f is None:
            f = np.zeros_like(base)
        else:
            f = np.broadcast_to(np.asarray(f, float).reshape(self.grid + (self.n_comp,)),
                                base.shape)
        rhs = (f - self.apply_full(base))[self.mask]
        diag = self.diagonal()[self.mask]

        def apply_masked(v):
            w = np.zeros_like(base)
            w[self.mask] = v.reshape(rhs.shape)
            return self.apply_full(w)[self.mask]

        x, residual, its = krylov_solve(apply_masked, rhs, diag, self.symmetric,
                                        rtol, maxiter)
        out = base
        out[self.mask] = x.reshape(rhs.shape)
        return out, residual, its

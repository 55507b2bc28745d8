"""Small-divisor certificates for boundary normals.

A normal n is useful for the quasiperiodic boundary-layer construction when
its lattice products stay away from zero:  |n . xi| >= kappa |xi|^{-l} for all
nonzero integer xi (exponent l = 2 by default in dimension two).  Certificates
are computed by exhaustive scan over the truncated frequency box
0 < |xi|_inf <= Xi and carry both the normal products |n . xi| and the
tangential products |n^perp . xi|; the boundary-layer solver consumes the
tangential convention (its small divisors are lambda . m with lambda = n^perp),
while membership in the good set A_kappa is stated with the normal one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiophantineCertificate:
    """Truncated small-divisor constants for one unit normal."""
    n: tuple
    exponent: float
    truncation: int
    kappa_normal: float          # min |n . xi| |xi|^l over the scan box
    kappa_tangent: float         # min |n^perp . xi| |xi|^l
    xi_normal: tuple
    xi_tangent: tuple

    def admits(self, kappa, convention="normal"):
        value = self.kappa_normal if convention == "normal" else self.kappa_tangent
        return bool(value >= kappa)


def _scan_box(truncation):
    r = np.arange(-truncation, truncation + 1)
    x1, x2 = np.meshgrid(r, r, indexing="ij")
    xi = np.stack([x1.ravel(), x2.ravel()], axis=1).astype(float)
    keep = np.abs(xi).max(axis=1) > 0
    return xi[keep]


def diophantine_constant(n, truncation=1000, exponent=2.0):
    """Exhaustive scan over 0 < |xi|_inf <= truncation.

    Returns the certificate with kappa_obs under both the n . xi and
    n^perp . xi conventions and the minimizing frequencies.
    """
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    n = np.asarray(n, float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValueError("normal must be a unit vector")
    xi = _scan_box(int(truncation))
    norms = np.linalg.norm(xi, axis=1) ** exponent
    prod_n = np.abs(xi @ n) * norms
    perp = np.array([-n[1], n[0]])
    prod_t = np.abs(xi @ perp) * norms
    i_n = int(np.argmin(prod_n))
    i_t = int(np.argmin(prod_t))
    return DiophantineCertificate(
        n=tuple(float(v) for v in n),
        exponent=float(exponent),
        truncation=int(truncation),
        kappa_normal=float(prod_n[i_n]),
        kappa_tangent=float(prod_t[i_t]),
        xi_normal=tuple(int(v) for v in xi[i_n]),
        xi_tangent=tuple(int(v) for v in xi[i_t]),
    )


def in_A_kappa(n, kappa, truncation=1000, exponent=2.0, convention="normal"):
    """Truncated membership test: kappa_obs(n, Xi, l) >= kappa.

    Only a certificate up to frequency Xi; frequencies beyond the scan box
    cannot be excluded, but discrete solvers never see them either.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    cert = diophantine_constant(n, truncation=truncation, exponent=exponent)
    return cert.admits(kappa, convention=convention)


def sample_normals(count, seed):
    """Deterministic uniform normals on the unit circle (counter-based RNG)."""
    rng = np.random.Generator(np.random.Philox(seed))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=count)
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def measure_complement(kappa, samples=1000, truncation=50, seed=0, exponent=2.0):
    """Monte-Carlo estimate of the fraction of normals outside A_kappa.

    Returns (fraction, ci_low, ci_high) with a Wilson 95% interval.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    normals = sample_normals(samples, seed)
    xi = _scan_box(int(truncation))
    norms = np.linalg.norm(xi, axis=1) ** exponent
    prod = np.abs(normals @ xi.T) * norms       # (samples, n_xi)
    kappa_obs = prod.min(axis=1)
    fails = int(np.count_nonzero(kappa_obs < kappa))
    frac = fails / samples
    z = 1.959963984540054
    denom = 1.0 + z * z / samples
    center = (frac + z * z / (2 * samples)) / denom
    half = z * np.sqrt(frac * (1 - frac) / samples + z * z / (4 * samples**2)) / denom
    lo = min(max(0.0, center - half), frac)   # roundoff guard: CI contains p-hat
    hi = max(min(1.0, center + half), frac)
    return frac, lo, hi


def measure_sweep(kappas, samples=1000, truncation=50, seed=0, exponent=2.0):
    """measure_complement over a list of kappa levels (shared sample set)."""
    rows = []
    for kappa in kappas:
        frac, lo, hi = measure_complement(kappa, samples=samples,
                                          truncation=truncation, seed=seed,
                                          exponent=exponent)
        rows.append({"kappa": float(kappa), "fraction": frac,
                     "ci_low": lo, "ci_high": hi})
    return rows

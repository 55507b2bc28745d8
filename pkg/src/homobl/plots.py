"""Static SVG figures for reports.

Matplotlib with the Agg backend; SVG output is made reproducible by fixing
the hash salt and dropping the creation date, so identical runs emit
byte-identical figures.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "homobl"
_SAVE_KW = {"metadata": {"Date": None}, "bbox_inches": "tight"}


def save_decay_figure(path, t, decay, fit=None, title="tail energy"):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    t = np.asarray(t, float)
    decay = np.asarray(decay, float)
    pos = decay > 0
    ax.semilogy(t[pos], decay[pos], "k.-", ms=3, lw=0.8, label="F(t)")
    if fit and fit.get("exp_rate") is not None:
        rate = fit["exp_rate"]
        ref = decay[pos][0] * np.exp(-rate * (t[pos] - t[pos][0]))
        ax.semilogy(t[pos], ref, "r--", lw=0.8,
                    label=f"exp fit, rate {rate:.3g}")
    ax.set_xlabel("t")
    ax.set_ylabel("F(t)")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_convergence_figure(path, eps_values, error_sets, threshold=None,
                            title="convergence"):
    """Log-log error curves; ``error_sets`` maps label -> error list."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    eps_values = np.asarray(eps_values, float)
    for label, errs in error_sets.items():
        errs = np.asarray([np.nan if e is None else e for e in errs], float)
        ax.loglog(eps_values, errs, "o-", ms=4, lw=0.9, label=label)
    if threshold:
        ref = error_sets[next(iter(error_sets))]
        ref0 = next((e for e in ref if e), None)
        if ref0:
            ax.loglog(eps_values, ref0 * (eps_values / eps_values[0]) ** threshold,
                      "k:", lw=0.8, label=f"slope {threshold:.3g}")
    ax.set_xlabel("eps")
    ax.set_ylabel("error")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_measure_figure(path, rows, title="excluded-normal fraction"):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    k = np.array([r["kappa"] for r in rows])
    f = np.array([r["fraction"] for r in rows])
    lo = np.array([r["ci_low"] for r in rows])
    hi = np.array([r["ci_high"] for r in rows])
    ax.errorbar(k, f, yerr=[f - lo, hi - f], fmt="o-", ms=4, lw=0.9, capsize=3)
    ax.set_xlabel("kappa")
    ax.set_ylabel("fraction outside")
    ax.set_title(title)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path

"""Command-line front end: validate / cell / bl / dioph / sweep.

Each run resolves its output directory (HOMOBL_OUT env var beats --out beats
the config), writes the manifest before any other artifact, executes the
pipeline, and finalizes the manifest with timings and failure markers.  Exit
status is 0 only for a clean run.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bl as bl_mod
from . import cell as cell_mod
from . import dioph as dioph_mod
from . import homog, plots
from .coeffs import build_tensor, tensor_to_csv, torus_nodes, validate_ellipticity
from .config import ConfigError, build_datum, build_domain, build_source, parse_config
from .report import RunManifest, grid_field_csv, write_csv, write_json


def _common_args(sub):
    sub.add_argument("--config", required=True, help="TOML experiment config")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="override config seed")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads for independent jobs")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="homobl",
        description="effective tensors, boundary layers, and convergence sweeps "
                    "for oscillating elliptic problems")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("validate", "build the coefficient tensor and check ellipticity"),
        ("cell", "solve the cell problems and export effective constants"),
        ("bl", "solve one boundary-layer problem and export tail diagnostics"),
        ("dioph", "Diophantine certificate for a normal"),
        ("sweep", "full convergence sweep against the homogenized limit"),
    ):
        sub = subs.add_parser(name, help=doc)
        _common_args(sub)
        if name == "dioph":
            sub.add_argument("--measure", action="store_true",
                             help="Monte-Carlo measure of the excluded normal set")
    return parser


def _tensor_from(config):
    spec = dict(config.tensor)
    m = int(spec.pop("resolution", 64))
    return build_tensor(spec, m)


def cmd_validate(config, outdir, manifest, args, seed):
    a = _tensor_from(config)
    report = validate_ellipticity(a, a.lam, samples=64, seed=seed)
    p = write_json(outdir / "ellipticity.json", report)
    manifest.add_artifact(p)
    p = tensor_to_csv(a, outdir / "tensor.csv")
    manifest.add_artifact(outdir / "tensor.csv")
    if not report.passed:
        manifest.add_failure({"stage": "validate",
                              "lam_min": report.lam_min,
                              "worst_node": list(report.worst_node)})


def cmd_cell(config, outdir, manifest, args, seed):
    a = _tensor_from(config)
    cs = cell_mod.compute_correctors(a, rtol=float(config.solver["rtol"]),
                                     maxiter=int(config.solver["maxiter"]))
    summary = {
        "a0": cs.a0,
        "c3": cs.c3,
        "resolution": cs.resolution,
        "max_residual": max(max(cs.residuals["chi"], default=0.0),
                            max(cs.residuals.get("upsilon", []), default=0.0)),
        "chi_mean_abs": float(np.abs(cs.chi.mean(axis=(1, 2))).max()),
        "upsilon_mean_abs": float(np.abs(cs.upsilon.mean(axis=(2, 3))).max()),
    }
    manifest.add_artifact(write_json(outdir / "correctors.json", summary))
    nodes = torus_nodes(cs.resolution, cs.d).reshape(-1, cs.d)
    for name, arr in (("chi", cs.chi), ("upsilon", cs.upsilon)):
        # columns: one per (direction indices, i, j)
        lead = arr.shape[: arr.ndim - cs.d - 2]
        cols = arr.reshape(lead + (nodes.shape[0],) + arr.shape[-2:])
        header = [f"y{k+1}" for k in range(cs.d)]
        data_cols = []
        for idx in np.ndindex(lead):
            for i in range(cs.n_comp):
                for j in range(cs.n_comp):
                    tag = "".join(str(v + 1) for v in idx)
                    header.append(f"{name}{tag}_{i+1}{j+1}")
                    data_cols.append(cols[idx][:, i, j])
        rows = np.column_stack([nodes] + data_cols)
        manifest.add_artifact(write_csv(outdir / f"{name}.csv", header, rows))


def cmd_bl(config, outdir, manifest, args, seed):
    a = _tensor_from(config)
    datum = build_datum(config)
    anchor = np.asarray(config.bl["anchor"], float)
    n = np.asarray(config.bl["normal"], float)
    n = n / np.linalg.norm(n)
    height = float(config.bl["height"]) or None
    problem = bl_mod.BLProblem(
        a_field=a, n=tuple(n),
        datum=lambda y: datum.evaluate(np.broadcast_to(anchor, y.shape), y),
        offset=float(config.bl["offset"]), height=height,
        tangential_resolution=int(config.bl["tangential_resolution"]),
        theta_modes=int(config.bl["theta_modes"]),
        rtol=float(config.solver["rtol"]), maxiter=int(config.solver["maxiter"]))
    sol = bl_mod.solve_bl(problem)
    sensitivity = None
    offset_prime = config.bl.get("offset_prime")
    try:
        tail = bl_mod.tail_constant(sol, offset_prime)
        sensitivity = tail.offset_sensitivity
    except bl_mod.TailUnreliableError as exc:
        manifest.add_failure({"stage": "bl", "error": str(exc)})
    payload = {
        "n": list(n), "a": problem.offset, "L": sol.height,
        "path": sol.path, "U_inf": sol.u_inf, "decay_class": sol.decay_class,
        "fit": sol.fit, "truncation_warning": sol.truncation_warning,
        "residual": sol.residual, "iterations": sol.iterations,
        "offset_sensitivity": sensitivity,
    }
    manifest.add_artifact(write_json(outdir / "bl.json", payload))
    rows = np.column_stack([sol.t_samples, sol.decay])
    manifest.add_artifact(write_csv(outdir / "decay.csv", ["t", "F"], rows))
    manifest.add_artifact(
        plots.save_decay_figure(outdir / "decay.svg", sol.t_samples, sol.decay,
                                sol.fit))


def cmd_dioph(config, outdir, manifest, args, seed):
    n = np.asarray(config.bl["normal"], float)
    n = n / np.linalg.norm(n)
    sec = config.dioph
    cert = dioph_mod.diophantine_constant(
        tuple(n), truncation=int(sec["truncation"]),
        exponent=float(sec["exponent"]))
    payload = asdict(cert)
    payload["kappa_level"] = sec["kappa"]
    payload["in_A_kappa"] = cert.admits(float(sec["kappa"]))
    manifest.add_artifact(write_json(outdir / "certificate.json", payload))
    if getattr(args, "measure", False):
        rows = dioph_mod.measure_sweep(
            [float(k) for k in sec["kappas"]], samples=int(sec["samples"]),
            truncation=int(sec["truncation"]), seed=seed,
            exponent=float(sec["exponent"]))
        table = [[r["kappa"], r["fraction"], r["ci_low"], r["ci_high"]]
                 for r in rows]
        manifest.add_artifact(write_csv(outdir / "measure.csv",
                                        ["kappa", "fraction", "ci_low", "ci_high"],
                                        table))
        manifest.add_artifact(plots.save_measure_figure(outdir / "measure.svg",
                                                        rows))


def cmd_sweep(config, outdir, manifest, args, seed, threads):
    a = _tensor_from(config)
    datum = build_datum(config)
    source = build_source(config)
    domain = build_domain(config)
    sw = config.sweep
    sweep_cfg = homog.SweepConfig(
        eps_list=[float(e) for e in sw["epsilons"]],
        order=int(sw["order"]), kappa=float(sw["kappa"]),
        interior_margin=float(sw["interior_margin"]),
        points_per_eps=int(sw["points_per_eps"]),
        rtol=float(config.solver["rtol"]), threads=threads,
        alpha_geom=float(sw["alpha_geom"]),
        bl_kwargs={"tangential_resolution": int(config.bl["tangential_resolution"]),
                   "theta_modes": int(config.bl["theta_modes"])})
    report = homog.run_sweep(a, datum, source, domain, sweep_cfg)
    payload = asdict(report)
    payload.pop("timings", None)   # wall-clock lives in the manifest only
    manifest.add_artifact(write_json(outdir / "report.json", payload))
    rows = []
    for i, eps in enumerate(report.eps_list):
        run_a = report.running_alpha[i] if i < len(report.running_alpha) else None
        rows.append([eps, report.l2_errors[i], report.h1_interior_errors[i],
                     run_a])
    manifest.add_artifact(write_csv(outdir / "report.csv",
                                    ["eps", "l2_error", "h1_interior_error",
                                     "alpha_running"], rows))
    manifest.add_artifact(plots.save_convergence_figure(
        outdir / "convergence.svg", report.eps_list,
        {"L2(Omega) vs u0": report.l2_errors,
         f"H1(omega) vs order-{report.order}": report.h1_interior_errors},
        threshold=report.theorem_threshold))
    for marker in report.failures:
        manifest.add_failure(marker)
    for stage, seconds in report.timings.items():
        manifest.add_timing(f"sweep.{stage}", seconds)
    if config.output.get("emit_fields"):
        eps0 = sweep_cfg.eps_list[0]
        fine = homog.solve_fine(a, datum, source, eps0, domain,
                                rtol=sweep_cfg.rtol)
        manifest.add_artifact(grid_field_csv(
            outdir / "fields.csv", fine.grid.coords,
            {"u_fine": fine.field[..., 0]}))


_COMMANDS = {"validate": cmd_validate, "cell": cmd_cell, "bl": cmd_bl,
             "dioph": cmd_dioph}


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    outdir = Path(os.environ.get("HOMOBL_OUT") or args.out
                  or config.output["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else int(config.output["seed"])
    threads = args.threads if args.threads is not None \
        else int(config.output["threads"])
    manifest = RunManifest(outdir, args.command, config.hash(), seed)
    t0 = time.time()
    try:
        if args.command == "sweep":
            cmd_sweep(config, outdir, manifest, args, seed, threads)
        else:
            _COMMANDS[args.command](config, outdir, manifest, args, seed)
    except Exception as exc:
        manifest.add_failure({"stage": args.command, "error": str(exc),
                              "type": type(exc).__name__})
        if os.environ.get("HOMOBL_DEBUG"):
            traceback.print_exc()
    manifest.add_timing("total", time.time() - t0)
    ok = manifest.finalize()
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

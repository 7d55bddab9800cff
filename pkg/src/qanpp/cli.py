"""Reproducible experiment runner.

Every subcommand writes a JSON-lines manifest (config first, results
appended) plus CSV/JSON outputs with stable column order into the output
directory.  Exit codes: 0 success, 1 validation error (bad flags, missing
files, violated preconditions), 2 numerical failure (non-convergence), with
a machine-readable error JSON on stderr.  Per-instance seeds derive from
the master seed as hash(master_seed, n, index), so worker count and
scheduling never change any number.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import binning as bn
from . import dynamics as dyn
from . import gap_theory as gt
from . import instance as npi
from . import residue_stats as rs
from . import spectrum as sp
from . import subharmonics as sh
from .instance import PreconditionError
from .spectrum import NumericalError, derive_instance_seed


def _out_dir(args) -> Path:
    path = Path(os.environ.get("QANPP_OUT", args.out))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(out: Path, args, extra: dict | None = None) -> Path:
    path = out / "manifest.jsonl"
    record = {
        "record": "config",
        "version": __version__,
        "argv": sys.argv[1:],
        "params": {k: v for k, v in vars(args).items() if k != "func"},
        "time": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        record.update(extra)
    with path.open("a") as fh:
        fh.write(json.dumps(record) + "\n")
    return path


def _append(manifest: Path, record: dict) -> None:
    with manifest.open("a") as fh:
        fh.write(json.dumps(record) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_instance(args) -> npi.NppInstance:
    if args.instance:
        return npi.load(args.instance)
    return npi.generate(args.n, args.b, args.seed, with_a0=args.a0)


def _add_instance_args(p: argparse.ArgumentParser, a0_default: bool) -> None:
    p.add_argument("--instance", type=str, default=None, help="instance JSON file")
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--b", type=int, default=25)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument(
        "--a0", action=argparse.BooleanOptionalAction, default=a0_default,
        help="draw the symmetry-breaking extra number",
    )


def _add_binning_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--K", type=int, default=16, help="target solution-bin multiplicity")
    p.add_argument("--mode", choices=bn.MODES, default="paper-default")


def cmd_gen(args) -> int:
    inst = npi.generate(args.n, args.b, args.seed, with_a0=args.a0)
    text = npi.to_json(inst) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_stats(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    inst = _load_instance(args)
    hist = rs.coarse_p_omega(inst, args.window)
    theory = rs.GaussTheory.from_instance(inst)
    _write_csv(
        out / "p_omega.csv",
        ["omega", "density", "gauss_density"],
        [
            (c, d, float(theory.density(c)))
            for c, d in zip(hist.centers, hist.density)
        ],
    )
    sup = rs.gaussian_cdf_distance(inst) if inst.n <= npi.TABLE_MAX_N else math.nan
    summary = {
        "sigma0": inst.sigma0(),
        "mean_energy": theory.mean_energy,
        "cdf_sup_distance": sup,
        "kk_energy": npi.karmarkar_karp(inst).energy,
    }
    (out / "stats.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def cmd_cond(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    inst = _load_instance(args)
    ancestors = rs.select_ancestors(inst, args.ancestors, abs_window=args.ancestor_window)
    rows = rs.scaled_density_profile(
        inst, ancestors, window=args.window, mode=args.mode_est, n_samples=args.samples
    )
    _write_csv(
        out / "scaled_density.csv",
        ["r", "q", "ancestor_id", "omega_z", "s_value", "theory_value"],
        [(d["r"], d["q"], d["ancestor_id"], d["omega_z"], d["s_value"], d["theory_value"]) for d in rows],
    )
    sigma0 = inst.sigma0()
    q_rows = []
    for z in ancestors[: args.q_ancestors]:
        for r in range(2, inst.n // 2 + 1):
            q = 1.0 - 2.0 * r / inst.n
            sq = rs.sigma_q(sigma0, q)
            grid = np.linspace(0.0, 4.0, 41) * sq * math.sqrt(2.0 * inst.n)
            emp = rs.q_integral_curve(inst, z, r, grid, mode=args.mode_est, n_samples=args.samples)
            th = rs.q_integral_theory(q, grid, sigma0, inst.n)
            q_rows.extend((g, e, t) for g, e, t in zip(grid, emp, th))
    _write_csv(out / "q_integral.csv", ["omega_prime", "Q_emp", "Q_theory"], q_rows)
    _append(man, {"record": "result", "ancestors": ancestors})
    return 0


def cmd_binning(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    inst = _load_instance(args)
    binning = bn.build_binning(inst, K=args.K, mode=args.mode)
    dims = bn.subspace_dims(inst, binning)
    (out / "binning.json").write_text(bn.summary_json(binning, dims) + "\n")
    _append(man, {"record": "result", "M": binning.M, "d0": dims.d0})
    return 0


def cmd_gap(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    inst = _load_instance(args)
    binning = bn.build_binning(inst, K=args.K, mode=args.mode)
    dims = bn.subspace_dims(inst, binning)
    scan = sp.gap_scan(inst, binning, refine_tol=args.refine_tol)
    _write_csv(
        out / "gap_scan.csv",
        ["tau", "lambda0", "lambda1", "gap"],
        zip(scan.taus, scan.lam0, scan.lam1, scan.gap),
    )
    params = gt.branch_params(inst, binning, dims)
    cp = gt.crossing_point(params)
    summary = {
        "tau_star": scan.tau_star,
        "g_min": scan.g_min,
        "matrix_element": scan.matrix_element,
        "tau_star_theory": cp.tau_star,
        "gmin_theory": gt.gmin_estimate(params, cp.tau_star),
        "d0": dims.d0,
    }
    (out / "gap.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def cmd_spectrum_full(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    inst = _load_instance(args)
    binning = bn.build_binning(inst, K=args.K, mode=args.mode)
    cum = sp.full_spectrum(inst, binning, args.tau)
    _write_csv(
        out / "cumulative_density.csv",
        ["eta", "lambda"],
        ((i + 1, lam) for i, lam in enumerate(cum.lams)),
    )
    summary = {"c0": cum.c0, "c1": cum.c1, "eta_m": cum.eta_m, "r_squared": cum.r_squared}
    (out / "sqrt_fit.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def cmd_theory(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    inst = _load_instance(args)
    binning = bn.build_binning(inst, K=args.K, mode=args.mode)
    dims = bn.subspace_dims(inst, binning)
    params = gt.branch_params(inst, binning, dims)
    cp = gt.crossing_point(params)
    taus = np.linspace(0.05, min(0.95, 1.0 - 1.01 * params.mu), 46)
    _write_csv(
        out / "branches.csv",
        ["tau", "lambda_i", "lambda_f", "tau_star_flag"],
        (
            (t, gt.branch_initial(params, t), gt.branch_final(params, t), int(abs(t - cp.tau_star) < 0.01))
            for t in taus
        ),
    )
    summary = {
        "mu": params.mu,
        "tau_star_theory": cp.tau_star,
        "tau_star_closed": cp.tau_star_closed,
        "gmin_theory": gt.gmin_estimate(params, cp.tau_star),
        "runtime_bound": gt.runtime_bound(params, float(inst.n), cp.tau_star),
    }
    (out / "theory.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def cmd_evolve(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    inst = _load_instance(args)
    binning = bn.build_binning(inst, K=args.K, mode=args.mode)
    res = dyn.evolve(inst, binning, args.T, dt=args.dt, trace_points=args.trace_points)
    if res.trace:
        _write_csv(out / "p0_trace.csv", ["t", "p0"], res.trace)
    summary = {"T": res.T, "steps": res.steps, "dt": res.dt, "p0": res.p0, "norm_drift": res.norm_drift}
    (out / "evolve.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def cmd_complexity(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    inst = _load_instance(args)
    binning = bn.build_binning(inst, K=args.K, mode=args.mode)
    curve = dyn.complexity_curve(inst, binning)
    _write_csv(
        out / "complexity.csv",
        ["T", "p0", "C"],
        (
            (t, p, c)
            for t, p, c, done in zip(curve.ts, curve.p0s, curve.cs, curve.evaluated)
            if done
        ),
    )
    summary = {"T_min": curve.T_min, "C_min": curve.C_min, "p0_at_min": curve.p0_at_min, "d0": curve.d0}
    (out / "complexity.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def _parse_range(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in spec.split(",")]


def cmd_sweep_gmin(args) -> int:
    out = _out_dir(args)
    ns = _parse_range(args.n_range)
    seeds = {n: [derive_instance_seed(args.master_seed, n, i) for i in range(args.instances)] for n in ns}
    man = _manifest(out, args, {"instance_seeds": {str(n): s for n, s in seeds.items()}})
    sweep = sp.gmin_scaling_sweep(
        ns, args.b, args.instances, K=args.K, master_seed=args.master_seed, workers=args.workers
    )
    slope, intercept = sweep.slope()
    _write_csv(
        out / "gmin_sweep.csv",
        ["n", "median_gmin", "q25", "q75", "count"],
        (
            (
                n,
                float(np.median(sweep.gmins[n])),
                float(np.percentile(sweep.gmins[n], 25)),
                float(np.percentile(sweep.gmins[n], 75)),
                len(sweep.gmins[n]),
            )
            for n in ns
        ),
    )
    summary = {"slope_log2": slope, "intercept": intercept, "failures": sweep.failures}
    (out / "gmin_sweep.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def cmd_sweep_cmin(args) -> int:
    out = _out_dir(args)
    ns = _parse_range(args.n_range)
    seeds = {n: [derive_instance_seed(args.master_seed, n, i) for i in range(args.trials)] for n in ns}
    man = _manifest(out, args, {"instance_seeds": {str(n): s for n, s in seeds.items()}})
    fit = dyn.cmin_scaling_sweep(
        ns, args.b, args.trials, K=args.K, master_seed=args.master_seed, workers=args.workers
    )
    _write_csv(
        out / "cmin_sweep.csv",
        ["n", "median_cmin", "q25", "q75", "count"],
        (
            (
                n,
                float(np.median(fit.cmins[n])),
                float(np.percentile(fit.cmins[n], 25)),
                float(np.percentile(fit.cmins[n], 75)),
                len(fit.cmins[n]),
            )
            for n in ns
        ),
    )
    summary = {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "slope_all_points": fit.slope_all_points,
        "failures": fit.failures,
    }
    (out / "cmin_sweep.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def cmd_subharm(args) -> int:
    out = _out_dir(args)
    man = _manifest(out, args)
    if args.n_range:
        ns = _parse_range(args.n_range)
        rows = sh.qmax_ensemble(
            ns, args.b, gamma_c=args.gamma_c,
            instances_per_n=args.instances, master_seed=args.master_seed,
        )
        _write_csv(
            out / "qmax_ensemble.csv",
            ["n", "mean_log2_qmax", "var_log2_qmax", "boundary_count"],
            ((r.n, r.mean_log2_qmax, r.var_log2_qmax, r.boundary_count) for r in rows),
        )
        _append(man, {"record": "result", "rows": len(rows)})
        return 0
    inst = _load_instance(args)
    res = sh.q_max(inst, gamma_c=args.gamma_c)
    summary = {
        "q_max": res.q_max,
        "gamma_at_qmax": res.gamma_at_qmax,
        "grid_resolution": res.resolution,
        "boundary": res.boundary,
    }
    (out / "qmax.json").write_text(json.dumps(summary) + "\n")
    _append(man, {"record": "result", **summary})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qanpp", description=__doc__)
    parser.add_argument("--out", type=str, default="qanpp_out", help="output directory (env QANPP_OUT overrides)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--a0", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("-o", "--output", type=str, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("stats", help="coarse-grained residue distribution")
    _add_instance_args(p, a0_default=False)
    p.add_argument("--window", type=float, default=0.3)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("cond", help="conditional distributions and Q integral")
    _add_instance_args(p, a0_default=False)
    p.add_argument("--window", type=float, default=0.3)
    p.add_argument("--ancestor-window", type=float, default=0.3)
    p.add_argument("--ancestors", type=int, default=10)
    p.add_argument("--q-ancestors", type=int, default=4)
    p.add_argument("--samples", type=int, default=rs.DEFAULT_SAMPLES)
    p.add_argument("--mode-est", choices=("exact", "sampled"), default="sampled")
    p.set_defaults(func=cmd_cond)

    p = sub.add_parser("binning", help="bin ladder and subspace dimensions")
    _add_instance_args(p, a0_default=True)
    _add_binning_args(p)
    p.set_defaults(func=cmd_binning)

    p = sub.add_parser("gap", help="gap scan with refinement")
    _add_instance_args(p, a0_default=True)
    _add_binning_args(p)
    p.add_argument("--refine-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("spectrum-full", help="dense spectrum and square-root fit")
    _add_instance_args(p, a0_default=True)
    _add_binning_args(p)
    p.add_argument("--tau", type=float, required=True)
    p.set_defaults(func=cmd_spectrum_full)

    p = sub.add_parser("theory", help="branch formulas, crossing point, gap estimate")
    _add_instance_args(p, a0_default=True)
    _add_binning_args(p)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("evolve", help="one Schrodinger evolution")
    _add_instance_args(p, a0_default=True)
    _add_binning_args(p)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--trace-points", type=int, default=0)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("complexity", help="C(T) curve and its minimum")
    _add_instance_args(p, a0_default=True)
    _add_binning_args(p)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("sweep-gmin", help="median g_min scaling over n")
    p.add_argument("--n-range", type=str, default="8..14", help="e.g. 8..14 or 8,10,12")
    p.add_argument("--b", type=int, default=25)
    p.add_argument("--instances", type=int, default=25)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--master-seed", type=int, default=2024)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_sweep_gmin)

    p = sub.add_parser("sweep-cmin", help="median C_min scaling over n")
    p.add_argument("--n-range", type=str, default="11..15")
    p.add_argument("--b", type=int, default=25)
    p.add_argument("--trials", type=int, default=25)
    p.add_argument("--K", type=int, default=16)
    p.add_argument("--master-seed", type=int, default=2024)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_sweep_cmin)

    p = sub.add_parser("subharm", help="dephasing root q_max (single instance or ensemble)")
    _add_instance_args(p, a0_default=False)
    p.add_argument("--gamma-c", type=float, default=sh.DEFAULT_GAMMA_C)
    p.add_argument("--n-range", type=str, default=None)
    p.add_argument("--instances", type=int, default=25)
    p.add_argument("--master-seed", type=int, default=77)
    p.set_defaults(func=cmd_subharm)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (PreconditionError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    except (NumericalError, dyn.StepSizeError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

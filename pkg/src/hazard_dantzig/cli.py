"""Command-line entry point: simulate, fit, factors, tail, bounds, experiment.

Every run writes its outputs atomically (temp file + rename) together with a
manifest echoing the full configuration, so outputs are reproducible
bit-for-bit from the manifest (timestamps live only in the manifest).
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    ExperimentConfig,
    constants_from_truth,
    mc_score_tail,
    run_experiment,
    tail_bound,
    theorem44_bound,
    theorem45_bounds,
    union_tail_bound,
)
from .dantzig import SolverConfig, gamma_schedule, solve_dsfph
from .factors import FactorOptions, compute_factor_report, read_matrix_csv
from .survival_sim import (
    ConfigError,
    SimConfig,
    load_csv,
    simulate_dataset,
    write_csv,
)


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_manifest(command: str, config, seeds, outputs, started: float, out_stem: Path):
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "version": __version__,
        "duration_seconds": time.time() - started,
        "outputs": [str(p) for p in outputs],
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = out_stem.parent / (out_stem.name + ".manifest.json")
    _atomic_write_text(path, _dump_json(manifest))
    return path


def _default_jobs() -> int:
    env = os.environ.get("HAZARD_DANTZIG_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _sim_config_from_args(args) -> SimConfig:
    if args.config:
        with open(args.config) as fh:
            obj = json.load(fh)
        if args.seed is not None:
            obj["seed"] = args.seed
        return SimConfig.from_json(obj)
    beta0 = (
        tuple(float(v) for v in args.beta0.split(","))
        if args.beta0
        else tuple(1.0 for _ in range(args.s))
    )
    return SimConfig.from_json(
        {
            "n": args.n,
            "p": args.p,
            "s": args.s,
            "beta0_values": list(beta0),
            "baseline": {"kind": "constant", "rate": args.baseline_rate},
            "censor_rate": args.censor_rate,
            "covariate_law": {"kind": "uniform", "halfwidth": args.halfwidth},
            "k1": args.k1,
            "tau": args.tau,
            "seed": args.seed if args.seed is not None else 0,
        }
    )


def _cmd_simulate(args) -> int:
    started = time.time()
    cfg = _sim_config_from_args(args)
    ds = simulate_dataset(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmpdir = out.parent
    fd, tmp = tempfile.mkstemp(dir=tmpdir, prefix=out.name, suffix=".tmp")
    os.close(fd)
    write_csv(ds, tmp)
    os.replace(tmp, out)
    _write_manifest("simulate", cfg.to_json(), [cfg.seed], [out], started, out)
    print(f"wrote {out} ({ds.n} rows, event fraction {ds.event_fraction:.3f})")
    return 0


def _cmd_fit(args) -> int:
    started = time.time()
    ds = load_csv(args.data)
    if args.gamma is not None:
        gamma = args.gamma
    elif args.k2 is not None:
        gamma = gamma_schedule(ds.n, ds.p, args.k2, args.alpha)
    else:
        raise ConfigError("fit requires either --gamma or --k2 (with --alpha)")
    cfg = SolverConfig(
        gamma=gamma,
        max_outer=args.max_outer,
        outer_tol=args.tol,
    )
    result = solve_dsfph(ds, cfg)
    out = Path(args.out)
    _atomic_write_text(out, _dump_json(result.to_json()))
    config_echo = {
        "data": str(args.data),
        "gamma": gamma,
        "k2": args.k2,
        "alpha": args.alpha,
        "max_outer": args.max_outer,
        "outer_tol": args.tol,
    }
    _write_manifest("fit", config_echo, [], [out], started, out)
    print(
        f"status={result.status} objective={result.objective:.6g} "
        f"constraint={result.constraint_value:.6g} (gamma={gamma:.6g})"
    )
    return 0


def _cmd_factors(args) -> int:
    started = time.time()
    matrix = read_matrix_csv(args.matrix)
    support = tuple(int(i) for i in args.support.split(","))
    opts = FactorOptions(
        restarts=args.restarts,
        oracle_samples=args.oracle_samples,
        seed=args.seed if args.seed is not None else 0,
    )
    report = compute_factor_report(matrix, support, opts=opts)
    out = Path(args.out)
    _atomic_write_text(out, _dump_json(report.to_json()))
    config_echo = {
        "matrix": str(args.matrix),
        "support": list(support),
        "restarts": args.restarts,
        "oracle_samples": args.oracle_samples,
        "seed": opts.seed,
    }
    _write_manifest("factors", config_echo, [opts.seed], [out], started, out)
    print(f"kappa={report.kappa:.6g} re={report.re:.6g} phi_2s={report.phi_2s:.6g}")
    return 0


def _cmd_tail(args) -> int:
    started = time.time()
    single = tail_bound(args.gamma, args.n, args.k1, args.k3)
    union = union_tail_bound(args.gamma, args.n, args.p, args.k1, args.k3)
    payload = {"gamma": args.gamma, "n": args.n, "p": args.p, "single": single, "union": union}
    seeds = []
    if args.mc_config:
        with open(args.mc_config) as fh:
            cfg = SimConfig.from_json(json.load(fh))
        est = mc_score_tail(cfg, args.gamma, args.mc_reps)
        payload["empirical"] = {
            "probability": est.probability,
            "ci_low": est.ci_low,
            "ci_high": est.ci_high,
            "reps": est.reps,
        }
        seeds = [cfg.seed]
    out = Path(args.out)
    _atomic_write_text(out, _dump_json(payload))
    _write_manifest("tail", {k: v for k, v in payload.items() if k != "empirical"},
                    seeds, [out], started, out)
    print(f"single={single:.6g} union={union:.6g}")
    return 0


def _cmd_bounds(args) -> int:
    started = time.time()
    if args.truth_config:
        with open(args.truth_config) as fh:
            cfg = SimConfig.from_json(json.load(fh))
        k3, k4, k5 = constants_from_truth(cfg.beta0_full, cfg.k1, cfg)
    else:
        k3, k4, k5 = args.k3, args.k4, args.k5
        if None in (k4, k5):
            raise ConfigError("bounds requires --truth-config or explicit --k4/--k5")
    b44 = theorem44_bound(k4, args.gamma, args.re, args.eps_n)
    b45_l1, b45_lq = theorem45_bounds(
        k5, args.s, args.gamma, args.kappa, args.f_q, args.q, args.eps_n
    )
    payload = {
        "k3": k3,
        "k4": k4,
        "k5": k5,
        "gamma": args.gamma,
        "s": args.s,
        "eps_n": args.eps_n,
        "bound44": "vacuous" if b44 is None else b44,
        "bound45_l1": "vacuous" if b45_l1 is None else b45_l1,
        "bound45_lq": "vacuous" if b45_lq is None else b45_lq,
    }
    out = Path(args.out)
    _atomic_write_text(out, _dump_json(payload))
    _write_manifest("bounds", payload, [], [out], started, out)
    print(
        f"bound44={payload['bound44']} bound45_l1={payload['bound45_l1']} "
        f"bound45_lq={payload['bound45_lq']}"
    )
    return 0


def _cmd_experiment(args) -> int:
    started = time.time()
    with open(args.config) as fh:
        exp = ExperimentConfig.from_json(json.load(fh))
    report = run_experiment(exp, jobs=args.jobs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "replications.csv"
    _atomic_write_text(json_path, _dump_json(report.to_json()))
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix="replications", suffix=".tmp")
    os.close(fd)
    report.write_csv(tmp)
    os.replace(tmp, csv_path)
    _write_manifest(
        "experiment",
        exp.to_json(),
        [exp.seed],
        [json_path, csv_path],
        started,
        out_dir / "experiment",
    )
    for n, agg in report.aggregates.items():
        print(f"n={n}: {agg}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazard-dantzig",
        description="Dantzig selector for proportional hazards: simulate, fit, verify",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a cohort and write it as CSV")
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--p", type=int, default=10)
    p_sim.add_argument("--s", type=int, default=3)
    p_sim.add_argument("--beta0", type=str, default=None, help="comma-separated S values")
    p_sim.add_argument("--baseline-rate", type=float, default=1.0)
    p_sim.add_argument("--censor-rate", type=float, default=0.0)
    p_sim.add_argument("--halfwidth", type=float, default=1.0)
    p_sim.add_argument("--k1", type=float, default=1.0)
    p_sim.add_argument("--tau", type=float, default=2.0)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--config", type=str, default=None, help="SimConfig JSON file")
    p_sim.add_argument("--out", type=str, required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit the estimator on a CSV dataset")
    p_fit.add_argument("--data", type=str, required=True)
    p_fit.add_argument("--gamma", type=float, default=None)
    p_fit.add_argument("--k2", type=float, default=None)
    p_fit.add_argument("--alpha", type=float, default=0.5)
    p_fit.add_argument("--max-outer", type=int, default=50)
    p_fit.add_argument("--tol", type=float, default=1e-6)
    p_fit.add_argument("--out", type=str, required=True)
    p_fit.set_defaults(func=_cmd_fit)

    p_fac = sub.add_parser("factors", help="cone factors and UUP constants of a matrix")
    p_fac.add_argument("--matrix", type=str, required=True, help="dense CSV matrix")
    p_fac.add_argument("--support", type=str, required=True, help="0-based indices, comma-separated")
    p_fac.add_argument("--restarts", type=int, default=64)
    p_fac.add_argument("--oracle-samples", type=int, default=100_000)
    p_fac.add_argument("--seed", type=int, default=0)
    p_fac.add_argument("--out", type=str, required=True)
    p_fac.set_defaults(func=_cmd_factors)

    p_tail = sub.add_parser("tail", help="analytic score tail bound, optional Monte Carlo")
    p_tail.add_argument("--gamma", type=float, required=True)
    p_tail.add_argument("--n", type=int, required=True)
    p_tail.add_argument("--p", type=int, required=True)
    p_tail.add_argument("--k1", type=float, required=True)
    p_tail.add_argument("--k3", type=float, required=True)
    p_tail.add_argument("--mc-config", type=str, default=None, help="SimConfig JSON")
    p_tail.add_argument("--mc-reps", type=int, default=200)
    p_tail.add_argument("--out", type=str, required=True)
    p_tail.set_defaults(func=_cmd_tail)

    p_bounds = sub.add_parser("bounds", help="evaluate the l2/l1/lq error bounds")
    p_bounds.add_argument("--gamma", type=float, required=True)
    p_bounds.add_argument("--s", type=int, required=True)
    p_bounds.add_argument("--eps-n", type=float, default=0.0)
    p_bounds.add_argument("--kappa", type=float, required=True)
    p_bounds.add_argument("--re", type=float, required=True)
    p_bounds.add_argument("--f-q", type=float, required=True)
    p_bounds.add_argument("--q", type=float, default=2.0)
    p_bounds.add_argument("--k3", type=float, default=None)
    p_bounds.add_argument("--k4", type=float, default=None)
    p_bounds.add_argument("--k5", type=float, default=None)
    p_bounds.add_argument("--truth-config", type=str, default=None, help="SimConfig JSON")
    p_bounds.add_argument("--out", type=str, required=True)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_exp = sub.add_parser("experiment", help="replicated consistency/bound experiment")
    p_exp.add_argument("--config", type=str, required=True, help="ExperimentConfig JSON")
    p_exp.add_argument("--out", type=str, required=True, help="output directory")
    p_exp.add_argument("--jobs", type=int, default=_default_jobs())
    p_exp.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

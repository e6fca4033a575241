"""Command line interface: fit, simulate, evaluate, bic-scan.

Every run writes its artifacts plus a ``manifest.json`` recording the tool
version, the fully resolved configuration, seeds, the random generator
algorithm, input digests, and timings.  All artifacts except the manifest
(which carries wall-clock timings and absolute paths) are byte-identical
across runs with the same configuration and seed.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import HgmError
from .io import (
    FORMATS,
    load_edges,
    load_groups,
    load_matrix,
    save_edges,
    save_groups,
    save_matrix,
    save_vector,
)
from .model import DataMatrix, standardize
from .selection import select_k
from .simbench import RNG_ALGORITHM, SimulationSpec, edge_confusion, sample_dataset
from .clustering import coherence_rates
from .solver import SolverConfig, fit


def _add_solver_flags(sp: argparse.ArgumentParser, with_lambda: bool) -> None:
    sp.add_argument("--input", required=True, help="matrix file (rows = samples)")
    sp.add_argument("--format", choices=FORMATS, default="csv", help="matrix file format")
    sp.add_argument("--k", type=int, required=with_lambda, help="number of latent groups")
    if with_lambda:
        sp.add_argument("--lambda", dest="lam", type=float, required=True, help="l1 penalty")
    sp.add_argument("--estimator", choices=("glasso", "scio"), default="glasso")
    sp.add_argument("--etol", type=float, default=1e-4, help="convergence threshold")
    sp.add_argument("--max-iter", type=int, default=100)
    sp.add_argument("--restarts", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument(
        "--no-standardize",
        action="store_true",
        help="skip the default per-column centering and scaling",
    )
    sp.add_argument(
        "--fixed-groups",
        help="groups file; fixes the assignment for the whole run (skips clustering "
        "and the reassignment step)",
    )


def _add_common_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--out-dir", required=True, help="directory for output artifacts")
    sp.add_argument("--threads", type=int, default=None, help="cap linear-algebra thread pools")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hgmnet",
        description="Hierarchical graphical models: grouping, latent signals, sparse precision",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="fit the model to a data matrix")
    _add_solver_flags(sp, with_lambda=True)
    _add_common_flags(sp)

    sp = sub.add_parser("simulate", help="generate a synthetic dataset")
    sp.add_argument("--n", type=int, default=SimulationSpec.n)
    sp.add_argument("--k", type=int, default=SimulationSpec.k)
    sp.add_argument("--block-size", type=int, default=SimulationSpec.block_size)
    sp.add_argument("--rho", type=float, default=SimulationSpec.rho)
    sp.add_argument("--replicates", type=int, default=SimulationSpec.replicates_per_node)
    sp.add_argument("--noise-sd", type=float, default=SimulationSpec.noise_sd)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=FORMATS, default="csv")
    _add_common_flags(sp)

    sp = sub.add_parser("evaluate", help="score an estimate against a ground truth")
    sp.add_argument("--estimate", required=True, help="output directory of a fit run")
    sp.add_argument("--truth", required=True, help="output directory of a simulate run")
    _add_common_flags(sp)

    sp = sub.add_parser("bic-scan", help="grid search over k and lambda")
    _add_solver_flags(sp, with_lambda=False)
    sp.add_argument(
        "--lambda-grid",
        default="50",
        help="either a point count (default grid) or an explicit comma-separated list",
    )
    sp.add_argument("--k-grid", help="comma-separated group counts (default: --k alone)")
    _add_common_flags(sp)
    return p


def _thread_cap(threads: int | None):
    if threads is None:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - depends on the environment
        print("threadpoolctl unavailable, --threads ignored", file=sys.stderr)
        return contextlib.nullcontext()
    return threadpool_limits(limits=threads)


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_manifest(out_dir: Path, args: argparse.Namespace, inputs, outputs, timings) -> None:
    config = {k: v for k, v in vars(args).items() if k != "command"}
    manifest = {
        "tool": "hgmnet",
        "version": __version__,
        "command": args.command,
        "config": config,
        "rng": RNG_ALGORITHM,
        "library_versions": {"python": sys.version.split()[0], "numpy": np.__version__},
        "input_digests": {str(k): v for k, v in inputs.items()},
        "outputs": sorted(outputs),
        "timings_sec": timings,
    }
    _write_json(out_dir / "manifest.json", manifest)


def _load_data(args: argparse.Namespace) -> tuple[DataMatrix, dict]:
    digests = {args.input: _sha256(args.input)}
    data = DataMatrix.from_array(load_matrix(args.input, args.format))
    if not args.no_standardize:
        data = standardize(data)
    return data, digests


def _solver_config(args: argparse.Namespace, lam: float, k: int | None = None) -> SolverConfig:
    return SolverConfig(
        k=args.k if k is None else k,
        lam=lam,
        e_tol=args.etol,
        max_iter=args.max_iter,
        restarts=args.restarts,
        seed=args.seed,
        estimator=args.estimator,
    )


def _run_fit(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    data, digests = _load_data(args)
    cfg = _solver_config(args, args.lam)
    t1 = time.monotonic()
    if args.fixed_groups:
        digests[args.fixed_groups] = _sha256(args.fixed_groups)
        groups = load_groups(args.fixed_groups, k=args.k)
        state, _ = fit(data, cfg, init_groups=groups, update_groups=False)
    else:
        state, _ = fit(data, cfg)
    t2 = time.monotonic()

    save_groups(out / "groups.csv", state.groups)
    save_matrix(state.z, out / "latent.csv", "csv")
    save_edges(out / "precision_edges.csv", state.precision)
    save_vector(out / "noise_variances.csv", state.noise.phi, "phi")
    summary = {
        "objective": state.objective,
        "neg_log_lik": state.neg_log_lik,
        "n_iter": state.n_iter,
        "converged": state.converged,
        "k": cfg.k,
        "lambda": cfg.lam,
        "estimator": cfg.estimator,
        "n_offdiag_nonzero": state.precision.n_offdiag_nonzero,
        "noise_floored": state.noise.any_floored,
    }
    _write_json(out / "summary.json", summary)
    outputs = ["groups.csv", "latent.csv", "precision_edges.csv", "noise_variances.csv",
               "summary.json"]
    _write_manifest(out, args, digests, outputs,
                    {"load": round(t1 - t0, 3), "fit": round(t2 - t1, 3)})
    return 0


def _run_simulate(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = SimulationSpec(
        n=args.n,
        k=args.k,
        block_size=args.block_size,
        rho=args.rho,
        replicates_per_node=args.replicates,
        noise_sd=args.noise_sd,
        seed=args.seed,
    )
    t0 = time.monotonic()
    data, truth = sample_dataset(spec)
    t1 = time.monotonic()
    data_name = f"data.{args.format}"
    save_matrix(data.values, out / data_name, args.format)
    save_groups(out / "groups.csv", truth.groups)
    save_edges(out / "precision_edges.csv", truth.precision)
    _write_json(out / "summary.json", {"spec": asdict(spec), "p": spec.p})
    outputs = [data_name, "groups.csv", "precision_edges.csv", "summary.json"]
    _write_manifest(out, args, {}, outputs, {"sample": round(t1 - t0, 3)})
    return 0


def _run_evaluate(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    est_dir, truth_dir = Path(args.estimate), Path(args.truth)
    digests = {}
    for d in (est_dir, truth_dir):
        for name in ("precision_edges.csv", "groups.csv"):
            digests[str(d / name)] = _sha256(d / name)
    truth_prec = load_edges(truth_dir / "precision_edges.csv")
    est_prec = load_edges(est_dir / "precision_edges.csv", k=truth_prec.k)
    truth_groups = load_groups(truth_dir / "groups.csv", k=truth_prec.k)
    est_groups = load_groups(est_dir / "groups.csv")
    conf = edge_confusion(est_prec, truth_prec)
    rates = coherence_rates(est_groups, truth_groups)

    with open(out / "evaluation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tp", "fp", "tn", "fn", "sensitivity", "specificity"])
        w.writerow([conf.tp, conf.fp, conf.tn, conf.fn,
                    "%.17g" % conf.sensitivity, "%.17g" % conf.specificity])
    with open(out / "coherence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "rate"])
        for g, r in enumerate(rates, start=1):
            w.writerow([g, "%.17g" % r])
    _write_manifest(out, args, digests, ["evaluation.csv", "coherence.csv"], {})
    return 0


def _parse_lambda_grid(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise HgmError(f"could not parse --lambda-grid {text!r}") from None
    if not values:
        raise HgmError("--lambda-grid is empty")
    return values


def _run_bic_scan(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    data, digests = _load_data(args)
    if args.k_grid:
        try:
            k_grid = [int(v) for v in args.k_grid.split(",") if v.strip()]
        except ValueError:
            raise HgmError(f"could not parse --k-grid {args.k_grid!r}") from None
    elif args.k is not None:
        k_grid = [args.k]
    else:
        raise HgmError("bic-scan requires --k or --k-grid")
    lambda_grid = _parse_lambda_grid(args.lambda_grid)
    base = _solver_config(args, lam=1.0, k=max(k_grid))
    best, path = select_k(data, k_grid, lambda_grid, base)
    t1 = time.monotonic()

    with open(out / "bic_path.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda", "bic", "neg_log_lik", "n_offdiag_nonzero", "converged"])
        for rec in path:
            w.writerow([rec.k, "%.17g" % rec.lam, "%.17g" % rec.bic,
                        "%.17g" % rec.neg_log_lik, rec.n_offdiag_nonzero, rec.converged])
    _write_json(out / "selected.json", asdict(best))
    _write_manifest(out, args, digests, ["bic_path.csv", "selected.json"],
                    {"scan": round(t1 - t0, 3)})
    return 0


_RUNNERS = {
    "fit": _run_fit,
    "simulate": _run_simulate,
    "evaluate": _run_evaluate,
    "bic-scan": _run_bic_scan,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_cap(args.threads):
            return _RUNNERS[args.command](args)
    except (HgmError, OSError, ValueError) as err:
        print(f"hgmnet {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: run, simulate, recovery, gof subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import EmptyPoolError, ErgmPoolError
from .fit import fit_exact
from .pipeline import (
    EXIT_EMPTY_POOL,
    EXIT_VALIDATION,
    default_workers,
    prepare_batch,
    recovery_study,
    run_manifest,
    simulate_batch,
)
from .pooling import PoolConfig
from .simulate import gof
from .terms import PRESETS, model_preset

DEFAULT_THETA = {
    # plausible generating values for quick recovery runs
    "h1": [-3.3, 2.8, 0.07],
    "h2": [-3.3, 2.8, 1.05],
    "rq1": [-4.1, 2.8, -0.95, 0.47, 0.12, 0.0, -0.42],
    "rq2": [-4.1, 2.8, -0.95, 0.47, 0.12, 0.0, -0.42, 0.18],
}


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="fit-stage parallelism (default: ERGMPOOL_WORKERS or 1)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ergmpool",
        description="Fit ERGMs to batches of directed networks and pool the "
                    "coefficients with a hierarchical Bayesian model.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full pipeline from a manifest")
    p_run.add_argument("--manifest", required=True, type=Path)
    p_run.add_argument("--strict", action="store_true",
                       help="exit 4 when convergence warnings are present")
    p_run.add_argument("--imputations", type=int, default=1,
                       help="number of completed datasets to emit")
    _add_common(p_run)

    p_sim = sub.add_parser("simulate", help="sample synthetic networks to CSV")
    p_sim.add_argument("--config", required=True, type=Path)
    p_sim.add_argument("--out", type=Path, default=Path("sim_out"))
    _add_common(p_sim)

    p_rec = sub.add_parser("recovery", help="generate-fit-pool calibration study")
    p_rec.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p_rec.add_argument("--networks", type=int, default=100)
    p_rec.add_argument("--nodes", type=int, default=20)
    p_rec.add_argument("--replications", type=int, default=1)
    p_rec.add_argument("--theta", type=str, default=None,
                       help="comma-separated generating coefficients")
    _add_common(p_rec)

    p_gof = sub.add_parser("gof", help="goodness of fit for one network")
    p_gof.add_argument("--network", required=True, help="network_id to check")
    p_gof.add_argument("--model", choices=sorted(PRESETS), required=True)
    p_gof.add_argument("--edges", required=True, type=Path)
    p_gof.add_argument("--attributes", required=True, type=Path)
    p_gof.add_argument("--ratings", type=Path, default=None)
    p_gof.add_argument("--replicates", type=int, default=1000)
    p_gof.add_argument("--out", type=Path, default=Path("gof.csv"))
    _add_common(p_gof)
    return parser


def _cmd_run(args):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    return run_manifest(manifest, workers=args.workers, strict=args.strict,
                        imputations=args.imputations,
                        base_dir=args.manifest.parent)


def _cmd_simulate(args):
    with open(args.config) as fh:
        config = json.load(fh)
    if args.seed:
        config["seed"] = args.seed
    simulate_batch(config, args.out)
    return 0


def _cmd_recovery(args):
    theta = ([float(t) for t in args.theta.split(",")] if args.theta
             else DEFAULT_THETA[args.preset])
    report = recovery_study(
        n_networks=args.networks, nodes_per_network=args.nodes,
        theta_true=theta, preset=args.preset, seed=args.seed,
        replications=args.replications,
        workers=args.workers or default_workers())
    print(json.dumps(report, indent=2))
    return 0


def _cmd_gof(args):
    model = model_preset(args.model)
    batches = prepare_batch(args.edges, args.attributes, args.ratings,
                            seed=args.seed)
    match = [(n, a) for n, a, _ in batches[0] if n.network_id == args.network]
    if not match:
        print(f"network {args.network!r} not found", file=sys.stderr)
        return EXIT_VALIDATION
    net, attrs = match[0]
    fit = fit_exact(net, attrs, model)
    records = gof(net, attrs, model, fit.theta, seed=args.seed,
                  replicates=args.replicates)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["term", "observed", "simulated_mean", "simulated_sd",
                    "quantile"])
        for r in records:
            w.writerow([r["term"], format(r["observed"], ".10g"),
                        format(r["simulated_mean"], ".10g"),
                        format(r["simulated_sd"], ".10g"),
                        format(r["quantile"], ".10g")])
    for r in records:
        print(f"{r['term']:>28}  obs {r['observed']:>9.3f}  "
              f"sim {r['simulated_mean']:>9.3f} +/- {r['simulated_sd']:.3f}  "
              f"q={r['quantile']:.3f}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "simulate": _cmd_simulate,
                "recovery": _cmd_recovery, "gof": _cmd_gof}
    try:
        return handlers[args.command](args)
    except EmptyPoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_POOL
    except ErgmPoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end orchestration: ingest, impute, derive, fit, filter, pool, report.

The whole pipeline is a pure function of (input files, manifest, seed): fits
are deterministic, pooling chains get per-term child seeds in a canonical
order, and parallel fitting preserves network order, so outputs are
byte-identical across runs and worker counts.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EmptyPoolError, ErgmPoolError, ValidationError
from .fit import FitOptions, filter_fits, fit_exact
from .impute import impute_chained
from .networks import (
    N_SKILL_ITEMS,
    AttributeTable,
    derive_composite_skills,
    derive_perceived_skills,
    load_batch,
    write_batch,
)
from .pooling import PoolConfig, pool
from .report import (
    NETWORK_TYPES,
    render_forest,
    render_report,
    write_draws_csv,
    write_fits_csv,
    write_pooled_json,
)
from .simulate import SimConfig, generate_attributes, sample_exact
from .terms import ModelSpec, model_from_config, model_preset

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_EMPTY_POOL = 3
EXIT_NONCONVERGENCE = 4


def prepare_batch(edges_file, attributes_file, ratings_file=None,
                  impute_iterations: int = 10, seed: int = 0,
                  zero_as_missing: bool = False, imputations: int = 1):
    """Load, impute on the pooled node table, and derive the skill covariates.

    Returns a list of completed batches, one per requested imputation (the
    default single imputation returns a one-element list).
    """
    batch = load_batch(edges_file, attributes_file, ratings_file)
    if not batch:
        raise ValidationError("no networks in input")

    # pooled node table: female, the 21 recoded items, raw perceived score
    rows = []
    spans = []
    for net, attrs, ratings in batch:
        items = attrs.skill_items.copy()
        if zero_as_missing:
            items[items == 0] = np.nan
        else:
            items[items == 0] = 1.0
        perceived = derive_perceived_skills(net, ratings)
        start = sum(s[1] for s in spans) if spans else 0
        spans.append((start, attrs.n))
        rows.append(np.column_stack([attrs.female, items, perceived]))
    table = np.vstack(rows)
    binary = np.array([True] + [False] * N_SKILL_ITEMS + [False])
    names = ["female"] + [f"item_{i:02d}" for i in range(1, N_SKILL_ITEMS + 1)] \
        + ["perceived_skills"]
    # a column with no observations at all (e.g. no ratings file was given)
    # cannot be imputed; it stays missing and only errors if a model needs it
    usable = ~np.all(np.isnan(table), axis=0)

    completed_batches = []
    for m in range(imputations):
        done = table.copy()
        done[:, usable] = impute_chained(
            table[:, usable], binary[usable], iterations=impute_iterations,
            seed=seed + m,
            column_names=[n for n, u in zip(names, usable) if u])
        out = []
        for (net, attrs, ratings), (start, n) in zip(batch, spans):
            block = done[start:start + n]
            items = np.clip(block[:, 1:1 + N_SKILL_ITEMS], 1.0, 5.0)
            skills = np.array([derive_composite_skills(items[k])
                               for k in range(n)])
            perceived = block[:, -1]
            perceived = np.where(np.isnan(perceived), perceived,
                                 np.clip(perceived, 0.0, 1.0))
            new = AttributeTable(
                female=block[:, 0],
                skill_items=items,
                skills=skills,
                perceived_skills=perceived,
            )
            out.append((net, new, ratings))
        completed_batches.append(out)
    return completed_batches


def _fit_task(args):
    net, attrs, model = args
    return fit_exact(net, attrs, model)


def fit_batch(batch, model: ModelSpec, workers: int = 1):
    """Fit every network; results ordered by network_id regardless of workers."""
    tasks = [(net, attrs, model) for net, attrs, _ in batch]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool_:
            fits = list(pool_.map(_fit_task, tasks))
    else:
        fits = [_fit_task(t) for t in tasks]
    return sorted(fits, key=lambda f: f.network_id)


def _resolve_models(manifest):
    models = []
    for entry in manifest.get("models", []):
        if isinstance(entry, str):
            models.append(model_preset(entry))
        else:
            models.append(model_from_config(entry))
    if not models:
        raise ValidationError("manifest must name at least one model preset")
    return models


def pool_observations(observations, model: ModelSpec, config: PoolConfig,
                      seed_seq: np.random.SeedSequence):
    """Pool each term of a model; child seeds assigned in term order."""
    by_term = {}
    for o in observations:
        by_term.setdefault(o.term, []).append(o)
    children = seed_seq.spawn(len(model.labels))
    summaries = {}
    for label, child in zip(model.labels, children):
        cfg = dataclasses.replace(config, seed=int(child.generate_state(1)[0]))
        summaries[label] = pool(by_term[label], cfg)
    return summaries


def default_workers() -> int:
    env = os.environ.get("ERGMPOOL_WORKERS")
    return int(env) if env else 1


def run_manifest(manifest: dict, workers: int = None, strict: bool = False,
                 imputations: int = 1, base_dir=".", log=print):
    """Execute a run manifest; returns the process exit status."""
    base = Path(base_dir)
    workers = workers if workers is not None else default_workers()
    seed = int(manifest.get("seed", 0))
    out_dir = base / manifest.get("output_dir", "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    models = _resolve_models(manifest)
    filters = manifest.get("filters", {})
    pool_cfg = PoolConfig(**manifest.get("pool", {}))
    imp_cfg = manifest.get("imputation", {})

    inputs = manifest.get("inputs", {})
    if not inputs:
        raise ValidationError("manifest must list at least one network type input")
    for ntype in inputs:
        if ntype not in NETWORK_TYPES:
            raise ValidationError(f"unknown network type {ntype!r}")

    log_lines = [f"ergmpool {__version__}", f"seed {seed}"]
    for m in models:
        log_lines.append(f"model {m.preset}: {' '.join(m.labels)}")

    all_fits = []
    results = {m.preset: {} for m in models}
    seed_root = np.random.SeedSequence(seed)
    # canonical order: model preset (manifest order), then network type sorted
    type_order = sorted(inputs)
    children = seed_root.spawn(len(models) * len(type_order))
    child_iter = iter(children)

    prepared = {}
    for ntype in type_order:
        paths = inputs[ntype]
        batches = prepare_batch(
            base / paths["edges"], base / paths["attributes"],
            base / paths["ratings"] if paths.get("ratings") else None,
            impute_iterations=imp_cfg.get("iterations", 10),
            seed=seed,
            zero_as_missing=imp_cfg.get("zero_as_missing", False),
            imputations=imputations,
        )
        prepared[ntype] = batches[0]
        for i, b in enumerate(batches):
            suffix = f"_{i}" if imputations > 1 else ""
            write_batch(
                b, out_dir / f"derived_edges_{ntype}{suffix}.csv",
                out_dir / f"derived_attributes_{ntype}{suffix}.csv",
                derived=True)

    for model in models:
        for ntype in type_order:
            batch = prepared[ntype]
            fits = fit_batch(batch, model, workers=workers)
            all_fits.extend(fits)
            try:
                observations, exclusions = filter_fits(
                    fits,
                    max_se=filters.get("max_se", 10.0),
                    require_converged=filters.get("require_converged", True),
                    exclude_separated=filters.get("exclude_separated", True),
                )
            except EmptyPoolError:
                log(f"{model.preset}/{ntype}: empty pool after filtering")
                return EXIT_EMPTY_POOL
            for nid, reason in exclusions:
                log_lines.append(f"excluded {model.preset}/{ntype}/{nid}: {reason}")
            summaries = pool_observations(observations, model, pool_cfg,
                                          next(child_iter))
            results[model.preset][ntype] = {
                "n_networks": len(fits),
                "n_excluded": len(exclusions),
                "exclusions": [f"{nid}: {reason}" for nid, reason in exclusions],
                "terms": summaries,
            }

    write_fits_csv(all_fits, out_dir / "fits.csv")
    write_pooled_json(results, out_dir / "pooled.json")
    if manifest.get("write_draws"):
        write_draws_csv(results, out_dir / "draws.csv")
    term_order = {m.preset: list(m.labels) for m in models}
    report_text = render_report(results, term_order)
    (out_dir / "report.txt").write_text(report_text)
    with open(out_dir / "pooled.json") as fh:
        pooled = json.load(fh)
    render_forest(pooled, out_dir / "forest.csv", out_dir / "forest.svg")

    warnings = [w for m in results.values() for b in m.values()
                for s in b["terms"].values() for w in s.warnings]
    for w in warnings:
        log_lines.append(f"warning: {w}")
    (out_dir / "run_log.txt").write_text("\n".join(log_lines) + "\n")
    log(report_text)
    if warnings and strict:
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def simulate_batch(config: dict, out_dir, log=print):
    """Generate a synthetic batch of networks and attributes, written as CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = (model_preset(config["model"]) if isinstance(config["model"], str)
             else model_from_config(config["model"]))
    n = int(config["n"])
    theta = np.asarray(config["theta"], dtype=float)
    seed = int(config.get("seed", 0))
    count = int(config.get("networks", 1))
    countries = config.get("countries", ["A", "B", "C"])
    cap = config.get("outdegree_cap")
    children = np.random.SeedSequence(seed).spawn(2 * count)
    batch = []
    for k in range(count):
        attr_seed = int(children[2 * k].generate_state(1)[0])
        net_seed = int(children[2 * k + 1].generate_state(1)[0])
        attrs = generate_attributes(n, attr_seed)
        sim = SimConfig(n=n, theta=theta, model=model, seed=net_seed,
                        outdegree_cap=cap)
        if cap is None:
            net = sample_exact(sim, attrs, network_id=f"net{k:04d}")
        else:
            from .simulate import sample_metropolis
            net = sample_metropolis(sim, attrs)[0]
            net = dataclasses.replace(net, network_id=f"net{k:04d}")
        net = dataclasses.replace(
            net, country=countries[k % len(countries)], wave="w1")
        batch.append((net, attrs, _ratings_from_perceived(net, attrs)))
    write_batch(batch, out_dir / "edges.csv", out_dir / "attributes.csv",
                out_dir / "ratings.csv", derived=True)
    log(f"wrote {count} networks to {out_dir}")
    return batch


def _ratings_from_perceived(net, attrs):
    """Synthetic incoming ratings consistent with the perceived score.

    Every node rates every other node at the integer level nearest the
    target's perceived score, so re-deriving recovers it to rounding.
    """
    from .networks import RatingEdgeList
    triples = []
    for target in range(net.n):
        level = int(np.clip(np.rint(1.0 + 4.0 * attrs.perceived_skills[target]), 1, 5))
        for rater in range(net.n):
            if rater != target:
                triples.append((rater, target, level))
    return RatingEdgeList(triples)


def recovery_study(n_networks: int, nodes_per_network: int, theta_true,
                   preset: str, seed: int = 0, replications: int = 1,
                   countries=("A", "B", "C"), pool_config: PoolConfig = None,
                   workers: int = 1, log=print):
    """Generate-fit-pool round trips at known coefficients.

    Reports per-term bias of the pooled mean, RMSE, and credible-interval
    coverage over the replications.
    """
    model = model_preset(preset)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_true.shape != (len(model),):
        raise ValidationError(
            f"theta length {theta_true.shape[0]} != preset term count {len(model)}")
    pool_config = pool_config or PoolConfig()
    if n_networks < 5:
        log(f"warning: only {n_networks} networks; pooled intervals will be wide")

    root = np.random.SeedSequence(seed)
    rep_seeds = root.spawn(replications)
    per_term = {label: {"pooled": [], "covered": []} for label in model.labels}
    for rep, rep_seed in enumerate(rep_seeds):
        children = rep_seed.spawn(2 * n_networks + 1)
        batch = []
        for k in range(n_networks):
            attrs = generate_attributes(
                nodes_per_network, int(children[2 * k].generate_state(1)[0]))
            sim = SimConfig(n=nodes_per_network, theta=theta_true, model=model,
                            seed=int(children[2 * k + 1].generate_state(1)[0]))
            net = sample_exact(sim, attrs, network_id=f"net{k:04d}")
            net = dataclasses.replace(net, country=countries[k % len(countries)])
            batch.append((net, attrs, None))
        fits = fit_batch(batch, model, workers=workers)
        observations, exclusions = filter_fits(fits)
        if exclusions:
            log(f"rep {rep}: excluded {len(exclusions)} of {n_networks} fits")
        summaries = pool_observations(observations, model, pool_config,
                                      children[-1])
        for label, true in zip(model.labels, theta_true):
            s = summaries[label]
            per_term[label]["pooled"].append(s.pooled.mean)
            per_term[label]["covered"].append(
                s.pooled.ci_low <= true <= s.pooled.ci_high)

    out = {}
    for label, true in zip(model.labels, theta_true):
        est = np.array(per_term[label]["pooled"])
        out[label] = {
            "theta_true": float(true),
            "mean_estimate": float(est.mean()),
            "bias": float(est.mean() - true),
            "rmse": float(np.sqrt(np.mean((est - true) ** 2))),
            "coverage": float(np.mean(per_term[label]["covered"])),
        }
    return out

"""Output rendering: fits CSV, pooled JSON, report table, forest plot."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ValidationError

# deterministic SVG output across runs
matplotlib.rcParams["svg.hashsalt"] = "ergmpool"

NETWORK_TYPES = ("seeking", "giving")

TERM_LABELS = {
    "edges": "Density",
    "mutual": "Reciprocity",
    "nodeocov.skills": "Sender effect of total skills",
    "nodeicov.skills": "Receiver effect of total skills",
    "nodeocov.perceived_skills": "Sender effect of perceived skills",
    "nodeicov.perceived_skills": "Receiver effect of perceived skills",
    "absdiff.skills": "Similarity in total skills (homophily)",
    "nodeocov.female": "Sender effect of being female",
    "nodeicov.female": "Receiver effect of being female",
    "nodematch.female": "Same-gender preference (homophily)",
}

# row-group tags shown in the table's first column, per preset
TERM_GROUPS = {
    "rq1": {"nodeocov.skills": "RQ1a", "nodeicov.skills": "RQ1a",
            "nodeocov.perceived_skills": "RQ1b", "nodeicov.perceived_skills": "RQ1b",
            "absdiff.skills": "RQ1c"},
    "rq2": {"nodeocov.skills": "RQ1a", "nodeicov.skills": "RQ1a",
            "nodeocov.perceived_skills": "RQ1b", "nodeicov.perceived_skills": "RQ1b",
            "absdiff.skills": "RQ1c", "nodeocov.female": "RQ2"},
    "h1": {"edges": "H1", "mutual": "H1", "nodeicov.female": "H1"},
    "h2": {"edges": "H2", "mutual": "H2", "nodematch.female": "H2"},
}


def term_label(term: str) -> str:
    return TERM_LABELS.get(term, term)


def term_group(preset: str, term: str) -> str:
    return TERM_GROUPS.get(preset, {}).get(term, "--")


def _sig(x, digits=3):
    return float(f"{x:.{digits}g}")


def format_cell(mean, ci_low, ci_high) -> str:
    """Format an estimate with its credible interval in brackets."""
    return f"{_sig(mean)} [{_sig(ci_low)}, {_sig(ci_high)}]"


def write_fits_csv(fits, path):
    """One row per (network, term): the estimates entering the pool."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["network_id", "country", "model", "term", "estimate",
                    "std_error", "converged", "separation", "loglik"])
        for f in sorted(fits, key=lambda f: (f.model, f.network_id)):
            for label, est, se in zip(f.term_labels, f.theta, f.standard_errors):
                w.writerow([
                    f.network_id, f.country, f.model, label,
                    format(est, ".10g"), format(se, ".10g"),
                    int(f.converged), int(f.separation_flag),
                    format(f.log_likelihood, ".10g"),
                ])


def pooled_to_json(results) -> dict:
    """Serialize pooled results.

    results: {preset: {network_type: {"n_networks", "n_excluded",
    "exclusions", "terms": {term: PosteriorSummary}}}}
    """
    out = {"presets": {}}
    for preset in sorted(results):
        out["presets"][preset] = {}
        for ntype in sorted(results[preset]):
            block = results[preset][ntype]
            terms = {}
            for term, s in block["terms"].items():
                terms[term] = {
                    "label": term_label(term),
                    "mean": s.pooled.mean,
                    "ci_low": s.pooled.ci_low,
                    "ci_high": s.pooled.ci_high,
                    "tau_median": s.tau.median,
                    "tau_country_median": s.tau_country.median,
                    "rhat": s.pooled.rhat,
                    "ess": s.pooled.ess,
                    "n_observations": s.n_observations,
                    "countries": {
                        c: {"mean": e.mean, "ci_low": e.ci_low, "ci_high": e.ci_high}
                        for c, e in s.country_effects.items()
                    },
                    "warnings": s.warnings,
                }
            out["presets"][preset][ntype] = {
                "n_networks": block["n_networks"],
                "n_excluded": block["n_excluded"],
                "exclusions": block.get("exclusions", []),
                "terms": terms,
            }
    return out


def write_pooled_json(results, path):
    with open(path, "w") as fh:
        json.dump(pooled_to_json(results), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_draws_csv(results, path):
    """Optional long-format posterior draws for external density plots."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["preset", "network_type", "term", "chain", "iteration",
                    "parameter", "value"])
        for preset in sorted(results):
            for ntype in sorted(results[preset]):
                for term, s in results[preset][ntype]["terms"].items():
                    for param, draws in s.draws.items():
                        for chain in range(draws.shape[0]):
                            for it, v in enumerate(draws[chain]):
                                w.writerow([preset, ntype, term, chain, it,
                                            param, format(v, ".10g")])


def render_report(results, term_order) -> str:
    """Aligned text table: one row per term, seeking and giving columns.

    term_order: {preset: sequence of term labels in model order}.
    """
    rows = []
    for preset in sorted(results, key=lambda p: (p not in term_order, p)):
        blocks = results[preset]
        for term in term_order[preset]:
            cells = {}
            for ntype in NETWORK_TYPES:
                if ntype in blocks and term in blocks[ntype]["terms"]:
                    s = blocks[ntype]["terms"][term]
                    cells[ntype] = format_cell(s.pooled.mean, s.pooled.ci_low,
                                               s.pooled.ci_high)
                else:
                    cells[ntype] = "--"
            rows.append((term_group(preset, term), term_label(term),
                         cells["seeking"], cells["giving"]))
    header = ("Group", "Parameter", "Seeking", "Giving")
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(4)]
    lines = []
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines.append(fmt.format(*header))
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append(fmt.format(*r))
    return "\n".join(lines) + "\n"


def forest_rows(pooled: dict):
    """Flatten pooled JSON to forest-plot rows; validates CI ordering."""
    rows = []
    for preset in sorted(pooled["presets"]):
        for ntype in sorted(pooled["presets"][preset]):
            terms = pooled["presets"][preset][ntype]["terms"]
            for term in sorted(terms):
                t = terms[term]
                if not t["ci_low"] <= t["mean"] <= t["ci_high"]:
                    raise ValidationError(
                        f"{preset}/{ntype}/{term}: interval "
                        f"[{t['ci_low']}, {t['ci_high']}] does not bracket {t['mean']}")
                rows.append({
                    "preset": preset, "network_type": ntype, "term": term,
                    "label": t["label"], "mean": t["mean"],
                    "ci_low": t["ci_low"], "ci_high": t["ci_high"],
                })
    return rows


def render_forest(pooled: dict, csv_path, figure_path=None):
    """Write the forest-plot CSV and, optionally, a labeled-interval figure."""
    rows = forest_rows(pooled)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["preset", "network_type", "term", "label", "mean",
                    "ci_low", "ci_high"])
        for r in rows:
            w.writerow([r["preset"], r["network_type"], r["term"], r["label"],
                        format(r["mean"], ".10g"), format(r["ci_low"], ".10g"),
                        format(r["ci_high"], ".10g")])
    if figure_path is None or not rows:
        return rows

    fig, ax = plt.subplots(figsize=(8, 0.45 * len(rows) + 1.5))
    colors = {"seeking": "#1f77b4", "giving": "#d62728"}
    for y, r in enumerate(reversed(rows)):
        c = colors.get(r["network_type"], "black")
        ax.plot([r["ci_low"], r["ci_high"]], [y, y], color=c, lw=1.5)
        ax.plot(r["mean"], y, "o", color=c, ms=4)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([f"{r['preset']}/{r['network_type']}: {r['label']}"
                        for r in reversed(rows)], fontsize=8)
    ax.axvline(0.0, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("pooled estimate (95% credible interval)")
    fig.tight_layout()
    fig.savefig(figure_path, metadata={"Date": None})
    plt.close(fig)
    return rows

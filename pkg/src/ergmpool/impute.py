"""Chained-equations imputation for the pooled node attribute table.

Each incomplete column is repeatedly re-imputed by regressing its observed
rows on all other columns: linear regression with a residual draw for
continuous columns, logistic regression with a Bernoulli draw for binary ones.
The chain sweeps the incomplete columns for a fixed number of iterations and
is deterministic given the seed. Imputation runs on the pooled batch table,
before per-network extraction.
"""

from __future__ import annotations

import numpy as np

from .errors import UnimputableColumnError

DEFAULT_ITERATIONS = 10


def _fit_logistic(x, z, ridge=1e-6, max_iter=50):
    """Small ridged logistic regression by Newton; x includes the intercept."""
    beta = np.zeros(x.shape[1])
    for _ in range(max_iter):
        eta = np.clip(x @ beta, -30, 30)
        mu = 1.0 / (1.0 + np.exp(-eta))
        grad = x.T @ (z - mu) - ridge * beta
        w = mu * (1.0 - mu) + 1e-10
        hess = (x.T * w) @ x + ridge * np.eye(x.shape[1])
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-8:
            break
        if np.max(np.abs(beta)) > 30:  # separation: stop at a capped fit
            break
    return beta


def impute_chained(table, binary, iterations: int = DEFAULT_ITERATIONS,
                   seed: int = 0, column_names=None) -> np.ndarray:
    """Impute NaNs in a (rows, cols) table; binary flags logistic columns.

    Returns a completed copy; input untouched. A table with no missing values
    is returned unchanged. A column with no observed values raises.
    """
    x = np.array(table, dtype=float)
    binary = np.asarray(binary, dtype=bool)
    n_rows, n_cols = x.shape
    names = (list(column_names) if column_names is not None
             else [f"col{c}" for c in range(n_cols)])
    missing = np.isnan(x)
    if not missing.any():
        return x
    for c in range(n_cols):
        if missing[:, c].all():
            raise UnimputableColumnError(f"column {names[c]} has no observed values")
    rng = np.random.default_rng(seed)

    # start from column means (binary: observed frequency rounded by draw later)
    col_means = np.nanmean(x, axis=0)
    for c in range(n_cols):
        x[missing[:, c], c] = col_means[c]

    incomplete = [c for c in range(n_cols) if missing[:, c].any()]
    for _ in range(iterations):
        for c in incomplete:
            obs = ~missing[:, c]
            others = np.delete(x, c, axis=1)
            design = np.column_stack([np.ones(n_rows), others])
            if binary[c]:
                beta = _fit_logistic(design[obs], x[obs, c])
                p = 1.0 / (1.0 + np.exp(-np.clip(design[~obs] @ beta, -30, 30)))
                x[~obs, c] = (rng.random(p.shape) < p).astype(float)
            else:
                beta, *_ = np.linalg.lstsq(design[obs], x[obs, c], rcond=None)
                resid = x[obs, c] - design[obs] @ beta
                dof = max(obs.sum() - design.shape[1], 1)
                sigma = float(np.sqrt(resid @ resid / dof))
                pred = design[~obs] @ beta
                x[~obs, c] = pred + sigma * rng.normal(size=pred.shape)
    return x

"""MCMC convergence diagnostics: rank-normalized split R-hat and Geyer ESS."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri


def _split(draws: np.ndarray) -> np.ndarray:
    """Halve each chain; draws shape (chains, iters) -> (2*chains, iters//2)."""
    m, n = draws.shape
    half = n // 2
    return np.vstack([draws[:, :half], draws[:, n - half:]])


def _rank_normalize(draws: np.ndarray) -> np.ndarray:
    flat = draws.ravel()
    ranks = np.argsort(np.argsort(flat, kind="stable"), kind="stable") + 1.0
    z = ndtri((ranks - 3.0 / 8.0) / (flat.size + 0.25))
    return z.reshape(draws.shape)


def split_rhat(draws) -> float:
    """Rank-normalized split R-hat; NaN for a constant chain."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 2 or draws.shape[1] < 4:
        raise ValueError("need (chains >= 2, iters >= 4) draws")
    if np.ptp(draws) == 0.0:
        return float("nan")
    z = _rank_normalize(_split(draws))
    m, n = z.shape
    chain_means = z.mean(axis=1)
    w = z.var(axis=1, ddof=1).mean()
    b = n * chain_means.var(ddof=1)
    var_hat = (n - 1) / n * w + b / n
    return float(np.sqrt(var_hat / w))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance by FFT, lags 0..len-1."""
    n = len(x)
    x = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real
    return acov / n


def effective_sample_size(draws) -> float:
    """Multi-chain ESS with Geyer's initial monotone positive sequence."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 2 or draws.shape[1] < 4:
        raise ValueError("need (chains >= 2, iters >= 4) draws")
    if np.ptp(draws) == 0.0:
        return float("nan")
    z = _split(draws)
    m, n = z.shape
    acov = np.vstack([_autocovariance(z[c]) for c in range(m)])
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_hat = (n - 1.0) / n * w + z.mean(axis=1).var(ddof=1)
    if var_hat <= 0.0:
        return float("nan")
    rho = 1.0 - (w - acov.mean(axis=0)) / var_hat
    # Geyer: sum consecutive-lag pairs, truncate at the first negative pair,
    # and enforce a monotone decreasing pair sequence
    pair_sum = 0.0
    prev = np.inf
    for t in range(0, (n - 1) // 2 + 1):
        if 2 * t + 1 >= n:
            break
        pair = rho[2 * t] + rho[2 * t + 1]
        if pair < 0.0:
            break
        pair = min(pair, prev)
        pair_sum += pair
        prev = pair
    tau = max(-1.0 + 2.0 * pair_sum, 1e-8)
    ess = m * n / tau
    return float(min(ess, m * n * np.log10(m * n)))


def summarize_chains(draws) -> dict:
    """R-hat and ESS for one parameter's (chains, iters) draws."""
    draws = np.asarray(draws, dtype=float)
    degenerate = np.ptp(draws) == 0.0
    return {
        "rhat": float("nan") if degenerate else split_rhat(draws),
        "ess": float("nan") if degenerate else effective_sample_size(draws),
        "degenerate": bool(degenerate),
    }

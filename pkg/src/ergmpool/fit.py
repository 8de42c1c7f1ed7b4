"""Per-network ERGM estimation.

Every supported term is dyad-independent, so the likelihood factorizes over
unordered dyads and the exact MLE is available by Newton-Raphson on a concave
objective; no simulation-based estimation is needed. A pseudo-likelihood
(logistic regression on change statistics) and a full-enumeration oracle for
tiny networks are provided as cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateNetworkError,
    EmptyPoolError,
    NonIdentifiedModelError,
    SizeLimitError,
)
from .networks import AttributeTable, DirectedNetwork
from .terms import ModelSpec, TermKind, change_stats, dyad_design, sufficient_stats

GRAD_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 100
SEPARATION_THETA = 10.0
MAX_HALVINGS = 20
RIDGE_DEFAULT = 1e-4


@dataclass
class FitResult:
    network_id: str
    country: str
    model: str
    term_labels: tuple[str, ...]
    theta: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    converged: bool
    separation_flag: bool
    newton_iterations: int

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


@dataclass(frozen=True)
class EffectObservation:
    """One (network, term) data point for the pooling model."""

    network_id: str
    country: str
    term: str
    estimate: float
    std_error: float


@dataclass
class FitOptions:
    ridge: float = RIDGE_DEFAULT
    max_iter: int = MAX_ITER
    grad_tol: float = GRAD_TOL
    step_tol: float = STEP_TOL


def _logsumexp(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


class _DyadObjective:
    """Exact log-likelihood of the dyad-factorized model and its derivatives.

    For each unordered dyad the four states (null, i->j, j->i, mutual) have
    statistic rows 0, A, B, A+B+e_mutual; the likelihood is a product of
    per-dyad categorical terms.
    """

    def __init__(self, network: DirectedNetwork, attrs: AttributeTable, model: ModelSpec):
        pairs, a, b = dyad_design(network.n, attrs, model)
        p = len(model)
        d = pairs.shape[0]
        states = np.zeros((d, 4, p))
        states[:, 1, :] = a
        states[:, 2, :] = b
        states[:, 3, :] = a + b
        if model.mutual_index is not None:
            states[:, 3, model.mutual_index] += 1.0
        self.states = states
        fwd = np.array([network.has_tie(i, j) for i, j in pairs], dtype=int)
        rev = np.array([network.has_tie(j, i) for i, j in pairs], dtype=int)
        self.observed_state = fwd + 2 * rev
        self.g_obs = states[np.arange(d), self.observed_state].sum(axis=0)
        self.n_params = p

    def __call__(self, theta):
        lw = self.states @ theta                      # (D, 4)
        logz = _logsumexp(lw, axis=1)
        ll = float(self.g_obs @ theta - logz.sum())
        prob = np.exp(lw - logz[:, None])
        mean_s = np.einsum("dk,dkp->dp", prob, self.states)
        grad = self.g_obs - mean_s.sum(axis=0)
        ess = np.einsum("dk,dkp,dkq->pq", prob, self.states, self.states)
        hess = -(ess - np.einsum("dp,dq->pq", mean_s, mean_s))
        return ll, grad, hess


class _EnumerationObjective:
    """Exact log-likelihood via full enumeration of all graphs (oracle)."""

    def __init__(self, network: DirectedNetwork, attrs: AttributeTable, model: ModelSpec):
        n = network.n
        slots = [(i, j) for i in range(n) for j in range(n) if i != j]
        n_slots = len(slots)
        slot_idx = {s: k for k, s in enumerate(slots)}
        # all 2^{n(n-1)} graphs as a bit matrix over tie slots
        codes = np.arange(2 ** n_slots, dtype=np.int64)
        bits = ((codes[:, None] >> np.arange(n_slots)) & 1).astype(float)
        src = np.array([i for i, _ in slots])
        dst = np.array([j for _, j in slots])
        stats = np.zeros((len(codes), len(model)))
        for idx, term in enumerate(model.terms):
            if term.kind is TermKind.EDGES:
                stats[:, idx] = bits.sum(axis=1)
            elif term.kind is TermKind.MUTUAL:
                fwd = [slot_idx[(i, j)] for i, j in slots if i < j]
                rev = [slot_idx[(j, i)] for i, j in slots if i < j]
                stats[:, idx] = (bits[:, fwd] * bits[:, rev]).sum(axis=1)
            else:
                x = attrs.column(term.attr)
                if term.kind is TermKind.NODEOCOV:
                    contrib = x[src]
                elif term.kind is TermKind.NODEICOV:
                    contrib = x[dst]
                elif term.kind is TermKind.ABSDIFF:
                    contrib = np.abs(x[src] - x[dst])
                else:
                    contrib = (x[src] == x[dst]).astype(float)
                stats[:, idx] = bits @ contrib
        self.stats = stats
        self.g_obs = sufficient_stats(network, attrs, model)
        self.n_params = len(model)

    def __call__(self, theta):
        lw = self.stats @ theta
        logz = _logsumexp(lw)
        ll = float(self.g_obs @ theta - logz)
        prob = np.exp(lw - logz)
        mean_s = prob @ self.stats
        grad = self.g_obs - mean_s
        ess = self.stats.T @ (self.stats * prob[:, None])
        hess = -(ess - np.outer(mean_s, mean_s))
        return ll, grad, hess


def _newton(objective, options: FitOptions):
    """Maximize a concave objective from theta = 0 with step halving.

    Any |theta| component above SEPARATION_THETA, or a step that cannot improve
    the objective after MAX_HALVINGS halvings, triggers a restart with an L2
    ridge penalty and sets the separation flag.
    """
    p = objective.n_params

    def run(ridge):
        theta = np.zeros(p)
        ll, grad, hess = objective(theta)
        if ridge > 0:
            ll -= ridge * theta @ theta
            grad = grad - 2 * ridge * theta
            hess = hess - 2 * ridge * np.eye(p)
        for it in range(1, options.max_iter + 1):
            if np.max(np.abs(grad)) < options.grad_tol:
                return theta, hess, ll, it - 1, True, None
            try:
                step = np.linalg.solve(-hess, grad)
            except np.linalg.LinAlgError:
                return theta, hess, ll, it, False, "singular"
            scale = 1.0
            for _ in range(MAX_HALVINGS):
                cand = theta + scale * step
                ll_new, grad_new, hess_new = objective(cand)
                if ridge > 0:
                    ll_new -= ridge * cand @ cand
                    grad_new = grad_new - 2 * ridge * cand
                    hess_new = hess_new - 2 * ridge * np.eye(p)
                if ll_new > ll - 1e-14:
                    break
                scale *= 0.5
            else:
                return theta, hess, ll, it, False, "stalled"
            if np.max(np.abs(cand)) > SEPARATION_THETA and ridge == 0:
                return cand, hess_new, ll_new, it, False, "diverged"
            if np.linalg.norm(scale * step) < options.step_tol:
                return cand, hess_new, ll_new, it, True, None
            theta, ll, grad, hess = cand, ll_new, grad_new, hess_new
        return theta, hess, ll, options.max_iter, False, "max-iter"

    theta, hess, ll, iters, converged, reason = run(0.0)
    separated = False
    if not converged and reason in ("diverged", "stalled", "singular"):
        separated = True
        theta, hess, ll, iters, converged, reason = run(options.ridge)
    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        raise NonIdentifiedModelError(
            "information matrix singular after ridge fallback") from None
    return theta, cov, ll, iters, converged, separated


def fit_exact(network: DirectedNetwork, attrs: AttributeTable, model: ModelSpec,
              options: FitOptions = None) -> FitResult:
    """Exact MLE by Newton-Raphson on the dyad-factorized log-likelihood."""
    if network.n < 2:
        raise DegenerateNetworkError(f"{network.network_id}: n={network.n} < 2")
    options = options or FitOptions()
    objective = _DyadObjective(network, attrs, model)
    theta, cov, ll, iters, converged, separated = _newton(objective, options)
    # report the unpenalized likelihood even for ridged fits
    ll_exact = objective(theta)[0]
    return FitResult(
        network_id=network.network_id, country=network.country, model=model.preset,
        term_labels=model.labels, theta=theta, covariance=cov,
        log_likelihood=ll_exact, converged=converged,
        separation_flag=separated, newton_iterations=iters,
    )


def exact_log_likelihood(network, attrs, model, theta):
    """Exact log-likelihood at theta (for gradient checks and GOF)."""
    return _DyadObjective(network, attrs, model)(np.asarray(theta, dtype=float))[0]


def brute_force_mle(network: DirectedNetwork, attrs: AttributeTable,
                    model: ModelSpec, options: FitOptions = None) -> FitResult:
    """Oracle MLE by summing the partition function over every graph; n <= 4."""
    if network.n < 2:
        raise DegenerateNetworkError(f"{network.network_id}: n={network.n} < 2")
    if network.n > 4:
        raise SizeLimitError(f"enumeration limited to n <= 4, got n={network.n}")
    options = options or FitOptions()
    objective = _EnumerationObjective(network, attrs, model)
    theta, cov, ll, iters, converged, separated = _newton(objective, options)
    ll_exact = objective(theta)[0]
    return FitResult(
        network_id=network.network_id, country=network.country, model=model.preset,
        term_labels=model.labels, theta=theta, covariance=cov,
        log_likelihood=ll_exact, converged=converged,
        separation_flag=separated, newton_iterations=iters,
    )


class _PseudoObjective:
    """Bernoulli log pseudo-likelihood over all ordered dyad slots.

    The design row of slot (i, j) is the change statistic given the observed
    rest of the graph; maximizing is plain logistic regression, done here by
    the same Newton machinery (equivalent to IRLS).
    """

    def __init__(self, network: DirectedNetwork, attrs: AttributeTable, model: ModelSpec):
        n = network.n
        slots = [(i, j) for i in range(n) for j in range(n) if i != j]
        self.design = np.array([change_stats(network, attrs, model, i, j)
                                for i, j in slots])
        self.response = np.array([float(network.has_tie(i, j)) for i, j in slots])
        self.n_params = len(model)

    def __call__(self, theta):
        eta = self.design @ theta
        # log(1 + e^eta) computed stably
        log1pe = np.logaddexp(0.0, eta)
        ll = float(self.response @ eta - log1pe.sum())
        mu = 1.0 / (1.0 + np.exp(-eta))
        grad = self.design.T @ (self.response - mu)
        w = mu * (1.0 - mu)
        hess = -(self.design.T * w) @ self.design
        return ll, grad, hess


def fit_mple(network: DirectedNetwork, attrs: AttributeTable, model: ModelSpec,
             options: FitOptions = None) -> FitResult:
    """Maximum pseudo-likelihood: logistic regression of ties on change stats.

    Coincides with fit_exact whenever the model has no mutual term.
    """
    if network.n < 2:
        raise DegenerateNetworkError(f"{network.network_id}: n={network.n} < 2")
    options = options or FitOptions()
    objective = _PseudoObjective(network, attrs, model)
    theta, cov, ll, iters, converged, separated = _newton(objective, options)
    ll_pseudo = objective(theta)[0]
    return FitResult(
        network_id=network.network_id, country=network.country, model=model.preset,
        term_labels=model.labels, theta=theta, covariance=cov,
        log_likelihood=ll_pseudo, converged=converged,
        separation_flag=separated, newton_iterations=iters,
    )


def filter_fits(fits, max_se: float = 10.0, require_converged: bool = True,
                exclude_separated: bool = True):
    """Screen fits and emit pooling observations.

    A network is excluded whole (all terms) when it fails any filter; the
    coefficient vector is jointly estimated, so partial inclusion would mix
    trustworthy and untrustworthy components. Returns (observations,
    exclusions) where exclusions is a list of (network_id, reason).
    """
    fits = list(fits)
    presets = {f.model for f in fits}
    if len(presets) > 1:
        raise ValueError(f"fits mix model presets: {sorted(presets)}")
    observations = []
    exclusions = []
    for f in sorted(fits, key=lambda f: f.network_id):
        ses = f.standard_errors
        if require_converged and not f.converged:
            exclusions.append((f.network_id, "not converged"))
            continue
        if exclude_separated and f.separation_flag:
            exclusions.append((f.network_id, "separation"))
            continue
        if not np.all(np.isfinite(f.theta)) or not np.all(np.isfinite(ses)):
            exclusions.append((f.network_id, "non-finite estimate"))
            continue
        if np.any(ses > max_se):
            worst = f.term_labels[int(np.argmax(ses))]
            exclusions.append((f.network_id, f"std error {ses.max():.3g} on {worst} > {max_se:g}"))
            continue
        for label, est, se in zip(f.term_labels, f.theta, ses):
            observations.append(EffectObservation(
                network_id=f.network_id, country=f.country, term=label,
                estimate=float(est), std_error=float(se)))
    if not observations:
        raise EmptyPoolError("no fits survived filtering")
    return observations, exclusions

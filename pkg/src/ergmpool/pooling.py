"""Hierarchical Bayesian random-effects pooling with country-level grouping.

One model per term. Each network's coefficient estimate enters with its
standard error as known measurement noise; true effects vary around a country
mean, country means around a global level, with half-Cauchy priors on both
heterogeneity scales:

    estimate_k ~ Normal(effect_k, se_k^2)
    effect_k   ~ Normal(mu[country(k)], tau^2)
    mu_c       ~ Normal(alpha_c, mu_sd^2)          (mu_sd = 1 by default)
    alpha_c    ~ Normal(0, tau_country^2)
    tau, tau_country ~ HalfCauchy(0, 1)

Sampling is blocked (collapsed) Gibbs: tau and the country means are updated
with the network effects integrated out analytically -- marginally
estimate_k ~ Normal(mu[country(k)], se_k^2 + tau^2) -- after which the network
effects are redrawn from their exact conditional; the country means are
additionally collapsed over the country offsets. The scales are slice-sampled
on the log scale, which handles the half-Cauchy tails without step-size
tuning; every location parameter has an exact conjugate normal draw.
Collapsing removes the funnel coupling between tau and the effects, so the
chains mix well even when tau is near zero or very large. The headline pooled
effect is the precision-weighted average of the country means, computed
within each iteration with weights sum_{k in c} 1/(se_k^2 + tau^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import summarize_chains
from .errors import InvalidObservationError
from .fit import EffectObservation

RHAT_WARN = 1.05


@dataclass
class PoolConfig:
    chains: int = 4
    iterations: int = 5000
    warmup: int = 2500
    seed: int = 0
    tau_scale: float = 1.0          # half-Cauchy scale for the network-level tau
    tau_country_scale: float = 1.0  # half-Cauchy scale for the country-level tau
    mu_sd: float = 1.0              # conditional sd of mu_c around alpha_c
    fix_tau: float = None           # clamp tau (0 gives the fixed-effect model)
    fix_tau_country: float = None   # clamp tau_country (0 pins alpha_c at 0)

    def __post_init__(self):
        if self.warmup >= self.iterations:
            raise ValueError("warmup must be < iterations")
        if self.chains < 2:
            raise ValueError("need >= 2 chains for diagnostics")


@dataclass
class ParameterSummary:
    mean: float
    median: float
    ci_low: float
    ci_high: float
    rhat: float
    ess: float


@dataclass
class PosteriorSummary:
    term: str
    pooled: ParameterSummary
    tau: ParameterSummary
    tau_country: ParameterSummary
    country_effects: dict[str, ParameterSummary]
    network_effects: dict[str, float]  # posterior means of the shrunken effects
    n_observations: int
    warnings: list[str] = field(default_factory=list)
    draws: dict[str, np.ndarray] = field(default_factory=dict)  # (chains, kept iters)


def fixed_effect_reference(observations) -> tuple[float, float]:
    """Closed-form inverse-variance weighted mean and its standard error."""
    obs = list(observations)
    if not obs:
        raise InvalidObservationError("need at least one observation")
    w = np.array([1.0 / o.std_error**2 for o in obs])
    y = np.array([o.estimate for o in obs])
    return float((w * y).sum() / w.sum()), float(w.sum() ** -0.5)


def _slice_sample_log(logpdf, x0, rng, width=1.0, max_steps=50):
    """Univariate slice sampler with stepping-out and shrinkage."""
    log_y = logpdf(x0) + np.log(rng.random())
    left = x0 - width * rng.random()
    right = left + width
    steps = int(rng.integers(max_steps))
    for _ in range(steps):
        if logpdf(left) < log_y:
            break
        left -= width
    for _ in range(max_steps - steps):
        if logpdf(right) < log_y:
            break
        right += width
    while True:
        x1 = left + (right - left) * rng.random()
        if logpdf(x1) >= log_y:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1


def _log_scale_target(phi, resid, base_var, cauchy_scale):
    """Log density of phi = log(scale) under a marginal normal likelihood.

    Each residual is Normal(0, e^{2 phi} + base_var) with the lower layer
    integrated out; half-Cauchy prior on the scale plus the log-scale
    Jacobian. base_var may be a scalar or a per-residual array.
    """
    v = np.exp(2.0 * phi) + base_var
    return float(-0.5 * np.sum(np.log(v) + resid**2 / v)
                 - np.log1p(np.exp(2.0 * phi) / cauchy_scale**2) + phi)


class _TermSampler:
    """Gibbs state for one term's observations."""

    def __init__(self, observations, config: PoolConfig):
        obs = sorted(observations, key=lambda o: (o.network_id, o.country))
        for o in obs:
            if not (np.isfinite(o.std_error) and o.std_error > 0
                    and np.isfinite(o.estimate)):
                raise InvalidObservationError(
                    f"{o.network_id}/{o.term}: bad observation "
                    f"(estimate={o.estimate}, se={o.std_error})")
        if len(obs) < 2 and config.fix_tau is None:
            raise InvalidObservationError("need >= 2 observations to estimate tau")
        self.obs = obs
        self.config = config
        self.network_ids = [o.network_id for o in obs]
        self.countries = sorted({o.country for o in obs})
        self.c_index = {c: i for i, c in enumerate(self.countries)}
        self.c_of_k = np.array([self.c_index[o.country] for o in obs])
        self.y = np.array([o.estimate for o in obs])
        self.prec_y = np.array([1.0 / o.std_error**2 for o in obs])
        self.n_k = len(obs)
        self.n_c = len(self.countries)

    def run_chain(self, rng: np.random.Generator):
        cfg = self.config
        kept = cfg.iterations - cfg.warmup
        y, prec_y, c_of_k = self.y, self.prec_y, self.c_of_k
        n_k, n_c = self.n_k, self.n_c
        mu_prec0 = 1.0 / cfg.mu_sd**2

        # overdispersed start around the data
        center = float(np.mean(y))
        spread = float(np.std(y)) + 1.0
        mu = center + spread * rng.normal(size=n_c)
        alpha = rng.normal(size=n_c)
        tau = cfg.fix_tau if cfg.fix_tau is not None else float(np.exp(rng.normal()))
        tau_c = (cfg.fix_tau_country if cfg.fix_tau_country is not None
                 else float(np.exp(rng.normal())))
        theta = y.copy()

        out = {
            "pooled": np.empty(kept),
            "tau": np.empty(kept),
            "tau_country": np.empty(kept),
            "mu": np.empty((kept, n_c)),
            "alpha": np.empty((kept, n_c)),
            "theta": np.empty((kept, n_k)),
        }
        var_y = 1.0 / prec_y
        for it in range(cfg.iterations):
            # tau, with the network effects integrated out:
            # y_k ~ Normal(mu[c(k)], se_k^2 + tau^2) marginally
            if cfg.fix_tau is None:
                resid = y - mu[c_of_k]
                phi = _slice_sample_log(
                    lambda p: _log_scale_target(p, resid, var_y, cfg.tau_scale),
                    np.log(tau), rng)
                tau = float(np.exp(phi))

            # country means under the same marginal likelihood, with the
            # country offsets integrated out: mu_c ~ Normal(0, mu_sd^2 +
            # tau_country^2) as prior marginal
            w = 1.0 / (var_y + tau**2)
            s_wy = np.bincount(c_of_k, weights=w * y, minlength=n_c)
            s_w = np.bincount(c_of_k, weights=w, minlength=n_c)
            prec_mu = s_w + 1.0 / (cfg.mu_sd**2 + tau_c**2)
            mean_mu = s_wy / prec_mu
            mu = mean_mu + rng.normal(size=n_c) / np.sqrt(prec_mu)

            # network effects: exact conditional given mu and tau
            if tau > 0.0:
                prec = prec_y + 1.0 / tau**2
                mean = (prec_y * y + mu[c_of_k] / tau**2) / prec
                theta = mean + rng.normal(size=n_k) / np.sqrt(prec)
            else:
                theta = mu[c_of_k]

            # tau_country with alpha integrated out:
            # mu_c ~ Normal(0, tau_country^2 + mu_sd^2) marginally
            if cfg.fix_tau_country is None:
                phi = _slice_sample_log(
                    lambda p: _log_scale_target(p, mu, cfg.mu_sd**2,
                                                cfg.tau_country_scale),
                    np.log(tau_c), rng)
                tau_c = float(np.exp(phi))
            if tau_c > 0.0:
                prec_a = mu_prec0 + 1.0 / tau_c**2
                mean_a = (mu * mu_prec0) / prec_a
                alpha = mean_a + rng.normal(size=n_c) / np.sqrt(prec_a)
            else:
                alpha = np.zeros(n_c)

            if it >= cfg.warmup:
                k = it - cfg.warmup
                w_c = np.bincount(c_of_k, weights=1.0 / (1.0 / prec_y + tau**2),
                                  minlength=n_c)
                out["pooled"][k] = float((w_c * mu).sum() / w_c.sum())
                out["tau"][k] = tau
                out["tau_country"][k] = tau_c
                out["mu"][k] = mu
                out["alpha"][k] = alpha
                out["theta"][k] = theta
        return out


def _summarize(draws_2d, diag) -> ParameterSummary:
    flat = draws_2d.ravel()
    lo, hi = np.quantile(flat, [0.025, 0.975])
    return ParameterSummary(
        mean=float(flat.mean()), median=float(np.median(flat)),
        ci_low=float(lo), ci_high=float(hi),
        rhat=diag["rhat"], ess=diag["ess"],
    )


def pool(observations, config: PoolConfig = None, term: str = None) -> PosteriorSummary:
    """Pool one term's effect observations; returns posterior summaries per
    parameter with convergence diagnostics and the raw kept draws.
    """
    config = config or PoolConfig()
    obs = list(observations)
    terms = {o.term for o in obs}
    if term is None:
        if len(terms) != 1:
            raise InvalidObservationError(
                f"observations must share one term, got {sorted(terms)}")
        term = next(iter(terms))
    sampler = _TermSampler(obs, config)
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    chains = [sampler.run_chain(np.random.default_rng(s)) for s in seeds]

    def stack(name, col=None):
        if col is None:
            return np.stack([c[name] for c in chains])         # (chains, kept)
        return np.stack([c[name][:, col] for c in chains])

    warnings = []

    def checked(name, draws):
        diag = summarize_chains(draws)
        if diag["degenerate"]:
            warnings.append(f"{name}: degenerate chain (constant draws)")
        elif diag["rhat"] > RHAT_WARN:
            warnings.append(f"{name}: split R-hat {diag['rhat']:.3f} > {RHAT_WARN}")
        return diag

    pooled_draws = stack("pooled")
    pooled = _summarize(pooled_draws, checked("pooled", pooled_draws))
    tau_draws = stack("tau")
    tau = _summarize(tau_draws, summarize_chains(tau_draws)
                     if config.fix_tau is not None else checked("tau", tau_draws))
    tc_draws = stack("tau_country")
    tau_country = _summarize(
        tc_draws, summarize_chains(tc_draws)
        if config.fix_tau_country is not None else checked("tau_country", tc_draws))

    country_effects = {}
    draws_out = {"pooled": pooled_draws, "tau": tau_draws, "tau_country": tc_draws}
    for c, ci in sampler.c_index.items():
        d = stack("mu", ci)
        country_effects[c] = _summarize(d, checked(f"mu[{c}]", d))
        draws_out[f"mu[{c}]"] = d

    network_effects = {
        nid: float(stack("theta", k).mean())
        for k, nid in enumerate(sampler.network_ids)
    }

    return PosteriorSummary(
        term=term, pooled=pooled, tau=tau, tau_country=tau_country,
        country_effects=country_effects, network_effects=network_effects,
        n_observations=sampler.n_k, warnings=warnings, draws=draws_out,
    )

import numpy as np
import pytest

from ergmpool.errors import DegenerateNetworkError, EmptyPoolError, SizeLimitError
from ergmpool.fit import (
    brute_force_mle,
    exact_log_likelihood,
    filter_fits,
    fit_exact,
    fit_mple,
)
from ergmpool.networks import AttributeTable, N_SKILL_ITEMS
from ergmpool.simulate import dyad_state_probs
from ergmpool.terms import ModelSpec, TermKind, TermSpec, dyad_predictors, model_preset
from conftest import grid_attrs, make_network, random_model, random_network

EDGES_ONLY = ModelSpec(terms=(TermSpec(TermKind.EDGES),))
EDGES_MUTUAL = ModelSpec(terms=(TermSpec(TermKind.EDGES), TermSpec(TermKind.MUTUAL)))


def logit(p):
    return np.log(p / (1.0 - p))


class TestFitExact:
    def test_edges_only_closed_form(self, rng):
        net = random_network(rng, 8, density=0.4)
        attrs = grid_attrs(rng, 8)
        d = len(net.ties) / (8 * 7)
        fit = fit_exact(net, attrs, EDGES_ONLY)
        assert fit.converged
        assert fit.theta[0] == pytest.approx(logit(d), abs=1e-9)

    def test_matches_brute_force_small(self, rng):
        net = make_network({(0, 1), (1, 0), (1, 2)}, 3)
        attrs = grid_attrs(rng, 3)
        exact = fit_exact(net, attrs, EDGES_MUTUAL)
        oracle = brute_force_mle(net, attrs, EDGES_MUTUAL)
        np.testing.assert_allclose(exact.theta, oracle.theta, atol=1e-6)
        assert exact.log_likelihood == pytest.approx(oracle.log_likelihood, abs=1e-8)

    def test_separation_flagged(self):
        # female perfectly separates tie presence
        n = 4
        female = [1.0, 1.0, 0.0, 0.0]
        ties = {(i, j) for i in range(n) for j in range(n)
                if i != j and female[i] == female[j]}
        net = make_network(ties, n)
        attrs = AttributeTable(female=np.array(female),
                               skill_items=np.full((n, N_SKILL_ITEMS), 3.0),
                               skills=np.zeros(n), perceived_skills=np.zeros(n))
        model = ModelSpec(terms=(TermSpec(TermKind.EDGES),
                                 TermSpec(TermKind.NODEMATCH, "female")))
        fit = fit_exact(net, attrs, model)
        assert fit.separation_flag
        assert np.all(np.isfinite(fit.theta))

    def test_degenerate_network(self, rng):
        with pytest.raises(DegenerateNetworkError):
            fit_exact(make_network(set(), 1), grid_attrs(rng, 1), EDGES_ONLY)

    def test_standard_errors_are_cov_diagonal(self, rng):
        net = random_network(rng, 6)
        fit = fit_exact(net, grid_attrs(rng, 6), EDGES_MUTUAL)
        np.testing.assert_allclose(fit.standard_errors,
                                   np.sqrt(np.diag(fit.covariance)))
        eigs = np.linalg.eigvalsh(fit.covariance)
        assert np.all(eigs > 0)

    def test_transpose_symmetry(self, rng):
        model = ModelSpec(terms=(TermSpec(TermKind.EDGES),
                                 TermSpec(TermKind.NODEOCOV, "skills"),
                                 TermSpec(TermKind.NODEICOV, "skills")))
        swapped = ModelSpec(terms=(TermSpec(TermKind.EDGES),
                                   TermSpec(TermKind.NODEICOV, "skills"),
                                   TermSpec(TermKind.NODEOCOV, "skills")))
        net = random_network(rng, 7, density=0.35)
        attrs = grid_attrs(rng, 7)
        f1 = fit_exact(net, attrs, model)
        f2 = fit_exact(net.transpose(), attrs, swapped)
        np.testing.assert_allclose(f1.theta, f2.theta, atol=1e-7)

    def test_gradient_matches_finite_differences(self, rng):
        net = random_network(rng, 6, density=0.4)
        attrs = grid_attrs(rng, 6)
        model = model_preset("rq1")
        from ergmpool.fit import _DyadObjective
        obj = _DyadObjective(net, attrs, model)
        h = 1e-5
        for _ in range(20):
            theta = rng.normal(scale=0.8, size=len(model))
            _, grad, _ = obj(theta)
            for k in range(len(model)):
                e = np.zeros(len(model))
                e[k] = h
                fd = (obj(theta + e)[0] - obj(theta - e)[0]) / (2 * h)
                assert abs(grad[k] - fd) <= 1e-5 * max(1.0, abs(fd))


class TestBruteForce:
    def test_uniform_loglik_two_nodes(self, rng):
        net = make_network({(0, 1), (1, 0)}, 2)
        attrs = grid_attrs(rng, 2)
        from ergmpool.fit import _EnumerationObjective
        obj = _EnumerationObjective(net, attrs, EDGES_MUTUAL)
        ll, _, _ = obj(np.zeros(2))
        assert ll == pytest.approx(-np.log(4))

    def test_edges_only_logit_density(self, rng):
        net = make_network({(0, 1), (1, 2)}, 3)
        fit = brute_force_mle(net, grid_attrs(rng, 3), EDGES_ONLY)
        assert fit.theta[0] == pytest.approx(logit(2 / 6), abs=1e-8)

    def test_size_limit(self, rng):
        with pytest.raises(SizeLimitError):
            brute_force_mle(random_network(rng, 5), grid_attrs(rng, 5), EDGES_ONLY)

    def test_rq1_style_agreement(self, rng):
        net = random_network(rng, 3, density=0.5)
        attrs = grid_attrs(rng, 3)
        model = model_preset("rq1")
        exact = fit_exact(net, attrs, model)
        oracle = brute_force_mle(net, attrs, model)
        assert exact.separation_flag == oracle.separation_flag
        np.testing.assert_allclose(exact.theta, oracle.theta, atol=1e-6)


class TestMple:
    def test_equals_exact_without_mutual(self, rng):
        model = ModelSpec(terms=(TermSpec(TermKind.EDGES),
                                 TermSpec(TermKind.NODEMATCH, "female")))
        for _ in range(10):
            net = random_network(rng, 6, density=0.4)
            attrs = grid_attrs(rng, 6)
            f1 = fit_exact(net, attrs, model)
            f2 = fit_mple(net, attrs, model)
            if f1.separation_flag or f2.separation_flag:
                continue
            np.testing.assert_allclose(f1.theta, f2.theta, atol=1e-6)

    def test_edges_logit_density(self, rng):
        net = random_network(rng, 7, density=0.3)
        d = len(net.ties) / (7 * 6)
        fit = fit_mple(net, grid_attrs(rng, 7), EDGES_ONLY)
        assert fit.theta[0] == pytest.approx(logit(d), abs=1e-8)

    def test_empty_network_separates(self, rng):
        fit = fit_mple(make_network(set(), 4), grid_attrs(rng, 4), EDGES_ONLY)
        assert fit.separation_flag


class TestLikelihoodNormalization:
    def test_four_state_probabilities_sum_to_one(self, rng):
        attrs = grid_attrs(rng, 2)
        for _ in range(20):
            model = random_model(rng)
            theta = rng.normal(scale=2.0, size=len(model))
            eta_ij, eta_ji, theta_m = dyad_predictors(attrs, model, 0, 1,
                                                      theta=theta)
            p = dyad_state_probs(eta_ij, eta_ji, theta_m)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            # cross-check against exact likelihoods of the four 2-node graphs
            states = [set(), {(0, 1)}, {(1, 0)}, {(0, 1), (1, 0)}]
            for s, ties in enumerate(states):
                ll = exact_log_likelihood(make_network(ties, 2), attrs, model, theta)
                assert np.exp(ll) == pytest.approx(p[s], rel=1e-10)


class TestFilterFits:
    def _fit(self, nid, theta=(0.0,), se=(1.0,), converged=True, separated=False):
        from ergmpool.fit import FitResult
        theta = np.asarray(theta, dtype=float)
        cov = np.diag(np.asarray(se, dtype=float) ** 2)
        return FitResult(network_id=nid, country="X", model="h2",
                         term_labels=tuple(f"t{k}" for k in range(len(theta))),
                         theta=theta, covariance=cov, log_likelihood=-1.0,
                         converged=converged, separation_flag=separated,
                         newton_iterations=3)

    def test_separated_excluded(self):
        fits = [self._fit(f"n{k}") for k in range(3)] + \
            [self._fit("n3", separated=True)]
        obs, excl = filter_fits(fits)
        assert len(obs) == 3
        assert excl == [("n3", "separation")]

    def test_large_se_excludes_whole_network(self):
        fits = [self._fit("n0", theta=(0.0, 0.0), se=(1.0, 50.0)),
                self._fit("n1", theta=(0.0, 0.0), se=(1.0, 1.0))]
        obs, excl = filter_fits(fits)
        assert {o.network_id for o in obs} == {"n1"}
        assert len(obs) == 2  # both terms of the surviving network
        assert excl[0][0] == "n0"

    def test_all_pass(self):
        fits = [self._fit(f"n{k}") for k in range(5)]
        obs, excl = filter_fits(fits)
        assert len(obs) == 5 and not excl

    def test_empty_pool_raises(self):
        with pytest.raises(EmptyPoolError):
            filter_fits([self._fit("n0", separated=True)])

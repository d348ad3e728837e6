import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abcmc.bench import gaussian_grid_model
from abcmc.diagnostics import asymptotic_variance
from abcmc.exact import (
    DiscreteDistribution,
    FiniteChain,
    GridModel,
    ReducibilityError,
    asymptotic_variance_exact,
    binomial_mixture,
    build_alt_chain,
    build_ideal_chain,
    build_pm_chain,
    convex_order_leq,
    handicap_chain,
    ideal_acceptance_probabilities,
    is_nonnegative_definite,
    lazy,
    pm_acceptance_probabilities,
    random_grid_model,
    simulate_path,
    spectrum,
    theta_function,
    two_state_chain,
)
from conftest import normal_cdf


def independence_grid(prior, tau, row=None):
    n = len(prior)
    row = np.asarray(prior if row is None else row, dtype=float)
    return GridModel(np.arange(n, dtype=float), prior, tau, np.tile(row, (n, 1)))


def test_always_accepting_chain_is_iid_prior():
    prior = np.array([0.2, 0.3, 0.5])
    c = build_pm_chain(independence_grid(prior, np.ones(3)), 1)
    np.testing.assert_allclose(c.P, np.tile(prior, (3, 1)), atol=1e-14)
    np.testing.assert_allclose(c.pi, prior, atol=1e-12)


def test_deterministic_weight_matches_grid_mh():
    g = GridModel([0.0, 1.0], [0.3, 0.7], [1.0, 1.0], [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_allclose(build_pm_chain(g, 1).P, build_ideal_chain(g).P, atol=1e-14)


def test_gaussian_grid_stationary_law_matches_closed_form():
    g = gaussian_grid_model(2.0, 1.0, 0.5, 15)
    th = np.linspace(-3, 3, 15)
    tau = np.array([normal_cdf(2.5 - t) - normal_cdf(1.5 - t) for t in th])
    prior = np.exp(-0.5 * th**2)
    target = prior * tau / np.sum(prior * tau)
    np.testing.assert_allclose(g.tau, tau, atol=1e-14)
    c = build_pm_chain(g, 2)
    marg = np.bincount(c.theta_index, c.pi, minlength=15)
    np.testing.assert_allclose(marg, target, atol=1e-10)


def test_zero_tau_is_reducible():
    g = independence_grid([0.5, 0.5], [0.0, 0.5])
    with pytest.raises(ReducibilityError):
        build_pm_chain(g, 2)


def test_disconnected_proposal_is_rejected():
    g = GridModel([0.0, 1.0], [0.5, 0.5], [0.5, 0.5], np.eye(2))
    with pytest.raises(ReducibilityError):
        build_pm_chain(g, 1)


@pytest.mark.parametrize("kind", ["independence", "local"])
@pytest.mark.parametrize("M", [1, 3, 8])
def test_constructed_chains_are_valid(kind, M):
    g = random_grid_model(np.random.default_rng(M), 9, kind)
    for c in (build_pm_chain(g, M), build_pm_chain(g, M, 0.5), handicap_chain(g, M, 0.3),
              build_ideal_chain(g), build_alt_chain(g)):
        c.validate()


def test_ideal_chain_with_uniform_tau_is_mh_on_prior():
    g = independence_grid([0.2, 0.3, 0.5], [0.4, 0.4, 0.4], row=[1 / 3] * 3)
    P = build_ideal_chain(g).P
    assert P[0, 2] == pytest.approx(1 / 3)
    assert P[2, 0] == pytest.approx(1 / 3 * 0.2 / 0.5)


def test_pm_acceptance_approaches_ideal_for_large_M():
    g = gaussian_grid_model(2.0, 1.0, 0.5, 15)
    # per-move values cannot converge where M * tau << 1, so compare the
    # stationary acceptance rate of the theta-marginal
    w = g.target()[:, None] * g.proposal_probs
    ideal = np.sum(w * ideal_acceptance_probabilities(g))
    rates = [np.sum(w * pm_acceptance_probabilities(g, M)) for M in (1, 16, 256, 1024)]
    assert rates[-1] == pytest.approx(ideal, rel=0.02)
    assert np.all(np.diff(rates) > 0) and rates[-1] <= ideal


def test_pm_acceptance_matches_lifted_chain():
    g = random_grid_model(np.random.default_rng(3), 6, "independence")
    M = 4
    c = build_pm_chain(g, M)
    Q = g.proposal_probs
    acc = pm_acceptance_probabilities(g, M)
    # stationary probability of a move i -> k, summed over hit counts
    n = g.size
    flow = np.zeros((n, n))
    for s in range(c.n_states):
        for t in range(c.n_states):
            i, k = c.theta_index[s], c.theta_index[t]
            if i != k:
                flow[i, k] += c.pi[s] * c.P[s, t]
    marg = np.bincount(c.theta_index, c.pi, minlength=n)
    expect = marg[:, None] * Q * acc
    off = ~np.eye(n, dtype=bool)
    np.testing.assert_allclose(flow[off], expect[off], atol=1e-13)


def test_alt_equals_ideal_when_always_hitting():
    g = random_grid_model(np.random.default_rng(4), 7, "local")
    g = GridModel(g.theta_grid, g.prior_probs, np.ones(7), g.proposal_probs)
    np.testing.assert_allclose(build_alt_chain(g).P, build_ideal_chain(g).P, atol=1e-15)


def test_handicap_with_zero_alpha_is_pm_chain():
    g = random_grid_model(np.random.default_rng(5), 6, "independence")
    np.testing.assert_allclose(handicap_chain(g, 4, 0.0).P, build_pm_chain(g, 4).P, atol=1e-15)


def test_iid_chain_variance_is_marginal_variance():
    pi = np.array([0.1, 0.2, 0.3, 0.4])
    c = FiniteChain(np.arange(4), np.zeros(4, dtype=int), np.tile(pi, (4, 1)), pi)
    f = np.array([1.0, -2.0, 0.5, 3.0])
    var = pi @ (f - pi @ f) ** 2
    assert asymptotic_variance_exact(c, f) == pytest.approx(var, rel=1e-12)
    assert asymptotic_variance_exact(c, np.full(4, 7.0)) == 0.0
    assert is_nonnegative_definite(c)


def test_two_state_closed_form():
    c = two_state_chain(0.1, 0.1)
    assert asymptotic_variance_exact(c, [0.0, 1.0]) == pytest.approx(2.25, rel=1e-12)
    assert not is_nonnegative_definite(two_state_chain(0.9, 0.9))
    assert spectrum(two_state_chain(0.9, 0.9))[0] == pytest.approx(-0.8)


def test_two_state_variance_agrees_with_simulation():
    c = two_state_chain(0.1, 0.1)
    path = simulate_path(c, 200_000, np.random.default_rng(0))
    est = asymptotic_variance(path.astype(float)).value
    assert est == pytest.approx(2.25, rel=0.2)


def test_variance_requires_theta_only_function():
    c = build_pm_chain(random_grid_model(np.random.default_rng(0), 4), 2)
    with pytest.raises(ValueError):
        asymptotic_variance_exact(c, c.hits.astype(float))


@pytest.mark.parametrize("M", [1, 2, 5])
def test_half_lazy_chains_are_nonnegative_definite(M):
    g = random_grid_model(np.random.default_rng(M), 8, "independence")
    assert is_nonnegative_definite(lazy(build_pm_chain(g, M), 0.5))


def test_convex_order_examples():
    one = DiscreteDistribution([1.0], [1.0])
    spread = DiscreteDistribution([0.0, 2.0], [0.5, 0.5])
    assert convex_order_leq(one, one)
    assert convex_order_leq(one, spread)
    assert not convex_order_leq(spread, one)
    assert convex_order_leq(binomial_mixture(1, 0.3), binomial_mixture(4, 0.3, 0.75))
    # different means are never ordered
    assert not convex_order_leq(one, DiscreteDistribution([2.0], [1.0]))


def test_binomial_mixture_enumeration():
    d = binomial_mixture(2, 0.5, 0.5)
    np.testing.assert_allclose(d.support, [0.0, 1.0, 2.0])
    np.testing.assert_allclose(d.probs, [0.625, 0.25, 0.125])
    b = binomial_mixture(1, 0.3)
    np.testing.assert_allclose(b.probs, [0.7, 0.3])


@settings(max_examples=60, deadline=None)
@given(M=st.integers(1, 40), tau=st.floats(0.0, 1.0), alpha=st.floats(0.0, 0.95))
def test_binomial_mixture_mean_and_order(M, tau, alpha):
    d = binomial_mixture(M, tau, alpha)
    assert d.mean() == pytest.approx(tau, abs=1e-12)
    assert convex_order_leq(binomial_mixture(M, tau), d)


@settings(max_examples=40, deadline=None)
@given(tau=st.floats(0.0, 1.0), M=st.integers(2, 64))
def test_convex_gap_closed_form(tau, M):
    # E|Y - c| - E|X - c| = c (2 tau - (2/M)(1 - (1 - tau)^M)) on [0, 1]
    X = binomial_mixture(1, tau)
    Y = binomial_mixture(M, tau, 1 - 1 / M)
    for c in np.linspace(0, 1, 11):
        gap = Y.abs_deviation(c)[0] - X.abs_deviation(c)[0]
        assert gap == pytest.approx(c * (2 * tau - 2 / M * (1 - (1 - tau) ** M)), abs=1e-12)


def test_discrete_distribution_validation():
    with pytest.raises(ValueError):
        DiscreteDistribution([1.0, 0.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        DiscreteDistribution([0.0, 1.0], [0.5, 0.6])
    d = DiscreteDistribution.from_samples([2.0, 1.0, 2.0], [1, 1, 2])
    np.testing.assert_allclose(d.support, [1.0, 2.0])
    np.testing.assert_allclose(d.probs, [0.25, 0.75])


def test_theta_function_lifts_values():
    g = random_grid_model(np.random.default_rng(2), 3)
    c = build_pm_chain(g, 3)
    f = theta_function(c, [10.0, 20.0, 30.0])
    np.testing.assert_array_equal(f, np.array([10.0, 20.0, 30.0])[c.theta_index])

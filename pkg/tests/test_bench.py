import numpy as np
import pytest
from scipy.integrate import trapezoid

from abcmc.bench import (
    BenchConfig,
    UnattainableBudgetError,
    always_hit_model,
    calibrate_epsilon,
    exact_acceptance_rate,
    fig1_right,
    gaussian_model,
    hit_probability,
    marginal_hit_probability,
    rate_per_pseudosample,
    smoothed_posterior,
)
from abcmc.model import ConfigurationError
from conftest import normal_cdf

SMALL = dict(n_iters=20_000, epsilon_grid=(0.25,), M_grid=(1, 4))


def test_hit_probability_oracle():
    assert hit_probability(2.0, 2.0, 1.0, 1.0) == pytest.approx(2 * normal_cdf(1.0) - 1, abs=1e-14)
    assert hit_probability(2.0, 2.0, 1.0, 1.0) == pytest.approx(0.6826894921370859, abs=1e-12)
    np.testing.assert_allclose(hit_probability(np.array([-5.0, 0.0, 5.0]), 0.0, 1.0, 1e6), 1.0)
    th = np.linspace(0, 3, 7)
    np.testing.assert_allclose(hit_probability(th, 0.0, 0.7, 0.4),
                               hit_probability(-th, 0.0, 0.7, 0.4), atol=1e-15)


def test_marginal_hit_probability_oracle():
    p = normal_cdf(2.25 / np.sqrt(2)) - normal_cdf(1.75 / np.sqrt(2))
    assert marginal_hit_probability(2.0, 1.0, 0.25) == pytest.approx(p, rel=1e-12)


def test_quadrature_acceptance_at_one_sample_is_marginal_hit():
    # with a prior proposal and M = 1 every proposal with a hit is accepted
    for y, s, e in [(2.0, 1.0, 0.25), (8.0, 1.0, 4.0), (0.0, 0.1, 0.05)]:
        assert exact_acceptance_rate(y, s, e, 1) == pytest.approx(
            marginal_hit_probability(y, s, e), rel=1e-8)


def test_smoothed_posterior_normalised():
    post = smoothed_posterior(2.0, 1.0, 0.5)
    x = np.linspace(-6, 8, 20001)
    assert trapezoid(post.pdf(x), x) == pytest.approx(1.0, abs=1e-6)
    assert post.cdf(20.0) == pytest.approx(1.0, abs=1e-6)
    # small bandwidth tends to the exact posterior N(1, 1/2)
    tight = smoothed_posterior(2.0, 1.0, 1e-3)
    assert tight.mean() == pytest.approx(1.0, abs=1e-4)
    assert tight.variance() == pytest.approx(0.5, abs=1e-4)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        BenchConfig(sigma_y=0.0)
    with pytest.raises(ConfigurationError):
        BenchConfig(target_rate=1.0)
    with pytest.raises(ConfigurationError):
        BenchConfig(M_grid=())
    with pytest.raises(ConfigurationError):
        BenchConfig(discount=0.5)


def test_always_hit_rate_is_inverse_cost():
    cfg = BenchConfig(y_obs=0.0, **dict(SMALL, M_grid=(4,)))
    rows = rate_per_pseudosample(cfg, model=always_hit_model(0.0))
    assert rows[0]["acc_rate"] == 1.0
    assert rows[0]["rate_per_pseudosample"] == 0.25


def test_rate_rows_and_single_sample_row():
    cfg = BenchConfig(**SMALL)
    rows = rate_per_pseudosample(cfg)
    assert [r["M"] for r in rows] == [1, 4]
    r1 = rows[0]
    assert r1["rate_per_pseudosample"] == r1["acc_rate"]
    exact = exact_acceptance_rate(2.0, 1.0, 0.25, 1)
    assert abs(r1["acc_rate"] - exact) < 4 * r1["stderr"]


def test_rate_rows_are_parallel_invariant():
    cfg = BenchConfig(**SMALL)
    assert rate_per_pseudosample(cfg, jobs=1) == rate_per_pseudosample(cfg, jobs=2)


def test_rate_needs_enough_iterations():
    with pytest.raises(ConfigurationError):
        rate_per_pseudosample(BenchConfig(**dict(SMALL, n_iters=1000)))


def test_calibration_hits_analytic_bandwidth():
    # at M = 1 the acceptance equals P(|y_obs - Y| < eps), Y ~ N(0, 2)
    from scipy.optimize import brentq

    cfg = BenchConfig(n_iters=200_000, seed=1)
    eps = calibrate_epsilon(cfg, 1)
    root = brentq(lambda e: marginal_hit_probability(2.0, 1.0, e) - 0.004, 1e-4, 1.0)
    assert eps == pytest.approx(root, rel=0.15)


def test_calibration_degenerate_model_returns_lower_bound():
    from abcmc.bench import EPS_LOWER

    cfg = BenchConfig(y_obs=0.0, n_iters=10_000)
    assert calibrate_epsilon(cfg, 1, model=always_hit_model(0.0)) == EPS_LOWER


def test_unattainable_budget():
    cfg = BenchConfig(target_rate=0.02, n_iters=10_000)
    with pytest.raises(UnattainableBudgetError):
        calibrate_epsilon(cfg, 64, discount=1.0)


def test_fig1_right_shares_single_sample_column():
    cfg = BenchConfig(n_iters=20_000, M_grid=(1, 2), discount_grid=(1.0, 4.0))
    rows = fig1_right(cfg)
    m1 = [r["epsilon"] for r in rows if r["M"] == 1]
    assert len(m1) == 2 and m1[0] == m1[1]
    assert all(r["target_rate"] == pytest.approx(0.004 * (1 + (r["M"] - 1) / r["discount"]))
               for r in rows)


def test_gaussian_model_simulator_moments(gen):
    m = gaussian_model(2.0, 0.5)
    y = m.simulate(np.full((100_000, 1), 1.0), gen)
    assert y.mean() == pytest.approx(1.0, abs=0.01)
    assert y.std() == pytest.approx(0.5, abs=0.01)

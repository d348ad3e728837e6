"""Gaussian benchmark: acceptance rate per pseudo-sample and bandwidth calibration.

Model: ``theta ~ N(0, 1)``, ``y | theta ~ N(theta, sigma_y^2)``, identity
summary, absolute-difference distance, independence proposal ``N(0, 1)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate, special, stats

from .costs import cost_per_iteration
from .diagnostics import acceptance_rate, asymptotic_variance
from .exact import GridModel, _binom_pmf
from .parallel import parallel_map
from .model import ConfigurationError, KernelSpec, ModelSpec, RngStream
from .samplers import ProposalSpec, SamplerError, independence_proposal, pm_mcmc

__all__ = [
    "BenchConfig",
    "always_hit_model",
    "CalibrationRangeError",
    "UnattainableBudgetError",
    "calibrate_epsilon",
    "exact_acceptance_rate",
    "fig1_right",
    "fig2_sweep",
    "gaussian_grid_model",
    "gaussian_model",
    "gaussian_proposal",
    "hit_probability",
    "marginal_hit_probability",
    "rate_per_pseudosample",
    "run_chain",
    "smoothed_posterior",
]

log = logging.getLogger(__name__)

DEFAULT_M_GRID = (1, 2, 4, 8, 16, 32, 64)
FIG1_EPSILONS = tuple(0.5**k for k in range(2, 7))
DISCOUNTS = (1.0, 2.0, 4.0, 8.0, 16.0)
FIG2_Y_OBS = (2.0, 4.0, 6.0, 8.0)
FIG2_SIGMA_Y = (0.01, 0.05, 0.1, 0.5, 1.0, 2.0)
FIG2_DISCOUNT = 8.0
EPS_LOWER, EPS_UPPER = 1e-6, 1e3
DESK_ITERS, FULL_ITERS = 200_000, 5_000_000
INIT_ATTEMPTS = 10**6


class UnattainableBudgetError(ConfigurationError):
    """The requested acceptance rate is not below 1."""


class CalibrationRangeError(RuntimeError):
    """No bandwidth in the search range meets the acceptance budget."""


@dataclass(frozen=True)
class BenchConfig:
    y_obs: float = 2.0
    sigma_y: float = 1.0
    epsilon: Union[float, str] = "calibrate"
    M_grid: Sequence[int] = DEFAULT_M_GRID
    n_iters: int = DESK_ITERS
    discount: float = 1.0
    target_rate: float = 0.004
    kernel_kind: str = "uniform"
    seed: int = 0
    epsilon_grid: Sequence[float] = FIG1_EPSILONS
    discount_grid: Sequence[float] = DISCOUNTS

    def __post_init__(self):
        if not self.sigma_y > 0:
            raise ConfigurationError("sigma_y must be positive")
        if not self.M_grid or not self.epsilon_grid or not self.discount_grid:
            raise ConfigurationError("grids must be non-empty")
        if any(int(m) != m or m < 1 for m in self.M_grid):
            raise ConfigurationError("M_grid must hold positive integers")
        if not 0 < self.target_rate < 1:
            raise ConfigurationError("target_rate must lie in (0, 1)")
        if self.discount < 1 or any(d < 1 for d in self.discount_grid):
            raise ConfigurationError("discounts must be >= 1")
        if self.n_iters < 1:
            raise ConfigurationError("n_iters must be positive")
        if isinstance(self.epsilon, str) and self.epsilon != "calibrate":
            raise ConfigurationError("epsilon must be a number or 'calibrate'")
        object.__setattr__(self, "M_grid", tuple(int(m) for m in self.M_grid))
        object.__setattr__(self, "epsilon_grid", tuple(float(e) for e in self.epsilon_grid))
        object.__setattr__(self, "discount_grid", tuple(float(d) for d in self.discount_grid))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("M_grid", "epsilon_grid", "discount_grid"):
            d[k] = list(d[k])
        return d


def _std_normal_density(theta):
    theta = np.asarray(theta, dtype=float)
    return np.exp(-0.5 * np.sum(theta * theta, axis=-1)) / math.sqrt(2 * math.pi)


def gaussian_model(y_obs: float = 2.0, sigma_y: float = 1.0) -> ModelSpec:
    """``N(0, 1)`` prior with one observation ``y ~ N(theta, sigma_y^2)``."""
    if not sigma_y > 0:
        raise ConfigurationError("sigma_y must be positive")

    def prior_sample(gen, size):
        return gen.standard_normal((size, 1))

    def simulate(theta, gen):
        return theta + sigma_y * gen.standard_normal(theta.shape)

    return ModelSpec(prior_sample, _std_normal_density, simulate, [y_obs],
                     name=f"gaussian(y_obs={y_obs:g},sigma_y={sigma_y:g})")


def gaussian_proposal(holding_probability: float = 0.0) -> ProposalSpec:
    """Independence proposal ``N(0, 1)``, equal to the prior."""
    return independence_proposal(lambda gen, size: gen.standard_normal((size, 1)),
                                 _std_normal_density, holding_probability)


def hit_probability(theta, y_obs: float, sigma_y: float, epsilon: float):
    """``P(|y_obs - y| < epsilon)`` for ``y ~ N(theta, sigma_y^2)``."""
    theta = np.asarray(theta, dtype=float)
    hi = special.ndtr((y_obs - theta + epsilon) / sigma_y)
    lo = special.ndtr((y_obs - theta - epsilon) / sigma_y)
    return hi - lo


def marginal_hit_probability(y_obs: float, sigma_y: float, epsilon: float) -> float:
    """Prior-predictive hit probability, ``y ~ N(0, 1 + sigma_y^2)``."""
    s = math.sqrt(1.0 + sigma_y**2)
    return float(special.ndtr((y_obs + epsilon) / s) - special.ndtr((y_obs - epsilon) / s))


@dataclass(frozen=True)
class SmoothedPosterior:
    """Kernel-smoothed posterior of the Gaussian model with a uniform kernel,
    evaluated by adaptive quadrature."""

    y_obs: float
    sigma_y: float
    epsilon: float
    norm: float = field(init=False)

    def __post_init__(self):
        a, b = self._bounds()
        z = integrate.quad(self._unnorm, a, b, points=self._points(), limit=400)[0]
        object.__setattr__(self, "norm", z)

    def _points(self):
        return sorted({self.y_obs - self.epsilon, self.y_obs, self.y_obs + self.epsilon,
                       self.y_obs / (1 + self.sigma_y**2)})

    def _unnorm(self, theta):
        return stats.norm.pdf(theta) * hit_probability(theta, self.y_obs, self.sigma_y, self.epsilon)

    def pdf(self, theta):
        return self._unnorm(np.asarray(theta, dtype=float)) / self.norm

    def _bounds(self):
        centre = self.y_obs / (1 + self.sigma_y**2)
        width = 12.0 + abs(self.y_obs) + self.epsilon
        return centre - width, centre + width

    def mean(self) -> float:
        a, b = self._bounds()
        return integrate.quad(lambda t: t * self.pdf(t), a, b, limit=400,
                              points=self._points())[0]

    def variance(self) -> float:
        a, b = self._bounds()
        m = self.mean()
        return integrate.quad(lambda t: (t - m) ** 2 * self.pdf(t), a, b, limit=400,
                              points=self._points())[0]

    def cdf(self, x):
        """CDF by cumulative trapezoid on a fine grid, interpolated at ``x``."""
        a, b = self._bounds()
        grid = np.union1d(np.linspace(a, b, 400_001), self._points())
        dens = self.pdf(grid)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        return np.clip(np.interp(np.asarray(x, dtype=float), grid, cum), 0.0, 1.0)


def smoothed_posterior(y_obs: float, sigma_y: float, epsilon: float) -> SmoothedPosterior:
    return SmoothedPosterior(y_obs, sigma_y, epsilon)


def exact_acceptance_rate(y_obs: float, sigma_y: float, epsilon: float, M: int,
                          n_nodes: int = 400) -> float:
    """Stationary acceptance rate of the pseudo-marginal chain with the prior
    as independence proposal and a uniform kernel.

    With proposal equal to the prior the acceptance probability reduces to
    ``min(1, j' / j)`` for hit counts ``j`` (current) and ``j'`` (proposed).
    The current count follows the size-biased binomial mixture, the proposed
    one the plain mixture; both mixtures over ``theta`` are integrated on a
    fine grid spanning the prior and the smoothed posterior.
    """
    centre = y_obs / (1 + sigma_y**2)
    lo = min(-10.0, centre - 10.0)
    hi = max(10.0, centre + 10.0)
    theta, w = np.polynomial.legendre.leggauss(n_nodes)
    # composite rule on a few panels to resolve narrow hit-probability bumps
    panels = np.unique(np.concatenate([np.linspace(lo, hi, 41),
                                       y_obs + np.linspace(-1, 1, 21) * (epsilon + 6 * sigma_y)]))
    panels = panels[(panels >= lo) & (panels <= hi)]
    nodes, weights = [], []
    for a, b in zip(panels[:-1], panels[1:]):
        nodes.append(0.5 * (b - a) * theta + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights) * stats.norm.pdf(nodes)
    tau = hit_probability(nodes, y_obs, sigma_y, epsilon)
    j = np.arange(M + 1)
    pmf = _binom_pmf(j[None, :], M, tau[:, None])
    proposed = weights @ pmf
    current = weights @ (pmf * j[None, :])
    if current.sum() <= 0:
        return 0.0
    current /= current.sum()
    jj = np.maximum(j, 1)
    accept = np.minimum(1.0, j[None, :] / jj[:, None])
    accept[0, :] = 0.0
    return float(current @ accept @ proposed)


def gaussian_grid_model(y_obs: float = 2.0, sigma_y: float = 1.0, epsilon: float = 0.5,
                        n_points: int = 15, span: float = 3.0) -> GridModel:
    """Discretised Gaussian model on ``n_points`` equally spaced values in
    ``[-span, span]`` with the prior (normalised on the grid) as independence
    proposal."""
    theta = np.linspace(-span, span, n_points)
    prior = stats.norm.pdf(theta)
    prior /= prior.sum()
    tau = hit_probability(theta, y_obs, sigma_y, epsilon)
    Q = np.tile(prior, (n_points, 1))
    return GridModel(theta, prior, tau, Q,
                     name=f"gauss-grid(y={y_obs:g},s={sigma_y:g},eps={epsilon:g},n={n_points})")


def _init_theta(config: BenchConfig) -> np.ndarray:
    return np.array([config.y_obs / (1.0 + config.sigma_y**2)])


def _kernel(config: BenchConfig, epsilon: float) -> KernelSpec:
    return KernelSpec(config.kernel_kind, epsilon, 1.0)


def run_chain(config: BenchConfig, M: int, epsilon: float, stream: RngStream, model=None,
              **kwargs):
    model = model or gaussian_model(config.y_obs, config.sigma_y)
    return pm_mcmc(model, _kernel(config, epsilon), gaussian_proposal(), M,
                   config.n_iters, _init_theta(config), stream, **kwargs)


def _rate_cell(config, ei, eps, M, model=None, proposal=None):
    model = model or gaussian_model(config.y_obs, config.sigma_y)
    proposal = proposal or gaussian_proposal()
    stream = RngStream(config.seed, 1000 * ei + M)
    tr = pm_mcmc(model, _kernel(config, eps), proposal, M, config.n_iters,
                 _init_theta(config), stream)
    acc = acceptance_rate(tr)
    flags = tr.accepted[~tr.held].astype(float)
    se = asymptotic_variance(flags).standard_error_of_mean
    cost = cost_per_iteration(M, config.discount)
    return {"M": M, "epsilon": eps, "acc_rate": acc, "rate_per_pseudosample": acc / cost,
            "stderr": se / cost, "seed": config.seed}


def rate_per_pseudosample(config: BenchConfig, model: Optional[ModelSpec] = None,
                          proposal: Optional[ProposalSpec] = None, jobs: int = 1) -> list:
    """Acceptance rate divided by the per-iteration cost for every ``(M, epsilon)``.

    ``stderr`` is the batch-means standard error of the acceptance rate,
    divided by the same cost. Custom ``model``/``proposal`` objects are only
    supported with ``jobs=1``.
    """
    if config.n_iters < 10_000:
        raise ConfigurationError("rate_per_pseudosample needs n_iters >= 1e4")
    cells = [(config, ei, eps, M, model, proposal)
             for ei, eps in enumerate(config.epsilon_grid) for M in config.M_grid]
    rows = parallel_map(_rate_cell, cells, jobs if model is None and proposal is None else 1)
    rows.sort(key=lambda r: (r["M"], r["epsilon"]))
    return rows


def calibrate_epsilon(config: BenchConfig, M: int, discount: Optional[float] = None,
                      model: Optional[ModelSpec] = None, *, rel_width: float = 0.02,
                      stream: Optional[RngStream] = None) -> float:
    """Bandwidth at which the chain accepts ``target_rate * cost(M)`` of proposals.

    Bisection on ``log epsilon``; every evaluation reruns the chain with the
    same random stream so the acceptance curve is a deterministic, in
    practice monotone, function of ``epsilon``. Returns the geometric
    midpoint once the bracket is narrower than ``rel_width``.
    """
    discount = config.discount if discount is None else discount
    budget = config.target_rate * cost_per_iteration(M, discount)
    if budget >= 1.0:
        raise UnattainableBudgetError(f"acceptance budget {budget:.3g} is not below 1")
    model = model or gaussian_model(config.y_obs, config.sigma_y)
    stream = stream or RngStream(config.seed, M)
    cache = {}

    def rate(eps):
        if eps not in cache:
            try:
                tr = run_chain(config, M, eps, stream, model, max_attempts=INIT_ATTEMPTS)
            except SamplerError:
                # the chain cannot even start: nothing is ever accepted
                cache[eps] = 0.0
            else:
                cache[eps] = acceptance_rate(tr)
        return cache[eps]

    # expand from a unit bandwidth by factors of 4 to bracket the budget
    lo, hi = None, None
    eps = 1.0
    if rate(eps) >= budget:
        hi = eps
        while lo is None:
            if eps <= EPS_LOWER:
                return EPS_LOWER
            eps = max(eps / 4.0, EPS_LOWER)
            if rate(eps) < budget:
                lo = eps
            else:
                hi = eps
    else:
        lo = eps
        while hi is None:
            if eps >= EPS_UPPER:
                raise CalibrationRangeError(
                    f"acceptance stays below {budget:.3g} for epsilon up to {EPS_UPPER:g}")
            eps = min(eps * 4.0, EPS_UPPER)
            if rate(eps) >= budget:
                hi = eps
            else:
                lo = eps
    while hi / lo > 1.0 + rel_width:
        mid = math.sqrt(lo * hi)
        if rate(mid) >= budget:
            hi = mid
        else:
            lo = mid
    eps = math.sqrt(lo * hi)
    log.debug("calibrated M=%d discount=%g -> epsilon=%.5g (%d chain runs)",
              M, discount, eps, len(cache))
    return eps


def fig1_right(config: BenchConfig, jobs: int = 1) -> list:
    """Calibrated bandwidth for every ``(M, discount)`` pair.

    The ``M = 1`` cost does not depend on the discount, so its calibration
    is computed once and shared.
    """
    keys = sorted({(M, 1.0 if M == 1 else d) for M in config.M_grid for d in config.discount_grid})
    eps = dict(zip(keys, parallel_map(calibrate_epsilon, [(config, M, d) for M, d in keys], jobs)))
    rows = []
    for M in config.M_grid:
        for disc in config.discount_grid:
            rows.append({"M": M, "discount": disc, "epsilon": eps[(M, 1.0 if M == 1 else disc)],
                         "target_rate": config.target_rate * cost_per_iteration(M, disc),
                         "seed": config.seed})
    rows.sort(key=lambda r: (r["discount"], r["M"]))
    return rows


def fig2_sweep(config: BenchConfig, vary: str, values: Optional[Sequence[float]] = None,
               jobs: int = 1) -> list:
    """Calibrated bandwidths at discount 8, normalised by their ``M = 1`` value.

    ``vary`` is ``"y_obs"`` (default values 2, 4, 6, 8) or ``"sigma_y"``
    (default values 0.01 to 2).
    """
    if vary == "y_obs":
        values = FIG2_Y_OBS if values is None else values
    elif vary == "sigma_y":
        values = FIG2_SIGMA_Y if values is None else values
    else:
        raise ConfigurationError("vary must be 'y_obs' or 'sigma_y'")
    M_grid = config.M_grid if 1 in config.M_grid else (1,) + tuple(config.M_grid)
    cfgs = [replace(config, **{vary: float(v)}, discount=FIG2_DISCOUNT, M_grid=M_grid)
            for v in values]
    cells = [(cfg, M) for cfg in cfgs for M in M_grid]
    eps = dict(zip([(getattr(c, vary), M) for c, M in cells],
                   parallel_map(calibrate_epsilon, cells, jobs)))
    rows = []
    for v in values:
        v = float(v)
        for M in M_grid:
            rows.append({vary: v, "M": M, "epsilon": eps[(v, M)],
                         "normalized_epsilon": eps[(v, M)] / eps[(v, 1)], "seed": config.seed})
    rows.sort(key=lambda r: (r[vary], r["M"]))
    return rows


def always_hit_model(y_obs: float = 0.0) -> ModelSpec:
    """Degenerate model whose pseudo-data always equal the observation."""

    def simulate(theta, gen):
        return np.full((len(theta), 1), float(y_obs))

    return ModelSpec(lambda gen, size: gen.standard_normal((size, 1)), _std_normal_density,
                     simulate, [y_obs], name="always-hit")

"""Exact finite-state pseudo-marginal chains and asymptotic variances.

Parameters live on a finite grid with prior masses ``prior_probs`` and
hit probabilities ``tau`` (the chance that one pseudo-sample falls inside
the uniform kernel). The pseudo-marginal chain is lifted to states
``(i, k)``, one per positive value ``k`` of the weight estimator at grid
point ``i``. Zero weights are never entered from a positive-weight state,
so they are left out of the state space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components
from scipy.special import gammaln, xlog1py, xlogy

__all__ = [
    "DiscreteDistribution",
    "FiniteChain",
    "GridModel",
    "ReducibilityError",
    "VerificationError",
    "asymptotic_variance_exact",
    "binomial_mixture",
    "build_alt_chain",
    "build_ideal_chain",
    "build_pm_chain",
    "build_weight_chain",
    "convex_order_leq",
    "handicap_chain",
    "ideal_acceptance_probabilities",
    "is_nonnegative_definite",
    "is_reversible",
    "lazy",
    "pm_acceptance_probabilities",
    "random_grid_model",
    "simulate_path",
    "spectrum",
    "theta_function",
    "two_state_chain",
]

STOCHASTIC_TOL = 1e-12
STATIONARY_TOL = 1e-10
SPECTRAL_TOL = 1e-10


class ReducibilityError(ValueError):
    """The chain (or its proposal) is not irreducible."""


class VerificationError(AssertionError):
    """An internal cross-check between two computations failed."""


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported law with strictly increasing support."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.support, dtype=float).ravel()
        p = np.asarray(self.probs, dtype=float).ravel()
        if x.shape != p.shape or x.size == 0:
            raise ValueError("support and probs must be non-empty and equally long")
        if np.any(np.diff(x) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_samples(cls, values, probs) -> "DiscreteDistribution":
        """Build from possibly repeated, unsorted values by merging atoms."""
        values = np.asarray(values, dtype=float).ravel()
        probs = np.asarray(probs, dtype=float).ravel()
        x, inv = np.unique(values, return_inverse=True)
        p = np.zeros(len(x))
        np.add.at(p, inv, probs)
        return cls(x, p / p.sum())

    def mean(self) -> float:
        return float(self.support @ self.probs)

    def abs_deviation(self, c):
        """``E|X - c|`` for each value in ``c``."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return np.abs(self.support[None, :] - c[:, None]) @ self.probs

    def expect(self, phi):
        return float(np.asarray(phi(self.support), dtype=float) @ self.probs)


def _binom_pmf(k, M: int, tau: float) -> np.ndarray:
    # log-space form; the boost-backed pmf overflows for subnormal tau
    k = np.asarray(k, dtype=float)
    logp = (gammaln(M + 1.0) - gammaln(k + 1.0) - gammaln(M - k + 1.0)
            + xlogy(k, tau) + xlog1py(M - k, -tau))
    return np.exp(logp)


def binomial_mixture(M: int, tau: float, alpha: float = 0.0) -> DiscreteDistribution:
    """Law of the handicapped ``M``-sample weight divided by the prior mass.

    Equals 0 with probability ``alpha`` and ``Bin(M, tau) / (M (1 - alpha))``
    otherwise, so the mean is ``tau`` for every ``alpha``.
    """
    if M < 1:
        raise ValueError("M must be positive")
    if not 0.0 <= tau <= 1.0 or not 0.0 <= alpha < 1.0:
        raise ValueError("need tau in [0, 1] and alpha in [0, 1)")
    k = np.arange(M + 1)
    pmf = _binom_pmf(k, M, tau)
    probs = (1.0 - alpha) * pmf
    probs[0] += alpha
    return DiscreteDistribution(k / (M * (1.0 - alpha)), probs / probs.sum())


def convex_order_leq(X: DiscreteDistribution, Y: DiscreteDistribution,
                     tol: float = 1e-12) -> bool:
    """Whether ``X <=cx Y``.

    Both ``c -> E|X - c|`` and ``c -> E|Y - c|`` are piecewise linear with
    knots on the supports, so with equal means it suffices to compare them
    at every support point.
    """
    if abs(X.mean() - Y.mean()) > tol:
        return False
    c = np.union1d(X.support, Y.support)
    return bool(np.all(X.abs_deviation(c) <= Y.abs_deviation(c) + tol))


@dataclass(frozen=True)
class GridModel:
    """Discretised ABC problem.

    ``proposal_probs[i, j]`` is the probability of proposing grid point ``j``
    from ``i``.
    """

    theta_grid: np.ndarray
    prior_probs: np.ndarray
    tau: np.ndarray
    proposal_probs: np.ndarray
    name: str = "grid"

    def __post_init__(self):
        th = np.asarray(self.theta_grid, dtype=float).ravel()
        pr = np.asarray(self.prior_probs, dtype=float).ravel()
        tau = np.asarray(self.tau, dtype=float).ravel()
        Q = np.atleast_2d(np.asarray(self.proposal_probs, dtype=float))
        n = len(th)
        if pr.shape != (n,) or tau.shape != (n,) or Q.shape != (n, n):
            raise ValueError("grid, prior, tau and proposal shapes disagree")
        if np.any(pr <= 0) or abs(pr.sum() - 1.0) > 1e-12:
            raise ValueError("prior_probs must be positive and sum to 1")
        if np.any(tau < 0) or np.any(tau > 1):
            raise ValueError("tau must lie in [0, 1]")
        if np.any(Q < 0) or np.any(np.abs(Q.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
            raise ValueError("proposal_probs must be row-stochastic")
        for name, val in (("theta_grid", th), ("prior_probs", pr), ("tau", tau),
                          ("proposal_probs", Q)):
            object.__setattr__(self, name, val)

    @property
    def size(self) -> int:
        return len(self.theta_grid)

    def target(self) -> np.ndarray:
        """Normalised kernel-smoothed posterior on the grid."""
        w = self.prior_probs * self.tau
        return w / w.sum()


def random_grid_model(gen: np.random.Generator, size: int, kind: str = "independence",
                      tau_min: float = 0.02) -> GridModel:
    """Random grid instance with ``tau`` bounded below by ``tau_min``.

    ``kind`` is ``"independence"`` (identical random proposal rows) or
    ``"local"`` (symmetric nearest-neighbour moves on a ring).
    """
    prior = gen.dirichlet(np.ones(size)) * 0.9 + 0.1 / size
    prior /= prior.sum()
    tau = gen.uniform(tau_min, 1.0, size)
    if kind == "independence":
        row = gen.dirichlet(np.ones(size)) * 0.8 + 0.2 / size
        row /= row.sum()
        Q = np.tile(row, (size, 1))
    elif kind == "local":
        step = gen.uniform(0.1, 0.45)
        Q = np.eye(size) * (1 - 2 * step)
        idx = np.arange(size)
        np.add.at(Q, (idx, (idx + 1) % size), step)
        np.add.at(Q, (idx, (idx - 1) % size), step)
    else:
        raise ValueError(f"unknown proposal kind {kind!r}")
    return GridModel(np.arange(size, dtype=float), prior, tau, Q, name=f"random-{kind}-{size}")


@dataclass(frozen=True)
class FiniteChain:
    """Explicit transition matrix with its stationary distribution.

    ``theta_index[s]`` is the grid index of state ``s`` and ``hits[s]`` the
    estimator value index (hit count for the ``M``-sample weight; 0 for
    chains on the grid alone).
    """

    theta_index: np.ndarray
    hits: np.ndarray
    P: np.ndarray
    pi: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def states(self):
        return list(zip(self.theta_index.tolist(), self.hits.tolist()))

    @property
    def n_states(self) -> int:
        return len(self.pi)

    def validate(self) -> None:
        P, pi = self.P, self.pi
        if np.any(P < -STOCHASTIC_TOL) or np.max(np.abs(P.sum(axis=1) - 1)) > STOCHASTIC_TOL:
            raise VerificationError(f"{self.label}: P is not row-stochastic")
        if abs(pi.sum() - 1) > STATIONARY_TOL or np.max(np.abs(pi @ P - pi)) > STATIONARY_TOL:
            raise VerificationError(f"{self.label}: pi is not stationary")
        if not is_reversible(self):
            raise VerificationError(f"{self.label}: detailed balance fails")


def is_reversible(chain: FiniteChain, tol: float = STATIONARY_TOL) -> bool:
    flow = chain.pi[:, None] * chain.P
    return bool(np.max(np.abs(flow - flow.T)) <= tol)


def _check_proposal(Q: np.ndarray) -> None:
    support = Q > 0
    if np.any(support != support.T):
        raise ReducibilityError("proposal support is not symmetric")
    n_comp, _ = connected_components(support, directed=True, connection="strong")
    if n_comp != 1:
        raise ReducibilityError("proposal kernel is not irreducible")


def _stationary(P: np.ndarray) -> np.ndarray:
    """Leading left eigenvector of ``P``, normalised to a probability vector."""
    w, vl = linalg.eig(P, left=True, right=False)
    k = int(np.argmin(np.abs(w - 1.0)))
    v = np.real(vl[:, k])
    return v / v.sum()


def _finish(theta_index, hits, P, pi_analytic, label, meta) -> FiniteChain:
    pi_num = _stationary(P)
    gap = np.max(np.abs(pi_num - pi_analytic))
    if gap > STATIONARY_TOL:
        raise VerificationError(
            f"{label}: eigenvector stationary law differs from closed form by {gap:.3g}")
    chain = FiniteChain(np.asarray(theta_index), np.asarray(hits), P, pi_analytic, label, meta)
    chain.validate()
    return chain


def build_weight_chain(g: GridModel, laws: Sequence[DiscreteDistribution],
                       label: str = "pm") -> FiniteChain:
    """Pseudo-marginal chain for arbitrary per-grid-point weight laws.

    ``laws[i]`` is the law of ``T / prior_probs[i]`` at grid point ``i``.
    A proposed ``(i', b)`` is accepted with probability
    ``min(1, T' q(i | i') / (T q(i' | i)))``; zero weights are rejected.
    """
    _check_proposal(g.proposal_probs)
    if len(laws) != g.size:
        raise ValueError("need one weight law per grid point")
    blocks = []
    for i, law in enumerate(laws):
        pos = law.support > 0
        if not np.any(pos & (law.probs > 0)):
            raise ReducibilityError(f"weight is 0 almost surely at grid point {i}")
        keep = pos & (law.probs > 0)
        blocks.append((np.flatnonzero(keep) , g.prior_probs[i] * law.support[keep], law.probs[keep]))
    offsets = np.cumsum([0] + [len(b[1]) for b in blocks])
    n = offsets[-1]
    theta_index = np.repeat(np.arange(g.size), np.diff(offsets))
    hits = np.concatenate([b[0] for b in blocks])
    Q = g.proposal_probs
    P = np.zeros((n, n))
    for i, (_, Ti, _) in enumerate(blocks):
        rows = slice(offsets[i], offsets[i + 1])
        for j, (_, Tj, pj) in enumerate(blocks):
            if Q[i, j] == 0:
                continue
            ratio = (Tj[None, :] * Q[j, i]) / (Ti[:, None] * Q[i, j])
            P[rows, offsets[j]:offsets[j + 1]] = Q[i, j] * pj[None, :] * np.minimum(1.0, ratio)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    pi = np.concatenate([Ti * pi_ for (_, Ti, pi_) in blocks])
    pi /= pi.sum()
    return _finish(theta_index, hits, P, pi, label, {})


def _positive_tau(g: GridModel) -> None:
    if np.any(g.tau <= 0):
        raise ReducibilityError("every tau must be positive for an irreducible chain")


def lazy(chain: FiniteChain, laziness: float) -> FiniteChain:
    """The mixture ``laziness * I + (1 - laziness) * P``."""
    if not 0.0 <= laziness < 1.0:
        raise ValueError("laziness must lie in [0, 1)")
    if laziness == 0.0:
        return chain
    P = laziness * np.eye(chain.n_states) + (1.0 - laziness) * chain.P
    meta = dict(chain.meta, laziness=laziness)
    return FiniteChain(chain.theta_index, chain.hits, P, chain.pi,
                       f"{chain.label}+lazy{laziness:g}", meta)


def build_pm_chain(g: GridModel, M: int, laziness: float = 0.0) -> FiniteChain:
    """Pseudo-marginal chain with the ``M``-sample uniform-kernel weight.

    States are ``(i, j)`` with ``j = 1..M`` hits and weight
    ``prior_probs[i] * j / M``; the stationary law is proportional to
    ``prior_probs[i] * Bin(j; M, tau_i) * j / M``.
    """
    _positive_tau(g)
    laws = [binomial_mixture(M, t) for t in g.tau]
    chain = build_weight_chain(g, laws, label=f"{g.name}/Q{M}")
    chain.meta.update(M=M)
    return lazy(chain, laziness)


def handicap_chain(g: GridModel, M: int, alpha: float, laziness: float = 0.0) -> FiniteChain:
    """Pseudo-marginal chain whose weight is zeroed with probability ``alpha``
    and inflated by ``1 / (1 - alpha)`` otherwise."""
    _positive_tau(g)
    laws = [binomial_mixture(M, t, alpha) for t in g.tau]
    chain = build_weight_chain(g, laws, label=f"{g.name}/Q{M},alpha={alpha:g}")
    chain.meta.update(M=M, alpha=alpha)
    return lazy(chain, laziness)


def _grid_mh(g: GridModel, accept, label, laziness) -> FiniteChain:
    _positive_tau(g)
    _check_proposal(g.proposal_probs)
    Q = g.proposal_probs
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.where(Q > 0, Q * accept, 0.0)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    n = g.size
    chain = _finish(np.arange(n), np.zeros(n, dtype=int), P, g.target(), label, {})
    return lazy(chain, laziness)


def _mh_ratio(weights: np.ndarray, Q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (weights[None, :] * Q.T) / (weights[:, None] * Q)
    return np.where(Q > 0, r, 0.0)


def build_ideal_chain(g: GridModel, laziness: float = 0.0) -> FiniteChain:
    """Metropolis-Hastings on the grid with the exact smoothed likelihood ``tau``."""
    acc = np.minimum(1.0, _mh_ratio(g.prior_probs * g.tau, g.proposal_probs))
    return _grid_mh(g, acc, f"{g.name}/Qinf", laziness)


def build_alt_chain(g: GridModel, laziness: float = 0.0) -> FiniteChain:
    """One-pseudo-sample ABC-MCMC (uniform kernel, ``c = 1``) marginalised over
    the pseudo-sample: acceptance ``tau(i') * min(1, MH prior ratio)``."""
    acc = g.tau[None, :] * np.minimum(1.0, _mh_ratio(g.prior_probs, g.proposal_probs))
    return _grid_mh(g, acc, f"{g.name}/Qalt", laziness)


def two_state_chain(a: float, b: float) -> FiniteChain:
    """Chain on {0, 1} flipping 0->1 with probability ``a`` and 1->0 with ``b``."""
    P = np.array([[1 - a, a], [b, 1 - b]])
    pi = np.array([b, a]) / (a + b)
    chain = FiniteChain(np.arange(2), np.zeros(2, dtype=int), P, pi, f"two-state({a:g},{b:g})")
    chain.validate()
    return chain


def simulate_path(chain: FiniteChain, n: int, gen: np.random.Generator,
                  start: Optional[int] = None) -> np.ndarray:
    """Sample ``n`` successive state indices of the chain.

    The start state is drawn from ``pi`` unless given, so the path is
    stationary from the first step.
    """
    if n < 1:
        raise ValueError("n must be positive")
    cum = np.cumsum(chain.P, axis=1)
    cum[:, -1] = 1.0
    u = gen.random(n)
    path = np.empty(n, dtype=np.int64)
    s = int(gen.choice(chain.n_states, p=chain.pi)) if start is None else int(start)
    for t in range(n):
        s = int(np.searchsorted(cum[s], u[t], side="right"))
        path[t] = s
    return path


def theta_function(chain: FiniteChain, values) -> np.ndarray:
    """Lift a function given on grid points to the chain's state space."""
    return np.asarray(values, dtype=float)[chain.theta_index]


def asymptotic_variance_exact(chain: FiniteChain, f) -> float:
    """``<fbar, (2Z - I) fbar>_pi`` with ``Z = (I - P + 1 pi)^-1``.

    ``f`` is given on states and must not vary with the estimator value.
    """
    f = np.asarray(f, dtype=float).ravel()
    if f.shape != chain.pi.shape:
        raise ValueError("f must have one value per state")
    for i in np.unique(chain.theta_index):
        fi = f[chain.theta_index == i]
        if np.ptp(fi) > 0:
            raise ValueError("f must depend on the parameter coordinate only")
    if np.ptp(f) == 0:
        return 0.0
    pi = chain.pi
    n = len(pi)
    fbar = f - pi @ f
    A = np.eye(n) - chain.P + np.outer(np.ones(n), pi)
    try:
        lu = linalg.lu_factor(A, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise ReducibilityError("I - P + 1 pi is singular") from exc
    if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(np.diag(lu[0]))):
        raise ReducibilityError("I - P + 1 pi is singular")
    zf = linalg.lu_solve(lu, fbar)
    v = float(pi @ (fbar * (2.0 * zf - fbar)))
    scale = max(1.0, float(pi @ fbar**2))
    if v < -1e-10 * scale:
        raise VerificationError(f"negative asymptotic variance {v:.3g}")
    return max(v, 0.0)


def spectrum(chain: FiniteChain) -> np.ndarray:
    """Eigenvalues of the symmetrised kernel ``D^1/2 P D^-1/2`` (ascending)."""
    if not is_reversible(chain):
        raise ValueError("spectrum requires a reversible chain")
    d = np.sqrt(chain.pi)
    S = d[:, None] * chain.P / d[None, :]
    return linalg.eigvalsh(0.5 * (S + S.T))


def is_nonnegative_definite(chain: FiniteChain, tol: float = SPECTRAL_TOL) -> bool:
    return bool(spectrum(chain)[0] >= -tol)


def _trimmed_binomial(M: int, tau: float, size_biased: bool):
    j = np.arange(1, M + 1)
    p = _binom_pmf(j, M, tau)
    if size_biased:
        p = p * j
        p /= p.sum()
    keep = p > 1e-17 * p.max()
    return j[keep], p[keep]


def pm_acceptance_probabilities(g: GridModel, M: int) -> np.ndarray:
    """Stationary acceptance probability of a move ``i -> i'`` for the ``M``-sample chain.

    Averages ``min(1, T' q / (T q))`` over the size-biased hit-count law at
    ``i`` and the binomial law at ``i'``; usable for large ``M`` where the
    lifted chain would be too big to build.
    """
    _positive_tau(g)
    Q = g.proposal_probs
    n = g.size
    stat = [_trimmed_binomial(M, t, True) for t in g.tau]
    prop = [_trimmed_binomial(M, t, False) for t in g.tau]
    out = np.zeros((n, n))
    for i in range(n):
        ji, pi_ = stat[i]
        for k in range(n):
            if Q[i, k] == 0:
                continue
            jk, pk = prop[k]
            ratio = (g.prior_probs[k] * jk[None, :] * Q[k, i]) / (
                g.prior_probs[i] * ji[:, None] * Q[i, k])
            # proposals drawing zero hits contribute nothing
            out[i, k] = pi_ @ np.minimum(1.0, ratio) @ pk
    return out


def ideal_acceptance_probabilities(g: GridModel) -> np.ndarray:
    return np.where(g.proposal_probs > 0,
                    np.minimum(1.0, _mh_ratio(g.prior_probs * g.tau, g.proposal_probs)), 0.0)

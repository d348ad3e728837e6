"""ABC rejection sampling, pseudo-marginal ABC-MCMC and the alternative ABC-MCMC.

Independence proposals take a vectorised path: proposals, pseudo-samples and
uniforms for a block of iterations are drawn in bulk and only the
accept/reject scan runs sequentially. State-dependent proposals fall back to
a per-iteration loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import (
    ConfigurationError,
    KernelSpec,
    ModelSpec,
    RngLike,
    RngStream,
    as_generator,
    simulate_weights,
)

__all__ = [
    "ChainState",
    "ProposalSpec",
    "SamplerError",
    "Trace",
    "abc_rejection",
    "alt_mcmc",
    "independence_proposal",
    "pm_mcmc",
    "random_walk_proposal",
]

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 10**8
BLOCK = 1 << 15


class SamplerError(RuntimeError):
    """A sampler could not make progress (e.g. the kernel is too narrow)."""


@dataclass(frozen=True)
class ProposalSpec:
    """Proposal kernel ``q(to | from)`` with an optional holding probability.

    ``sample(current, gen, size)`` returns ``(size, d)`` proposals (``current``
    is ignored for independence proposals) and ``density(frm, to)`` evaluates
    ``q(to | frm)`` row-wise. A holding move keeps the chain in place, is
    always accepted and draws no pseudo-samples; ``density`` describes only
    the non-holding part.
    """

    kind: str
    sample: Callable
    density: Callable
    holding_probability: float = 0.0

    def __post_init__(self):
        if self.kind not in ("independence", "random_walk"):
            raise ConfigurationError(f"unknown proposal kind {self.kind!r}")
        if not 0.0 <= self.holding_probability < 1.0:
            raise ConfigurationError("holding_probability must lie in [0, 1)")


def independence_proposal(sample, density, holding_probability=0.0) -> ProposalSpec:
    """Independence proposal from ``sample(gen, size)`` and ``density(theta)``."""
    return ProposalSpec(
        "independence",
        lambda current, gen, size: np.asarray(sample(gen, size), dtype=float).reshape(size, -1),
        lambda frm, to: np.asarray(density(np.atleast_2d(to)), dtype=float).reshape(-1),
        holding_probability,
    )


def random_walk_proposal(scale, holding_probability=0.0) -> ProposalSpec:
    """Gaussian random walk with per-coordinate standard deviation ``scale``."""
    scale = np.atleast_1d(np.asarray(scale, dtype=float))
    if np.any(scale <= 0):
        raise ConfigurationError("random walk scale must be positive")
    norm_const = np.prod(np.sqrt(2 * np.pi) * scale)

    def sample(current, gen, size):
        current = np.atleast_1d(np.asarray(current, dtype=float))
        return current + scale * gen.standard_normal((size, current.size))

    def density(frm, to):
        z = (np.atleast_2d(to) - np.atleast_2d(frm)) / scale
        return np.exp(-0.5 * np.sum(z * z, axis=1)) / norm_const

    return ProposalSpec("random_walk", sample, density, holding_probability)


@dataclass(frozen=True)
class ChainState:
    theta: np.ndarray
    T: float


@dataclass
class Trace:
    """Sampler output.

    For MCMC ``draws`` holds ``x^(1..n)`` and ``accepted``/``held`` are per
    iteration; for rejection sampling ``draws`` holds the accepted points and
    ``accepted`` has one entry per proposal. ``pseudo_sample_count`` counts
    every pseudo-sample drawn, including those spent initialising a chain
    (``init_pseudo_samples``).
    """

    draws: np.ndarray
    accepted: np.ndarray
    pseudo_sample_count: int
    weights: Optional[np.ndarray] = None
    held: Optional[np.ndarray] = None
    init_pseudo_samples: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_proposals(self) -> int:
        if self.held is None:
            return len(self.accepted)
        return int(np.count_nonzero(~self.held))


def _meta(algorithm, M, kernel, rng, **extra):
    meta = {"algorithm": algorithm, "M": M, "kernel": kernel.kind,
            "epsilon": kernel.bandwidth, "sup_bound": kernel.sup_bound}
    if hasattr(rng, "seed"):
        meta.update(seed=rng.seed, stream_id=rng.stream_id)
    meta.update(extra)
    return meta


def abc_rejection(model: ModelSpec, kernel: KernelSpec, M: int, n_accept: int,
                  rng: RngLike, *, block_size: int = BLOCK,
                  max_attempts: int = MAX_ATTEMPTS) -> Trace:
    """Generalised ABC rejection sampler with ``M`` pseudo-samples per proposal.

    Every repeat draws a fresh ``theta' ~ prior``, ``M`` pseudo-samples and
    ``u ~ U[0, 1)``, and accepts when ``u < sum_i K_i / (c M)``.
    """
    if M < 1 or n_accept < 1:
        raise ConfigurationError("M and n_accept must be positive")
    gen = as_generator(rng)
    c = kernel.sup_bound
    draws, flags = [], []
    n_acc = 0
    since_last = 0
    while n_acc < n_accept:
        theta = np.asarray(model.prior_sample(gen, block_size), dtype=float)
        theta = theta.reshape(block_size, -1)
        kbar = simulate_weights(model, kernel, theta, M, gen)
        u = gen.random(block_size)
        acc = u < kbar / c
        idx = np.flatnonzero(acc)
        if len(idx) == 0:
            since_last += block_size
            if since_last > max_attempts:
                raise SamplerError(
                    f"no acceptance in {since_last} consecutive proposals; "
                    f"kernel bandwidth {kernel.bandwidth} is probably too narrow")
            flags.append(acc)
            continue
        need = n_accept - n_acc
        if len(idx) >= need:
            stop = idx[need - 1] + 1
            acc = acc[:stop]
            idx = idx[:need]
        since_last = len(acc) - 1 - idx[-1]
        flags.append(acc)
        draws.append(theta[idx])
        n_acc += len(idx)
    accepted = np.concatenate(flags)
    return Trace(
        draws=np.concatenate(draws)[:n_accept],
        accepted=accepted,
        pseudo_sample_count=M * len(accepted),
        meta=_meta("rejection", M, kernel, rng, n_accept=n_accept),
    )


def _initial_weight(model, kernel, theta0, M, gen, max_attempts):
    """Redraw ``T^(0)`` until it is positive; returns (T, attempts)."""
    prior0 = model.density(theta0)[0]
    if not prior0 > 0:
        raise ConfigurationError("initial state has zero prior density")
    attempts = 0
    while attempts < max_attempts:
        batch = 1 if attempts < 16 else min(4096, attempts)
        batch = min(batch, max_attempts - attempts)
        kbar = simulate_weights(model, kernel, np.repeat(theta0, batch, axis=0), M, gen)
        hit = np.flatnonzero(kbar > 0)
        if len(hit):
            attempts += int(hit[0]) + 1
            return prior0 * kbar[hit[0]], attempts
        attempts += batch
    raise SamplerError(f"initial weight stayed 0 after {attempts} attempts")


def _holds(gen, n, lam):
    if lam == 0.0:
        return np.zeros(n, dtype=bool)
    return gen.random(n) < lam


def pm_mcmc(model: ModelSpec, kernel: KernelSpec, proposal: ProposalSpec, M: int,
            n: int, init, rng: RngLike, *, block_size: int = BLOCK,
            max_attempts: int = MAX_ATTEMPTS) -> Trace:
    """Pseudo-marginal ABC-MCMC with the ``M``-sample kernel-density weight.

    A proposal ``x'`` with fresh weight ``T'`` is accepted when
    ``u <= T' q(x | x') / (T q(x' | x))``. Zero-weight proposals are never
    accepted.
    """
    if M < 1 or n < 1:
        raise ConfigurationError("M and n must be positive")
    gen = as_generator(rng)
    # a separate sub-stream keeps the main draws independent of the bandwidth
    init_gen = rng.substream(1) if isinstance(rng, RngStream) else gen
    theta0 = np.atleast_2d(np.asarray(init, dtype=float))
    T0, attempts = _initial_weight(model, kernel, theta0, M, init_gen, max_attempts)
    if proposal.kind == "independence":
        draws, acc, held, weights = _pm_independence(
            model, kernel, proposal, M, n, theta0[0], T0, gen, block_size)
    else:
        draws, acc, held, weights = _pm_local(model, kernel, proposal, M, n,
                                              theta0[0], T0, gen)
    init_ps = M * attempts
    return Trace(
        draws=draws, accepted=acc, held=held, weights=weights,
        pseudo_sample_count=M * int(np.count_nonzero(~held)) + init_ps,
        init_pseudo_samples=init_ps,
        meta=_meta("pm_mcmc", M, kernel, rng, n=n, proposal=proposal.kind,
                   holding_probability=proposal.holding_probability),
    )


def _pm_independence(model, kernel, proposal, M, n, theta, T, gen, block_size):
    d = theta.size
    draws = np.empty((n, d))
    weights = np.empty(n)
    acc = np.zeros(n, dtype=bool)
    held = np.empty(n, dtype=bool)
    # chain weight relative to the proposal density: w = T / q(x)
    w = T / proposal.density(None, theta[None, :])[0]
    cur = theta.copy()
    for start in range(0, n, block_size):
        stop = min(n, start + block_size)
        b = stop - start
        hold = _holds(gen, b, proposal.holding_probability)
        k = int(np.count_nonzero(~hold))
        prop = proposal.sample(None, gen, k)
        Tp = model.density(prop) * simulate_weights(model, kernel, prop, M, gen)
        wp = Tp / proposal.density(None, prop)
        u = gen.random(k)
        held[start:stop] = hold
        # sequential scan; indices into the non-held proposals
        local_acc = np.zeros(k, dtype=bool)
        last = np.empty(k, dtype=np.int64)
        cur_idx = -1
        wp_l, u_l = wp.tolist(), u.tolist()
        for i in range(k):
            wi = wp_l[i]
            if wi > 0.0 and u_l[i] * w <= wi:
                w = wi
                cur_idx = i
                local_acc[i] = True
            last[i] = cur_idx
        if k == 0:
            draws[start:stop] = cur
            weights[start:stop] = T
            continue
        # map the accepted-proposal path back onto every iteration of the block
        pos = np.cumsum(~hold) - 1
        state_idx = np.where(pos >= 0, last[np.maximum(pos, 0)], -1)
        blk_draws = np.where(state_idx[:, None] >= 0, prop[np.maximum(state_idx, 0)], cur)
        blk_T = np.where(state_idx >= 0, Tp[np.maximum(state_idx, 0)], T)
        draws[start:stop] = blk_draws
        weights[start:stop] = blk_T
        acc_full = np.zeros(b, dtype=bool)
        acc_full[~hold] = local_acc
        acc[start:stop] = acc_full
        cur = blk_draws[-1].copy()
        T = float(blk_T[-1])
    return draws, acc, held, weights


def _pm_local(model, kernel, proposal, M, n, theta, T, gen):
    d = theta.size
    draws = np.empty((n, d))
    weights = np.empty(n)
    acc = np.zeros(n, dtype=bool)
    held = np.zeros(n, dtype=bool)
    lam = proposal.holding_probability
    cur = theta[None, :].copy()
    for t in range(n):
        if lam > 0.0 and gen.random() < lam:
            held[t] = True
        else:
            prop = np.asarray(proposal.sample(cur[0], gen, 1), dtype=float).reshape(1, d)
            Tp = float(model.density(prop)[0] * simulate_weights(model, kernel, prop, M, gen)[0])
            u = gen.random()
            if Tp > 0.0:
                num = Tp * proposal.density(prop, cur)[0]
                den = T * proposal.density(cur, prop)[0]
                if u * den <= num:
                    cur, T = prop, Tp
                    acc[t] = True
        draws[t] = cur[0]
        weights[t] = T
    return draws, acc, held, weights


def alt_mcmc(model: ModelSpec, kernel: KernelSpec, proposal: ProposalSpec, n: int,
             init, rng: RngLike, *, block_size: int = BLOCK) -> Trace:
    """ABC-MCMC drawing one pseudo-sample per iteration.

    Accepts ``theta'`` when ``u <= (K / c) * min(1, pi(theta') q(theta | theta')
    / (pi(theta) q(theta' | theta)))`` with ``K`` evaluated on the single
    pseudo-sample simulated at ``theta'``.
    """
    if n < 1:
        raise ConfigurationError("n must be positive")
    gen = as_generator(rng)
    theta0 = np.atleast_2d(np.asarray(init, dtype=float))
    if not model.density(theta0)[0] > 0:
        raise ConfigurationError("initial state has zero prior density")
    c = kernel.sup_bound
    d = theta0.shape[1]
    draws = np.empty((n, d))
    acc = np.zeros(n, dtype=bool)
    held = np.zeros(n, dtype=bool)
    lam = proposal.holding_probability
    cur = theta0.copy()
    if proposal.kind == "independence":
        w = model.density(cur)[0] / proposal.density(None, cur)[0]
        for start in range(0, n, block_size):
            stop = min(n, start + block_size)
            hold = _holds(gen, stop - start, lam)
            k = int(np.count_nonzero(~hold))
            prop = proposal.sample(None, gen, k)
            kv = (kernel.from_distance(model.distances(prop, gen)) / c).tolist()
            wp = (model.density(prop) / proposal.density(None, prop)).tolist()
            u = gen.random(k).tolist()
            j = 0
            for i in range(stop - start):
                t = start + i
                if hold[i]:
                    held[t] = True
                else:
                    r = kv[j] * min(1.0, wp[j] / w) if kv[j] > 0.0 else 0.0
                    if r > 0.0 and u[j] <= r:
                        cur = prop[j:j + 1]
                        w = wp[j]
                        acc[t] = True
                    j += 1
                draws[t] = cur[0]
    else:
        pcur = model.density(cur)[0]
        for t in range(n):
            if lam > 0.0 and gen.random() < lam:
                held[t] = True
            else:
                prop = np.asarray(proposal.sample(cur[0], gen, 1), dtype=float).reshape(1, d)
                kv = float(kernel.from_distance(model.distances(prop, gen))[0]) / c
                u = gen.random()
                pprop = model.density(prop)[0]
                if kv > 0.0 and pprop > 0.0:
                    ratio = (pprop * proposal.density(prop, cur)[0]) / (
                        pcur * proposal.density(cur, prop)[0])
                    if u <= kv * min(1.0, ratio):
                        cur, pcur = prop, pprop
                        acc[t] = True
            draws[t] = cur[0]
    return Trace(
        draws=draws, accepted=acc, held=held, weights=None,
        pseudo_sample_count=int(np.count_nonzero(~held)),
        meta=_meta("alt_mcmc", 1, kernel, rng, n=n, proposal=proposal.kind,
                   holding_probability=lam),
    )

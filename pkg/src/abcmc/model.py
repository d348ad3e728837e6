"""Models, smoothing kernels, ABC weight estimates and random streams.

All model callables are vectorised over a leading axis: parameters are
arrays of shape ``(k, d)``, pseudo-data arrays hold one dataset per row and
summaries have shape ``(k, s)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "ConfigurationError",
    "KernelSpec",
    "ModelSpec",
    "RngStream",
    "WeightEstimate",
    "abc_weight",
    "as_generator",
    "euclidean_distance",
    "kernel_eval",
    "simulate_weights",
]

KERNEL_KINDS = ("uniform", "gaussian")


class ConfigurationError(ValueError):
    """Raised for invalid model, kernel or sampler configuration."""


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream.

    ``(seed, stream_id)`` is mapped through :class:`numpy.random.SeedSequence`
    so distinct stream ids give independent generators and the same pair
    always reproduces the same draws.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ConfigurationError("seed and stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(seq))

    def substream(self, k: int) -> np.random.Generator:
        """Generator for sub-stream ``k`` of this stream, independent of the main one."""
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, k))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, stream_id: int) -> "RngStream":
        """Stream with the same seed and another id."""
        return RngStream(self.seed, stream_id)


RngLike = Union[RngStream, np.random.Generator, int]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Turn a stream, seed or generator into a :class:`numpy.random.Generator`.

    A generator is passed through unchanged so callers can keep drawing from
    it; a stream or integer seed starts a fresh generator.
    """
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


@dataclass(frozen=True)
class KernelSpec:
    """Unnormalised smoothing kernel with bandwidth ``epsilon``.

    ``sup_bound`` is the constant ``c >= sup K`` used by the rejection
    sampler and the alternative ABC-MCMC. It is stored rather than derived
    so that a caller may pick any valid bound.
    """

    kind: str = "uniform"
    bandwidth: float = 1.0
    sup_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise ConfigurationError("kernel bandwidth must be positive")
        if not self.sup_bound > 0:
            raise ConfigurationError("kernel sup_bound must be positive")
        if self.sup_bound < 1.0:
            # both supported kernels peak at K(0) = 1
            raise ConfigurationError("sup_bound must be >= sup K = 1")

    def from_distance(self, dist):
        """Kernel value as a function of the summary distance."""
        dist = np.asarray(dist, dtype=float)
        if self.kind == "uniform":
            return (dist < self.bandwidth).astype(float)
        return np.exp(-0.5 * (dist / self.bandwidth) ** 2)

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return KernelSpec(self.kind, bandwidth, self.sup_bound)


def kernel_eval(kernel: KernelSpec, s) -> float:
    """Evaluate ``K(s)`` for a summary-difference vector ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return float(kernel.from_distance(np.linalg.norm(s)))


def euclidean_distance(a, b):
    """Row-wise Euclidean distance between summaries ``a`` (k, s) and ``b`` (s,)."""
    a = np.asarray(a, dtype=float)
    diff = a - np.asarray(b, dtype=float)
    if diff.ndim == 1:
        return np.abs(diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _identity(y):
    y = np.asarray(y, dtype=float)
    return y.reshape(len(y), -1)


@dataclass(frozen=True)
class ModelSpec:
    """A simulator model with prior, summary statistic and distance.

    Parameters
    ----------
    prior_sample : callable
        ``prior_sample(gen, size) -> (size, d)`` array of prior draws.
    prior_density : callable
        ``prior_density(theta) -> (k,)`` prior density at each row.
    simulate : callable
        ``simulate(theta, gen) -> pseudo-data`` with one dataset per row of
        ``theta``.
    observed : array_like
        Summary of the observed data, shape ``(s,)``.
    summary : callable, optional
        Maps pseudo-data to ``(k, s)`` summaries; identity by default.
    distance : callable, optional
        ``distance(summaries, observed) -> (k,)``; Euclidean by default.
    """

    prior_sample: Callable
    prior_density: Callable
    simulate: Callable
    observed: np.ndarray
    summary: Callable = _identity
    distance: Callable = euclidean_distance
    name: str = "model"

    def __post_init__(self):
        obs = np.atleast_1d(np.asarray(self.observed, dtype=float))
        object.__setattr__(self, "observed", obs)

    def distances(self, theta, gen: np.random.Generator):
        """Simulate one pseudo-dataset per row of ``theta`` and return distances."""
        y = self.simulate(np.asarray(theta, dtype=float), gen)
        s = np.asarray(self.summary(y), dtype=float).reshape(len(theta), -1)
        return np.asarray(self.distance(s, self.observed), dtype=float).reshape(-1)

    def density(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        dens = np.asarray(self.prior_density(theta), dtype=float).reshape(-1)
        if np.any(dens < 0):
            raise ConfigurationError("prior density returned a negative value")
        return dens


@dataclass(frozen=True)
class WeightEstimate:
    """Unbiased estimate ``T`` of the kernel-smoothed unnormalised target."""

    value: float
    pseudo_samples_used: int
    kernel_values: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


def simulate_weights(model: ModelSpec, kernel: KernelSpec, theta, M: int,
                     gen: np.random.Generator):
    """Mean kernel value over ``M`` pseudo-samples for every row of ``theta``.

    Returns an array of shape ``(k,)``. Pseudo-samples are simulated in
    one batch with the ``M`` replicates of each parameter adjacent.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if len(theta) == 0:
        return np.zeros(0)
    dist = model.distances(np.repeat(theta, M, axis=0), gen)
    return kernel.from_distance(dist).reshape(len(theta), M).mean(axis=1)


def abc_weight(model: ModelSpec, kernel: KernelSpec, theta, M: int,
               rng: RngLike) -> WeightEstimate:
    """Kernel-density weight ``pi(theta) * mean_i K(eta_obs - eta(y_i))``.

    The estimate is unbiased for ``pi(theta) * int K(.) p(y | theta) dy``.
    Passing an :class:`RngStream` reproduces the same estimate every call;
    pass a generator to draw fresh pseudo-samples each time.
    """
    if M < 1:
        raise ConfigurationError("M must be a positive integer")
    gen = as_generator(rng)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if len(theta) != 1:
        raise ConfigurationError("abc_weight takes a single parameter vector")
    dist = model.distances(np.repeat(theta, M, axis=0), gen)
    kv = kernel.from_distance(dist)
    value = float(model.density(theta)[0] * kv.mean())
    return WeightEstimate(value, M, kv)

"""Serial and parallel running-time functionals for ABC and ABC-MCMC.

Two tolerances are kept apart: ``delta_var`` is the Monte Carlo variance
to reach and ``delta_disc`` (>= 1) is the cost discount applied to every
pseudo-sample after the first within one iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import ConfigurationError

__all__ = ["CostReport", "cost_per_iteration", "mcmc_costs", "rejection_costs"]


@dataclass(frozen=True)
class CostReport:
    """Costs to reach variance ``target_variance``.

    ``serial`` counts (possibly discounted) pseudo-samples,
    ``parallel_single_chain`` counts iterations of one chain whose ``M``
    pseudo-samples are drawn on ``M`` processors and
    ``parallel_multi_chain`` counts iterations per chain for ``M``
    independent single-sample chains.
    """

    serial: float
    parallel_single_chain: float
    parallel_multi_chain: float
    target_variance: float
    M: int
    discount: float = 1.0


def _check(M, delta_var, delta_disc=1.0):
    if M < 1 or int(M) != M:
        raise ConfigurationError("M must be a positive integer")
    if not delta_var > 0:
        raise ConfigurationError("target variance delta_var must be positive")
    if not delta_disc >= 1:
        raise ConfigurationError("discount must be >= 1")


def cost_per_iteration(M: int, delta_disc: float = 1.0) -> float:
    """Pseudo-sampling cost of one iteration: ``1 + (M - 1) / delta_disc``."""
    _check(M, 1.0, delta_disc)
    return 1.0 + (M - 1) / delta_disc


def mcmc_costs(v_M: float, v_1: float, M: int, delta_var: float,
               delta_disc: float = 1.0) -> CostReport:
    """Costs of a pseudo-marginal chain using ``M`` pseudo-samples per step.

    ``v_M`` and ``v_1`` are asymptotic variances of the ``M``- and
    one-sample chains. Only the serial cost is discounted.
    """
    _check(M, delta_var, delta_disc)
    if v_M < 0 or v_1 < 0:
        raise ConfigurationError("asymptotic variances must be non-negative")
    return CostReport(
        serial=cost_per_iteration(M, delta_disc) * v_M / delta_var,
        parallel_single_chain=v_M / delta_var,
        parallel_multi_chain=v_1 / (delta_var * M),
        target_variance=delta_var,
        M=M,
        discount=delta_disc,
    )


def rejection_costs(p_acc: float, v_f: float, M: int, delta_var: float,
                    p_acc_single: Optional[float] = None) -> CostReport:
    """Costs of rejection ABC; proposals per acceptance are geometric(p_acc).

    ``p_acc_single`` is the acceptance probability with one pseudo-sample,
    used by the multi-chain cost; it defaults to ``p_acc`` because the
    marginal acceptance probability does not depend on ``M``.
    """
    _check(M, delta_var)
    p1 = p_acc if p_acc_single is None else p_acc_single
    for p in (p_acc, p1):
        if not 0 < p <= 1:
            raise ConfigurationError("acceptance probability must lie in (0, 1]")
    if v_f < 0:
        raise ConfigurationError("variance must be non-negative")
    return CostReport(
        serial=M * v_f / (delta_var * p_acc),
        parallel_single_chain=v_f / (delta_var * p_acc),
        parallel_multi_chain=v_f / (delta_var * M * p1),
        target_variance=delta_var,
        M=M,
    )

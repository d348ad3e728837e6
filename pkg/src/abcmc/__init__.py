"""Pseudo-marginal ABC-MCMC samplers, exact chain verification and cost models."""

__version__ = "0.1.0"

from .costs import CostReport, cost_per_iteration, mcmc_costs, rejection_costs  # noqa: E402
from .diagnostics import (  # noqa: E402
    InsufficientDataError,
    VarianceEstimate,
    acceptance_rate,
    asymptotic_variance,
    iid_variance,
)
from .model import (  # noqa: E402
    ConfigurationError,
    KernelSpec,
    ModelSpec,
    RngStream,
    WeightEstimate,
    abc_weight,
)
from .samplers import (  # noqa: E402
    ProposalSpec,
    SamplerError,
    Trace,
    abc_rejection,
    alt_mcmc,
    independence_proposal,
    pm_mcmc,
    random_walk_proposal,
)

__all__ = [
    "ConfigurationError", "CostReport", "InsufficientDataError", "KernelSpec", "ModelSpec",
    "ProposalSpec", "RngStream", "SamplerError", "Trace", "VarianceEstimate", "WeightEstimate",
    "abc_rejection", "abc_weight", "acceptance_rate", "alt_mcmc", "asymptotic_variance",
    "cost_per_iteration", "iid_variance", "independence_proposal", "mcmc_costs", "pm_mcmc",
    "random_walk_proposal", "rejection_costs",
]

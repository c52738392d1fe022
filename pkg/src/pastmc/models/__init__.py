from .finite import (
    FiniteStateModel,
    finite_state_exact_marginal,
    metropolis_matrix,
    replicate_importance_resampling,
    replicate_past_resampling,
    ring_proposal,
    stationary_distribution,
)
from .mixture import GaussianMixture
from .normal_toy import NormalToy
from .sv import SvModel, SvPriors, center_returns, load_returns_csv, sv_gibbs_kernel, sv_simulate

__all__ = [
    "FiniteStateModel",
    "GaussianMixture",
    "NormalToy",
    "SvModel",
    "SvPriors",
    "center_returns",
    "finite_state_exact_marginal",
    "load_returns_csv",
    "metropolis_matrix",
    "replicate_importance_resampling",
    "replicate_past_resampling",
    "ring_proposal",
    "stationary_distribution",
    "sv_gibbs_kernel",
    "sv_simulate",
]

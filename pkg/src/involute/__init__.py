"""Involutive MCMC: one master kernel, many samplers.

The core idea: every step draws an auxiliary variable, applies one of a
family of involutions on the extended space, and selects among the mapped
points with probabilities that make the target invariant.  Classical
Metropolis-Hastings, Hamiltonian variants with exact or surrogate
trajectories, function-space samplers, and multiproposal schemes are all
configurations of that one step.
"""

from .core import (DIVERGED, InvolutionReport, KernelSpec, StepRecord,
                   barker_weights, barker_weights_log, check_detailed_balance_discrete,
                   check_involution, master_step, mh_probability, mh_probability_log,
                   mhgj_acceptance, mhgj_acceptance_log)
from .diagnostics import (DiagnosticsReport, autocorrelation, compute_report, ess,
                          mode_occupancy, msjd, report_to_dict, report_to_json)
from .errors import (ConfigurationError, DegenerateWeightsError, DivergenceError,
                     NumericError, UndefinedDensityError)
from .hilbert import CovarianceSpectrum, cameron_martin_log_alpha, power_spectrum
from .rng import rng_stream
from .samplers import (ChainRecord, SamplerConfig, TargetModel, build_hmc, build_mh,
                       build_mhgj, build_mpcn, build_multiproposal, build_pcn,
                       build_rwm, build_sampler, build_surrogate_hmc, build_inf_hmc,
                       run_chain)

__version__ = "0.1.0"

__all__ = [
    "ChainRecord", "ConfigurationError", "CovarianceSpectrum",
    "DegenerateWeightsError", "DiagnosticsReport", "DIVERGED", "DivergenceError",
    "InvolutionReport", "KernelSpec", "NumericError", "SamplerConfig",
    "StepRecord", "TargetModel", "UndefinedDensityError", "autocorrelation",
    "barker_weights", "barker_weights_log", "build_hmc", "build_inf_hmc",
    "build_mh", "build_mhgj", "build_mpcn", "build_multiproposal", "build_pcn",
    "build_rwm", "build_sampler", "build_surrogate_hmc",
    "cameron_martin_log_alpha", "check_detailed_balance_discrete",
    "check_involution", "compute_report", "ess", "master_step",
    "mh_probability", "mh_probability_log", "mhgj_acceptance",
    "mhgj_acceptance_log", "mode_occupancy", "msjd", "power_spectrum",
    "report_to_dict", "report_to_json", "rng_stream", "run_chain",
]

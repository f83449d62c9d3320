"""Bayesian quickest change detection in multistream data.

Mixture Shiryaev and Shiryaev-Roberts stopping rules over unknown affected
subsets and post-change parameters, with exact recursions, window-limited
variants, threshold calibration, and a reproducible Monte Carlo harness for
operating characteristics.
"""

from .detectors import (
    Detector,
    DetectorConfig,
    RunResult,
    threshold_cost,
    threshold_shiryaev,
    threshold_sr,
)
from .info import InfoNumbers, d_constant, estimate_kl_slope, kl_ar, kl_mixture, kl_subset
from .likelihood import (
    LLRIncrementSource,
    SubsetWeights,
    elementary_symmetric,
    mixture_lr_dp,
    mixture_lr_enumerate,
    normalizer,
)
from .model import (
    NO_CHANGE,
    ChangeSpec,
    ObservationBatch,
    PriorSpec,
    generate,
    prior_mass,
    prior_tail,
    replication_rng,
    sample_change,
)
from .montecarlo import (
    InfeasibleHorizonError,
    MCConfig,
    MCEstimate,
    asymptotic_ratio_sweep,
    estimate_average_risk,
    estimate_bayes_delay,
    estimate_conditional_delay,
    estimate_pfa,
    simulate_runs,
)
from .scenarios import (
    ARChannelSpec,
    MixtureChannelSpec,
    Scenario,
    ar_llr_increment,
    ar_residual,
    gaussian_stream,
    mixture_llr_increment,
    q_constant,
)
from .statistics import (
    DetectorState,
    GridSpec,
    posterior_no_change,
    shiryaev_direct,
    shiryaev_update,
    sr_direct,
    sr_update,
)

__version__ = "0.1.0"

__all__ = [
    "ARChannelSpec",
    "ChangeSpec",
    "Detector",
    "DetectorConfig",
    "DetectorState",
    "GridSpec",
    "InfeasibleHorizonError",
    "InfoNumbers",
    "LLRIncrementSource",
    "MCConfig",
    "MCEstimate",
    "MixtureChannelSpec",
    "NO_CHANGE",
    "ObservationBatch",
    "PriorSpec",
    "RunResult",
    "Scenario",
    "SubsetWeights",
    "ar_llr_increment",
    "ar_residual",
    "asymptotic_ratio_sweep",
    "d_constant",
    "elementary_symmetric",
    "estimate_average_risk",
    "estimate_bayes_delay",
    "estimate_conditional_delay",
    "estimate_kl_slope",
    "estimate_pfa",
    "gaussian_stream",
    "generate",
    "kl_ar",
    "kl_mixture",
    "kl_subset",
    "mixture_llr_increment",
    "mixture_lr_dp",
    "mixture_lr_enumerate",
    "normalizer",
    "posterior_no_change",
    "prior_mass",
    "prior_tail",
    "q_constant",
    "replication_rng",
    "sample_change",
    "shiryaev_direct",
    "shiryaev_update",
    "simulate_runs",
    "sr_direct",
    "sr_update",
    "threshold_cost",
    "threshold_shiryaev",
    "threshold_sr",
]

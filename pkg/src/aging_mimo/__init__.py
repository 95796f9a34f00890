"""Uplink simulator for multi-cell multi-antenna systems with user mobility:
optimal linear combining under pilot contamination and channel aging,
closed-form rate bounds and large-antenna deterministic equivalents."""

__version__ = "0.1.0"

from .scenario import (
    DegenerateAgingError,
    DopplerParams,
    EstimationStats,
    LargeScaleFading,
    LayoutError,
    Scenario,
    ScenarioConfig,
    aging_coefficient,
    estimation_params,
    hexagonal_large_scale,
    load_scenario,
    trial_rng,
    uniform_interference_profile,
)
from .channel import (
    ChannelDraw,
    FullState,
    TransmissionSample,
    cross_cell_estimate,
    empirical_sinr,
    sample_estimate,
    sample_true_state,
    simulate_symbol,
)
from .receivers import (
    CombinerSet,
    ReceiverKind,
    SinrSample,
    combiner_matrix,
    mmse_combiner,
    mrc_combiner,
    olr_combiner,
    olr_quadratic_sinr,
    olr_sinr_eigen,
    sinr,
    sinr_matrix,
    zf_combiner,
)
from .analysis import (
    BoundInputs,
    ConvergenceError,
    DEState,
    bound_inputs,
    de_sinr,
    deterministic_equivalent,
    effective_t,
    eigen_cdf,
    eigen_pdf,
    expected_quadform_moments,
    expint_ei,
    expint_en,
    rate_lower_bound,
    rate_upper_bound,
    vandermonde_cofactor,
)
from .montecarlo import (
    RateResult,
    SweepPoint,
    TrialPlan,
    estimate_mean_quadratic_sinr,
    estimate_quadratic_rate,
    estimate_rates,
    sum_spectral_efficiency,
    sweep,
)

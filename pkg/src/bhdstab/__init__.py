"""Stabilization of LTI systems by feedbacks whose control signal and first
p time derivatives stay below prescribed bounds.

Synthesis, closed-loop simulation, exact derivative jets and empirical
verification (p-boundedness, SISS_L, Lyapunov identities).
"""

from .errors import (
    BHDError,
    ConfigError,
    DimensionMismatch,
    Divergence,
    GainOutOfRange,
    IllConditioned,
    InvalidOrder,
    MissingJets,
    NonConvergent,
    NonPositiveGain,
    NonPositiveParameter,
    NonSmoothDescriptor,
    NotControllable,
    NotStabilizable,
    OrderTooHigh,
    PositiveRealPartEigenvalue,
    StepSizeUnderflow,
    TooFewSamples,
    TuningFailed,
    ZeroK2,
)
from .linalg import (
    A0,
    B0,
    LinearSystem,
    LyapunovPair,
    SpectralProfile,
    gamma_constant,
    is_controllable,
    p_beta,
    spectral_profile,
)
from .canonical import (
    CanonicalForm,
    ReducedForm,
    ThetaTable,
    build_target_pair,
    build_theta,
    canonical_form,
    decompose_stabilizable,
    similarity_transform,
    validate_reduced_form,
)
from .feedback import (
    BoundSpec,
    CanonicalFeedback,
    ClosedLoop,
    GainSchedule,
    MultiInputFeedback,
    SaturatedLinearFeedback,
    StateFeedback,
    counterexample_initial_derivative,
    kappa_eval,
    multi_input_eval,
    nu_eval,
    saturated_linear_eval,
    static_bound,
    synthesize,
    synthesize_multi,
)
from .jets import (
    Jet,
    bell_polynomial,
    control_jet,
    faa_di_bruno,
    finite_difference_derivatives,
    g_derivative_coeff,
    partitions,
)
from .simulate import (
    BatchResult,
    DisturbanceSignal,
    Trajectory,
    dopri5,
    integrate,
    simulate_batch,
    sup_metrics,
)
from .verify import (
    PBoundCertificate,
    SissTestSpec,
    check_p_bounded,
    counterexample_growth,
    estimate_gain,
    make_battery,
    oscillator_lyapunov_suite,
    run_battery,
    siss_l_test,
    tune_gains,
    tune_multi,
)

__version__ = "0.1.0"

__all__ = [
    "BHDError",
    "ConfigError",
    "DimensionMismatch",
    "Divergence",
    "GainOutOfRange",
    "IllConditioned",
    "InvalidOrder",
    "MissingJets",
    "NonConvergent",
    "NonPositiveGain",
    "NonPositiveParameter",
    "NonSmoothDescriptor",
    "NotControllable",
    "NotStabilizable",
    "OrderTooHigh",
    "PositiveRealPartEigenvalue",
    "StepSizeUnderflow",
    "TooFewSamples",
    "TuningFailed",
    "ZeroK2",
    "A0",
    "B0",
    "LinearSystem",
    "LyapunovPair",
    "SpectralProfile",
    "gamma_constant",
    "is_controllable",
    "p_beta",
    "spectral_profile",
    "CanonicalForm",
    "ReducedForm",
    "ThetaTable",
    "build_target_pair",
    "build_theta",
    "canonical_form",
    "decompose_stabilizable",
    "similarity_transform",
    "validate_reduced_form",
    "BoundSpec",
    "CanonicalFeedback",
    "ClosedLoop",
    "GainSchedule",
    "MultiInputFeedback",
    "SaturatedLinearFeedback",
    "StateFeedback",
    "counterexample_initial_derivative",
    "kappa_eval",
    "multi_input_eval",
    "nu_eval",
    "saturated_linear_eval",
    "static_bound",
    "synthesize",
    "synthesize_multi",
    "Jet",
    "bell_polynomial",
    "control_jet",
    "faa_di_bruno",
    "finite_difference_derivatives",
    "g_derivative_coeff",
    "partitions",
    "BatchResult",
    "DisturbanceSignal",
    "Trajectory",
    "dopri5",
    "integrate",
    "simulate_batch",
    "sup_metrics",
    "PBoundCertificate",
    "SissTestSpec",
    "check_p_bounded",
    "counterexample_growth",
    "estimate_gain",
    "make_battery",
    "oscillator_lyapunov_suite",
    "run_battery",
    "siss_l_test",
    "tune_gains",
    "tune_multi",
]


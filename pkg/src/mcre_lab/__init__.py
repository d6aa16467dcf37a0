"""Simulation and verification lab for Markov chains in stationary random
environments: coupling construction, assumption checking, decay-rate
estimation, and SGLD-based risk-measure extraction."""

from .core import (
    EUCLIDEAN,
    ChainSpec,
    ContractionParams,
    CouplingConstants,
    EnvironmentSpec,
    Metric,
    NoiseSpec,
    NumericOverflowError,
    RngStream,
    derive_constants,
    normalize_assumption,
    simulate_backward,
    simulate_forward,
    simulate_forward_batch,
    step,
)
from .coupling import (
    BatchCouplingResult,
    CouplingDecomposition,
    CouplingOutcome,
    CouplingRun,
    DegenerateDecompositionError,
    InconsistentSpecError,
    analytic_bound,
    couple_step,
    couple_step_samples,
    decompose,
    run_coupling,
    run_coupling_batch,
)
from .estimate import (
    DecayCurve,
    DegenerateFitError,
    MixingEstimate,
    alpha_mixing_estimate,
    compare_templates,
    fit_curve,
    mixing_curve,
    rate_fit,
    theta_moment,
    tv_estimate,
)
from .models import (
    AdditiveARModel,
    SgldVarModel,
    SpecError,
    extract_var_cvar,
    load_loss_csv,
    make_additive,
    make_multivar_ar,
    make_sgld,
    make_stochvol,
    make_threshold,
    model_zoo,
    subordinate_norm,
)
from .verify import (
    CheckReport,
    InvalidPairError,
    MinorizationSpec,
    check_bounded_perturbation,
    check_contractivity,
    check_minorization,
    check_support,
)

__version__ = "0.1.0"

"""Entropy production rate of stationary Ornstein-Uhlenbeck processes.

Closed-form stationary rate, pathwise estimators along Euler-Maruyama or
exact-transition paths, and empirical verification of the central limit
theorem, moderate-deviation tail rates and law-of-the-iterated-logarithm
behaviour of the sample rate.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    InitialLaw,
    OUModel,
    FunctionalConstants,
    ModelError,
    DegenerateNoiseError,
    UnstableDriftError,
    build_model,
    load_model,
    model_to_json,
    grad_log_density,
    entropy_production_rate,
    epr_integrand,
    is_reversible,
    functional_constants,
    transition_params,
)
from .rng import RNG_ALGORITHM, RngStream, rng_stream  # noqa: F401
from .simulate import (  # noqa: F401
    EprSample,
    PathTrace,
    StepUnstableError,
    default_dt,
    em_ensemble,
    em_path_with_epr,
    exact_step,
    exact_transition_factors,
    sample_stationary,
    time_average_epr_integrand,
)
from .asymptotics import (  # noqa: F401
    EnsembleStats,
    MdpProfile,
    LilTrace,
    ExpIntegrability,
    exp_integrability_bound,
    exp_integrability_check,
    estimate_sigma2,
    ks_test_gaussian,
    lil_running_statistic,
    mdp_tail_profile,
    run_ensemble,
    semigroup_decay_check,
)
from .kernels import active_backend  # noqa: F401

"""Particle schemes for jump-type kinetic equations with Wasserstein diagnostics."""

__version__ = "0.1.0"

from .errors import (
    CapExceeded,
    ConfigError,
    DegenerateCutoff,
    DimensionMismatch,
    KineticFlowsError,
    MissingAux,
    NegativeDuration,
    QuadratureUnderResolved,
    SizeMismatch,
    ThresholdFailure,
    ZeroVector,
)
from .measures import EmpiricalMeasure, GaussianLaw, moment, sample_index, w1, w1_1d, w1_assignment
from .kernels import (
    AngularParams,
    LipschitzBudget,
    ModelSpec,
    collision_c,
    drift_b,
    frame,
    increment_bound,
    lipschitz_budget,
    mu_mass,
    rate_cap,
    rate_gamma,
    sample_angular,
    truncate,
)
from .euler import (
    EventStream,
    JumpEvent,
    ParticleSystemState,
    StepReport,
    Trajectory,
    apply_events,
    initial_state,
    one_step_theta,
    particle_step,
    simulate,
)
from .flow import (
    PartitionSchedule,
    RateReport,
    fit_rate,
    refinement_rate,
    stability_experiment,
    stationarity_check,
    time_lipschitz_check,
    translation_equivariance,
)
from .weakform import ResidualReport, TestFunction, lambda_bound, lambda_phi, residual_series, weak_residual
from .experiments import (
    ParticleRateSpec,
    conservation_check,
    rate_particles,
    residual_ladder,
    validate_kernels,
    variance_oracle_check,
)

__all__ = [
    "CapExceeded",
    "ConfigError",
    "DegenerateCutoff",
    "DimensionMismatch",
    "KineticFlowsError",
    "MissingAux",
    "NegativeDuration",
    "QuadratureUnderResolved",
    "SizeMismatch",
    "ThresholdFailure",
    "ZeroVector",
    "EmpiricalMeasure",
    "GaussianLaw",
    "moment",
    "sample_index",
    "w1",
    "w1_1d",
    "w1_assignment",
    "AngularParams",
    "LipschitzBudget",
    "ModelSpec",
    "collision_c",
    "drift_b",
    "frame",
    "increment_bound",
    "lipschitz_budget",
    "mu_mass",
    "rate_cap",
    "rate_gamma",
    "sample_angular",
    "truncate",
    "EventStream",
    "JumpEvent",
    "ParticleSystemState",
    "StepReport",
    "Trajectory",
    "apply_events",
    "initial_state",
    "one_step_theta",
    "particle_step",
    "simulate",
    "PartitionSchedule",
    "RateReport",
    "fit_rate",
    "refinement_rate",
    "stability_experiment",
    "stationarity_check",
    "time_lipschitz_check",
    "translation_equivariance",
    "ResidualReport",
    "TestFunction",
    "lambda_bound",
    "lambda_phi",
    "residual_series",
    "weak_residual",
    "ParticleRateSpec",
    "conservation_check",
    "rate_particles",
    "residual_ladder",
    "validate_kernels",
    "variance_oracle_check",
]

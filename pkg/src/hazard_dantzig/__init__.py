"""Dantzig selector for Cox's proportional hazards model at desk scale."""

__version__ = "0.1.0"

from .bounds import (
    BoundInputs,
    ExperimentConfig,
    ExperimentError,
    ExperimentReport,
    calibrate_k2,
    constants_from_truth,
    mc_score_tail,
    run_experiment,
    tail_bound,
    theorem44_bound,
    theorem45_bounds,
    union_tail_bound,
)
from .dantzig import (
    EstimateResult,
    InfeasibleGammaError,
    SolverConfig,
    gamma_grid_fit,
    gamma_schedule,
    l1_min_under_linf,
    solve_dsfph,
)
from .factors import (
    EnumerationBudgetError,
    FactorOptions,
    FactorReport,
    PopulationMatrix,
    SupportSet,
    compatibility_factor,
    compute_factor_report,
    phi_2s,
    population_matrix,
    restricted_eigenvalue,
    restricted_isometry,
    restricted_isometry_sampled,
    restricted_orthogonality,
    restricted_orthogonality_sampled,
    sup_norm_diff,
    uup_margin,
    weak_cone_invertibility_factor,
)
from .partial_likelihood import (
    EmptyRiskSetError,
    LikelihoodSnapshot,
    ScoreHessian,
    evaluate,
    log_likelihood,
    sandwich_check,
    score,
    snapshot,
)
from .survival_sim import (
    ClippedGaussianCovariates,
    ConfigError,
    ConstantBaseline,
    CsvParseError,
    DegenerateDatasetError,
    EventOrder,
    Observation,
    RademacherCovariates,
    SimConfig,
    SurvivalDataset,
    UniformCovariates,
    WeibullBaseline,
    event_order,
    load_csv,
    simulate_dataset,
    write_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]

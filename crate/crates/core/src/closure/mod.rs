//! Exact correction series and their data-driven approximations.

pub mod exact;
pub mod features;
pub mod fit;

pub use exact::{
    exact_pressure_corrections_sup, exact_ppe_corrections, exact_velocity_correction, CoefficientHistory, CorrectionTarget,
    ExactCorrectionSeries,
};
pub use features::{build_design_matrix, FeatureSpec, InputSpec};
pub use fit::{
    fit_constrained, fit_ppe, fit_pressure_sup, ppe_problem, fit_truncated_lsq, fit_velocity, project_constraints, rank_grid, select_optimal_rank,
    split_joint, CorrectionModel, FitProblem, PpeFitCase, PpeSeries, PressureFitMode, RankScore, TruncatedSvd,
};

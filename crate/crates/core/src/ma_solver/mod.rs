//! Radial Monge–Ampère equations, continuity paths and smoothing families.

mod continuation;
mod eigen;
mod newton;
mod weight;

pub use continuation::{
    continuity_path, football_error, ricci_lower_bound_margin, smoothing_family, two_sided_bound_check,
    ContinuationTrace, FamilyMember, MarginReport, Schedule, SmoothingFamily, TraceStep, TwoSidedBound,
    ON_PATH_TAU,
};
pub use eigen::{first_eigenvalue, EigenReport, DEFAULT_MODES};
pub use newton::{
    calabi_yau_newton, equation_residual, football_phi, relative_potential, solve_from_phi, solve_ma,
    MaSolution, NewtonOptions, SolverConfig,
};
pub use weight::{compute_a_beta, compute_c_delta, ReferenceWeight};

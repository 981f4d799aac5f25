//! Continuity path `tau: 0 -> mu` and the smoothing family `delta -> 0`.

use serde::{Deserialize, Serialize};

use super::eigen::{first_eigenvalue, DEFAULT_MODES};
use super::newton::{football_phi, solve_from_phi, solve_ma, MaSolution, NewtonOptions, SolverConfig};
use super::weight::ReferenceWeight;
use crate::error::{invalid, Error, Result};
use crate::functionals::{f_functional, j_functional, on_path_f};
use crate::geometry::{
    defining_section_norm, fubini_study_potential, ConeConfiguration, RadialKahlerPotential,
};
use crate::grid::{log_second_derivative, Grid};

/// Below this `tau` the functional `F` is taken from its on-path value.
pub const ON_PATH_TAU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Defaults to `mu / 20`.
    pub initial_step: Option<f64>,
    pub min_step: f64,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    /// A step is easy when Newton needs at most this many iterations.
    pub easy_iterations: usize,
    #[serde(default)]
    pub newton: NewtonOptions,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            initial_step: None,
            min_step: 1e-5,
            max_step: None,
            max_steps: 1000,
            easy_iterations: 4,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub tau: f64,
    pub solution: MaSolution,
    pub j: f64,
    pub f: f64,
    /// `(m, lambda_1(m))` per angular mode.
    pub eigenvalues: Vec<(u32, f64)>,
    pub lambda1: f64,
    pub newton_iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationTrace {
    pub beta: f64,
    pub delta: f64,
    pub mu: f64,
    pub steps: Vec<TraceStep>,
    pub rejected_steps: usize,
}

impl ContinuationTrace {
    pub fn reached_end(&self) -> bool {
        self.steps.last().is_some_and(|s| (s.tau - self.mu).abs() <= 1e-12 * self.mu.max(1.0))
    }

    pub fn sup_phi(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| s.solution.phi.iter().fold(0.0f64, |a, b| a.max(b.abs())))
            .collect()
    }
}

fn record(sol: MaSolution, grid: &Grid, weight: &ReferenceWeight) -> Result<TraceStep> {
    let j = j_functional(&sol.phi, grid);
    let f = if sol.tau < ON_PATH_TAU {
        on_path_f(&sol.phi, grid)
    } else {
        f_functional(&sol.phi, sol.tau, weight, grid)?.f
    };
    let eig = first_eigenvalue(&sol.potential, &DEFAULT_MODES)?;
    Ok(TraceStep {
        tau: sol.tau,
        j,
        f,
        eigenvalues: eig.per_mode,
        lambda1: eig.lambda1,
        newton_iterations: sol.iterations,
        residual: sol.residual,
        solution: sol,
    })
}

/// Predictor-corrector continuation from the quadrature solution at `tau = 0`
/// to `tau = mu`.
pub fn continuity_path(
    cone: &ConeConfiguration,
    delta: f64,
    schedule: &Schedule,
    grid: &Grid,
) -> Result<ContinuationTrace> {
    let mu = cone.mu();
    if delta == 0.0 && cone.beta() < 0.3 {
        return Err(invalid("conic paths need beta >= 0.3"));
    }
    let mut cfg = SolverConfig::new(cone.clone(), delta, 0.0)?;
    cfg.newton = schedule.newton;
    let weight = ReferenceWeight::new(cone.beta(), delta, grid)?;
    let start = solve_ma(&cfg, &fubini_study_potential(*grid))?;
    let mut steps = vec![record(start, grid, &weight)?];
    let max_step = schedule.max_step.unwrap_or(mu);
    let mut step = schedule.initial_step.unwrap_or(mu / 20.0).min(max_step);
    let mut easy = 0;
    let mut rejected = 0;
    while steps.last().map(|s| s.tau).unwrap_or(0.0) < mu {
        if steps.len() > schedule.max_steps {
            let last_tau = steps.last().map(|s| s.tau).unwrap_or(0.0);
            return Err(Error::PathStalled { last_tau, min_step: schedule.min_step });
        }
        let k = steps.len() - 1;
        let tau_k = steps[k].tau;
        let tau = if mu - tau_k <= step * (1.0 + 1e-9) { mu } else { tau_k + step };
        let guess: Vec<f64> = if k >= 1 {
            let (p0, p1) = (&steps[k - 1].solution.phi, &steps[k].solution.phi);
            let r = (tau - tau_k) / (tau_k - steps[k - 1].tau);
            p1.iter().zip(p0).map(|(a, b)| a + r * (a - b)).collect()
        } else {
            steps[k].solution.phi.clone()
        };
        cfg.tau = tau;
        match solve_from_phi(&cfg, grid, &weight, &guess) {
            Ok(sol) => {
                if sol.iterations <= schedule.easy_iterations {
                    easy += 1;
                } else {
                    easy = 0;
                }
                steps.push(record(sol, grid, &weight)?);
                if easy >= 3 {
                    step = (2.0 * step).min(max_step);
                    easy = 0;
                }
            }
            Err(Error::NewtonDiverged { .. }) | Err(Error::PositivityLost { .. }) => {
                rejected += 1;
                easy = 0;
                step *= 0.5;
                if step < schedule.min_step {
                    return Err(Error::PathStalled { last_tau: tau_k, min_step: schedule.min_step });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ContinuationTrace { beta: cone.beta(), delta, mu, steps, rejected_steps: rejected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub delta: f64,
    pub solution: MaSolution,
    /// `sup |phi_delta - phi_conic|` over the grid.
    pub distance: f64,
    /// The same over `|t| <= t_max / 2`.
    pub core_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingFamily {
    pub conic: MaSolution,
    pub members: Vec<FamilyMember>,
    pub monotone: bool,
}

/// Solves the smoothed equations at `tau = mu` for decreasing `delta` and
/// measures the distance to the conic solution.
pub fn smoothing_family(cone: &ConeConfiguration, deltas: &[f64], grid: &Grid) -> Result<SmoothingFamily> {
    if deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("smoothing parameters must be positive and strictly decreasing"));
    }
    let mu = cone.mu();
    let fs = fubini_study_potential(*grid);
    let conic = solve_ma(&SolverConfig::new(cone.clone(), 0.0, mu)?, &fs)?;
    let mut members: Vec<FamilyMember> = Vec::with_capacity(deltas.len());
    let mut guess = fs.clone();
    for &delta in deltas {
        let cfg = SolverConfig::new(cone.clone(), delta, mu)?;
        let sol = solve_ma(&cfg, &guess)?;
        let mut distance = 0.0f64;
        let mut core = 0.0f64;
        for i in 0..grid.len() {
            let d = (sol.phi[i] - conic.phi[i]).abs();
            distance = distance.max(d);
            if grid.t(i).abs() <= 0.5 * grid.t_max() {
                core = core.max(d);
            }
        }
        guess = sol.potential.clone();
        members.push(FamilyMember { delta, solution: sol, distance, core_distance: core });
    }
    let monotone = members.windows(2).all(|w| w[1].distance <= w[0].distance);
    Ok(SmoothingFamily { conic, members, monotone })
}

/// Pointwise Ricci margin `(K - mu) Phi''` of a smoothed solution at `tau = mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// From the curvature of the solution; NaN at the two outermost nodes per side.
    pub direct: Vec<f64>,
    /// From the closed form in terms of the reference metric.
    pub formula: Vec<f64>,
    pub min_margin: f64,
    pub discrepancy: f64,
}

pub fn ricci_lower_bound_margin(
    solution: &RadialKahlerPotential,
    cone: &ConeConfiguration,
    delta: f64,
) -> MarginReport {
    let grid = solution.grid;
    let n = grid.len();
    let mu = cone.mu();
    let beta = cone.beta();
    let lam = cone.lambda() as f64;
    let g2 = log_second_derivative(&solution.phi_doubleprime, grid.spacing());
    let direct: Vec<f64> = (0..n).map(|i| -g2[i] - mu * solution.phi_doubleprime[i]).collect();
    let fs = fubini_study_potential(grid);
    let norm = defining_section_norm(&grid);
    let formula: Vec<f64> = (0..n)
        .map(|i| {
            let s = norm[i];
            let l = -(0.5 * grid.t(i)).tanh();
            let d = delta + s;
            (1.0 - beta) * (lam * delta * fs.phi_doubleprime[i] / d + delta * s * l * l / (d * d))
        })
        .collect();
    let mut min_margin = f64::INFINITY;
    let mut discrepancy = 0.0f64;
    for i in 2..n - 2 {
        min_margin = min_margin.min(direct[i]);
        discrepancy = discrepancy.max((direct[i] - formula[i]).abs());
    }
    MarginReport { direct, formula, min_margin, discrepancy }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedBound {
    /// Smallest `C` with `omega_FS / C <= omega_delta`.
    pub lower: f64,
    /// Smallest `C'` with `omega_delta <= C' (delta + ||S||^2)^{-(1-beta)} omega_FS`.
    pub upper: f64,
    /// Location of the minimum of `omega_delta / omega_FS` over the family.
    pub argmin_t: f64,
}

pub fn two_sided_bound_check(family: &SmoothingFamily, cone: &ConeConfiguration) -> TwoSidedBound {
    let beta = cone.beta();
    let mut lower = 0.0f64;
    let mut upper = 0.0f64;
    let mut argmin_t = 0.0;
    for m in &family.members {
        let pot = &m.solution.potential;
        let grid = pot.grid;
        let fs = fubini_study_potential(grid);
        let norm = defining_section_norm(&grid);
        for i in 0..grid.len() {
            let ratio = pot.phi_doubleprime[i] / fs.phi_doubleprime[i];
            if 1.0 / ratio > lower {
                lower = 1.0 / ratio;
                argmin_t = grid.t(i);
            }
            upper = upper.max(ratio * (m.delta + norm[i]).powf(1.0 - beta));
        }
    }
    TwoSidedBound { lower, upper, argmin_t }
}

/// Sup distance on `|t| <= t_cut` between a conic solution at `tau = beta`
/// and the closed-form football.
pub fn football_error(sol: &MaSolution, t_cut: f64) -> f64 {
    let grid = sol.potential.grid;
    let beta = sol.weight.beta;
    let a = sol.weight.constant;
    (0..grid.len())
        .filter(|&i| grid.t(i).abs() <= t_cut)
        .map(|i| (sol.phi[i] - football_phi(beta, a, grid.t(i))).abs())
        .fold(0.0, f64::max)
}

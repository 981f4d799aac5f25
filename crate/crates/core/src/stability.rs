//! Futaki and log-Futaki invariants of the rotation field `X = z d/dz`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{
    fubini_study_potential, ricci_potential_h0, ConeConfiguration, ConePoint, PointLocation, RadialKahlerPotential,
};
use crate::grid::{derivative, exponential_tail, log_second_derivative, Grid};
use crate::ma_solver::{solve_ma, SolverConfig};

/// Hamiltonian `theta_X` of the rotation field, mean zero against `omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianPotential {
    pub theta: Vec<f64>,
    /// The mean that was subtracted.
    pub mean: f64,
    /// `theta` at `z = 0` and `z = inf`, from the limits of the moment map.
    pub at_zero: f64,
    pub at_infinity: f64,
}

impl HamiltonianPotential {
    /// Value at a point of the sphere.
    pub fn at(&self, grid: &Grid, location: PointLocation) -> f64 {
        match location {
            PointLocation::Zero => self.at_zero,
            PointLocation::Infinity => self.at_infinity,
            PointLocation::At(t) => grid.interpolate(&self.theta, t),
        }
    }
}

/// Mean-normalizes a raw Hamiltonian with the given end limits.
pub fn normalize_theta(pot: &RadialKahlerPotential, raw: &[f64], limits: (f64, f64)) -> HamiltonianPotential {
    let vol = pot.integrate_against_omega(&vec![1.0; raw.len()]);
    let mean = pot.integrate_against_omega(raw) / vol;
    HamiltonianPotential {
        theta: raw.iter().map(|v| v - mean).collect(),
        mean,
        at_zero: limits.0 - mean,
        at_infinity: limits.1 - mean,
    }
}

/// `theta_X = Phi' - (1/V) int Phi' omega`.
pub fn hamiltonian_theta(pot: &RadialKahlerPotential) -> HamiltonianPotential {
    normalize_theta(pot, &pot.phi_prime, pot.moment_limits())
}

/// `sup |theta' - Phi''|` away from the two outermost nodes per side.
pub fn hamiltonian_residual(pot: &RadialKahlerPotential, theta: &HamiltonianPotential) -> f64 {
    let d = derivative(&theta.theta, pot.grid.spacing());
    (2..d.len() - 2).map(|i| (d[i] - pot.phi_doubleprime[i]).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutakiReport {
    /// `int X(h) omega`; `None` for conic input.
    pub from_ricci_potential: Option<f64>,
    /// `-int theta_X (Ric - omega)` with the absolutely continuous part of `Ric`.
    pub from_hamiltonian: f64,
    pub discrepancy: Option<f64>,
}

/// `-2 pi int theta (-(log Phi'')'' - Phi'') dt`.
fn futaki_from_hamiltonian(pot: &RadialKahlerPotential) -> f64 {
    let g = pot.grid;
    let n = g.len();
    let theta = hamiltonian_theta(pot);
    let k = log_second_derivative(&pot.phi_doubleprime, g.spacing());
    let mut f: Vec<f64> = (0..n).map(|i| theta.theta[i] * (-k[i] - pot.phi_doubleprime[i])).collect();
    // The stencil leaves the two outermost nodes undefined; continue the
    // integrand geometrically from the next two, then past the grid.
    for (a, b, c, d) in [(2, 3, 1, 0), (n - 3, n - 4, n - 2, n - 1)] {
        let r = if f[a] * f[b] > 0.0 { f[a] / f[b] } else { 0.0 };
        f[c] = f[a] * r;
        f[d] = f[c] * r;
    }
    let h = g.spacing();
    let tail = |end: f64, inner: f64| end.signum() * exponential_tail(end.abs(), inner.abs(), h);
    -2.0 * PI * (g.integrate(&f) + tail(f[0], f[1]) + tail(f[n - 1], f[n - 2]))
}

pub fn futaki(pot: &RadialKahlerPotential) -> Result<FutakiReport> {
    pot.check_positive()?;
    let from_hamiltonian = futaki_from_hamiltonian(pot);
    let from_ricci_potential = match ricci_potential_h0(pot) {
        Ok(h) => {
            // X(h) = h'(t) for radial h
            let dh = derivative(&h.values, pot.grid.spacing());
            Some(pot.integrate_against_omega(&dh))
        }
        Err(_) => None,
    };
    Ok(FutakiReport {
        from_ricci_potential,
        from_hamiltonian,
        discrepancy: from_ricci_potential.map(|v| (v - from_hamiltonian).abs()),
    })
}

/// `f(X) + (1 - beta) sum_p w_p theta_X(p)`.
pub fn log_futaki(pot: &RadialKahlerPotential, beta: f64, points: &[ConePoint]) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!("cone fraction must lie in (0, 1], got {beta}")));
    }
    if points.iter().any(|p| !(p.weight > 0.0)) {
        return Err(invalid("point weights must be positive"));
    }
    let f = futaki_from_hamiltonian(pot);
    Ok(f + (1.0 - beta) * point_sum(pot, points))
}

fn point_sum(pot: &RadialKahlerPotential, points: &[ConePoint]) -> f64 {
    let theta = hamiltonian_theta(pot);
    points.iter().map(|p| p.weight * theta.at(&pot.grid, p.location)).sum()
}

/// `|(beta - beta1) f - ((1 - beta1) L(beta) - (1 - beta) L(beta1))|`.
pub fn linearity_check(pot: &RadialKahlerPotential, beta: f64, beta1: f64, points: &[ConePoint]) -> Result<f64> {
    if beta == beta1 {
        return Err(invalid("the two cone fractions must differ"));
    }
    let f = futaki_from_hamiltonian(pot);
    let lhs = (beta - beta1) * f;
    let rhs = (1.0 - beta1) * log_futaki(pot, beta, points)? - (1.0 - beta) * log_futaki(pot, beta1, points)?;
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObstructionFlag {
    Unobstructed,
    Obstructed,
}

/// Values above this are treated as a nonvanishing invariant.
pub const OBSTRUCTION_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub id: String,
    pub points: Vec<ConePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionRow {
    pub config_id: String,
    pub beta: f64,
    pub log_futaki: f64,
    pub flag: ObstructionFlag,
    /// For unobstructed footballs, whether the conic solver converged.
    pub solver_converged: Option<bool>,
}

/// Log-Futaki table over configurations and cone fractions, evaluated on the
/// round metric of `grid`.
pub fn obstruction_scan(configs: &[PointConfiguration], betas: &[f64], grid: Grid) -> Result<Vec<ObstructionRow>> {
    let pot = fubini_study_potential(grid);
    let jobs: Vec<(usize, f64)> = (0..configs.len()).flat_map(|c| betas.iter().map(move |&b| (c, b))).collect();
    jobs.par_iter()
        .map(|&(c, beta)| {
            let cfg = &configs[c];
            let value = log_futaki(&pot, beta, &cfg.points)?;
            let flag = if value.abs() > OBSTRUCTION_THRESHOLD {
                ObstructionFlag::Obstructed
            } else {
                ObstructionFlag::Unobstructed
            };
            let football = ConeConfiguration::new(1, beta, cfg.points.clone())
                .map(|c| c.is_solver_compatible())
                .unwrap_or(false);
            let solver_converged = (flag == ObstructionFlag::Unobstructed && football && beta >= 0.3).then(|| {
                ConeConfiguration::football(beta)
                    .and_then(|cone| SolverConfig::new(cone, 0.0, beta))
                    .and_then(|cfg| solve_ma(&cfg, &pot))
                    .is_ok()
            });
            Ok(ObstructionRow { config_id: cfg.id.clone(), beta, log_futaki: value, flag, solver_converged })
        })
        .collect()
}

//! Damped Newton solver for the radial equation
//! `Phi'' = e^{h - tau phi} Phi_FS''`, `Phi = Phi_FS + phi`.
//!
//! Solutions are even in `t`, so the unknowns live on the half grid
//! `t >= 0`. The interior rows use the fourth-order Numerov stencil; the
//! outer row closes the moment coordinate with the exact tail mass.

use serde::{Deserialize, Serialize};

use super::weight::ReferenceWeight;
use crate::error::{invalid, Error, Result};
use crate::geometry::{fubini_study_potential, ConeConfiguration, RadialKahlerPotential};
use crate::grid::{cumulative_integral, Grid};
use crate::linalg::solve_tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub damping: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iterations: 50, tolerance: 1e-11, damping: 0.5, max_halvings: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub cone: ConeConfiguration,
    pub delta: f64,
    pub tau: f64,
    #[serde(default)]
    pub newton: NewtonOptions,
}

impl SolverConfig {
    pub fn new(cone: ConeConfiguration, delta: f64, tau: f64) -> Result<Self> {
        let cfg = SolverConfig { cone, delta, tau, newton: NewtonOptions::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cone.is_solver_compatible() {
            return Err(invalid("the radial solver needs lambda = 1 and cone points {0, inf}"));
        }
        let mu = self.cone.mu();
        if !(self.tau >= 0.0 && self.tau <= mu * (1.0 + 1e-12)) {
            return Err(invalid(format!("tau = {} must lie in [0, mu = {mu}]", self.tau)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!("delta = {} must be nonnegative", self.delta)));
        }
        let o = &self.newton;
        if o.max_iterations == 0 || !(o.tolerance > 0.0) || !(o.damping > 0.0 && o.damping < 1.0) {
            return Err(invalid("invalid Newton options"));
        }
        Ok(())
    }
}

/// A solution of the radial equation with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaSolution {
    pub potential: RadialKahlerPotential,
    /// `phi = Phi - Phi_FS` at the nodes.
    pub phi: Vec<f64>,
    pub tau: f64,
    pub weight: ReferenceWeight,
    pub iterations: usize,
    pub residual: f64,
}

/// Discrete problem on the half grid.
struct HalfProblem {
    h: f64,
    tau: f64,
    /// `log(e^h Phi_FS'')` at half-grid nodes.
    log_density: Vec<f64>,
    /// `Phi_FS''` at half-grid nodes.
    reference: Vec<f64>,
    /// `Phi_FS'(t_max)`.
    reference_slope_end: f64,
    tail: f64,
    tail_moment: f64,
}

impl HalfProblem {
    fn new(grid: &Grid, weight: &ReferenceWeight, tau: f64) -> Self {
        let fs = fubini_study_potential(*grid);
        let c = grid.center();
        let n = grid.len();
        HalfProblem {
            h: grid.spacing(),
            tau,
            log_density: (c..n).map(|i| weight.log_density(grid.t(i))).collect(),
            reference: fs.phi_doubleprime[c..].to_vec(),
            reference_slope_end: fs.phi_prime[n - 1],
            tail: weight.tail,
            tail_moment: weight.tail_moment,
        }
    }

    /// `phi'(t_max)` implied by the tail mass, and its derivative in `u_end`.
    ///
    /// Beyond the grid `phi ~ u_end + p (1 - e^{-k s}) / k`, so the mass is
    /// `e^{-tau u_end} (W0 - tau p W1)` and `p = 2 - Phi_FS'(t_max) - mass`.
    fn end_slope(&self, u_end: f64) -> (f64, f64) {
        end_slope(self.tau, u_end, self.tail, self.tail_moment, self.reference_slope_end)
    }

    fn len(&self) -> usize {
        self.reference.len()
    }

    fn rhs(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.log_density).map(|(u, l)| (l - self.tau * u).exp()).collect()
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let m = self.len();
        let h2 = self.h * self.h;
        let big_f = self.rhs(u);
        let f: Vec<f64> = big_f.iter().zip(&self.reference).map(|(a, b)| a - b).collect();
        let mut r = vec![0.0; m];
        r[0] = 2.0 * (u[1] - u[0]) / h2 - (2.0 * f[1] + 10.0 * f[0]) / 12.0;
        for j in 1..m - 1 {
            r[j] = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / h2 - (f[j + 1] + 10.0 * f[j] + f[j - 1]) / 12.0;
        }
        let (slope, _) = self.end_slope(u[m - 1]);
        r[m - 1] = 2.0 * (u[m - 2] - u[m - 1] + self.h * slope) / h2 - f[m - 1];
        r
    }

    /// Tridiagonal Jacobian as (sub, diag, sup).
    fn jacobian(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = self.len();
        let h2 = self.h * self.h;
        let df: Vec<f64> = self.rhs(u).iter().map(|v| -self.tau * v).collect();
        let mut sub = vec![0.0; m - 1];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m - 1];
        diag[0] = -2.0 / h2 - 10.0 * df[0] / 12.0;
        sup[0] = 2.0 / h2 - 2.0 * df[1] / 12.0;
        for j in 1..m - 1 {
            sub[j - 1] = 1.0 / h2 - df[j - 1] / 12.0;
            diag[j] = -2.0 / h2 - 10.0 * df[j] / 12.0;
            sup[j] = 1.0 / h2 - df[j + 1] / 12.0;
        }
        sub[m - 2] = 2.0 / h2;
        let (_, dslope) = self.end_slope(u[m - 1]);
        diag[m - 1] = -2.0 / h2 + 2.0 * dslope / self.h - df[m - 1];
        (sub, diag, sup)
    }

    /// Discrete `Phi''` from the second difference of the iterate; used to
    /// reject iterates that leave the positive cone.
    fn positive(&self, u: &[f64]) -> bool {
        let m = self.len();
        let h2 = self.h * self.h;
        if u.iter().any(|v| !v.is_finite()) {
            return false;
        }
        (1..m - 1).all(|j| (u[j + 1] - 2.0 * u[j] + u[j - 1]) / h2 + self.reference[j] > 0.0)
    }
}

fn end_slope(tau: f64, u_end: f64, w0: f64, w1: f64, reference_slope: f64) -> (f64, f64) {
    let e = (-tau * u_end).exp();
    let num = 2.0 - reference_slope - e * w0;
    let den = 1.0 - tau * e * w1;
    let p = num / den;
    // d/du of num/den with de/du = -tau e
    let dnum = tau * e * w0;
    let dden = tau * tau * e * w1;
    (p, (dnum * den - num * dden) / (den * den))
}

/// Mass of `omega` beyond `t_max` for a solution with end value `u_end`.
fn tail_mass(tau: f64, u_end: f64, weight: &ReferenceWeight, reference_slope: f64) -> f64 {
    let (p, _) = end_slope(tau, u_end, weight.tail, weight.tail_moment, reference_slope);
    (-tau * u_end).exp() * (weight.tail - tau * p * weight.tail_moment)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

struct NewtonOutcome {
    u: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn newton(problem: &HalfProblem, mut u: Vec<f64>, opts: &NewtonOptions) -> Result<NewtonOutcome> {
    let floor = |u: &[f64]| 16.0 * f64::EPSILON * sup_norm(u).max(1.0) / (problem.h * problem.h);
    let mut r = problem.residual(&u);
    let mut rn = sup_norm(&r);
    for iter in 0..opts.max_iterations {
        if rn <= opts.tolerance.max(floor(&u)) {
            return Ok(NewtonOutcome { u, iterations: iter, residual: rn });
        }
        let (sub, diag, sup) = problem.jacobian(&u);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let du = solve_tridiagonal(&sub, &diag, &sup, &neg)
            .map_err(|_| Error::NewtonDiverged { iterations: iter, residual: rn })?;
        let mut step = 1.0;
        let mut accepted = false;
        let mut lost_positivity = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + step * b).collect();
            if !problem.positive(&trial) {
                lost_positivity = true;
            } else {
                let rt = problem.residual(&trial);
                let rtn = sup_norm(&rt);
                if rtn.is_finite() && (rtn < rn || rtn <= opts.tolerance.max(floor(&trial))) {
                    u = trial;
                    r = rt;
                    rn = rtn;
                    accepted = true;
                    break;
                }
            }
            step *= opts.damping;
        }
        if !accepted {
            if lost_positivity {
                return Err(Error::PositivityLost { iteration: iter });
            }
            return Err(Error::NewtonDiverged { iterations: iter, residual: rn });
        }
    }
    if rn <= opts.tolerance.max(floor(&u)) {
        return Ok(NewtonOutcome { u, iterations: opts.max_iterations, residual: rn });
    }
    Err(Error::NewtonDiverged { iterations: opts.max_iterations, residual: rn })
}

/// `phi = Phi - Phi_FS` for an arbitrary potential on the same grid.
pub fn relative_potential(pot: &RadialKahlerPotential) -> Vec<f64> {
    let fs = fubini_study_potential(pot.grid);
    let a = pot.potential_values();
    let b = fs.potential_values();
    a.iter().zip(&b).map(|(x, y)| x - y).collect()
}

/// Even part of a nodal profile, restricted to `t >= 0`.
fn even_half(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let c = grid.center();
    let n = grid.len();
    (c..n).map(|i| 0.5 * (v[i] + v[n - 1 - i])).collect()
}

fn mirror(grid: &Grid, half: &[f64]) -> Vec<f64> {
    let c = grid.center();
    let n = grid.len();
    (0..n).map(|i| if i >= c { half[i - c] } else { half[n - 1 - i - c] }).collect()
}

/// Assembles the potential from `phi` at the nodes: `Phi'' = e^{h - tau phi} Phi_FS''`
/// exactly, and `Phi'` by integrating from the lower tail.
fn assemble(grid: &Grid, weight: &ReferenceWeight, tau: f64, phi: &[f64]) -> Result<RadialKahlerPotential> {
    let n = grid.len();
    let t = grid.nodes();
    let pdd: Vec<f64> = (0..n).map(|i| (weight.log_density(t[i]) - tau * phi[i]).exp()).collect();
    let fs = fubini_study_potential(*grid);
    let lower = tail_mass(tau, phi[0], weight, fs.phi_prime[n - 1]);
    let upper = tail_mass(tau, phi[n - 1], weight, fs.phi_prime[n - 1]);
    let cum = cumulative_integral(&pdd, grid.spacing());
    let pp: Vec<f64> = cum.iter().map(|c| lower + c).collect();
    let pot = RadialKahlerPotential {
        grid: *grid,
        phi_prime: pp,
        phi_doubleprime: pdd,
        base_offset: fs.base_offset + phi[grid.center()],
        angle_at_zero: weight.beta,
        angle_at_infinity: weight.beta,
        tail_mass: [lower, upper],
    };
    pot.check_positive()?;
    Ok(pot)
}

/// Solves the radial Monge–Ampère equation at `cfg.tau`.
///
/// For `tau = 0` the solution is obtained by quadrature with the constant
/// fixed by `int phi omega_FS = 0`.
pub fn solve_ma(cfg: &SolverConfig, guess: &RadialKahlerPotential) -> Result<MaSolution> {
    cfg.validate()?;
    guess.check_positive()?;
    let grid = guess.grid;
    let weight = ReferenceWeight::new(cfg.cone.beta(), cfg.delta, &grid)?;
    if cfg.tau == 0.0 {
        return calabi_yau_quadrature(&grid, &weight);
    }
    let phi0 = relative_potential(guess);
    solve_from_phi(cfg, &grid, &weight, &phi0)
}

/// Newton solve from a nodal initial guess for `phi`.
pub fn solve_from_phi(
    cfg: &SolverConfig,
    grid: &Grid,
    weight: &ReferenceWeight,
    phi_guess: &[f64],
) -> Result<MaSolution> {
    let problem = HalfProblem::new(grid, weight, cfg.tau);
    let u0 = even_half(grid, phi_guess);
    let out = newton(&problem, u0, &cfg.newton)?;
    let phi = mirror(grid, &out.u);
    let potential = assemble(grid, weight, cfg.tau, &phi)?;
    Ok(MaSolution { potential, phi, tau: cfg.tau, weight: *weight, iterations: out.iterations, residual: out.residual })
}

fn calabi_yau_quadrature(grid: &Grid, weight: &ReferenceWeight) -> Result<MaSolution> {
    let n = grid.len();
    let h = grid.spacing();
    let fs = fubini_study_potential(*grid);
    let t = grid.nodes();
    let pdd: Vec<f64> = t.iter().map(|&t| weight.log_density(t).exp()).collect();
    let cum = cumulative_integral(&pdd, h);
    let dphi: Vec<f64> = (0..n).map(|i| weight.tail + cum[i] - fs.phi_prime[i]).collect();
    let mut phi = cumulative_integral(&dphi, h);
    // Anchor at the centre to keep the profile exactly even, then remove the mean.
    let c0 = phi[grid.center()];
    for v in &mut phi {
        *v -= c0;
    }
    let half = even_half(grid, &phi);
    let mut phi = mirror(grid, &half);
    let mean = fs.integrate_against_omega(&phi) / crate::geometry::VOLUME;
    for v in &mut phi {
        *v -= mean;
    }
    let potential = assemble(grid, weight, 0.0, &phi)?;
    Ok(MaSolution { potential, phi, tau: 0.0, weight: *weight, iterations: 0, residual: 0.0 })
}

/// Newton iteration for the `tau = 0` equation, with the additive constant
/// pinned at the centre node and removed afterwards. Used to cross-check the
/// quadrature path.
pub fn calabi_yau_newton(cfg: &SolverConfig, guess: &RadialKahlerPotential) -> Result<MaSolution> {
    let grid = guess.grid;
    let weight = ReferenceWeight::new(cfg.cone.beta(), cfg.delta, &grid)?;
    let problem = HalfProblem::new(&grid, &weight, 0.0);
    let mut u = even_half(&grid, &relative_potential(guess));
    let m = problem.len();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for iter in 0..cfg.newton.max_iterations {
        let r = problem.residual(&u);
        residual = sup_norm(&r[1..]);
        iterations = iter;
        if residual <= cfg.newton.tolerance.max(16.0 * f64::EPSILON / (problem.h * problem.h)) {
            break;
        }
        let (mut sub, mut diag, mut sup) = problem.jacobian(&u);
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        diag[0] = 1.0;
        sup[0] = 0.0;
        rhs[0] = 0.0;
        let _ = &mut sub;
        let du = solve_tridiagonal(&sub, &diag, &sup, &rhs)?;
        for j in 0..m {
            u[j] += du[j];
        }
    }
    let mut phi = mirror(&grid, &u);
    let fs = fubini_study_potential(grid);
    let mean = fs.integrate_against_omega(&phi) / crate::geometry::VOLUME;
    for v in &mut phi {
        *v -= mean;
    }
    let potential = assemble(&grid, &weight, 0.0, &phi)?;
    Ok(MaSolution { potential, phi, tau: 0.0, weight, iterations, residual })
}

/// Closed-form `phi` for the conic problem at `tau = mu = beta`:
/// `(2/beta) log(1 + e^{beta t}) - 2 log(1 + e^t) + c`.
pub fn football_phi(beta: f64, a_beta: f64, t: f64) -> f64 {
    let c = (a_beta - beta.ln() + (beta - 1.0) * 4f64.ln()) / beta;
    crate::geometry::football_potential_value(beta, t) - crate::geometry::football_potential_value(1.0, t) + c
}

/// Sup norm of the discrete equation residual of a solution, recomputed
/// from its stored `phi`.
pub fn equation_residual(sol: &MaSolution) -> f64 {
    let grid = sol.potential.grid;
    let problem = HalfProblem::new(&grid, &sol.weight, sol.tau);
    let u = even_half(&grid, &sol.phi);
    sup_norm(&problem.residual(&u))
}

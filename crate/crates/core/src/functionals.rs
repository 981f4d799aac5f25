//! Energy functionals `J` and `F` of the Monge–Ampère family.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{fubini_study_potential, RadialKahlerPotential, VOLUME};
use crate::grid::{derivative, derivative_8, Grid};
use crate::ma_solver::{ContinuationTrace, ReferenceWeight};

/// `J(phi) = (pi / V) int phi'(t)^2 dt`.
pub fn j_functional(phi: &[f64], grid: &Grid) -> f64 {
    let d = derivative_8(phi, grid.spacing());
    let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
    PI / VOLUME * grid.integrate(&sq)
}

/// `(1/V) int phi omega_FS`.
pub fn linear_term(phi: &[f64], grid: &Grid) -> f64 {
    fubini_study_potential(*grid).integrate_against_omega(phi) / VOLUME
}

/// `log((1/V) int e^{h - tau phi} omega_FS)`, with the tails beyond the grid
/// extrapolated from the end values and slopes of `phi`.
pub fn log_term(phi: &[f64], tau: f64, weight: &ReferenceWeight, grid: &Grid) -> f64 {
    let n = grid.len();
    let t = grid.nodes();
    let d = derivative(phi, grid.spacing());
    let vals: Vec<f64> = (0..n).map(|i| weight.log_density(t[i]) - tau * phi[i]).collect();
    // Shift before exponentiating so large tau * phi cannot overflow.
    let shift = vals.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let e: Vec<f64> = vals.iter().map(|v| (v - shift).exp()).collect();
    let tail = |end: usize, slope: f64| {
        (-tau * phi[end] - shift).exp() * (weight.tail - tau * slope * weight.tail_moment)
    };
    let inner = grid.integrate(&e) + tail(0, -d[0]) + tail(n - 1, d[n - 1]);
    (2.0 * PI * inner / VOLUME).ln() + shift
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub j: f64,
    pub f: f64,
    pub linear: f64,
    pub log_term: f64,
    pub tau: f64,
    pub beta: f64,
    pub delta: f64,
}

/// `F(phi) = J - (1/V) int phi omega_FS - (1/tau) log((1/V) int e^{h - tau phi} omega_FS)`.
pub fn f_functional(phi: &[f64], tau: f64, weight: &ReferenceWeight, grid: &Grid) -> Result<FunctionalReport> {
    if !(tau > 0.0) {
        return Err(invalid("F is only defined for tau > 0"));
    }
    if phi.len() != grid.len() {
        return Err(invalid("profile length does not match the grid"));
    }
    let j = j_functional(phi, grid);
    let linear = linear_term(phi, grid);
    let log_term = log_term(phi, tau, weight, grid);
    Ok(FunctionalReport {
        j,
        f: j - linear - log_term / tau,
        linear,
        log_term,
        tau,
        beta: weight.beta,
        delta: weight.delta,
    })
}

/// On-path value `J - (1/V) int phi omega_FS`, used where `1/tau` would
/// amplify quadrature noise.
pub fn on_path_f(phi: &[f64], grid: &Grid) -> f64 {
    j_functional(phi, grid) - linear_term(phi, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDerivativeReport {
    /// `|F - (J - linear)|` at every step where `F` is assembled in full.
    pub on_path: Vec<(f64, f64)>,
    /// Relative mismatch between finite-difference `dF/dtau` and
    /// `(1/(tau V)) int phi omega_phi` at interior steps.
    pub derivative: Vec<(f64, f64)>,
    /// `(1/V) int (phi + tau dphi/dtau) omega_phi` with a forward difference.
    pub orthogonality: Vec<(f64, f64)>,
}

/// Checks the on-path reduction of `F`, its derivative along the path, and
/// the differentiated equation.
pub fn path_derivative_residual(trace: &ContinuationTrace) -> Result<PathDerivativeReport> {
    let steps = &trace.steps;
    if steps.len() < 5 {
        return Err(Error::TraceTooShort { len: steps.len(), required: 5 });
    }
    let grid = steps[0].solution.potential.grid;
    let weight = steps[0].solution.weight;
    let mut on_path = Vec::new();
    for s in steps.iter().filter(|s| s.tau > 0.0) {
        let full = f_functional(&s.solution.phi, s.tau, &weight, &grid)?;
        on_path.push((s.tau, (full.f - (full.j - full.linear)).abs()));
    }
    let formula = |k: usize| -> f64 {
        let s = &steps[k];
        s.solution.potential.integrate_against_omega(&s.solution.phi) / (s.tau * VOLUME)
    };
    let mut deriv = Vec::new();
    for k in 1..steps.len() - 1 {
        if steps[k - 1].tau <= 0.0 {
            continue;
        }
        let (t0, t1, t2) = (steps[k - 1].tau, steps[k].tau, steps[k + 1].tau);
        let (f0, f1, f2) = (steps[k - 1].f, steps[k].f, steps[k + 1].f);
        let (a, b) = (t1 - t0, t2 - t1);
        // Second-order derivative on a nonuniform stencil.
        let fd = -b / (a * (a + b)) * f0 + (b - a) / (a * b) * f1 + a / (b * (a + b)) * f2;
        let exact = formula(k);
        let scale = exact.abs().max(1e-12);
        deriv.push((t1, (fd - exact).abs() / scale));
    }
    let mut orth = Vec::new();
    for k in 0..steps.len() - 1 {
        let (s0, s1) = (&steps[k], &steps[k + 1]);
        // At tau = 0 the normalization is the reference mean, not the path limit.
        if s0.tau <= 0.0 {
            continue;
        }
        let dt = s1.tau - s0.tau;
        let g: Vec<f64> = s0
            .solution
            .phi
            .iter()
            .zip(&s1.solution.phi)
            .map(|(p0, p1)| p0 + s0.tau * (p1 - p0) / dt)
            .collect();
        orth.push((s0.tau, s0.solution.potential.integrate_against_omega(&g) / VOLUME));
    }
    Ok(PathDerivativeReport { on_path, derivative: deriv, orthogonality: orth })
}

/// Result of fitting `F >= eps J - C_eps` over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProperFit {
    pub epsilon: f64,
    pub c_epsilon: f64,
    /// True when no positive `epsilon` was admissible.
    pub flagged: bool,
}

/// `C_eps = max (eps J - F)` over the sample.
pub fn properness_constant(samples: &[(f64, f64)], eps: f64) -> f64 {
    samples.iter().map(|(j, f)| eps * j - f).fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `eps` on the grid `0.01, 0.02, ..., 1` for which the sample
/// supports `F >= eps J - C_eps` with `C_eps` determined by the low-energy
/// half of the sample: the maximum of `eps J - F` over all samples must be
/// attained there. Samples are `(J, F)` pairs.
pub fn properness_fit(samples: &[(f64, f64)]) -> ProperFit {
    if samples.is_empty() {
        return ProperFit { epsilon: 0.0, c_epsilon: 0.0, flagged: true };
    }
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let low = &sorted[..sorted.len().div_ceil(2)];
    let mut best = None;
    for k in 1..=100 {
        let eps = k as f64 / 100.0;
        let all = properness_constant(&sorted, eps);
        let bottom = properness_constant(low, eps);
        if all <= bottom + 1e-12 * all.abs().max(1.0) {
            best = Some((eps, all));
        }
    }
    match best {
        Some((epsilon, c_epsilon)) => ProperFit { epsilon, c_epsilon, flagged: false },
        None => ProperFit { epsilon: 0.0, c_epsilon: properness_constant(samples, 0.0), flagged: true },
    }
}

/// `phi` perturbed by `a sech(t - b)`; `None` if the result leaves the
/// positive cone.
pub fn perturb(base: &RadialKahlerPotential, phi: &[f64], a: f64, b: f64) -> Option<Vec<f64>> {
    let grid = base.grid;
    let t = grid.nodes();
    let out: Vec<f64> = phi.iter().zip(&t).map(|(p, t)| p + a / (t - b).cosh()).collect();
    // second derivative of a sech(t - b) is a sech (1 - 2 sech^2)
    let ok = t.iter().zip(&base.phi_doubleprime).all(|(t, pdd)| {
        let s = 1.0 / (t - b).cosh();
        pdd + a * s * (1.0 - 2.0 * s * s) > 0.0
    });
    ok.then_some(out)
}

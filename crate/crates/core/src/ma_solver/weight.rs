//! Right-hand-side weights `e^{h}` of the reference Monge–Ampère equations.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{log_defining_section_norm, VOLUME};
use crate::grid::{simpson, Grid};

/// Ricci-potential weight `h = -(1-beta) log(delta + ||S||^2) + c`, with
/// `delta = 0` giving the conic weight. The constant `c` enforces
/// `int (e^h - 1) omega_FS = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceWeight {
    pub beta: f64,
    pub delta: f64,
    pub constant: f64,
    /// `int e^h Phi_FS'' dt` beyond `t_max` (equal to the mass below `t_min`).
    pub tail: f64,
    /// `int e^h Phi_FS'' (1 - e^{-k s}) / k dt` beyond `t_max`, `s = t - t_max`,
    /// with `k` the local decay rate of the density at `t_max`. Used to
    /// account for the drift of `phi` across the tail.
    pub tail_moment: f64,
}

/// `log(delta + e^{log_n})` without overflow or cancellation.
fn log_shifted(delta: f64, log_n: f64) -> f64 {
    if delta == 0.0 {
        return log_n;
    }
    let ld = delta.ln();
    if log_n > ld {
        log_n + (delta * (-log_n).exp()).ln_1p()
    } else {
        ld + (log_n - ld).exp().ln_1p()
    }
}

impl ReferenceWeight {
    pub fn new(beta: f64, delta: f64, grid: &Grid) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(invalid(format!("cone fraction must lie in (0, 1], got {beta}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(invalid(format!("smoothing parameter must be nonnegative, got {delta}")));
        }
        let raw = ReferenceWeight { beta, delta, constant: 0.0, tail: 0.0, tail_moment: 0.0 };
        let t = grid.nodes();
        let dens: Vec<f64> = t.iter().map(|&t| raw.log_density(t).exp()).collect();
        let inner = grid.integrate(&dens);
        let (tail, moment) = raw.tail_integrals(grid.t_max());
        // The normalization is linear in e^c, so the root is explicit.
        let constant = (VOLUME / (2.0 * PI * (inner + 2.0 * tail))).ln();
        let scale = constant.exp();
        Ok(ReferenceWeight { beta, delta, constant, tail: tail * scale, tail_moment: moment * scale })
    }

    /// `h(t)`.
    pub fn log_weight(&self, t: f64) -> f64 {
        -(1.0 - self.beta) * log_shifted(self.delta, log_defining_section_norm(t)) + self.constant
    }

    /// `h(t) + log Phi_FS''(t)`, the log of the right-hand side at `phi = 0`.
    pub fn log_density(&self, t: f64) -> f64 {
        self.log_weight(t) + log_defining_section_norm(t) - LN_2
    }

    pub fn log_weight_profile(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().iter().map(|&t| self.log_weight(t)).collect()
    }

    pub fn log_density_profile(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().iter().map(|&t| self.log_density(t)).collect()
    }

    /// Decay rate `-(log density)'` at `t`.
    pub fn decay_rate(&self, t: f64) -> f64 {
        let e = 1e-4;
        -(self.log_density(t + e) - self.log_density(t - e)) / (2.0 * e)
    }

    fn tail_integrals(&self, t_end: f64) -> (f64, f64) {
        let len = 60.0 / self.beta;
        let n = 2 * ((len / 0.005).ceil() as usize) + 1;
        let h = len / (n - 1) as f64;
        let k = self.decay_rate(t_end);
        let dens: Vec<f64> = (0..n).map(|i| self.log_density(t_end + i as f64 * h).exp()).collect();
        let mom: Vec<f64> = dens
            .iter()
            .enumerate()
            .map(|(i, d)| d * -(-k * i as f64 * h).exp_m1() / k)
            .collect();
        (simpson(&dens, h), simpson(&mom, h))
    }
}

/// The conic normalization constant `a_beta`.
pub fn compute_a_beta(beta: f64, grid: &Grid) -> Result<f64> {
    Ok(ReferenceWeight::new(beta, 0.0, grid)?.constant)
}

/// The smoothed normalization constant `c_delta`.
pub fn compute_c_delta(beta: f64, delta: f64, grid: &Grid) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(invalid(format!("smoothing parameter must be positive, got {delta}")));
    }
    Ok(ReferenceWeight::new(beta, delta, grid)?.constant)
}

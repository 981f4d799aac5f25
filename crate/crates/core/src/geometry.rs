//! Rotationally symmetric Kähler metrics on the Riemann sphere.
//!
//! A metric is stored through its potential profile `Phi(t)`, `t = log|z|^2`,
//! with Kähler form `omega = i Phi''(t) dz ^ dzbar / |z|^2`. The moment
//! coordinate `Phi'` runs over `[0, 2]`, so the total area is `4 pi`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{self, Grid};

/// Total area of the class.
pub const VOLUME: f64 = 4.0 * PI;

/// The two fixed points of the rotation `z -> e^{i a} z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pole {
    Zero,
    Infinity,
}

/// Location of a cone point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLocation {
    Zero,
    Infinity,
    /// A point on the circle `log|z|^2 = t`.
    At(f64),
}

impl From<Pole> for PointLocation {
    fn from(p: Pole) -> Self {
        match p {
            Pole::Zero => PointLocation::Zero,
            Pole::Infinity => PointLocation::Infinity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    pub location: PointLocation,
    pub weight: f64,
}

/// Divisor and angle data `(lambda, beta, mu, D)` with `mu = 1 - (1-beta) lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeConfiguration {
    lambda: u32,
    beta: f64,
    mu: f64,
    cone_points: Vec<ConePoint>,
}

impl ConeConfiguration {
    pub fn new(lambda: u32, beta: f64, cone_points: Vec<ConePoint>) -> Result<Self> {
        if lambda == 0 {
            return Err(invalid("lambda must be a positive integer"));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(invalid(format!("cone fraction must lie in (0, 1], got {beta}")));
        }
        let mu = 1.0 - (1.0 - beta) * lambda as f64;
        if mu <= 0.0 {
            return Err(invalid(format!("mu = {mu} is not positive")));
        }
        for p in &cone_points {
            if !(p.weight > 0.0 && p.weight.is_finite()) {
                return Err(invalid("cone point weights must be positive"));
            }
        }
        Ok(ConeConfiguration { lambda, beta, mu, cone_points })
    }

    /// The symmetric configuration `lambda = 1`, `D = {0, inf}`.
    pub fn football(beta: f64) -> Result<Self> {
        Self::new(
            1,
            beta,
            vec![
                ConePoint { location: PointLocation::Zero, weight: 1.0 },
                ConePoint { location: PointLocation::Infinity, weight: 1.0 },
            ],
        )
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn cone_points(&self) -> &[ConePoint] {
        &self.cone_points
    }

    /// Whether the configuration is the one the radial solver handles.
    pub fn is_solver_compatible(&self) -> bool {
        let has = |loc: PointLocation| self.cone_points.iter().any(|p| p.location == loc);
        self.lambda == 1
            && self.cone_points.len() == 2
            && has(PointLocation::Zero)
            && has(PointLocation::Infinity)
    }
}

/// Radial Kähler potential sampled on a grid.
///
/// `tail_mass` holds `int Phi'' dt` beyond each end of the grid, so that the
/// moment limits are `Phi'(t_min) - tail_mass[0]` and `Phi'(t_max) + tail_mass[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialKahlerPotential {
    pub grid: Grid,
    pub phi_prime: Vec<f64>,
    pub phi_doubleprime: Vec<f64>,
    pub base_offset: f64,
    pub angle_at_zero: f64,
    pub angle_at_infinity: f64,
    pub tail_mass: [f64; 2],
}

impl RadialKahlerPotential {
    /// Builds a potential from sampled profiles, estimating tail masses from
    /// the exponential decay of `Phi''` at the ends.
    pub fn from_profiles(
        grid: Grid,
        phi_prime: Vec<f64>,
        phi_doubleprime: Vec<f64>,
        base_offset: f64,
        angles: (f64, f64),
    ) -> Result<Self> {
        let n = grid.len();
        if phi_prime.len() != n || phi_doubleprime.len() != n {
            return Err(invalid("profile length does not match the grid"));
        }
        let h = grid.spacing();
        let tail_mass = [
            grid::exponential_tail(phi_doubleprime[0], phi_doubleprime[1], h),
            grid::exponential_tail(phi_doubleprime[n - 1], phi_doubleprime[n - 2], h),
        ];
        let pot = RadialKahlerPotential {
            grid,
            phi_prime,
            phi_doubleprime,
            base_offset,
            angle_at_zero: angles.0,
            angle_at_infinity: angles.1,
            tail_mass,
        };
        pot.check_positive()?;
        Ok(pot)
    }

    pub fn with_tail_mass(mut self, lower: f64, upper: f64) -> Self {
        self.tail_mass = [lower, upper];
        self
    }

    pub fn check_positive(&self) -> Result<()> {
        for (i, v) in self.phi_doubleprime.iter().enumerate() {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveMetric { node: i, t: self.grid.t(i) });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Limits of the moment coordinate at the two poles.
    pub fn moment_limits(&self) -> (f64, f64) {
        let n = self.len();
        (self.phi_prime[0] - self.tail_mass[0], self.phi_prime[n - 1] + self.tail_mass[1])
    }

    /// Potential values `Phi(t_i)`, with `Phi(0) = base_offset`.
    pub fn potential_values(&self) -> Vec<f64> {
        let c = self.grid.center();
        let mut v = grid::cumulative_integral(&self.phi_prime, self.grid.spacing());
        let shift = self.base_offset - v[c];
        for x in &mut v {
            *x += shift;
        }
        v
    }

    /// `int f omega` for nodal values `f`, extending `f` by its end values
    /// across the tails.
    pub fn integrate_against_omega(&self, f: &[f64]) -> f64 {
        let n = self.len();
        let prod: Vec<f64> = f.iter().zip(&self.phi_doubleprime).map(|(a, b)| a * b).collect();
        2.0 * PI * (self.grid.integrate(&prod) + f[0] * self.tail_mass[0] + f[n - 1] * self.tail_mass[1])
    }

    /// Same potential with the Kähler form multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in out.phi_prime.iter_mut().chain(out.phi_doubleprime.iter_mut()) {
            *v *= c;
        }
        out.base_offset *= c;
        out.tail_mass = [c * self.tail_mass[0], c * self.tail_mass[1]];
        out
    }

    /// Adds a constant to the potential; every metric quantity is unchanged.
    pub fn with_offset(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.base_offset += c;
        out
    }
}

pub fn fubini_study_potential(grid: Grid) -> RadialKahlerPotential {
    football_profile(grid, 1.0)
}

pub fn football_potential(grid: Grid, beta: f64) -> Result<RadialKahlerPotential> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!("cone fraction must lie in (0, 1], got {beta}")));
    }
    Ok(football_profile(grid, beta))
}

fn football_profile(grid: Grid, beta: f64) -> RadialKahlerPotential {
    let t = grid.nodes();
    // 2 / (1 + e^{-beta t}) and its complement, each without cancellation.
    let lower_part = |t: f64| 2.0 / (1.0 + (-beta * t).exp());
    let phi_prime: Vec<f64> = t
        .iter()
        .map(|&t| if t <= 0.0 { lower_part(t) } else { 2.0 - lower_part(-t) })
        .collect();
    let phi_doubleprime: Vec<f64> = t
        .iter()
        .map(|&t| {
            let x = (-beta * t.abs()).exp();
            2.0 * beta * x / ((1.0 + x) * (1.0 + x))
        })
        .collect();
    let n = grid.len();
    RadialKahlerPotential {
        grid,
        phi_prime,
        phi_doubleprime,
        base_offset: 2.0 * std::f64::consts::LN_2 / beta,
        angle_at_zero: beta,
        angle_at_infinity: beta,
        tail_mass: [lower_part(t[0]), lower_part(-t[n - 1])],
    }
}

/// Closed form of the football potential `(2/beta) log(1 + e^{beta t})`.
pub fn football_potential_value(beta: f64, t: f64) -> f64 {
    2.0 * grid::softplus(beta * t) / beta
}

/// Total area, including the mass of `omega` beyond the grid ends.
pub fn area(pot: &RadialKahlerPotential) -> f64 {
    let (lo, hi) = pot.moment_limits();
    2.0 * PI * (hi - lo)
}

/// Gauss curvature at every node; the two outermost nodes on each side are NaN.
pub fn curvature_profile(pot: &RadialKahlerPotential) -> Vec<f64> {
    let d = grid::log_second_derivative(&pot.phi_doubleprime, pot.grid.spacing());
    d.iter().zip(&pot.phi_doubleprime).map(|(g, p)| -g / p).collect()
}

/// Gauss curvature `K = -(log Phi'')'' / Phi''` at `t`.
pub fn gauss_curvature(pot: &RadialKahlerPotential, t: f64) -> Result<f64> {
    let n = pot.len();
    let x = pot.grid.position(t);
    if !(x >= 3.0 && x <= (n - 4) as f64) {
        return Err(Error::OutsideInterior { t });
    }
    let k = curvature_profile(pot);
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        return Ok(k[r as usize]);
    }
    Ok(pot.grid.interpolate(&k, t))
}

/// Nodes of the outer 20% of the grid at the given pole.
fn pole_window(grid: &Grid, pole: Pole) -> std::ops::Range<usize> {
    let n = grid.len();
    let m = (n / 5).max(5);
    match pole {
        Pole::Zero => 0..m,
        Pole::Infinity => n - m..n,
    }
}

const NON_CONIC_RESIDUAL: f64 = 0.25;

/// Cone fraction at a pole from a linear fit of `log Phi''` against `t` over
/// the outer 20% of the grid.
pub fn cone_angle_at_pole(pot: &RadialKahlerPotential, pole: Pole) -> Result<f64> {
    let (slope, residual) = log_slope_fit(pot, pole, None)?;
    if residual > NON_CONIC_RESIDUAL || slope.abs() < 1e-6 {
        return Err(Error::NonConicAsymptotics { residual });
    }
    Ok(slope.abs().min(1.0))
}

/// Cone fraction with the leading exponential correction to the asymptotic
/// slope included in the fit; accurate to roughly the square of the plain fit error.
pub fn refined_cone_angle(pot: &RadialKahlerPotential, pole: Pole) -> Result<f64> {
    let (mut slope, residual) = log_slope_fit(pot, pole, None)?;
    if residual > NON_CONIC_RESIDUAL || slope.abs() < 1e-6 {
        return Err(Error::NonConicAsymptotics { residual });
    }
    for _ in 0..3 {
        slope = log_slope_fit(pot, pole, Some(slope.abs()))?.0;
    }
    Ok(slope.abs())
}

fn log_slope_fit(pot: &RadialKahlerPotential, pole: Pole, rate: Option<f64>) -> Result<(f64, f64)> {
    let w = pole_window(&pot.grid, pole);
    let t: Vec<f64> = w.clone().map(|i| pot.grid.t(i)).collect();
    let y: Vec<f64> = w.map(|i| pot.phi_doubleprime[i].ln()).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConicAsymptotics { residual: f64::INFINITY });
    }
    let mut cols = vec![vec![1.0; t.len()], t.clone()];
    if let Some(k) = rate {
        for j in 1..=3 {
            cols.push(t.iter().map(|s| (-(j as f64) * k * s.abs()).exp()).collect());
        }
    }
    let coef = grid::least_squares(&cols, &y).ok_or(Error::NonConicAsymptotics { residual: f64::NAN })?;
    let mut ss = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let fit: f64 = cols.iter().zip(&coef).map(|(c, a)| a * c[i]).sum();
        ss += (yi - fit).powi(2);
    }
    Ok((coef[1], (ss / y.len() as f64).sqrt()))
}

/// `|int K omega + 2 pi (1 - beta_0) + 2 pi (1 - beta_inf) - 4 pi|`, with the
/// curvature integral extended over the tails by exponential extrapolation.
pub fn gauss_bonnet_defect(pot: &RadialKahlerPotential) -> Result<f64> {
    let n = pot.len();
    let h = pot.grid.spacing();
    let k = curvature_profile(pot);
    let dens: Vec<f64> = (2..n - 2).map(|i| k[i] * pot.phi_doubleprime[i]).collect();
    let b0 = refined_cone_angle(pot, Pole::Zero)?;
    let b1 = refined_cone_angle(pot, Pole::Infinity)?;
    let lag = (1.0 / h).round() as usize;
    let rev: Vec<f64> = dens.iter().rev().copied().collect();
    let total = grid::simpson(&dens, h)
        + two_rate_tail(&dens, b0, lag, h)
        + two_rate_tail(&rev, b1, lag, h);
    Ok((2.0 * PI * total + 2.0 * PI * (2.0 - b0 - b1) - VOLUME).abs())
}

/// Integral beyond `f[0]` of `a e^{-k s} + b e^{-2 k s}` matched at `f[0]`
/// and `f[lag]`, with `s` the distance past the end.
fn two_rate_tail(f: &[f64], k: f64, lag: usize, h: f64) -> f64 {
    let d = lag as f64 * h;
    let (e1, e2) = ((-k * d).exp(), (-2.0 * k * d).exp());
    // f0 = a + b, f1 = a / e1 + b / e2
    let (f0, f1) = (f[0], f[lag]);
    let det = 1.0 / e2 - 1.0 / e1;
    let b = (f1 - f0 / e1) / det;
    let a = f0 - b;
    a / k + b / (2.0 * k)
}

/// Fubini–Study norm `||S||^2 = 4 e^t / (1 + e^t)^2` of the section vanishing
/// at both poles.
pub fn defining_section_norm(grid: &Grid) -> Vec<f64> {
    grid.nodes().iter().map(|&t| log_defining_section_norm(t).exp()).collect()
}

/// `log ||S||^2` at `t`, finite for all `t`.
pub fn log_defining_section_norm(t: f64) -> f64 {
    2.0 * grid::log_sech(0.5 * t)
}

/// Ricci potential of a smooth metric, normalized by `int (e^h - 1) omega = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RicciPotential {
    pub values: Vec<f64>,
    pub constant: f64,
}

/// Solves `Ric(omega) - omega = i d dbar h` radially:
/// `h = t - log Phi'' - Phi + c`.
pub fn ricci_potential_h0(pot0: &RadialKahlerPotential) -> Result<RicciPotential> {
    if (pot0.angle_at_zero - 1.0).abs() > 1e-12 || (pot0.angle_at_infinity - 1.0).abs() > 1e-12 {
        return Err(invalid("reference metric must be smooth at both poles"));
    }
    let phi = pot0.potential_values();
    let raw: Vec<f64> = (0..pot0.len())
        .map(|i| pot0.grid.t(i) - pot0.phi_doubleprime[i].ln() - phi[i])
        .collect();
    let shift = raw[pot0.grid.center()];
    let e: Vec<f64> = raw.iter().map(|r| (r - shift).exp()).collect();
    let mass = pot0.integrate_against_omega(&e);
    let vol = area(pot0);
    let constant = (vol / mass).ln() - shift;
    let values = raw.iter().map(|r| r + constant).collect();
    Ok(RicciPotential { values, constant })
}

//! Associated Hermitian metric on `K^{-1}`, Gram matrices of the monomial
//! sections `z^k`, `k = 0..=2l`, of `K^{-l}`, and the Bergman density.
//!
//! Section norms are carried as logarithms throughout:
//! `log ||z^k||^2 = k t + l log H(d/dz, d/dz)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{football_potential, fubini_study_potential, ConeConfiguration, RadialKahlerPotential, VOLUME};
use crate::grid::{derivative, log_sum_exp, second_derivative, second_derivative_2, Grid};
use crate::ma_solver::{solve_ma, SolverConfig};

/// The associated metric `H_omega` of a radial metric, with its Ricci
/// potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociatedWeight {
    pub potential: RadialKahlerPotential,
    pub beta: f64,
    pub mu: f64,
    /// `log H(d/dz, d/dz)` per node.
    pub log_frame: Vec<f64>,
    /// Ricci potential `h` with `int (e^h - 1) omega = 0`.
    pub ricci: Vec<f64>,
}

impl AssociatedWeight {
    pub fn grid(&self) -> Grid {
        self.potential.grid
    }

    /// The weight `W = -log H(d/dz, d/dz)`, so that `||z^k||^2 = e^{k t - l W}`.
    pub fn log_weight(&self) -> Vec<f64> {
        self.log_frame.iter().map(|v| -v).collect()
    }

    /// `log ||z^k||^2` for a section of `K^{-l}`.
    pub fn log_section_norm(&self, ell: u32, k: u32) -> Vec<f64> {
        let g = self.grid();
        let (l, k) = (ell as f64, k as f64);
        self.log_frame.iter().enumerate().map(|(i, f)| k * g.t(i) + l * f).collect()
    }

    /// `log H(S, S)` for the defining section `S = z d/dz`.
    pub fn log_defining_norm(&self) -> Vec<f64> {
        let g = self.grid();
        self.log_frame.iter().enumerate().map(|(i, f)| f + g.t(i)).collect()
    }

    /// `int H(S, S) omega`.
    pub fn normalization(&self) -> f64 {
        log_omega_integral(&self.log_defining_norm(), &self.potential).exp()
    }

    /// `sup |-(log H)'' - Phi''|` over the interior, second order.
    pub fn curvature_residual(&self) -> f64 {
        let g = self.grid();
        let d2 = second_derivative_2(&self.log_frame, g.spacing());
        (1..g.len() - 1)
            .map(|i| (-d2[i] - self.potential.phi_doubleprime[i]).abs())
            .fold(0.0, f64::max)
    }

    /// The same metric multiplied by `e^c`.
    pub fn rescaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.log_frame {
            *v += c;
        }
        out
    }
}

/// `log int e^{v} omega` for log-samples `v`, shifted by the maximum and
/// extended across the tails by the end values, as in
/// [`RadialKahlerPotential::integrate_against_omega`].
fn log_omega_integral(log_values: &[f64], pot: &RadialKahlerPotential) -> f64 {
    let m = log_values.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    if !m.is_finite() {
        return m;
    }
    let e: Vec<f64> = log_values.iter().map(|v| (v - m).exp()).collect();
    m + pot.integrate_against_omega(&e).ln()
}

/// Builds `H_omega = e^{h/mu} H~(S,S)^{(1-beta)/mu} H~` with `H~` the
/// determinant metric, normalized by `int H_omega(S, S) omega = 1`.
pub fn associated_hermitian_weight(pot: &RadialKahlerPotential, cone: &ConeConfiguration) -> Result<AssociatedWeight> {
    let mu = cone.mu();
    if !(mu > 0.0) {
        return Err(invalid("the associated metric needs mu > 0"));
    }
    if !cone.is_solver_compatible() {
        return Err(invalid("radial sections need the divisor {0, inf} with lambda = 1"));
    }
    pot.check_positive()?;
    let beta = cone.beta();
    let g = pot.grid;
    let n = g.len();
    let phi = pot.potential_values();
    let log_pdd: Vec<f64> = pot.phi_doubleprime.iter().map(|v| v.ln()).collect();
    // Ric = mu omega + 2 pi (1 - beta)[D] + i d dbar h
    let raw: Vec<f64> = (0..n).map(|i| -log_pdd[i] - mu * phi[i] + beta * g.t(i)).collect();
    let vol = pot.integrate_against_omega(&vec![1.0; n]);
    let shift = vol.ln() - log_omega_integral(&raw, pot);
    let ricci: Vec<f64> = raw.iter().map(|r| r + shift).collect();
    // H~(d/dz, d/dz) = Phi'' e^{-t} and H~(S, S) = Phi''.
    let unscaled: Vec<f64> = (0..n).map(|i| ricci[i] / mu + log_pdd[i] / mu).collect();
    let scale = -log_omega_integral(&unscaled, pot);
    let log_frame = (0..n).map(|i| unscaled[i] + scale - g.t(i)).collect();
    Ok(AssociatedWeight { potential: pot.clone(), beta, mu, log_frame, ricci })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionBasisGram {
    pub ell: u32,
    /// `W = -log H(d/dz, d/dz)` per node.
    pub weight: Vec<f64>,
    /// `<z^j, z^k>`, `(2l+1) x (2l+1)`.
    pub gram: Vec<Vec<f64>>,
    /// `log <z^k, z^k>`.
    pub log_diagonal: Vec<f64>,
    /// `-log(<z^k, z^k>) / 2`, so `z^k e^{c_k}` is orthonormal.
    pub log_coefficients: Vec<f64>,
}

impl SectionBasisGram {
    pub fn dim(&self) -> usize {
        2 * self.ell as usize + 1
    }

    /// Largest `|<z^j, z^k>| / sqrt(<z^j, z^j> <z^k, z^k>)` with `j != k`.
    pub fn off_diagonal_ratio(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for j in 0..d {
            for k in 0..d {
                if j != k {
                    let scale = (0.5 * (self.log_diagonal[j] + self.log_diagonal[k])).exp();
                    worst = worst.max(self.gram[j][k].abs() / scale);
                }
            }
        }
        worst
    }
}

/// Gram matrix of the monomial basis in `L^2(H_omega^l, omega)`.
pub fn gram_matrix(ell: u32, weight: &AssociatedWeight) -> Result<SectionBasisGram> {
    if ell == 0 {
        return Err(invalid("the power of K^{-1} must be at least 1"));
    }
    let d = 2 * ell as usize + 1;
    let pot = &weight.potential;
    let g = pot.grid;
    let l = ell as f64;
    // exact angular quadrature for frequencies below the sample count
    let samples = 2 * d + 1;
    let rows: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            (0..d)
                .map(|k| {
                    let half = 0.5 * (j + k) as f64;
                    let v: Vec<f64> = (0..g.len()).map(|i| half * g.t(i) + l * weight.log_frame[i]).collect();
                    let radial = log_omega_integral(&v, pot).exp();
                    let freq = j as f64 - k as f64;
                    let angular: f64 = (0..samples)
                        .map(|m| (freq * 2.0 * PI * m as f64 / samples as f64).cos())
                        .sum::<f64>()
                        / samples as f64;
                    radial * angular
                })
                .collect()
        })
        .collect();
    let log_diagonal: Vec<f64> = (0..d)
        .map(|k| log_omega_integral(&weight.log_section_norm(ell, k as u32), pot))
        .collect();
    for (k, v) in log_diagonal.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::RootNotFound(format!("section z^{k} has no finite norm")));
        }
    }
    let log_coefficients = log_diagonal.iter().map(|v| -0.5 * v).collect();
    Ok(SectionBasisGram { ell, weight: weight.log_weight(), gram: rows, log_diagonal, log_coefficients })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BergmanDensity {
    pub ell: u32,
    pub rho: Vec<f64>,
    pub inf: f64,
    pub sup: f64,
    pub argmin_t: f64,
    /// `int rho omega`; equals `2l + 1`.
    pub trace: f64,
}

/// `rho(t) = sum_k ||z^k||^2(t) / <z^k, z^k>`.
pub fn bergman_density(basis: &SectionBasisGram, weight: &AssociatedWeight) -> BergmanDensity {
    let pot = &weight.potential;
    let g = pot.grid;
    let n = g.len();
    let logs: Vec<Vec<f64>> = (0..basis.dim() as u32).map(|k| weight.log_section_norm(basis.ell, k)).collect();
    let rho: Vec<f64> = (0..n)
        .map(|i| log_sum_exp(logs.iter().zip(&basis.log_diagonal).map(|(v, d)| v[i] - d)).exp())
        .collect();
    let (mut inf, mut sup, mut argmin_t) = (f64::INFINITY, 0.0f64, 0.0);
    for (i, r) in rho.iter().enumerate() {
        if *r < inf {
            inf = *r;
            argmin_t = g.t(i);
        }
        sup = sup.max(*r);
    }
    let trace = pot.integrate_against_omega(&rho);
    BergmanDensity { ell: basis.ell, rho, inf, sup, argmin_t, trace }
}

/// How the conic Kähler–Einstein metric of a scan is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeSource {
    ClosedForm,
    Solver,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub beta: f64,
    pub ell: u32,
    pub inf_rho: f64,
    pub sup_rho: f64,
    pub trace_check: f64,
}

/// Conic Kähler–Einstein football for `beta`.
pub fn conic_ke_metric(beta: f64, grid: Grid, source: KeSource) -> Result<RadialKahlerPotential> {
    match source {
        KeSource::ClosedForm => football_potential(grid, beta),
        KeSource::Solver => {
            let cfg = SolverConfig::new(ConeConfiguration::football(beta)?, 0.0, beta)?;
            Ok(solve_ma(&cfg, &fubini_study_potential(grid))?.potential)
        }
    }
}

/// `inf rho` over the footballs of the given cone fractions, one row per
/// `(beta, l)` in parameter order.
pub fn partial_c0_scan(betas: &[f64], ells: &[u32], grid: Grid, source: KeSource) -> Result<Vec<ScanRow>> {
    let weights: Vec<AssociatedWeight> = betas
        .par_iter()
        .map(|&b| {
            let pot = conic_ke_metric(b, grid, source)?;
            associated_hermitian_weight(&pot, &ConeConfiguration::football(b)?)
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, u32)> = (0..betas.len()).flat_map(|i| ells.iter().map(move |&l| (i, l))).collect();
    jobs.par_iter()
        .map(|&(i, ell)| {
            let basis = gram_matrix(ell, &weights[i])?;
            let rho = bergman_density(&basis, &weights[i]);
            Ok(ScanRow {
                beta: betas[i],
                ell,
                inf_rho: rho.inf,
                sup_rho: rho.sup,
                trace_check: rho.trace - (2 * ell + 1) as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BochnerResidual {
    /// `Delta ||s||^2 - ||grad s||^2 + l ||s||^2` per node.
    pub first_profile: Vec<f64>,
    /// `Delta ||grad s||^2 - ||grad^2 s||^2 + (3l - mu) ||grad s||^2` per node.
    pub second_profile: Vec<f64>,
    pub first: f64,
    pub second: f64,
}

/// Both Bochner identities for the normalized section `z^k` of `K^{-l}`,
/// assembled by fourth-order differences and measured on `|t| <= t_cut`.
pub fn bochner_residual(k: u32, weight: &AssociatedWeight, ell: u32, t_cut: f64) -> Result<BochnerResidual> {
    if k > 2 * ell {
        return Err(invalid(format!("z^{k} is not a section of K^-{ell}")));
    }
    let pot = &weight.potential;
    let g = pot.grid;
    let n = g.len();
    let h = g.spacing();
    let l = ell as f64;
    let log_g = log_omega_integral(&weight.log_section_norm(ell, k), pot);
    let psi: Vec<f64> = weight.log_section_norm(ell, k).iter().map(|v| v - log_g).collect();
    let pdd = &pot.phi_doubleprime;
    let lp: Vec<f64> = pdd.iter().map(|v| v.ln()).collect();
    let d1 = derivative(&psi, h);
    let d2 = second_derivative(&psi, h);
    let dlp = derivative(&lp, h);
    let norm: Vec<f64> = psi.iter().map(|v| v.exp()).collect();
    let grad: Vec<f64> = (0..n).map(|i| norm[i] * d1[i] * d1[i] / pdd[i]).collect();
    let hess: Vec<f64> = (0..n)
        .map(|i| {
            let a = d2[i] + d1[i] * d1[i] - d1[i] * dlp[i];
            norm[i] * (a * a + d2[i] * d2[i]) / (pdd[i] * pdd[i])
        })
        .collect();
    let lap_norm = second_derivative(&norm, h);
    let lap_grad = second_derivative(&grad, h);
    let mut first_profile = vec![f64::NAN; n];
    let mut second_profile = vec![f64::NAN; n];
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for i in 4..n - 4 {
        first_profile[i] = lap_norm[i] / pdd[i] - grad[i] + l * norm[i];
        second_profile[i] = lap_grad[i] / pdd[i] - hess[i] + (3.0 * l - weight.mu) * grad[i];
        if g.t(i).abs() <= t_cut {
            first = first.max(first_profile[i].abs());
            second = second.max(second_profile[i].abs());
        }
    }
    Ok(BochnerResidual { first_profile, second_profile, first, second })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientRatio {
    /// `(l, max_k sup (||s|| + l^{-1/2} ||grad s||) / l^{1/2})`.
    pub per_ell: Vec<(u32, f64)>,
    pub max: f64,
}

/// Gradient estimate constant over the orthonormal monomial basis.
pub fn gradient_estimate_ratio(ells: &[u32], weight: &AssociatedWeight) -> Result<GradientRatio> {
    let pot = &weight.potential;
    let h = pot.grid.spacing();
    let dw = derivative(&weight.log_frame, h);
    let per_ell: Vec<(u32, f64)> = ells
        .par_iter()
        .map(|&ell| {
            let basis = gram_matrix(ell, weight)?;
            let l = ell as f64;
            let mut best = 0.0f64;
            for k in 0..basis.dim() {
                let psi = weight.log_section_norm(ell, k as u32);
                for i in 0..psi.len() {
                    let p = psi[i] - basis.log_diagonal[k];
                    let slope = k as f64 + l * dw[i];
                    let value = (0.5 * p).exp();
                    let grad = (0.5 * p).exp() * slope.abs() / pot.phi_doubleprime[i].sqrt();
                    best = best.max((value + grad / l.sqrt()) / l.sqrt());
                }
            }
            Ok((ell, best))
        })
        .collect::<Result<_>>()?;
    let max = per_ell.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GradientRatio { per_ell, max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub t0: f64,
    pub ell: u32,
    /// Monomial carrying the quasi-section.
    pub k0: u32,
    /// `||F - P F|| / ||F||` in `L^2`.
    pub projection_residual: f64,
    /// `||P F||(t0) / ||F||(t0)`.
    pub value_ratio: f64,
}

/// Projects the quasi-section `exp(-(t - t0)^2 / 2) z^{k0}` onto the
/// holomorphic span.
pub fn peak_section_experiment(t0: f64, ell: u32, weight: &AssociatedWeight) -> Result<PeakReport> {
    let pot = &weight.potential;
    let g = pot.grid;
    if t0.abs() > 0.5 * g.t_max() {
        return Err(Error::OutsideInterior { t: t0 });
    }
    if ell == 0 {
        return Err(invalid("the power of K^{-1} must be at least 1"));
    }
    let l = ell as f64;
    let moment = g.interpolate(&pot.phi_prime, t0);
    let k0 = (l * moment).round().clamp(0.0, 2.0 * l) as u32;
    let psi = weight.log_section_norm(ell, k0);
    let eta: Vec<f64> = g.nodes().iter().map(|t| -0.5 * (t - t0) * (t - t0)).collect();
    let norm_sq = log_omega_integral(&psi, pot);
    let with_eta: Vec<f64> = psi.iter().zip(&eta).map(|(a, b)| a + b).collect();
    let with_eta_sq: Vec<f64> = psi.iter().zip(&eta).map(|(a, b)| a + 2.0 * b).collect();
    // <F, z^k0> / <z^k0, z^k0>
    let coeff = (log_omega_integral(&with_eta, pot) - norm_sq).exp();
    let f_sq = log_omega_integral(&with_eta_sq, pot).exp();
    let p_sq = coeff * coeff * norm_sq.exp();
    let projection_residual = ((f_sq - p_sq).max(0.0) / f_sq).sqrt();
    Ok(PeakReport { t0, ell, k0, projection_residual, value_ratio: coeff })
}

/// Constant Bergman density of the round metric.
pub fn round_density(ell: u32) -> f64 {
    (2 * ell + 1) as f64 / VOLUME
}

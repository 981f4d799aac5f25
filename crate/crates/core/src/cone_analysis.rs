//! Flat product cones `C^{n-1} x C_b`, log-log cutoffs and their capacity,
//! ball-cover cutoffs around codimension-four sets, and volume diagnostics.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Pole, RadialKahlerPotential};
use crate::grid::{cumulative_integral, exponential_tail, least_squares};

/// Volume of the unit ball in `R^dim`.
pub fn unit_ball_volume(dim: u32) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        d => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// A point of the cone factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCoordinate {
    pub rho: f64,
    pub theta: f64,
}

/// A point of `C^{n-1} x C_b`: `flat` holds the `2n - 2` real coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub flat: Vec<f64>,
    pub cone: ConeCoordinate,
}

/// `C^{n-1} x C_b` with `g = sum |dz_i|^2 + d rho^2 + b^2 rho^2 d theta^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatConeModel {
    n: u32,
    beta_bar: f64,
}

pub fn flat_cone_metric(n: u32, beta_bar: f64) -> Result<FlatConeModel> {
    if n == 0 {
        return Err(invalid("complex dimension must be at least 1"));
    }
    if !(beta_bar > 0.0 && beta_bar <= 1.0) {
        return Err(invalid(format!("cone fraction must lie in (0, 1], got {beta_bar}")));
    }
    Ok(FlatConeModel { n, beta_bar })
}

impl FlatConeModel {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn beta_bar(&self) -> f64 {
        self.beta_bar
    }

    /// Length of the circle `rho = r`.
    pub fn circumference(&self, r: f64) -> f64 {
        2.0 * PI * self.beta_bar * r
    }

    /// Area of the disc `rho <= r` in the cone factor.
    pub fn vertex_disc_area(&self, r: f64) -> f64 {
        PI * self.beta_bar * r * r
    }

    /// Distance in the cone factor, by unrolling onto a sector of angle
    /// `2 pi b`.
    pub fn cone_distance(&self, p: ConeCoordinate, q: ConeCoordinate) -> f64 {
        let mut d = (p.theta - q.theta).rem_euclid(2.0 * PI);
        if d > PI {
            d = 2.0 * PI - d;
        }
        let angle = self.beta_bar * d;
        if angle < PI {
            (p.rho * p.rho + q.rho * q.rho - 2.0 * p.rho * q.rho * angle.cos()).max(0.0).sqrt()
        } else {
            p.rho + q.rho
        }
    }

    pub fn distance(&self, p: &ModelPoint, q: &ModelPoint) -> f64 {
        let flat: f64 = p.flat.iter().zip(&q.flat).map(|(a, b)| (a - b) * (a - b)).sum();
        let c = self.cone_distance(p.cone, q.cone);
        (flat + c * c).sqrt()
    }

    /// Volume of the ball of radius `r` about a point at distance `rho0`
    /// from the singular set.
    pub fn ball_volume(&self, rho0: f64, r: f64) -> f64 {
        let n = self.n as i32;
        let flat = unit_ball_volume(2 * self.n - 2);
        // a cone point at distance d carries the flat ball of radius sqrt(r^2 - d^2)
        let slice = move |d2: f64| flat * (r * r - d2).max(0.0).powi(n - 1);
        if rho0 == 0.0 {
            return 2.0 * PI * self.beta_bar * gauss_legendre(0.0, r, 8, |rho| slice(rho * rho) * rho);
        }
        // Unrolled angle phi = b |theta - theta0| in [0, pi b]; the area form is rho d rho d phi.
        let radial = |phi: f64| -> f64 {
            let c = phi.cos();
            let disc = r * r - rho0 * rho0 * phi.sin().powi(2);
            if disc <= 0.0 || (c < 0.0 && r <= rho0) {
                return 0.0;
            }
            let s = disc.sqrt();
            let lo = (rho0 * c - s).max(0.0);
            let hi = rho0 * c + s;
            if hi <= lo {
                return 0.0;
            }
            gauss_legendre(lo, hi, 2, |rho| slice(rho * rho - 2.0 * rho * rho0 * c + rho0 * rho0) * rho)
        };
        let top = PI * self.beta_bar;
        let angular = if r < rho0 && (r / rho0).asin() < top {
            // square-root edge at the tangent angle
            let crit = (r / rho0).asin();
            gauss_legendre(0.0, crit.sqrt(), 16, |w| 2.0 * w * radial(crit - w * w))
        } else {
            gauss_legendre(0.0, top, 32, radial)
        };
        2.0 * angular
    }
}

const GL20: [(f64, f64); 10] = [
    (0.076_526_521_133_497_33, 0.152_753_387_130_725_85),
    (0.227_785_851_141_645_08, 0.149_172_986_472_603_75),
    (0.373_706_088_715_419_56, 0.142_096_109_318_382_05),
    (0.510_867_001_950_827_1, 0.131_688_638_449_176_63),
    (0.636_053_680_726_515, 0.118_194_531_961_518_42),
    (0.746_331_906_460_150_8, 0.101_930_119_817_240_44),
    (0.839_116_971_822_218_8, 0.083_276_741_576_704_75),
    (0.912_234_428_251_326, 0.062_672_048_334_109_06),
    (0.963_971_927_277_913_8, 0.040_601_429_800_386_94),
    (0.993_128_599_185_094_9, 0.017_614_007_139_152_118),
];

/// Composite 20-point Gauss–Legendre on `[a, b]` with `panels` panels.
fn gauss_legendre<F: Fn(f64) -> f64>(a: f64, b: f64, panels: usize, f: F) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in GL20 {
            total += w * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total
}

/// Fraction of the log-log window taken by each smooth transition of the ramp.
pub const RAMP_TRANSITION: f64 = 0.08;

fn smooth_step(x: f64) -> f64 {
    let f = |y: f64| if y > 0.0 { (-1.0 / y).exp() } else { 0.0 };
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        f(x) / (f(x) + f(1.0 - x))
    }
}

/// Flat-top bump on `[0, 1]` with smooth shoulders of width `RAMP_TRANSITION`.
fn ramp_bump(x: f64) -> f64 {
    let a = RAMP_TRANSITION;
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else if x < a {
        smooth_step(x / a)
    } else if x > 1.0 - a {
        smooth_step((1.0 - x) / a)
    } else {
        1.0
    }
}

/// `int_0^x ramp_bump`.
fn ramp_mass(x: f64) -> f64 {
    let a = RAMP_TRANSITION;
    let shoulder = |y: f64| a * gauss_legendre(0.0, y.clamp(0.0, 1.0), 4, smooth_step);
    if x <= 0.0 {
        0.0
    } else if x < a {
        shoulder(x / a)
    } else if x <= 1.0 - a {
        0.5 * a + (x - a)
    } else if x < 1.0 {
        (1.0 - a) - shoulder((1.0 - x) / a)
    } else {
        1.0 - a
    }
}

/// The radial cutoff `gamma = eta(log(-log(rho / eps_bar)))`, with `eta = 1`
/// below `log(-log delta)` and `eta = 0` above `log(-log delta^3)`.
///
/// `delta` is stored through `ell = -log delta` so that `delta^3` never
/// underflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogCutoff {
    pub eps_bar: f64,
    pub neg_log_delta: f64,
}

pub fn loglog_cutoff(eps_bar: f64, delta: f64) -> Result<LogLogCutoff> {
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(invalid(format!("delta must lie in (0, 1/3), got {delta}")));
    }
    LogLogCutoff::from_neg_log_delta(eps_bar, -delta.ln())
}

impl LogLogCutoff {
    pub fn from_neg_log_delta(eps_bar: f64, ell: f64) -> Result<Self> {
        if !(eps_bar > 0.0 && eps_bar.is_finite()) {
            return Err(invalid(format!("eps_bar must be positive, got {eps_bar}")));
        }
        if !(ell > 3f64.ln() && ell.is_finite()) {
            return Err(invalid(format!("delta = exp(-{ell}) is not below 1/3")));
        }
        Ok(LogLogCutoff { eps_bar, neg_log_delta: ell })
    }

    pub fn delta(&self) -> f64 {
        (-self.neg_log_delta).exp()
    }

    /// The window `[log(-log delta), log(-log delta^3)]` of the profile variable.
    pub fn window(&self) -> (f64, f64) {
        let s1 = self.neg_log_delta.ln();
        (s1, s1 + 3f64.ln())
    }

    /// Largest slope of the profile; at most 1.
    pub fn max_slope(&self) -> f64 {
        1.0 / (3f64.ln() * (1.0 - RAMP_TRANSITION))
    }

    pub fn profile(&self, s: f64) -> f64 {
        let (s1, s2) = self.window();
        let x = (s - s1) / (s2 - s1);
        (1.0 - ramp_mass(x) / (1.0 - RAMP_TRANSITION)).clamp(0.0, 1.0)
    }

    /// `eta'(s)`, nonpositive.
    pub fn profile_slope(&self, s: f64) -> f64 {
        let (s1, s2) = self.window();
        -self.max_slope() * ramp_bump((s - s1) / (s2 - s1))
    }

    /// `log rho` band `(log(delta^3 eps_bar), log(delta eps_bar))` carrying the gradient.
    pub fn log_band(&self) -> (f64, f64) {
        let l = self.eps_bar.ln();
        (l - 3.0 * self.neg_log_delta, l - self.neg_log_delta)
    }

    fn variable(&self, log_rho: f64) -> f64 {
        let x = self.eps_bar.ln() - log_rho;
        if x <= 0.0 {
            f64::NEG_INFINITY
        } else {
            x.ln()
        }
    }

    pub fn value_at_log(&self, log_rho: f64) -> f64 {
        if log_rho >= self.eps_bar.ln() {
            return 1.0;
        }
        self.profile(self.variable(log_rho))
    }

    pub fn value(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        self.value_at_log(rho.ln())
    }

    /// `|grad gamma| rho (-log(rho / eps_bar))`; the pointwise bound says this is at most 1.
    pub fn normalized_gradient(&self, log_rho: f64) -> f64 {
        if log_rho >= self.eps_bar.ln() {
            return 0.0;
        }
        -self.profile_slope(self.variable(log_rho))
    }

    pub fn gradient(&self, rho: f64) -> f64 {
        if rho <= 0.0 || rho >= self.eps_bar {
            return 0.0;
        }
        self.normalized_gradient(rho.ln()) / (rho * -(rho / self.eps_bar).ln())
    }
}

/// `-log delta` from the selection rule `a_{n-1} <= eps_bar^{2n-1} (-log delta)`,
/// taken with equality unless that leaves `delta >= 1/3`.
pub fn selection_rule(n: u32, eps_bar: f64) -> Result<f64> {
    if n == 0 || !(eps_bar > 0.0) {
        return Err(invalid("selection rule needs n >= 1 and eps_bar > 0"));
    }
    let ell = unit_ball_volume(2 * n - 2) / eps_bar.powi(2 * n as i32 - 1);
    Ok(ell.max(3f64.ln() * (1.0 + 1e-9)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub n: u32,
    pub beta_bar: f64,
    pub eps_bar: f64,
    pub neg_log_delta: f64,
    pub region_radius: f64,
    /// `int |grad gamma|^2 omega^n` over the region, by direct quadrature.
    pub energy: f64,
    /// The same integral through the layer-cake decomposition over `s(t)`.
    pub energy_coarea: f64,
    pub coarea_relative_discrepancy: f64,
    /// `int_{delta^3}^{delta} dr / (r (-log r)^2)`, by quadrature.
    pub band_integral: f64,
    /// `a_{n-1} / (eps_bar^{2n-2} (-log delta))`.
    pub stated_bound: f64,
    /// `2 pi b a_{n-1} eps_bar^{2-2n} int dr / (r (-log r)^2)`, which includes the
    /// angular measure of the cone factor.
    pub angular_bound: f64,
}

impl EnergyReport {
    pub fn within_stated_bound(&self) -> bool {
        self.energy <= self.stated_bound
    }

    pub fn within_angular_bound(&self) -> bool {
        self.energy <= self.angular_bound
    }

    pub fn within_eps(&self) -> bool {
        self.energy <= self.eps_bar
    }
}

/// Breakpoints of the ramp inside its window.
fn ramp_breaks(s1: f64, s2: f64) -> [f64; 4] {
    let l = s2 - s1;
    [s1, s1 + RAMP_TRANSITION * l, s2 - RAMP_TRANSITION * l, s2]
}

fn piecewise<F: Fn(f64) -> f64>(breaks: &[f64], panels: [usize; 3], f: F) -> f64 {
    breaks.windows(2).zip(panels).map(|(w, p)| gauss_legendre(w[0], w[1], p, &f)).sum()
}

/// Dirichlet energy of the log-log cutoff over the ball of radius
/// `region_radius` about a vertex point of the model.
pub fn dirichlet_energy(cutoff: &LogLogCutoff, model: &FlatConeModel, region_radius: f64) -> Result<EnergyReport> {
    if !(region_radius > 0.0) {
        return Err(invalid("region radius must be positive"));
    }
    let n = model.n;
    let a = unit_ball_volume(2 * n - 2);
    let eps = cutoff.eps_bar;
    let angular = 2.0 * PI * model.beta_bar;
    // transverse slice volume a_{n-1} (R^2 - rho^2)^{n-1}, as a function of the profile variable
    let slice = |u: f64| {
        let rho2 = (2.0 * (eps.ln() - u.exp())).exp();
        a * (region_radius * region_radius - rho2).max(0.0).powi(n as i32 - 1)
    };
    let (s1, s2) = cutoff.window();
    let breaks = ramp_breaks(s1, s2);
    let panels = [16, 8, 16];
    let slope2 = |u: f64| cutoff.profile_slope(u).powi(2);

    let energy = angular * piecewise(&breaks, panels, |u| slope2(u) * slice(u) * (-u).exp());

    // Layer cake over the level sets of |grad zeta|^2 = s(t), t = rho / eps_bar = exp(-e^u):
    //   E = s(delta) M(u1) + int s'(u) M(u) du,  M(u) = int_{v > u} eta'^2 dV.
    // Both terms carry exp(2 (e^u - e^v)) after pairing s(u) with rho(v)^2.
    let paired = |u: f64| -> f64 {
        let eu = u.exp();
        // w = e^v - e^u; the weight e^{-2w} is negligible past w = 40
        let upper = (s2.exp() - eu).min(40.0);
        let mut cuts = vec![0.0];
        cuts.extend(breaks.iter().map(|b| b.exp() - eu).filter(|w| *w > 0.0 && *w < upper));
        cuts.push(upper.max(0.0));
        cuts.windows(2)
            .map(|c| {
                gauss_legendre(c[0], c[1], 8, |w| {
                    let v = (eu + w).ln();
                    (-2.0 * w).exp() * slope2(v) * slice(v)
                })
            })
            .sum()
    };
    let boundary = (-2.0 * s1).exp() * paired(s1);
    let layered = piecewise(&breaks, panels, |u| (2.0 * u.exp() - 2.0) * (-2.0 * u).exp() * paired(u));
    let energy_coarea = angular * (boundary + layered);

    let band_integral = piecewise(&breaks, panels, |u| (-u).exp());
    let weight = a / eps.powi(2 * n as i32 - 2);
    Ok(EnergyReport {
        n,
        beta_bar: model.beta_bar,
        eps_bar: eps,
        neg_log_delta: cutoff.neg_log_delta,
        region_radius,
        energy,
        energy_coarea,
        coarea_relative_discrepancy: (energy - energy_coarea).abs() / energy.abs().max(f64::MIN_POSITIVE),
        band_integral,
        stated_bound: weight / cutoff.neg_log_delta,
        angular_bound: angular * weight * band_integral,
    })
}

/// Energy of the cutoff with `delta` from the selection rule, over `B_{1/eps_bar}`.
pub fn capacity_at_rule(model: &FlatConeModel, eps_bar: f64) -> Result<EnergyReport> {
    let ell = selection_rule(model.n, eps_bar)?;
    let cutoff = LogLogCutoff::from_neg_log_delta(eps_bar, ell)?;
    dirichlet_energy(&cutoff, model, 1.0 / eps_bar)
}

/// Fitted exponent `p` in `energy ~ (-log delta)^p` over the given values of `-log delta`.
pub fn capacity_decay_exponent(model: &FlatConeModel, eps_bar: f64, neg_log_deltas: &[f64]) -> Result<f64> {
    if neg_log_deltas.len() < 2 {
        return Err(invalid("need at least two values of delta"));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &ell in neg_log_deltas {
        let c = LogLogCutoff::from_neg_log_delta(eps_bar, ell)?;
        x.push(ell.ln());
        y.push(dirichlet_energy(&c, model, 1.0 / eps_bar)?.energy.ln());
    }
    let fit = least_squares(&[vec![1.0; x.len()], x], &y).ok_or_else(|| invalid("degenerate fit"))?;
    Ok(fit[1])
}

/// Ramp thresholds for ball cutoffs: `eta_bar(t) = 0` for `t <= 1.1` and `1` for `t >= 1.6`.
pub const BALL_RAMP: (f64, f64) = (1.1, 1.6);

fn ball_ramp(t: f64) -> (f64, f64) {
    let (lo, hi) = BALL_RAMP;
    if t <= lo {
        (0.0, 0.0)
    } else if t >= hi {
        (1.0, 0.0)
    } else {
        ((t - lo) / (hi - lo), 1.0 / (hi - lo))
    }
}

/// An affine subspace `{rho = 0, z' in p + span(directions)}` of real codimension 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpec {
    pub point: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl SingularSpec {
    /// The subspace through the origin spanned by the first `2n - 4` flat axes.
    pub fn coordinate(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(invalid("a codimension-4 subspace needs n >= 2"));
        }
        let d = (2 * n - 2) as usize;
        let directions = (0..d - 2)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
        Ok(SingularSpec { point: vec![0.0; d], directions })
    }

    fn validate(&self, n: u32) -> Result<()> {
        let d = (2 * n - 2) as usize;
        if self.point.len() != d || self.directions.len() + 2 != d {
            return Err(invalid(format!("singular set must have dimension {} in C^{}", d - 2, n - 1)));
        }
        for (i, a) in self.directions.iter().enumerate() {
            if a.len() != d {
                return Err(invalid("direction has the wrong length"));
            }
            for (j, b) in self.directions.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                if (dot - if i == j { 1.0 } else { 0.0 }).abs() > 1e-10 {
                    return Err(invalid("directions must be orthonormal"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples_per_ball: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallCover {
    pub eps0: f64,
    pub region_radius: f64,
    /// Centres in the flat coordinates; all lie on the singular set.
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    /// `sum r_a^{2n-3}`.
    pub budget: f64,
    /// Largest number of doubled balls `B_{2 r_a}` containing a sampled point.
    pub max_overlap: usize,
    pub seed: u64,
    pub samples_per_ball: usize,
    pub energy: f64,
    pub standard_error: f64,
    /// `energy / eps0`.
    pub constant: f64,
    /// Whether `chi` vanished at every lattice point of the singular set.
    pub vanishes_on_set: bool,
    /// Range of `chi` over all samples.
    pub chi_range: (f64, f64),
}

struct CoverGeometry {
    centers: Vec<Vec<f64>>,
    radius: f64,
    lattice: Vec<Vec<f64>>,
    neighbours: Vec<Vec<usize>>,
}

impl CoverGeometry {
    /// `chi` and `|grad chi|^2` at the flat point `z` and cone radius `rho`,
    /// using the balls in `near`.
    fn evaluate(&self, near: &[usize], z: &[f64], rho: f64) -> (f64, f64, usize) {
        let r = self.radius;
        let mut parts = Vec::with_capacity(near.len());
        let mut count = 0;
        for &b in near {
            let diff: Vec<f64> = z.iter().zip(&self.centers[b]).map(|(x, c)| x - c).collect();
            let d = (diff.iter().map(|x| x * x).sum::<f64>() + rho * rho).sqrt();
            if d < 2.0 * r {
                count += 1;
            }
            let (v, s) = ball_ramp(d / r);
            parts.push((v, s / r, diff, d));
        }
        let chi: f64 = parts.iter().map(|p| p.0).product();
        let mut grad2 = 0.0;
        for (i, p) in parts.iter().enumerate() {
            if p.1 == 0.0 {
                continue;
            }
            let gi = p.1 * parts.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, q)| q.0).product::<f64>();
            for (j, q) in parts.iter().enumerate() {
                if q.1 == 0.0 {
                    continue;
                }
                let gj = q.1 * parts.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, s)| s.0).product::<f64>();
                // <grad d_i, grad d_j> in the product metric
                let dot: f64 = p.2.iter().zip(&q.2).map(|(a, b)| a * b).sum::<f64>() + rho * rho;
                grad2 += gi * gj * dot / (p.3 * q.3);
            }
        }
        (chi, grad2, count)
    }
}

fn greedy_cover(spec: &SingularSpec, eps0: f64, region_radius: f64) -> CoverGeometry {
    let k = spec.directions.len();
    let radius = 0.5 * eps0;
    // closest point of the subspace to the origin
    let mut base = spec.point.clone();
    for d in &spec.directions {
        let c: f64 = base.iter().zip(d).map(|(x, y)| x * y).sum();
        for (x, y) in base.iter_mut().zip(d) {
            *x -= c * y;
        }
    }
    let reach2 = region_radius * region_radius - base.iter().map(|x| x * x).sum::<f64>();
    let mut lattice = Vec::new();
    if reach2 >= 0.0 {
        let reach = reach2.sqrt();
        // lattice fine enough that every point of the set is within 0.1 r of a node
        let h = if k == 0 { 1.0 } else { 0.2 * radius / (k as f64).sqrt() };
        let m = (reach / h).floor() as i64;
        let mut idx = vec![-m; k];
        loop {
            let x: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
            if x.iter().map(|v| v * v).sum::<f64>() <= reach2 {
                let mut p = base.clone();
                for (c, d) in x.iter().zip(&spec.directions) {
                    for (pi, di) in p.iter_mut().zip(d) {
                        *pi += c * di;
                    }
                }
                lattice.push(p);
            }
            let mut j = 0;
            while j < k {
                idx[j] += 1;
                if idx[j] <= m {
                    break;
                }
                idx[j] = -m;
                j += 1;
            }
            if j == k {
                break;
            }
        }
    }
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = Vec::new();
    for p in &lattice {
        if centers.iter().all(|c| dist2(c, p) >= radius * radius) {
            centers.push(p.clone());
        }
    }
    let neighbours = centers
        .iter()
        .map(|c| (0..centers.len()).filter(|&b| dist2(c, &centers[b]) < 16.0 * radius * radius).collect())
        .collect();
    CoverGeometry { centers, radius, lattice, neighbours }
}

/// Cutoff `chi = prod eta_bar(d(., y_a) / r_a)` vanishing near a codimension-4
/// subspace, with Monte-Carlo energy over the doubled balls.
pub fn ball_cover_cutoff(
    model: &FlatConeModel,
    spec: &SingularSpec,
    eps0: f64,
    region_radius: f64,
    mc: MonteCarlo,
) -> Result<BallCover> {
    let n = model.n;
    if n < 2 {
        return Err(invalid("ball covers need n >= 2"));
    }
    spec.validate(n)?;
    if !(eps0 > 0.0 && region_radius > 0.0) {
        return Err(invalid("eps0 and the region radius must be positive"));
    }
    if mc.samples_per_ball < 2 {
        return Err(invalid("need at least two samples per ball"));
    }
    let geo = greedy_cover(spec, eps0, region_radius);
    let exponent = 2 * n as i32 - 3;
    let budget = geo.centers.len() as f64 * geo.radius.powi(exponent);
    if budget > 1.0 {
        return Err(Error::CoverInfeasible { exponent, sum: budget });
    }
    let dim = 2 * n as usize;
    let r2 = 2.0 * geo.radius;
    let ball_measure = model.beta_bar * unit_ball_volume(dim as u32) * r2.powi(dim as i32);

    struct BallStats {
        mean: f64,
        var: f64,
        overlap: usize,
        lo: f64,
        hi: f64,
    }
    let stats: Vec<BallStats> = (0..geo.centers.len())
        .into_par_iter()
        .map(|a| {
            let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
            rng.set_stream(a as u64);
            let near = &geo.neighbours[a];
            let (mut sum, mut sum2, mut overlap, mut lo, mut hi) = (0.0, 0.0, 0, 1.0f64, 0.0f64);
            let mut x = vec![0.0; dim];
            for _ in 0..mc.samples_per_ball {
                // uniform in the Euclidean ball of (z', w) with rho = |w|
                loop {
                    for v in x.iter_mut() {
                        *v = rng.random_range(-1.0..1.0);
                    }
                    if x.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                        break;
                    }
                }
                let z: Vec<f64> = geo.centers[a].iter().zip(&x).map(|(c, v)| c + r2 * v).collect();
                let rho = r2 * x[dim - 2].hypot(x[dim - 1]);
                let (chi, grad2, count) = geo.evaluate(near, &z, rho);
                let f = grad2 / count.max(1) as f64;
                sum += f;
                sum2 += f * f;
                overlap = overlap.max(count);
                lo = lo.min(chi);
                hi = hi.max(chi);
            }
            let m = mc.samples_per_ball as f64;
            let mean = sum / m;
            BallStats { mean, var: (sum2 / m - mean * mean).max(0.0) / (m - 1.0), overlap, lo, hi }
        })
        .collect();

    let energy = stats.iter().map(|s| ball_measure * s.mean).sum::<f64>();
    let standard_error = stats.iter().map(|s| ball_measure * ball_measure * s.var).sum::<f64>().sqrt();
    let mut max_overlap = stats.iter().map(|s| s.overlap).max().unwrap_or(0);
    let mut vanishes_on_set = true;
    let near_all: Vec<usize> = (0..geo.centers.len()).collect();
    for p in &geo.lattice {
        let near: Vec<usize> = near_all
            .iter()
            .copied()
            .filter(|&b| geo.centers[b].iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() < 4.0 * r2 * r2)
            .collect();
        let (chi, _, count) = geo.evaluate(&near, p, 0.0);
        max_overlap = max_overlap.max(count);
        vanishes_on_set &= chi == 0.0;
    }
    let chi_range = stats.iter().fold((1.0f64, 0.0f64), |(l, h), s| (l.min(s.lo), h.max(s.hi)));
    Ok(BallCover {
        eps0,
        region_radius,
        radii: vec![geo.radius; geo.centers.len()],
        centers: geo.centers,
        budget,
        max_overlap,
        seed: mc.seed,
        samples_per_ball: mc.samples_per_ball,
        energy,
        standard_error,
        constant: energy / eps0,
        vanishes_on_set,
        chi_range,
    })
}

/// `int |grad eta_bar(d / r)|^2` for a single ball of radius `r` centred on the singular set.
pub fn single_ball_energy(model: &FlatConeModel, r: f64) -> f64 {
    let (lo, hi) = BALL_RAMP;
    let dim = 2 * model.n;
    let slope = 1.0 / (hi - lo);
    (slope / r).powi(2) * model.beta_bar * unit_ball_volume(dim) * r.powi(dim as i32) * (hi.powi(dim as i32) - lo.powi(dim as i32))
}

/// Where a volume profile is centred.
#[derive(Debug, Clone, Copy)]
pub enum VolumeSource<'a> {
    /// A point of the flat model at distance `rho0` from the singular set.
    Flat { model: FlatConeModel, rho0: f64 },
    /// A pole of a radial metric on the sphere.
    Radial { potential: &'a RadialKahlerPotential, pole: Pole },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub radii: Vec<f64>,
    /// `Vol(B_r) / r^{2n}`.
    pub ratios: Vec<f64>,
    /// Largest relative increase between consecutive ratios.
    pub max_increase: f64,
    /// Cone fraction from the small-radius limit, for centres on the singular set.
    pub angle_estimate: Option<f64>,
}

impl VolumeProfile {
    pub fn is_monotone(&self, tolerance: f64) -> bool {
        self.max_increase <= tolerance
    }
}

/// Geodesic distance from the pole at `z = 0` (or `z = inf`) to each node, with the
/// metric `2 Phi'' |dz|^2 / |z|^2`.
fn pole_distances(pot: &RadialKahlerPotential, pole: Pole) -> (Vec<f64>, Vec<f64>) {
    let g = pot.grid;
    let h = g.spacing();
    let n = g.len();
    let mut speed: Vec<f64> = pot.phi_doubleprime.iter().map(|v| (0.5 * v).sqrt()).collect();
    let mut enclosed: Vec<f64> = pot.phi_prime.iter().map(|v| 2.0 * PI * (v - pot.moment_limits().0)).collect();
    if pole == Pole::Infinity {
        speed.reverse();
        enclosed = pot.phi_prime.iter().rev().map(|v| 2.0 * PI * (pot.moment_limits().1 - v)).collect();
    }
    let start = exponential_tail(speed[0], speed[1], h);
    let dist: Vec<f64> = cumulative_integral(&speed, h).into_iter().map(|d| d + start).collect();
    debug_assert_eq!(dist.len(), n);
    (dist, enclosed)
}

pub fn volume_ratio_profile(source: VolumeSource<'_>, radii: &[f64]) -> Result<VolumeProfile> {
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("radii must be positive and increasing"));
    }
    let (ratios, limit_scale): (Vec<f64>, Option<f64>) = match source {
        VolumeSource::Flat { model, rho0 } => {
            if rho0 < 0.0 {
                return Err(invalid("distance to the singular set must be nonnegative"));
            }
            let dim = 2 * model.n as i32;
            let ratios = radii.iter().map(|&r| model.ball_volume(rho0, r) / r.powi(dim)).collect();
            (ratios, (rho0 == 0.0).then(|| unit_ball_volume(2 * model.n)))
        }
        VolumeSource::Radial { potential, pole } => {
            potential.check_positive()?;
            let (dist, enclosed) = pole_distances(potential, pole);
            let (lo, hi) = (dist[2], dist[dist.len() - 3]);
            if radii[0] < lo || radii[radii.len() - 1] > hi {
                return Err(invalid(format!("radii must lie in [{lo:.3e}, {hi:.3e}] for this grid")));
            }
            let ratios = radii
                .iter()
                .map(|&r| {
                    let j = dist.partition_point(|d| *d < r).clamp(2, dist.len() - 3);
                    (lagrange(&dist[j - 2..j + 2], &enclosed[j - 2..j + 2], r)) / (r * r)
                })
                .collect();
            (ratios, Some(PI))
        }
    };
    let max_increase = ratios
        .windows(2)
        .map(|w: &[f64]| (w[1] - w[0]) / w[0].abs())
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let angle_estimate = match limit_scale {
        Some(c) if radii.len() >= 3 => {
            // ratio = c b (1 + k r^2 + ...) over the three smallest radii
            let x: Vec<f64> = radii[..3].iter().map(|r| r * r).collect();
            let fit = least_squares(&[vec![1.0; 3], x], &ratios[..3]).ok_or_else(|| invalid("degenerate fit"))?;
            Some(fit[0] / c)
        }
        _ => None,
    };
    Ok(VolumeProfile { radii: radii.to_vec(), ratios, max_increase, angle_estimate })
}

/// Cubic Lagrange interpolation through four points.
fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..xs.len() {
        let mut w = ys[i];
        for j in 0..xs.len() {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        total += w;
    }
    total
}

/// `K = {inner <= |z'| <= outer, rho <= height}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    pub radii: Vec<f64>,
    /// `Vol(T_r(S) cap K)`.
    pub volumes: Vec<f64>,
    pub exponent: f64,
    /// Fitted `C_K` in `Vol = C_K r^p`.
    pub constant: f64,
    /// `pi b Vol_{2n-2}(K cap S)`.
    pub product_constant: f64,
}

pub fn tube_volume(model: &FlatConeModel, k: Annulus, radii: &[f64]) -> Result<TubeReport> {
    let n = model.n;
    if n < 2 {
        return Err(invalid("tubes around the singular set need n >= 2"));
    }
    if !(0.0 <= k.inner && k.inner < k.outer && k.height > 0.0) {
        return Err(invalid("annulus needs 0 <= inner < outer and positive height"));
    }
    if radii.len() < 2 || radii.iter().any(|&r| !(r > 0.0 && r <= k.height)) {
        return Err(invalid("need at least two radii in (0, height]"));
    }
    let d = 2 * n - 2;
    let shell = gauss_legendre(k.inner, k.outer, 4, |s| d as f64 * unit_ball_volume(d) * s.powi(d as i32 - 1));
    let volumes: Vec<f64> =
        radii.iter().map(|&r| shell * gauss_legendre(0.0, r, 1, |rho| model.circumference(rho))).collect();
    let x: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = volumes.iter().map(|v| v.ln()).collect();
    let fit = least_squares(&[vec![1.0; x.len()], x], &y).ok_or_else(|| invalid("degenerate fit"))?;
    Ok(TubeReport {
        radii: radii.to_vec(),
        volumes,
        exponent: fit[1],
        constant: fit[0].exp(),
        product_constant: PI * model.beta_bar * shell,
    })
}

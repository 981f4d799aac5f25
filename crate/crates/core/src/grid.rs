//! Uniform symmetric grids in the radial coordinate `t = log|z|^2`, with
//! quadrature and finite-difference helpers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform grid on `[-t_max, t_max]` with an odd number of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    t_max: f64,
    n_nodes: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { t_max: 16.0, n_nodes: 2049 }
    }
}

impl Grid {
    pub fn new(t_max: f64, n_nodes: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(invalid(format!("grid half-width must be positive, got {t_max}")));
        }
        if n_nodes < 9 || n_nodes.is_multiple_of(2) {
            return Err(invalid(format!("node count must be odd and at least 9, got {n_nodes}")));
        }
        Ok(Grid { t_max, n_nodes })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn t_min(&self) -> f64 {
        -self.t_max
    }

    pub fn len(&self) -> usize {
        self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.n_nodes == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.t_max / (self.n_nodes - 1) as f64
    }

    /// Index of the node at `t = 0`.
    pub fn center(&self) -> usize {
        self.n_nodes / 2
    }

    pub fn t(&self, i: usize) -> f64 {
        let c = self.center() as f64;
        (i as f64 - c) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.t(i)).collect()
    }

    /// Grid with every other node removed, if that still leaves an odd count.
    pub fn coarsened(&self) -> Option<Grid> {
        let n = self.n_nodes.div_ceil(2);
        Grid::new(self.t_max, n).ok()
    }

    pub fn refined(&self) -> Grid {
        Grid { t_max: self.t_max, n_nodes: 2 * self.n_nodes - 1 }
    }

    /// Fractional node position of `t`.
    pub fn position(&self, t: f64) -> f64 {
        (t + self.t_max) / self.spacing()
    }

    pub fn simpson_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let n = self.n_nodes;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        simpson(values, self.spacing())
    }

    /// Interpolates nodal values at `t` with a local cubic.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let n = values.len();
        let x = self.position(t).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).clamp(1, n - 3);
        let s = x - i as f64;
        let (a, b, c, d) = (values[i - 1], values[i], values[i + 1], values[i + 2]);
        // Lagrange cubic on nodes -1, 0, 1, 2.
        let l0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let l1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let l2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let l3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        a * l0 + b * l1 + c * l2 + d * l3
    }
}

/// Composite Simpson rule on uniformly spaced samples (odd length).
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    if n.is_multiple_of(2) {
        // Fall back to a trapezoid panel for the last interval.
        let last = 0.5 * h * (values[n - 2] + values[n - 1]);
        return simpson(&values[..n - 1], h) + last;
    }
    let mut s = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Weights of the integral over `[p, p+1]` of the degree-5 interpolant through
/// nodes `0..6`, for `p = 0..5`.
fn panel_weights() -> [[f64; 6]; 5] {
    let mut out = [[0.0; 6]; 5];
    for m in 0..6 {
        // Coefficients of the Lagrange basis polynomial L_m.
        let mut coeffs = vec![1.0];
        let mut denom = 1.0;
        for j in 0..6 {
            if j == m {
                continue;
            }
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * j as f64;
            }
            coeffs = next;
            denom *= m as f64 - j as f64;
        }
        for (p, row) in out.iter_mut().enumerate() {
            let (a, b) = (p as f64, p as f64 + 1.0);
            let mut v = 0.0;
            for (k, c) in coeffs.iter().enumerate() {
                let e = (k + 1) as i32;
                v += c * (b.powi(e) - a.powi(e)) / e as f64;
            }
            row[m] = v / denom;
        }
    }
    out
}

/// Running integral `F[i] = int_{x_0}^{x_i} f`, sixth-order accurate.
pub fn cumulative_integral(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 6 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (values[i - 1] + values[i]);
        }
        return out;
    }
    let w = panel_weights();
    for i in 0..n - 1 {
        let j = i.saturating_sub(2).min(n - 6);
        let p = i - j;
        let mut seg = 0.0;
        for m in 0..6 {
            seg += w[p][m] * values[j + m];
        }
        out[i + 1] = out[i] + h * seg;
    }
    out
}

/// First derivative, fourth order in the interior, one-sided at the ends.
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    if n < 5 {
        for i in 0..n {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            d[i] = (values[b] - values[a]) / ((b - a) as f64 * h);
        }
        return d;
    }
    for i in 2..n - 2 {
        d[i] = (-values[i + 2] + 8.0 * values[i + 1] - 8.0 * values[i - 1] + values[i - 2])
            / (12.0 * h);
    }
    for i in [0usize, 1] {
        d[i] = stencil5_first_at(&values[0..5], i as f64) / h;
        let r = n - 1 - i;
        d[r] = stencil5_first_at(&values[n - 5..n], (r - (n - 5)) as f64) / h;
    }
    d
}

/// First derivative with the eighth-order central stencil in the interior;
/// the four outermost nodes per side use [`derivative`].
pub fn derivative_8(values: &[f64], h: f64) -> Vec<f64> {
    const C: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let n = values.len();
    let mut d = derivative(values, h);
    for i in 4..n.saturating_sub(4) {
        let mut acc = 0.0;
        for (k, c) in C.iter().enumerate() {
            acc += c * (values[i + k + 1] - values[i - k - 1]);
        }
        d[i] = acc / h;
    }
    d
}

// Derivative of the quartic interpolant through 5 equispaced samples at
// position `x` in units of the spacing (0 = first sample).
fn stencil5_first_at(v: &[f64], x: f64) -> f64 {
    let mut d = 0.0;
    for m in 0..5 {
        // derivative of Lagrange basis L_m at x
        let mut denom = 1.0;
        for j in 0..5 {
            if j != m {
                denom *= m as f64 - j as f64;
            }
        }
        let mut s = 0.0;
        for k in 0..5 {
            if k == m {
                continue;
            }
            let mut prod = 1.0;
            for j in 0..5 {
                if j != m && j != k {
                    prod *= x - j as f64;
                }
            }
            s += prod;
        }
        d += v[m] * s / denom;
    }
    d
}

/// Second derivative with the standard centred three-point stencil; ends are
/// copied from their neighbours.
pub fn second_derivative_2(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h);
    }
    if n >= 3 {
        d[0] = d[1];
        d[n - 1] = d[n - 2];
    }
    d
}

/// Second derivative with the five-point stencil; the two outermost nodes
/// per side copy their neighbour.
pub fn second_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    if n < 5 {
        return second_derivative_2(values, h);
    }
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (-values[i + 2] + 16.0 * values[i + 1] - 30.0 * values[i] + 16.0 * values[i - 1] - values[i - 2])
            / (12.0 * h * h);
    }
    d[0] = d[2];
    d[1] = d[2];
    d[n - 1] = d[n - 3];
    d[n - 2] = d[n - 3];
    d
}

/// First derivative with the centred two-point stencil; one-sided at the ends.
pub fn derivative_2(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    if n >= 3 {
        d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
        d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    }
    d
}

/// Second derivative of `log f` for positive samples, fourth order, computed
/// from successive log-ratios so that exponentially small tails keep full
/// relative precision. The two outermost nodes on each side are NaN.
pub fn log_second_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![f64::NAN; n];
    if n < 5 {
        return out;
    }
    let d: Vec<f64> = (0..n - 1).map(|k| (values[k + 1] / values[k]).ln()).collect();
    for i in 2..n - 2 {
        out[i] = (-d[i + 1] + 15.0 * d[i] - 15.0 * d[i - 1] + d[i - 2]) / (12.0 * h * h);
    }
    out
}

/// First derivative of `log f` for positive samples, fourth order, from
/// log-ratios. One-sided near the ends.
pub fn log_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let logs: Vec<f64> = {
        // cumulative log relative to the first node keeps differences exact
        let mut acc = 0.0;
        let mut v = Vec::with_capacity(n);
        v.push(0.0);
        for k in 0..n - 1 {
            acc += (values[k + 1] / values[k]).ln();
            v.push(acc);
        }
        v
    };
    derivative(&logs, h)
}

/// Integral of `f` over `[t_end, inf)` (or `(-inf, t_end]`) assuming
/// exponential decay, estimated from the last two samples.
pub fn exponential_tail(f_end: f64, f_inner: f64, h: f64) -> f64 {
    if !(f_end > 0.0 && f_inner > 0.0) {
        return 0.0;
    }
    let rate = (f_inner / f_end).ln() / h;
    if rate <= 0.0 || !rate.is_finite() {
        return 0.0;
    }
    f_end / rate
}

/// `log int e^{v(t)} dt` for log-samples `v`, accumulated after shifting by
/// the maximum, with exponential tails beyond both ends.
pub fn log_integral(log_values: &[f64], h: f64) -> f64 {
    let n = log_values.len();
    let m = log_values.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    if !m.is_finite() {
        return m;
    }
    let e: Vec<f64> = log_values.iter().map(|v| (v - m).exp()).collect();
    let total = simpson(&e, h) + exponential_tail(e[0], e[1], h) + exponential_tail(e[n - 1], e[n - 2], h);
    m + total.ln()
}

/// `log sum e^{v_i}` with the maximum factored out.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.into_iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(sech(x))` without overflow.
pub fn log_sech(x: f64) -> f64 {
    let a = x.abs();
    std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p()
}

/// Root of an increasing function on `[lo, hi]` by bisection.
pub fn monotone_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    if !(f(lo) <= 0.0 && f(hi) >= 0.0) {
        return None;
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Least-squares fit of `y` against the given basis columns.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = columns.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = columns[i].iter().zip(&columns[j]).map(|(p, q)| p * q).sum();
        }
        a[i][k] = columns[i].iter().zip(y).map(|(p, q)| p * q).sum();
    }
    // Gaussian elimination with partial pivoting.
    for c in 0..k {
        let piv = (c..k).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        for r in c + 1..k {
            let f = a[r][c] / a[c][c];
            for j in c..=k {
                a[r][j] -= f * a[c][j];
            }
        }
    }
    let mut x = vec![0.0; k];
    for c in (0..k).rev() {
        let mut s = a[c][k];
        for j in c + 1..k {
            s -= a[c][j] * x[j];
        }
        x[c] = s / a[c][c];
    }
    Some(x)
}

//! Tridiagonal linear algebra.

use crate::error::{Error, Result};

/// Solves `A x = b` for tridiagonal `A` with partial pivoting.
///
/// `sub[i]` is `A[i+1][i]`, `diag[i]` is `A[i][i]`, `sup[i]` is `A[i][i+1]`.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(sub.len() + 1 == n && sup.len() + 1 == n && rhs.len() == n);
    if n == 1 {
        if diag[0] == 0.0 {
            return Err(Error::SingularSystem { row: 0 });
        }
        return Ok(vec![rhs[0] / diag[0]]);
    }
    // Upper factor has up to two superdiagonals after pivoting.
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut dl = sub.to_vec();
    let mut b = rhs.to_vec();
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                return Err(Error::SingularSystem { row: i });
            }
            let f = dl[i] / d[i];
            d[i + 1] -= f * du[i];
            b[i + 1] -= f * b[i];
            if i + 2 < n {
                du2[i] = 0.0;
            }
        } else {
            // swap rows i and i+1
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - f * tmp;
            du[i] = tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -f;
            }
            b.swap(i, i + 1);
            b[i + 1] -= f * b[i];
        }
        dl[i] = 0.0;
    }
    if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
        return Err(Error::SingularSystem { row: n - 1 });
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { row: 0 });
    }
    Ok(x)
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    /// Number of eigenvalues strictly less than `x` (Sturm count).
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0f64;
        for i in 0..self.diag.len() {
            let o2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            q = self.diag[i] - x - if i == 0 { 0.0 } else { o2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (self.diag[i].abs() + x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (zero-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(1e-300);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 4.0 * f64::EPSILON * scale.min(mid.abs().max(f64::MIN_POSITIVE)) + f64::MIN_POSITIVE {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

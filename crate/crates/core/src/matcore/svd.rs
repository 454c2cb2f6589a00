//! One-sided (Hestenes) Jacobi singular values.

use super::{Mat, MatError, Result};

pub const JACOBI_MAX_SWEEPS: usize = 60;

/// Pairs whose normalised inner product is below this are left alone.
const ROTATE_THRESHOLD: f64 = f64::EPSILON;
/// Sweep stops once every column pair is orthogonal to this relative level.
const CONVERGED: f64 = 1e-12;

/// Singular values in descending order.
///
/// Columns of the working matrix are rotated pairwise until mutually
/// orthogonal; the singular values are then the column norms. Wide inputs are
/// transposed first so the working matrix never has more columns than rows.
pub fn svd_values(a: &Mat) -> Result<Vec<f64>> {
    let w = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let (m, n) = w.shape();
    // column-major copy so each column is contiguous
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| w.column(j)).collect();

    let mut converged = n < 2;
    let mut worst = 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        worst = 0.0_f64;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = dots(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let ratio = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                worst = worst.max(ratio);
                if ratio <= ROTATE_THRESHOLD {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for i in 0..m {
                    let xp = cp[i];
                    let xq = cq[i];
                    cp[i] = c * xp - s * xq;
                    cq[i] = s * xp + c * xq;
                }
            }
        }
        if worst <= CONVERGED {
            converged = true;
        }
    }
    if !converged {
        return Err(MatError::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            off: worst,
        });
    }

    let mut sv: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    if sv.iter().any(|v| !v.is_finite()) {
        return Err(MatError::NonFinite {
            context: "svd_values",
        });
    }
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

fn dots(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    let mut g = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        a += xi * xi;
        b += yi * yi;
        g += xi * yi;
    }
    (a, b, g)
}

fn norm(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale
        * x.iter()
            .map(|v| (v / scale) * (v / scale))
            .sum::<f64>()
            .sqrt()
}

//! Controllability diagnostics, tracking metrics and smoothing.

mod savgol;

pub use savgol::savgol_filter;

use serde::{Deserialize, Serialize};

use crate::control::{lyapunov_value, ParameterTruth};
use crate::error::{Error, Result};
use crate::matcore::{hstack, mat_mul, svd_values, Mat};
use crate::plant::TrajectoryRecord;

/// Singular values below this fraction of the largest do not count towards the rank.
pub const RANK_RELATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityReport {
    /// `[B | AB | ... | A^{n-1} B]`.
    pub c_matrix: Mat,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Largest over smallest nonzero singular value.
    pub condition_number: f64,
}

pub fn controllability_report(a: &Mat, b: &Mat) -> Result<ControllabilityReport> {
    if !a.is_square() || b.rows() != a.rows() {
        return Err(Error::invalid(
            "controllability data",
            format!("a {:?}, b {:?}", a.shape(), b.shape()),
        ));
    }
    let mut blocks = vec![b.clone()];
    for _ in 1..a.rows() {
        let next = mat_mul(a, blocks.last().expect("nonempty"))?;
        blocks.push(next);
    }
    let refs: Vec<&Mat> = blocks.iter().collect();
    let c = hstack(&refs)?;
    let sv = svd_values(&c)?;
    let top = sv.first().copied().unwrap_or(0.0);
    let kept: Vec<f64> = sv
        .iter()
        .copied()
        .filter(|s| top > 0.0 && *s > RANK_RELATIVE_TOL * top)
        .collect();
    let condition_number = match kept.last() {
        Some(low) => top / low,
        None => f64::INFINITY,
    };
    Ok(ControllabilityReport {
        c_matrix: c,
        rank: kept.len(),
        singular_values: sv,
        condition_number,
    })
}

fn check_series(series: &[Vec<f64>], what: &'static str) -> Result<usize> {
    let first = series.first().ok_or(Error::EmptySeries { what })?;
    let dim = first.len();
    if series.iter().any(|s| s.len() != dim) {
        return Err(Error::invalid(what, "samples have different lengths"));
    }
    Ok(dim)
}

fn check_times(times: &[f64], len: usize, what: &'static str) -> Result<()> {
    if times.len() != len {
        return Err(Error::invalid(
            what,
            format!("{len} samples but {} time stamps", times.len()),
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(what, "time stamps must increase"));
    }
    Ok(())
}

/// Trapezoidal integral of `f` sampled at `times`.
fn trapezoid(times: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    times
        .windows(2)
        .enumerate()
        .map(|(i, w)| 0.5 * (w[1] - w[0]) * (f(i) + f(i + 1)))
        .sum()
}

/// Per-state mean absolute error.
pub fn mae(e: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = check_series(e, "error")?;
    let n = e.len() as f64;
    Ok((0..dim)
        .map(|j| e.iter().map(|s| s[j].abs()).sum::<f64>() / n)
        .collect())
}

/// Per-state integral of `t |e(t)|` (trapezoidal).
pub fn itae(e: &[Vec<f64>], times: &[f64]) -> Result<Vec<f64>> {
    let dim = check_series(e, "error")?;
    check_times(times, e.len(), "error")?;
    Ok((0..dim)
        .map(|j| trapezoid(times, |i| times[i] * e[i][j].abs()))
        .collect())
}

/// Integral of `|u(t)|_l` for `l` in {1, 2} (trapezoidal).
pub fn control_effort(u: &[Vec<f64>], times: &[f64], l: u32) -> Result<f64> {
    check_series(u, "input")?;
    check_times(times, u.len(), "input")?;
    let norm: fn(&[f64]) -> f64 = match l {
        1 => |v| v.iter().map(|c| c.abs()).sum(),
        2 => |v| v.iter().map(|c| c * c).sum::<f64>().sqrt(),
        _ => {
            return Err(Error::invalid(
                "norm order",
                format!("{l} (expected 1 or 2)"),
            ))
        }
    };
    Ok(trapezoid(times, |i| norm(&u[i])))
}

/// `V(t)` along a record: the error term always, the parameter term when the
/// truth is supplied and the record carries parameter snapshots.
pub fn lyapunov_trace(
    record: &TrajectoryRecord,
    p: &Mat,
    truth: Option<&ParameterTruth>,
) -> Result<Vec<f64>> {
    record
        .e
        .iter()
        .enumerate()
        .map(|(k, e)| lyapunov_value(e, p, record.theta.get(k), truth))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEffort {
    pub l1: f64,
    pub l2: f64,
}

/// Tracking metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mae: Vec<f64>,
    pub itae: Vec<f64>,
    pub ce: ControlEffort,
}

impl MetricsSummary {
    /// Metrics of `x` against `target` with inputs `u`.
    pub fn compute(
        times: &[f64],
        x: &[Vec<f64>],
        target: &[Vec<f64>],
        u: &[Vec<f64>],
    ) -> Result<Self> {
        if x.len() != target.len() {
            return Err(Error::invalid(
                "metrics",
                format!("{} states for {} target samples", x.len(), target.len()),
            ));
        }
        let e: Vec<Vec<f64>> = x
            .iter()
            .zip(target)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
            .collect();
        Ok(Self {
            mae: mae(&e)?,
            itae: itae(&e, times)?,
            ce: ControlEffort {
                l1: control_effort(u, times, 1)?,
                l2: control_effort(u, times, 2)?,
            },
        })
    }

    /// Element-wise ratio to a baseline run.
    pub fn normalized(&self, baseline: &MetricsSummary) -> MetricsSummary {
        let ratio =
            |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| safe_ratio(*x, *y)).collect();
        MetricsSummary {
            mae: ratio(&self.mae, &baseline.mae),
            itae: ratio(&self.itae, &baseline.itae),
            ce: ControlEffort {
                l1: safe_ratio(self.ce.l1, baseline.ce.l1),
                l2: safe_ratio(self.ce.l2, baseline.ce.l2),
            },
        }
    }
}

/// `a / b`, with `0 / 0 = 1`.
fn safe_ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::nominal_ghx_model;

    #[test]
    fn ghx_controllability() {
        let p = nominal_ghx_model();
        let r = controllability_report(&p.a, &p.b).unwrap();
        assert_eq!(r.c_matrix.shape(), (2, 4));
        assert!((r.singular_values[0] - 0.77214562).abs() < 1e-6);
        assert!((r.singular_values[1] - 0.00370246).abs() < 1e-6);
        assert_eq!(r.rank, 2);
        assert!(
            (208.0..=210.0).contains(&r.condition_number),
            "{}",
            r.condition_number
        );
    }

    #[test]
    fn trivially_controllable() {
        let r = controllability_report(&Mat::zeros(2, 2), &Mat::identity(2)).unwrap();
        assert_eq!(r.singular_values, vec![1.0, 1.0]);
        assert_eq!(r.rank, 2);
        assert_eq!(r.condition_number, 1.0);
    }

    #[test]
    fn metric_closed_forms() {
        let e = vec![vec![1.0], vec![-1.0], vec![2.0]];
        assert!((mae(&e).unwrap()[0] - 4.0 / 3.0).abs() < 1e-15);
        let zero = vec![vec![0.0, 0.0]; 4];
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(mae(&zero).unwrap(), vec![0.0, 0.0]);
        assert_eq!(itae(&zero, &t).unwrap(), vec![0.0, 0.0]);
        let ones = vec![vec![1.0]; 3];
        assert_eq!(itae(&ones, &[0.0, 1.0, 2.0]).unwrap(), vec![2.0]);
        assert!(matches!(mae(&[]), Err(Error::EmptySeries { .. })));
    }

    #[test]
    fn effort_closed_forms() {
        let u = vec![vec![3.0, 4.0]; 2];
        let t = [0.0, 1.0];
        assert_eq!(control_effort(&u, &t, 2).unwrap(), 5.0);
        assert_eq!(control_effort(&u, &t, 1).unwrap(), 7.0);
        assert_eq!(
            control_effort(&vec![vec![0.0, 0.0]; 2], &t, 2).unwrap(),
            0.0
        );
        assert!(control_effort(&u, &t, 3).is_err());
    }

    #[test]
    fn self_normalization_is_one() {
        let t = [0.0, 1.0, 2.0];
        let x = vec![vec![1.0, 2.0], vec![1.5, 2.0], vec![1.0, 3.0]];
        let tgt = vec![vec![1.0, 2.5]; 3];
        let u = vec![vec![0.1, -0.2]; 3];
        let m = MetricsSummary::compute(&t, &x, &tgt, &u).unwrap();
        let n = m.normalized(&m);
        assert_eq!(n.mae, vec![1.0, 1.0]);
        assert_eq!(n.itae, vec![1.0, 1.0]);
        assert_eq!((n.ce.l1, n.ce.l2), (1.0, 1.0));
    }
}

use serde::{Deserialize, Serialize};

use super::LqrDesign;
use crate::error::{Error, Result};
use crate::matcore::{mat_mul, solve_linear, Mat};
use crate::plant::{sample_count, simulate, ControlLaw, PlantModel, TruePlant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Synthetic,
    Csv,
}

/// Desired state trajectory sampled on a uniform grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub source: ReferenceSource,
}

impl TargetTrajectory {
    pub fn new(times: Vec<f64>, x: Vec<Vec<f64>>, source: ReferenceSource) -> Result<Self> {
        if times.len() < 2 || times.len() != x.len() {
            return Err(Error::invalid(
                "target",
                format!(
                    "{} times for {} samples (need at least 2)",
                    times.len(),
                    x.len()
                ),
            ));
        }
        let dt = times[1] - times[0];
        if times[0] != 0.0 || !(dt > 0.0) {
            return Err(Error::invalid(
                "target",
                "grid must start at 0 and increase",
            ));
        }
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::invalid(
                    "target",
                    format!("non-uniform grid at sample {}", i + 1),
                ));
            }
        }
        let n = x[0].len();
        for (i, row) in x.iter().enumerate() {
            if row.len() != n || n == 0 {
                return Err(Error::invalid(
                    "target",
                    format!("sample {i} has {} entries", row.len()),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "target",
                    format!("sample {i} is not finite"),
                ));
            }
        }
        Ok(Self { times, x, source })
    }

    /// Holds `x0` on `[0, horizon]`.
    pub fn constant(x0: &[f64], horizon: f64, dt: f64) -> Result<Self> {
        let n = sample_count(horizon, dt)?;
        let times = (0..n).map(|k| k as f64 * dt).collect();
        Self::new(times, vec![x0.to_vec(); n], ReferenceSource::Synthetic)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn state_dim(&self) -> usize {
        self.x[0].len()
    }

    /// Forward-difference derivative; the last sample repeats the previous slope.
    pub fn derivative(&self) -> Vec<Vec<f64>> {
        let dt = self.dt();
        let n = self.len();
        let mut d: Vec<Vec<f64>> = self
            .x
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| (b - a) / dt).collect())
            .collect();
        d.push(d[n - 2].clone());
        d
    }
}

/// LQR reference trajectory on the nominal plant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub x_r: Vec<Vec<f64>>,
    pub u_r: Vec<Vec<f64>>,
    pub x_target: Vec<Vec<f64>>,
    pub u_ff: Vec<Vec<f64>>,
    pub source: ReferenceSource,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn x_r_at(&self, k: usize) -> Mat {
        Mat::col(&self.x_r[k]).expect("finite reference")
    }

    pub fn u_r_at(&self, k: usize) -> Mat {
        Mat::col(&self.u_r[k]).expect("finite reference")
    }

    /// The target this reference was generated from.
    pub fn target(&self) -> TargetTrajectory {
        TargetTrajectory {
            times: self.times.clone(),
            x: self.x_target.clone(),
            source: self.source,
        }
    }
}

struct TargetLqr<'a> {
    k: &'a Mat,
    x_target: Vec<Mat>,
    u_ff: Vec<Mat>,
}

impl ControlLaw for TargetLqr<'_> {
    fn input(&self, k: usize, _t: f64, x: &Mat) -> Result<Mat> {
        let dx = x.sub(&self.x_target[k])?;
        Ok(self.u_ff[k].sub(&mat_mul(self.k, &dx)?)?)
    }

    fn reference(&self, k: usize) -> Option<Mat> {
        Some(self.x_target[k].clone())
    }
}

/// Simulates the nominal plant under `u = -K (x - x_target) + u_ff` from
/// `x(0) = x_target(0)`, with `u_ff = B^{-1} (dx_target/dt - A x_target - D)`.
pub fn generate_reference(
    design: &LqrDesign,
    model: &PlantModel,
    target: &TargetTrajectory,
) -> Result<ReferenceTrajectory> {
    if target.state_dim() != model.n() {
        return Err(Error::invalid(
            "target",
            format!(
                "state dimension {} does not match the plant ({})",
                target.state_dim(),
                model.n()
            ),
        ));
    }
    let x_target: Vec<Mat> = target
        .x
        .iter()
        .map(|v| Mat::col(v))
        .collect::<std::result::Result<_, _>>()?;
    let mut u_ff = Vec::with_capacity(target.len());
    for (xt, xd) in x_target.iter().zip(target.derivative()) {
        let rhs = Mat::col(&xd)?.sub(&mat_mul(&model.a, xt)?)?.sub(&model.d)?;
        u_ff.push(feedforward(&model.b, &rhs)?);
    }
    let plant = TruePlant::unperturbed(PlantModel {
        basis: crate::plant::NonlinearBasis::None,
        ..model.clone()
    })?;
    let mut law = TargetLqr {
        k: &design.k,
        x_target,
        u_ff,
    };
    let x0 = law.x_target[0].clone();
    let rec = simulate(&plant, &mut law, &x0, target.horizon(), target.dt())?;
    if rec.len() != target.len() {
        return Err(Error::invalid(
            "target",
            format!(
                "grid of {} samples does not match its horizon",
                target.len()
            ),
        ));
    }
    Ok(ReferenceTrajectory {
        times: rec.times,
        x_r: rec.x,
        u_r: rec.u,
        x_target: target.x.clone(),
        u_ff: law.u_ff.iter().map(|m| m.as_slice().to_vec()).collect(),
        source: target.source,
    })
}

fn feedforward(b: &Mat, rhs: &Mat) -> Result<Mat> {
    if b.is_square() {
        Ok(solve_linear(b, rhs)?)
    } else {
        let bt = b.transpose();
        Ok(solve_linear(&mat_mul(&bt, b)?, &mat_mul(&bt, rhs)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::nominal_ghx_model;

    #[test]
    fn equilibrium_hold() {
        let model = nominal_ghx_model();
        let design = LqrDesign::with_scales(&model, 10.0, 1000.0).unwrap();
        let u0 = Mat::col(&[0.3, 0.6]).unwrap();
        let x_eq = model.equilibrium(&u0).unwrap();
        let target = TargetTrajectory::constant(x_eq.as_slice(), 500.0, 1.0).unwrap();
        let r = generate_reference(&design, &model, &target).unwrap();
        assert_eq!(r.len(), 501);
        for (x, u) in r.x_r.iter().zip(&r.u_r) {
            for i in 0..2 {
                assert!((x[i] - x_eq[(i, 0)]).abs() < 1e-9 * x_eq.max_abs());
                assert!((u[i] - u0[(i, 0)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_irregular_grid() {
        let err = TargetTrajectory::new(
            vec![0.0, 1.0, 2.5],
            vec![vec![0.0]; 3],
            ReferenceSource::Csv,
        );
        assert!(err.is_err());
    }

    #[test]
    fn forward_difference() {
        let t = TargetTrajectory::new(
            vec![0.0, 2.0, 4.0],
            vec![vec![0.0], vec![4.0], vec![6.0]],
            ReferenceSource::Synthetic,
        )
        .unwrap();
        assert_eq!(t.derivative(), vec![vec![2.0], vec![1.0], vec![1.0]]);
    }
}

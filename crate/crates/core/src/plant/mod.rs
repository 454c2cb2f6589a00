//! The identified GHX plant, its uncertainty recipe and the fixed-step integrator.
//!
//! State `x = (m_dot_bypass, Q_ghx)`, input `u = (PV006, m_dot_pump_out)`.

mod perturbation;
mod sim;

pub use perturbation::{
    apply_uncertainty, true_plant_derivative, DisturbanceKind, DisturbanceSignal, PerturbationSpec,
    TruePlant,
};
pub(crate) use sim::guard as sim_guard;
pub use sim::{rk4_step, sample_count, simulate, ControlLaw, TrajectoryRecord, DIVERGENCE_GUARD};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{mat_mul, svd_values, Mat};

/// Smallest admissible singular value of the input matrix.
pub const MIN_INPUT_SINGULAR_VALUE: f64 = 1e-12;

/// Known nonlinear regressor `phi(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearBasis {
    #[default]
    None,
    /// Elementwise `sin(x)`.
    Sine,
    /// Elementwise `sin(x)` followed by the constant 1.
    SinePlusConstant,
}

impl NonlinearBasis {
    /// Output dimension for an `n`-dimensional state.
    pub fn dim(self, n: usize) -> usize {
        match self {
            NonlinearBasis::None => 0,
            NonlinearBasis::Sine => n,
            NonlinearBasis::SinePlusConstant => n + 1,
        }
    }

    pub fn eval(self, x: &[f64]) -> Vec<f64> {
        match self {
            NonlinearBasis::None => Vec::new(),
            NonlinearBasis::Sine => x.iter().map(|v| v.sin()).collect(),
            NonlinearBasis::SinePlusConstant => x
                .iter()
                .map(|v| v.sin())
                .chain(std::iter::once(1.0))
                .collect(),
        }
    }
}

/// Affine state-space model `dx/dt = A x + B u + D`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Mat,
    pub b: Mat,
    pub d: Mat,
    pub basis: NonlinearBasis,
}

impl PlantModel {
    pub fn new(a: Mat, b: Mat, d: Mat, basis: NonlinearBasis) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() {
            return Err(Error::invalid(
                "state matrix",
                format!("{:?} is not square", a.shape()),
            ));
        }
        if b.rows() != n {
            return Err(Error::invalid(
                "input matrix",
                format!("has {} rows, state dimension is {n}", b.rows()),
            ));
        }
        if d.shape() != (n, 1) {
            return Err(Error::invalid(
                "offset",
                format!("expected {n}x1, got {:?}", d.shape()),
            ));
        }
        let sv = svd_values(&b)?;
        let smallest = sv.last().copied().unwrap_or(0.0);
        if b.cols() > n || smallest <= MIN_INPUT_SINGULAR_VALUE {
            return Err(Error::invalid(
                "input matrix",
                format!("not full column rank (smallest singular value {smallest:e})"),
            ));
        }
        Ok(Self { a, b, d, basis })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    /// `A x + B u + D`.
    pub fn affine_derivative(&self, x: &Mat, u: &Mat) -> Result<Mat> {
        Ok(mat_mul(&self.a, x)?
            .add(&mat_mul(&self.b, u)?)?
            .add(&self.d)?)
    }

    /// Equilibrium state under a constant input, `-A^{-1} (B u + D)`.
    pub fn equilibrium(&self, u: &Mat) -> Result<Mat> {
        let rhs = mat_mul(&self.b, u)?.add(&self.d)?.scale(-1.0)?;
        Ok(crate::matcore::solve_linear(&self.a, &rhs)?)
    }

    /// Input holding `x` at rest, `B^{-1} (-A x - D)` (square `B` only).
    pub fn holding_input(&self, x: &Mat) -> Result<Mat> {
        let rhs = mat_mul(&self.a, x)?.add(&self.d)?.scale(-1.0)?;
        Ok(crate::matcore::solve_linear(&self.b, &rhs)?)
    }
}

/// The two-actuator GHX fit.
pub fn nominal_ghx_model() -> PlantModel {
    let a = Mat::from_rows(&[
        &[-1.27006037e-03, 0.00000000e+00],
        &[-1.67511974e+00, -4.89615042e-03],
    ])
    .expect("finite constants");
    let b = Mat::from_rows(&[&[-0.00083076, 0.00462962], &[0.51405729, 0.57604899]])
        .expect("finite constants");
    let d = Mat::col(&[-0.0022987, 0.68611759]).expect("finite constants");
    PlantModel::new(a, b, d, NonlinearBasis::None).expect("GHX input matrix is invertible")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ghx_constants() {
        let p = nominal_ghx_model();
        assert_eq!(p.a[(1, 0)], -1.67511974e+00);
        assert_eq!(p.a[(0, 1)], 0.0);
        assert_eq!(p.b[(1, 1)], 0.57604899);
        assert_eq!(p.d[(1, 0)], 0.68611759);
        assert_eq!(p.d[(0, 0)], -0.0022987);
        // lower triangular: eigenvalues are the diagonal, both negative
        assert!(p.a[(0, 0)] < 0.0 && p.a[(1, 1)] < 0.0);
        assert_eq!(p.a[(0, 0)], -1.27006037e-03);
        assert_eq!(p.a[(1, 1)], -4.89615042e-03);
    }

    #[test]
    fn basis_dimensions() {
        let x = [std::f64::consts::FRAC_PI_2, 0.0];
        assert!(NonlinearBasis::None.eval(&x).is_empty());
        assert_eq!(NonlinearBasis::Sine.eval(&x), vec![1.0, 0.0]);
        let spc = NonlinearBasis::SinePlusConstant.eval(&[0.3, -2.0]);
        assert_eq!(spc.len(), 3);
        assert_eq!(spc[2], 1.0);
        assert_eq!(NonlinearBasis::SinePlusConstant.dim(2), 3);
    }

    #[test]
    fn singular_input_matrix_rejected() {
        let p = nominal_ghx_model();
        let b = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        let err = PlantModel::new(p.a.clone(), b, p.d.clone(), NonlinearBasis::None).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidArgument {
                what: "input matrix",
                ..
            }
        ));
    }

    #[test]
    fn holding_input_is_consistent_with_equilibrium() {
        let p = nominal_ghx_model();
        let u = Mat::col(&[0.3, 0.9]).unwrap();
        let x = p.equilibrium(&u).unwrap();
        let back = p.holding_input(&x).unwrap();
        assert!(back.sub(&u).unwrap().max_abs() < 1e-10);
        let xdot = p.affine_derivative(&x, &u).unwrap();
        assert!(xdot.max_abs() < 1e-12);
    }
}

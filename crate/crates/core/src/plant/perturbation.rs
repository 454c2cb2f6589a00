use serde::{Deserialize, Serialize};

use super::PlantModel;
use crate::error::{Error, Result};
use crate::matcore::{mat_mul, solve_linear, spectral_norm, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    #[default]
    None,
    Sinusoid,
    Chirp,
}

/// Bounded matched disturbance `d(t)` injected in input coordinates.
///
/// Channel `i` carries `amplitude * sin(phase(t) + i * pi / 2)`, so every
/// component is bounded by `amplitude` and `|d(t)| <= amplitude * sqrt(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSignal {
    pub kind: DisturbanceKind,
    pub amplitude: f64,
    /// Start frequency (Hz); the only frequency for a sinusoid.
    pub f0: f64,
    /// End frequency of the chirp (Hz).
    pub f1: f64,
    /// Chirp sweep duration (s); 0 means "the run horizon" to scenario configs.
    pub horizon: f64,
}

impl Default for DisturbanceSignal {
    fn default() -> Self {
        Self::none()
    }
}

impl DisturbanceSignal {
    pub fn none() -> Self {
        Self {
            kind: DisturbanceKind::None,
            amplitude: 0.0,
            f0: 0.0,
            f1: 0.0,
            horizon: 0.0,
        }
    }

    /// Linear chirp with the default band (1 mHz to 10 mHz).
    pub fn chirp(amplitude: f64, horizon: f64) -> Self {
        Self {
            kind: DisturbanceKind::Chirp,
            amplitude,
            f0: 1e-3,
            f1: 1e-2,
            horizon,
        }
    }

    pub fn is_active(&self) -> bool {
        self.kind != DisturbanceKind::None && self.amplitude != 0.0
    }

    fn phase(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        match self.kind {
            DisturbanceKind::None => 0.0,
            DisturbanceKind::Sinusoid => TAU * self.f0 * t,
            DisturbanceKind::Chirp => {
                let rate = (self.f1 - self.f0) / self.horizon;
                TAU * (self.f0 * t + 0.5 * rate * t * t)
            }
        }
    }

    pub fn value(&self, t: f64, m: usize) -> Vec<f64> {
        if !self.is_active() {
            return vec![0.0; m];
        }
        let phase = self.phase(t);
        (0..m)
            .map(|i| self.amplitude * (phase + i as f64 * std::f64::consts::FRAC_PI_2).sin())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.amplitude, self.f0, self.f1, self.horizon]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.amplitude < 0.0 || self.f0 < 0.0 || self.f1 < 0.0 {
            return Err(Error::invalid("disturbance", format!("{self:?}")));
        }
        match self.kind {
            DisturbanceKind::None => {}
            DisturbanceKind::Sinusoid if self.f0 <= 0.0 => {
                return Err(Error::invalid("disturbance", "sinusoid needs f0 > 0"));
            }
            DisturbanceKind::Chirp if self.horizon <= 0.0 => {
                return Err(Error::invalid(
                    "disturbance",
                    "chirp horizon must be positive",
                ));
            }
            DisturbanceKind::Chirp if self.f1 <= 0.0 && self.f0 <= 0.0 => {
                return Err(Error::invalid(
                    "disturbance",
                    "chirp needs a nonzero frequency",
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Description of the "true" plant relative to the nominal model.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    /// Uncertainty level (1.5 = 50 %).
    pub multiplier: f64,
    /// Control effectiveness, `B_true = B_r Lambda`.
    pub lambda: Mat,
    /// Matched nonlinearity gain in `B_r` coordinates (`m x k` for the plant basis).
    pub theta_lr: Option<Mat>,
    /// `D_true - D_r`.
    pub d_tilde: Mat,
    pub disturbance: DisturbanceSignal,
}

impl PerturbationSpec {
    /// No perturbation at all.
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            multiplier: 1.0,
            lambda: Mat::identity(m),
            theta_lr: None,
            d_tilde: Mat::zeros(n, 1),
            disturbance: DisturbanceSignal::none(),
        }
    }

    pub fn with_multiplier(n: usize, m: usize, multiplier: f64) -> Self {
        Self {
            multiplier,
            ..Self::identity(n, m)
        }
    }

    /// Checks that `Lambda` is symmetric positive definite with `|Lambda| <= 1`.
    pub fn check_effectiveness_bound(&self) -> Result<()> {
        let l = &self.lambda;
        if l.asymmetry() > 1e-12 {
            return Err(Error::invalid("lambda", "not symmetric"));
        }
        if !l.is_positive_definite() {
            return Err(Error::invalid("lambda", "not positive definite"));
        }
        let s = spectral_norm(l)?;
        if s > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "lambda",
                format!("spectral norm {s} exceeds 1"),
            ));
        }
        Ok(())
    }
}

/// Applies the multiplier recipe to the uncertain entries.
///
/// `A[1,0]`, `B[1,0]` and `B[1,1]` are divided by the multiplier and `D[1]`
/// is multiplied by it. The returned spec echoes the implied
/// `Lambda = B_r^{-1} B_perturbed` and `d_tilde`; its `theta_lr` and
/// disturbance are carried over unchanged.
pub fn apply_uncertainty(
    nominal: &PlantModel,
    spec: &PerturbationSpec,
) -> Result<(PlantModel, PerturbationSpec)> {
    let k = spec.multiplier;
    if !k.is_finite() || k < 1.0 {
        return Err(Error::invalid("multiplier", format!("{k} (must be >= 1)")));
    }
    if nominal.n() < 2 || nominal.m() < 2 {
        return Err(Error::invalid(
            "plant",
            "the uncertainty recipe needs at least two states and two inputs",
        ));
    }
    let mut a = nominal.a.clone();
    let mut b = nominal.b.clone();
    let mut d = nominal.d.clone();
    a[(1, 0)] /= k;
    b[(1, 0)] /= k;
    b[(1, 1)] /= k;
    d[(1, 0)] *= k;
    let perturbed = PlantModel::new(a, b, d, nominal.basis)?;
    let lambda = solve_linear(&nominal.b, &perturbed.b)?;
    let d_tilde = perturbed.d.sub(&nominal.d)?;
    let echo = PerturbationSpec {
        multiplier: k,
        lambda,
        theta_lr: spec.theta_lr.clone(),
        d_tilde,
        disturbance: spec.disturbance,
    };
    Ok((perturbed, echo))
}

/// The true plant with everything needed to evaluate its right-hand side.
///
/// `dx/dt = A x + B u + B_r (theta_lr phi(x) + d(t)) + D`, where `B = B_r Lambda`
/// and `B_r = B Lambda^{-1}`.
#[derive(Debug, Clone)]
pub struct TruePlant {
    pub model: PlantModel,
    pub spec: PerturbationSpec,
    b_r: Mat,
}

impl TruePlant {
    pub fn new(model: PlantModel, spec: PerturbationSpec) -> Result<Self> {
        let m = model.m();
        if spec.lambda.shape() != (m, m) {
            return Err(Error::invalid(
                "lambda",
                format!("expected {m}x{m}, got {:?}", spec.lambda.shape()),
            ));
        }
        if let Some(th) = &spec.theta_lr {
            let k = model.basis.dim(model.n());
            if th.shape() != (m, k) {
                return Err(Error::invalid(
                    "theta_lr",
                    format!(
                        "expected {m}x{k} for basis {:?}, got {:?}",
                        model.basis,
                        th.shape()
                    ),
                ));
            }
        }
        spec.disturbance.validate()?;
        // B_r = B Lambda^{-1}  <=>  Lambda^T B_r^T = B^T
        let b_r = solve_linear(&spec.lambda.transpose(), &model.b.transpose())?.transpose();
        Ok(Self { model, spec, b_r })
    }

    /// Nominal plant with no perturbation.
    pub fn unperturbed(model: PlantModel) -> Result<Self> {
        let spec = PerturbationSpec::identity(model.n(), model.m());
        Self::new(model, spec)
    }

    pub fn b_r(&self) -> &Mat {
        &self.b_r
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn m(&self) -> usize {
        self.model.m()
    }

    pub fn derivative(&self, x: &Mat, u: &Mat, t: f64) -> Result<Mat> {
        let model = &self.model;
        let mut xdot = mat_mul(&model.a, x)?
            .add(&mat_mul(&model.b, u)?)?
            .add(&model.d)?;
        let m = model.m();
        let mut matched = vec![0.0; m];
        let mut any = false;
        if let Some(th) = &self.spec.theta_lr {
            let phi = Mat::col(&model.basis.eval(x.as_slice()))?;
            let f = mat_mul(th, &phi)?;
            matched
                .iter_mut()
                .zip(f.as_slice())
                .for_each(|(s, v)| *s += v);
            any = true;
        }
        if self.spec.disturbance.is_active() {
            let d = self.spec.disturbance.value(t, m);
            matched.iter_mut().zip(&d).for_each(|(s, v)| *s += v);
            any = true;
        }
        if any {
            xdot = xdot.add(&mat_mul(&self.b_r, &Mat::col(&matched)?)?)?;
        }
        if xdot.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "true plant derivative",
                t,
                x: x.as_slice().to_vec(),
            });
        }
        Ok(xdot)
    }
}

/// One-shot evaluation of the true plant right-hand side.
pub fn true_plant_derivative(
    model: &PlantModel,
    spec: &PerturbationSpec,
    x: &Mat,
    u: &Mat,
    t: f64,
) -> Result<Mat> {
    let plant = TruePlant::new(model.clone(), spec.clone())?;
    plant.derivative(x, u, t).map_err(|e| match e {
        Error::Mat(_) => Error::NonFinite {
            context: "true plant derivative",
            t,
            x: x.as_slice().to_vec(),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{nominal_ghx_model, NonlinearBasis};

    #[test]
    fn multiplier_one_is_identity() {
        let nom = nominal_ghx_model();
        let (p, echo) =
            apply_uncertainty(&nom, &PerturbationSpec::with_multiplier(2, 2, 1.0)).unwrap();
        assert_eq!(p, nom);
        assert!(echo.lambda.sub(&Mat::identity(2)).unwrap().max_abs() < 1e-15);
        assert_eq!(echo.d_tilde.max_abs(), 0.0);
    }

    #[test]
    fn fifty_percent_recipe() {
        let nom = nominal_ghx_model();
        let (p, echo) =
            apply_uncertainty(&nom, &PerturbationSpec::with_multiplier(2, 2, 1.5)).unwrap();
        assert!((p.d[(1, 0)] - 1.02917639).abs() < 1e-8);
        assert!((p.a[(1, 0)] - (-1.11674649)).abs() < 1e-8);
        assert_eq!(p.b[(1, 0)], 0.51405729 / 1.5);
        assert_eq!(p.b[(1, 1)], 0.57604899 / 1.5);
        // untouched entries
        assert_eq!(p.a[(0, 0)], nom.a[(0, 0)]);
        assert_eq!(p.a[(1, 1)], nom.a[(1, 1)]);
        assert_eq!(p.b.row(0), nom.b.row(0));
        assert_eq!(p.d[(0, 0)], nom.d[(0, 0)]);
        // echo
        assert!((echo.d_tilde[(1, 0)] - 0.5 * 0.68611759).abs() < 1e-15);
        let recon = mat_mul(&nom.b, &echo.lambda).unwrap();
        assert!(recon.sub(&p.b).unwrap().frobenius_norm() <= 1e-12);
    }

    #[test]
    fn multiplier_below_one_rejected() {
        let nom = nominal_ghx_model();
        assert!(apply_uncertainty(&nom, &PerturbationSpec::with_multiplier(2, 2, 0.9)).is_err());
    }

    #[test]
    fn affine_offset_only_at_origin() {
        let nom = nominal_ghx_model();
        let spec = PerturbationSpec::identity(2, 2);
        let z = Mat::zeros(2, 1);
        let xdot = true_plant_derivative(&nom, &spec, &z, &z, 0.0).unwrap();
        assert_eq!(xdot, nom.d);
    }

    #[test]
    fn sine_basis_vanishes_at_origin() {
        let mut nom = nominal_ghx_model();
        nom.basis = NonlinearBasis::Sine;
        let mut spec = PerturbationSpec::identity(2, 2);
        spec.theta_lr = Some(Mat::identity(2));
        let z = Mat::zeros(2, 1);
        let xdot = true_plant_derivative(&nom, &spec, &z, &z, 0.0).unwrap();
        assert_eq!(xdot, nom.d);
    }

    #[test]
    fn hand_arithmetic_at_ones() {
        let nom = nominal_ghx_model();
        let spec = PerturbationSpec::identity(2, 2);
        let x = Mat::col(&[1.0, 1.0]).unwrap();
        let u = Mat::zeros(2, 1);
        let xdot = true_plant_derivative(&nom, &spec, &x, &u, 0.0).unwrap();
        let e0 = -1.27006037e-03 + 0.0 + -0.0022987;
        let e1 = -1.67511974 + -4.89615042e-03 + 0.68611759;
        assert!((xdot[(0, 0)] - e0).abs() < 1e-15);
        assert!((xdot[(1, 0)] - e1).abs() < 1e-15);
    }

    #[test]
    fn chirp_is_bounded() {
        let d = DisturbanceSignal::chirp(0.05, 5250.0);
        for k in 0..=52_500 {
            let v = d.value(k as f64 * 0.1, 2);
            assert!(v.iter().all(|c| c.abs() <= 0.05));
            assert!((v[0] * v[0] + v[1] * v[1]).sqrt() <= 0.05 * 2f64.sqrt() + 1e-15);
        }
        assert_eq!(DisturbanceSignal::none().value(3.0, 2), vec![0.0, 0.0]);
    }

    #[test]
    fn effectiveness_bound() {
        let mut spec = PerturbationSpec::identity(2, 2);
        spec.lambda = Mat::scaled_identity(2, 0.8);
        spec.check_effectiveness_bound().unwrap();
        spec.lambda = Mat::scaled_identity(2, 1.2);
        assert!(spec.check_effectiveness_bound().is_err());
        spec.lambda = Mat::from_rows(&[&[0.5, 0.1], &[0.0, 0.5]]).unwrap();
        assert!(spec.check_effectiveness_bound().is_err());
    }
}

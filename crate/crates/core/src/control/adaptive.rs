use serde::{Deserialize, Serialize};

use super::{build_theta_star, is_hurwitz, solve_lyapunov, LqrDesign, ReferenceTrajectory};
use crate::error::{Error, Result};
use crate::matcore::{hstack, mat_mul, solve_linear, Mat};
use crate::plant::{
    rk4_step, sample_count, simulate, ControlLaw, NonlinearBasis, PlantModel, TrajectoryRecord,
    TruePlant,
};

/// How the parameter ODE is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationScheme {
    /// Explicit Euler on the parameters once per step; the state uses RK4.
    #[default]
    Euler,
    /// State, reference model and parameters advanced together by RK4.
    CoupledRk4,
}

/// Which parameter estimate the run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    /// `0.8` times the true effectiveness block, `0.75` times the true
    /// nonlinearity gain, and the nominal feedback `theta*_r`.
    #[default]
    Table2,
    /// `[I | 0 | theta*_r]`: the controller reduces to the nominal LQR.
    Nominal,
    /// The true parameters.
    Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveGains {
    pub gamma: Mat,
    pub sigma: f64,
    pub q_lyap: Mat,
}

impl AdaptiveGains {
    /// `Gamma = gamma_scale I_m`, `Q_lyap = q_lyap_scale I_n`.
    pub fn scaled(n: usize, m: usize, gamma_scale: f64, q_lyap_scale: f64, sigma: f64) -> Self {
        Self {
            gamma: Mat::scaled_identity(m, gamma_scale),
            sigma,
            q_lyap: Mat::scaled_identity(n, q_lyap_scale),
        }
    }

    /// The published hyperparameters: `Gamma = 1e-4 I`, `Q_lyap = 1e-6 I`, `sigma = 0`.
    pub fn table1(n: usize, m: usize) -> Self {
        Self::scaled(n, m, 1e-4, 1e-6, 0.0)
    }
}

/// Adaptive inner loop `u = theta_hat Phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveController {
    /// `[Lambda^{-1} | -Lambda^{-1} theta_lr | theta*]` estimate, `m x (m + k + n)`.
    pub theta_hat: Mat,
    pub gamma: Mat,
    pub sigma: f64,
    pub p_lyap: Mat,
    pub q_lyap: Mat,
    pub basis: NonlinearBasis,
    /// Nominal input matrix.
    pub b_r: Mat,
    /// Nominal offset, used by the reference model.
    pub d_r: Mat,
    pub a_h: Mat,
    pub theta_star_r: Mat,
    /// Disables the parameter update.
    pub frozen: bool,
    /// `-Gamma B_r^T P`.
    drive: Mat,
}

impl AdaptiveController {
    pub fn new(
        design: &LqrDesign,
        nominal: &PlantModel,
        basis: NonlinearBasis,
        gains: AdaptiveGains,
        theta0: Mat,
    ) -> Result<Self> {
        let n = nominal.n();
        let m = nominal.m();
        let width = m + basis.dim(n) + n;
        if theta0.shape() != (m, width) {
            return Err(Error::invalid(
                "initial parameters",
                format!(
                    "expected {m}x{width} for basis {basis:?}, got {:?}",
                    theta0.shape()
                ),
            ));
        }
        if gains.gamma.shape() != (m, m) || !gains.gamma.is_positive_definite() {
            return Err(Error::invalid(
                "adaptation gain",
                "must be m x m symmetric positive definite",
            ));
        }
        if !(gains.sigma >= 0.0 && gains.sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("{}", gains.sigma)));
        }
        if !gains.q_lyap.is_positive_definite() {
            return Err(Error::invalid(
                "Lyapunov weight",
                "not symmetric positive definite",
            ));
        }
        let p_lyap = solve_lyapunov(&design.a_h, &gains.q_lyap)?;
        let drive =
            mat_mul(&gains.gamma, &mat_mul(&nominal.b.transpose(), &p_lyap)?)?.scale(-1.0)?;
        Ok(Self {
            theta_hat: theta0,
            gamma: gains.gamma,
            sigma: gains.sigma,
            p_lyap,
            q_lyap: gains.q_lyap,
            basis,
            b_r: nominal.b.clone(),
            d_r: nominal.d.clone(),
            a_h: design.a_h.clone(),
            theta_star_r: design.theta_star_r(),
            frozen: false,
            drive,
        })
    }

    pub fn n(&self) -> usize {
        self.b_r.rows()
    }

    pub fn m(&self) -> usize {
        self.b_r.cols()
    }

    /// Column widths of the three parameter blocks.
    pub fn block_widths(&self) -> (usize, usize, usize) {
        (self.m(), self.basis.dim(self.n()), self.n())
    }

    /// `-Gamma B_r^T P e Phi^T - sigma theta`.
    fn rate(&self, theta: &Mat, e: &Mat, phi: &Mat) -> Result<Mat> {
        let g = mat_mul(&self.drive, e)?;
        let outer = mat_mul(&g, &phi.transpose())?;
        Ok(outer.add_scaled(theta, -self.sigma)?)
    }
}

/// Known reference-side nonlinearity `f1r(x_r)` added to the command.
pub type RefNonlinearity<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

/// `[r; phi(x); x]` for a precomputed command block `r`.
fn assemble_regressor(r: &[f64], x: &Mat, basis: NonlinearBasis) -> Mat {
    let xs = x.as_slice();
    let mut v = Vec::with_capacity(r.len() + basis.dim(xs.len()) + xs.len());
    v.extend_from_slice(r);
    v.extend(basis.eval(xs));
    v.extend_from_slice(xs);
    Mat::col(&v).expect("finite regressor")
}

/// `u_r - theta*_r x_r + f1r(x_r)`.
fn command(
    x_r: &[f64],
    u_r: &[f64],
    theta_star_r: &Mat,
    f1r: Option<RefNonlinearity>,
) -> Result<Vec<f64>> {
    let fb = mat_mul(theta_star_r, &Mat::col(x_r)?)?;
    let mut r: Vec<f64> = u_r.iter().zip(fb.as_slice()).map(|(u, f)| u - f).collect();
    if let Some(f) = f1r {
        let extra = f(x_r);
        if extra.len() != r.len() {
            return Err(Error::invalid(
                "reference nonlinearity",
                "wrong output dimension",
            ));
        }
        r.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
    }
    Ok(r)
}

/// Regressor `Phi = [u_r - theta*_r x_r + f1r(x_r); phi(x); x]` at sample `i`.
pub fn build_regressor(
    reference: &ReferenceTrajectory,
    i: usize,
    x: &Mat,
    basis: NonlinearBasis,
    theta_star_r: &Mat,
    f1r: Option<RefNonlinearity>,
) -> Result<Mat> {
    if i >= reference.len() {
        return Err(Error::invalid(
            "reference index",
            format!("{i} >= {}", reference.len()),
        ));
    }
    let r = command(&reference.x_r[i], &reference.u_r[i], theta_star_r, f1r)?;
    Ok(assemble_regressor(&r, x, basis))
}

/// `u = theta_hat Phi`.
pub fn adaptive_control_input(ctrl: &AdaptiveController, phi: &Mat) -> Result<Mat> {
    if phi.shape() != (ctrl.theta_hat.cols(), 1) {
        return Err(Error::invalid(
            "regressor",
            format!(
                "expected {}x1, got {:?}",
                ctrl.theta_hat.cols(),
                phi.shape()
            ),
        ));
    }
    Ok(mat_mul(&ctrl.theta_hat, phi)?)
}

/// One explicit Euler step of `d theta/dt = -Gamma B_r^T P e Phi^T - sigma theta`.
pub fn adaptive_update(ctrl: &mut AdaptiveController, e: &Mat, phi: &Mat, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(
            "time step",
            format!("{dt} (must be positive)"),
        ));
    }
    let non_finite = || Error::AdaptiveUpdateNonFinite {
        e_norm: e.norm2(),
        phi_norm: phi.norm2(),
    };
    let rate = ctrl
        .rate(&ctrl.theta_hat, e, phi)
        .map_err(|_| non_finite())?;
    ctrl.theta_hat = ctrl
        .theta_hat
        .add_scaled(&rate, dt)
        .map_err(|_| non_finite())?;
    Ok(())
}

/// The true parameter block and the weight `Lambda^T Gamma^{-1}` of the
/// parameter term in the Lyapunov function.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTruth {
    pub theta: Mat,
    pub weight: Mat,
}

impl ParameterTruth {
    pub fn new(theta: Mat, lambda: &Mat, gamma: &Mat) -> Result<Self> {
        // Lambda^T Gamma^{-1} = (Gamma^{-1} Lambda)^T, Gamma symmetric
        let weight = solve_linear(gamma, lambda)?.transpose();
        Ok(Self { theta, weight })
    }
}

/// `V = e^T P e + tr(theta_err^T W theta_err)`; the second term only when the truth is known.
pub fn lyapunov_value(
    e: &[f64],
    p: &Mat,
    theta_hat: Option<&Mat>,
    truth: Option<&ParameterTruth>,
) -> Result<f64> {
    let ev = Mat::col(e)?;
    let mut v = mat_mul(&ev.transpose(), &mat_mul(p, &ev)?)?[(0, 0)];
    if let (Some(th), Some(tr)) = (theta_hat, truth) {
        let err = th.sub(&tr.theta)?;
        v += mat_mul(&err.transpose(), &mat_mul(&tr.weight, &err)?)?.trace();
    }
    Ok(v)
}

/// Blocks of the true parameter matrix for a given plant and regressor basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParts {
    pub lambda_inv: Mat,
    /// Nonlinearity gain in the controller's basis (`m x k`), including the
    /// constant column `B_r^{-1} D_tilde` when the basis carries one.
    /// `None` when the basis is empty.
    pub ext: Option<Mat>,
    pub theta_star: Mat,
}

impl ThetaParts {
    pub fn from_plant(
        plant: &TruePlant,
        nominal: &PlantModel,
        a_h: &Mat,
        basis: NonlinearBasis,
    ) -> Result<Self> {
        let n = plant.n();
        let m = plant.m();
        let lambda_inv = plant.spec.lambda.inverse()?;
        let theta_star = build_theta_star(&plant.model.a, &plant.model.b, a_h)?;
        let k = basis.dim(n);
        if k == 0 {
            return Ok(Self {
                lambda_inv,
                ext: None,
                theta_star,
            });
        }
        let mut ext = Mat::zeros(m, k);
        let has_sine = |b: NonlinearBasis| b != NonlinearBasis::None;
        if let Some(th) = &plant.spec.theta_lr {
            if has_sine(plant.model.basis) {
                for i in 0..m {
                    for j in 0..n {
                        ext[(i, j)] = th[(i, j)];
                    }
                }
            }
            if basis == NonlinearBasis::SinePlusConstant
                && plant.model.basis == NonlinearBasis::SinePlusConstant
            {
                for i in 0..m {
                    ext[(i, n)] += th[(i, n)];
                }
            }
        }
        if basis == NonlinearBasis::SinePlusConstant {
            let c = solve_linear(&nominal.b, &plant.spec.d_tilde)?;
            for i in 0..m {
                ext[(i, n)] += c[(i, 0)];
            }
        }
        Ok(Self {
            lambda_inv,
            ext: Some(ext),
            theta_star,
        })
    }

    /// `[Lambda^{-1} | -Lambda^{-1} ext | theta*]`.
    pub fn assemble(&self) -> Result<Mat> {
        self.with_blocks(&self.lambda_inv, 1.0, &self.theta_star)
    }

    fn with_blocks(&self, first: &Mat, ext_scale: f64, last: &Mat) -> Result<Mat> {
        match &self.ext {
            Some(ext) => {
                let mid = mat_mul(first, &ext.scale(ext_scale)?)?.scale(-1.0)?;
                Ok(hstack(&[first, &mid, last])?)
            }
            None => Ok(hstack(&[first, last])?),
        }
    }

    pub fn initial(&self, init: ThetaInit, theta_star_r: &Mat) -> Result<Mat> {
        let m = self.lambda_inv.rows();
        match init {
            ThetaInit::Truth => self.assemble(),
            ThetaInit::Nominal => self.with_blocks(&Mat::identity(m), 0.0, theta_star_r),
            ThetaInit::Table2 => self.with_blocks(&self.lambda_inv.scale(0.8)?, 0.75, theta_star_r),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrackingOptions {
    pub scheme: AdaptationScheme,
    /// Requires the controller basis to carry the constant regressor.
    pub explicit_d: bool,
    /// Diagnostics only; the controller never reads it.
    pub truth: Option<ParameterTruth>,
    /// Initial plant state; defaults to the first reference sample.
    pub x0: Option<Mat>,
}

struct AdaptiveLaw<'a> {
    ctrl: AdaptiveController,
    reference: &'a ReferenceTrajectory,
    commands: Vec<Vec<f64>>,
}

impl ControlLaw for AdaptiveLaw<'_> {
    fn input(&self, k: usize, _t: f64, x: &Mat) -> Result<Mat> {
        let phi = assemble_regressor(&self.commands[k], x, self.ctrl.basis);
        Ok(mat_mul(&self.ctrl.theta_hat, &phi)?)
    }

    fn reference(&self, k: usize) -> Option<Mat> {
        Some(self.reference.x_r_at(k))
    }

    fn reference_input(&self, k: usize) -> Option<Mat> {
        Some(self.reference.u_r_at(k))
    }

    fn parameters(&self) -> Option<Mat> {
        Some(self.ctrl.theta_hat.clone())
    }

    fn advance(&mut self, k: usize, _t: f64, x: &Mat, dt: f64) -> Result<()> {
        if self.ctrl.frozen {
            return Ok(());
        }
        let phi = assemble_regressor(&self.commands[k], x, self.ctrl.basis);
        let e = x.sub(&self.reference.x_r_at(k))?;
        adaptive_update(&mut self.ctrl, &e, &phi, dt)
    }
}

/// Closed-loop run of the adaptive controller on the true plant.
///
/// Returns the record (with `V` filled in) and the final controller.
pub fn run_adaptive_tracking(
    plant: &TruePlant,
    reference: &ReferenceTrajectory,
    ctrl0: AdaptiveController,
    opts: &TrackingOptions,
) -> Result<(TrajectoryRecord, AdaptiveController)> {
    if opts.explicit_d && ctrl0.basis != NonlinearBasis::SinePlusConstant {
        return Err(Error::invalid(
            "basis",
            "explicit offset handling needs the sine_plus_constant basis",
        ));
    }
    if ctrl0.b_r.shape() != plant.model.b.shape() {
        return Err(Error::invalid(
            "controller",
            "input matrix shape does not match the plant",
        ));
    }
    let x0 = opts.x0.clone().unwrap_or_else(|| reference.x_r_at(0));
    let commands = reference
        .x_r
        .iter()
        .zip(&reference.u_r)
        .map(|(x, u)| command(x, u, &ctrl0.theta_star_r, None))
        .collect::<Result<Vec<_>>>()?;
    let (mut rec, ctrl) = match opts.scheme {
        AdaptationScheme::Euler => {
            let mut law = AdaptiveLaw {
                ctrl: ctrl0,
                reference,
                commands,
            };
            let rec = simulate(plant, &mut law, &x0, reference.horizon(), reference.dt())?;
            (rec, law.ctrl)
        }
        AdaptationScheme::CoupledRk4 => run_coupled(plant, reference, ctrl0, &commands, &x0)?,
    };
    for (k, v) in rec.v.iter_mut().enumerate() {
        *v = lyapunov_value(
            &rec.e[k],
            &ctrl.p_lyap,
            rec.theta.get(k),
            opts.truth.as_ref(),
        )?;
    }
    Ok((rec, ctrl))
}

fn run_coupled(
    plant: &TruePlant,
    reference: &ReferenceTrajectory,
    mut ctrl: AdaptiveController,
    commands: &[Vec<f64>],
    x0: &Mat,
) -> Result<(TrajectoryRecord, AdaptiveController)> {
    let n = ctrl.n();
    let (rows, cols) = ctrl.theta_hat.shape();
    let dt = reference.dt();
    let steps = sample_count(reference.horizon(), dt)?;
    let unpack = |z: &Mat| -> Result<(Mat, Mat, Mat)> {
        let s = z.as_slice();
        Ok((
            Mat::col(&s[..n])?,
            Mat::col(&s[n..2 * n])?,
            Mat::new(rows, cols, s[2 * n..].to_vec())?,
        ))
    };
    let pack = |x: &Mat, xr: &Mat, th: &Mat| -> Result<Mat> {
        let mut v = Vec::with_capacity(2 * n + rows * cols);
        v.extend_from_slice(x.as_slice());
        v.extend_from_slice(xr.as_slice());
        v.extend_from_slice(th.as_slice());
        Ok(Mat::col(&v)?)
    };
    let mut z = pack(x0, &reference.x_r_at(0), &ctrl.theta_hat)?;
    let mut rec = TrajectoryRecord::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let (x, xr, th) = unpack(&z)?;
        crate::plant::sim_guard(t, &x)?;
        let phi = assemble_regressor(&commands[k], &x, ctrl.basis);
        let u = mat_mul(&th, &phi)?;
        rec.push(t, &x, Some(&xr), &u, Some(&reference.u_r_at(k)));
        rec.theta.push(th);
        if k + 1 == steps {
            break;
        }
        let r = Mat::col(&commands[k])?;
        let forcing = mat_mul(&ctrl.b_r, &r)?.add(&ctrl.d_r)?;
        let frozen = ctrl.frozen;
        let c = &ctrl;
        z = rk4_step(
            |s, zz| {
                let (x, xr, th) = unpack(zz)?;
                let phi = assemble_regressor(&commands[k], &x, c.basis);
                let u = mat_mul(&th, &phi)?;
                let dx = plant.derivative(&x, &u, s)?;
                let dxr = mat_mul(&c.a_h, &xr)?.add(&forcing)?;
                let dth = if frozen {
                    Mat::zeros(rows, cols)
                } else {
                    c.rate(&th, &x.sub(&xr)?, &phi)?
                };
                pack(&dx, &dxr, &dth)
            },
            &z,
            t,
            dt,
        )
        .map_err(|err| match err {
            Error::NonFinite { .. } | Error::Mat(_) => Error::AdaptiveUpdateNonFinite {
                e_norm: x.sub(&xr).map(|e| e.norm2()).unwrap_or(f64::NAN),
                phi_norm: phi.norm2(),
            },
            other => other,
        })?;
    }
    let (_, _, th) = unpack(&z)?;
    ctrl.theta_hat = th;
    Ok((rec, ctrl))
}

struct LqrTracking<'a> {
    k: &'a Mat,
    reference: &'a ReferenceTrajectory,
}

impl ControlLaw for LqrTracking<'_> {
    fn input(&self, k: usize, _t: f64, x: &Mat) -> Result<Mat> {
        let dx = x.sub(&self.reference.x_r_at(k))?;
        Ok(self.reference.u_r_at(k).sub(&mat_mul(self.k, &dx)?)?)
    }

    fn reference(&self, k: usize) -> Option<Mat> {
        Some(self.reference.x_r_at(k))
    }

    fn reference_input(&self, k: usize) -> Option<Mat> {
        Some(self.reference.u_r_at(k))
    }
}

/// Fixed-gain tracking `u = -K (x - x_r) + u_r` of the reference on `plant`.
pub fn run_lqr_tracking(
    plant: &TruePlant,
    design: &LqrDesign,
    reference: &ReferenceTrajectory,
) -> Result<TrajectoryRecord> {
    if !is_hurwitz(&design.a_h)? {
        return Err(Error::NotHurwitz {
            context: "LQR closed loop",
        });
    }
    let mut law = LqrTracking {
        k: &design.k,
        reference,
    };
    simulate(
        plant,
        &mut law,
        &reference.x_r_at(0),
        reference.horizon(),
        reference.dt(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{generate_reference, TargetTrajectory};
    use crate::plant::{nominal_ghx_model, PerturbationSpec};

    fn setup() -> (PlantModel, LqrDesign) {
        let model = nominal_ghx_model();
        let design = LqrDesign::with_scales(&model, 10.0, 1000.0).unwrap();
        (model, design)
    }

    #[test]
    fn regressor_blocks() {
        let (model, design) = setup();
        let target = TargetTrajectory::constant(&[0.0, 0.0], 10.0, 1.0).unwrap();
        let mut r = generate_reference(&design, &model, &target).unwrap();
        r.u_r
            .iter_mut()
            .for_each(|u| u.iter_mut().for_each(|v| *v = 0.0));
        r.x_r
            .iter_mut()
            .for_each(|u| u.iter_mut().for_each(|v| *v = 0.0));
        let z = Mat::zeros(2, 1);
        let th = design.theta_star_r();
        let phi = build_regressor(&r, 0, &z, NonlinearBasis::None, &th, None).unwrap();
        assert_eq!(phi, Mat::zeros(4, 1));
        let x = Mat::col(&[std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        let phi = build_regressor(&r, 0, &x, NonlinearBasis::Sine, &th, None).unwrap();
        assert_eq!(&phi.as_slice()[2..4], &[1.0, 0.0]);
        let phi = build_regressor(&r, 3, &x, NonlinearBasis::SinePlusConstant, &th, None).unwrap();
        assert_eq!(phi.rows(), 7);
        assert_eq!(phi[(4, 0)], 1.0);
        assert!(build_regressor(&r, 99, &x, NonlinearBasis::None, &th, None).is_err());
    }

    fn controller(theta0: Mat, gamma: f64, sigma: f64) -> AdaptiveController {
        let (model, design) = setup();
        let gains = AdaptiveGains::scaled(2, 2, gamma, 1e-6, sigma);
        AdaptiveController::new(&design, &model, NonlinearBasis::None, gains, theta0).unwrap()
    }

    #[test]
    fn input_passthrough() {
        let zero = controller(Mat::zeros(2, 4), 1e-4, 0.0);
        let phi = Mat::col(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            adaptive_control_input(&zero, &phi).unwrap(),
            Mat::zeros(2, 1)
        );
        let th = hstack(&[&Mat::identity(2), &Mat::zeros(2, 2)]).unwrap();
        let pass = controller(th, 1e-4, 0.0);
        assert_eq!(
            adaptive_control_input(&pass, &phi).unwrap().as_slice(),
            &[1.0, 2.0]
        );
        assert!(adaptive_control_input(&pass, &Mat::zeros(3, 1)).is_err());
    }

    #[test]
    fn update_trivial_cases() {
        let th0 = Mat::from_rows(&[&[1.0, 2.0, 3.0, 4.0], &[-1.0, 0.5, 0.0, 2.0]]).unwrap();
        let phi = Mat::col(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let e = Mat::zeros(2, 1);
        let mut c = controller(th0.clone(), 1e-4, 0.0);
        adaptive_update(&mut c, &e, &phi, 1.0).unwrap();
        assert_eq!(c.theta_hat, th0);
        let mut c = controller(th0.clone(), 1e-4, 0.1);
        adaptive_update(&mut c, &e, &phi, 0.5).unwrap();
        let expect = th0.scale(1.0 - 0.1 * 0.5).unwrap();
        assert!(c.theta_hat.sub(&expect).unwrap().max_abs() < 1e-15);
        assert!(adaptive_update(&mut c, &e, &phi, 0.0).is_err());
    }

    #[test]
    fn update_hand_computation() {
        let (model, _) = setup();
        let mut c = controller(Mat::zeros(2, 4), 1e-4, 0.0);
        let e = Mat::col(&[1.0, 0.0]).unwrap();
        let phi = Mat::col(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        adaptive_update(&mut c, &e, &phi, 1.0).unwrap();
        let p = &c.p_lyap;
        let b = &model.b;
        // entry (i, 0) = -gamma * sum_j B[j][i] * P[j][0]
        for i in 0..2 {
            let want = -1e-4 * (b[(0, i)] * p[(0, 0)] + b[(1, i)] * p[(1, 0)]);
            assert!((c.theta_hat[(i, 0)] - want).abs() <= 1e-15 * want.abs().max(1e-300));
            for j in 1..4 {
                assert_eq!(c.theta_hat[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn truth_reproduces_reference_closed_loop() {
        let (model, design) = setup();
        let (pm, spec) =
            crate::plant::apply_uncertainty(&model, &PerturbationSpec::with_multiplier(2, 2, 1.5))
                .unwrap();
        let plant = TruePlant::new(pm, spec).unwrap();
        let parts = ThetaParts::from_plant(
            &plant,
            &model,
            &design.a_h,
            NonlinearBasis::SinePlusConstant,
        )
        .unwrap();
        let theta = parts.assemble().unwrap();
        // B_p theta* = A_h - A_p and the constant column cancels D_tilde
        let resid = plant
            .model
            .a
            .add(&mat_mul(&plant.model.b, &parts.theta_star).unwrap())
            .unwrap()
            .sub(&design.a_h)
            .unwrap();
        assert!(resid.frobenius_norm() < 1e-10);
        assert_eq!(theta.shape(), (2, 7));
        let off = mat_mul(&plant.model.b, &theta.columns(2, 3)).unwrap();
        assert!((off[(1, 2)] + plant.spec.d_tilde[(1, 0)]).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_value_terms() {
        let p = Mat::identity(2);
        assert_eq!(lyapunov_value(&[1.0, 0.0], &p, None, None).unwrap(), 1.0);
        let th = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let truth = ParameterTruth::new(th.clone(), &Mat::identity(2), &Mat::identity(2)).unwrap();
        assert_eq!(
            lyapunov_value(&[0.0, 0.0], &p, Some(&th), Some(&truth)).unwrap(),
            0.0
        );
    }
}

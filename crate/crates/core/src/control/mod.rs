//! LQR design, Lyapunov solver, matching construction, reference generation
//! and the adaptive law.

mod adaptive;
mod reference;

pub use adaptive::{
    adaptive_control_input, adaptive_update, build_regressor, lyapunov_value,
    run_adaptive_tracking, run_lqr_tracking, AdaptationScheme, AdaptiveController, AdaptiveGains,
    ParameterTruth, ThetaInit, ThetaParts, TrackingOptions,
};
pub use reference::{generate_reference, ReferenceSource, ReferenceTrajectory, TargetTrajectory};

use crate::error::{Error, Result};
use crate::matcore::{kron, mat_mul, solve_linear, Mat};
use crate::plant::PlantModel;

/// Target residual for the Riccati iteration.
pub const CARE_TOL: f64 = 1e-10;
/// Largest residual accepted when the iteration stalls on rounding.
pub const CARE_ACCEPT: f64 = 1e-8;
pub const CARE_MAX_ITER: usize = 100;
/// Required residual of the Lyapunov solve.
pub const LYAP_TOL: f64 = 1e-10;
/// Largest matching residual accepted by [`build_theta_star`].
pub const MATCHING_ACCEPT: f64 = 1e-8;

/// True when every eigenvalue of `a` has negative real part.
///
/// Uses trace/determinant for 1x1 and 2x2 matrices and the Lyapunov test
/// (`A^T P + P A = -I` has a positive definite solution) otherwise.
pub fn is_hurwitz(a: &Mat) -> Result<bool> {
    if !a.is_square() {
        return Err(Error::invalid(
            "matrix",
            format!("{:?} is not square", a.shape()),
        ));
    }
    match a.rows() {
        1 => Ok(a[(0, 0)] < 0.0),
        2 => Ok(a.trace() < 0.0 && a.determinant()? > 0.0),
        n => match lyapunov_raw(a, &Mat::identity(n)) {
            Ok(p) => Ok(p.is_positive_definite()),
            Err(_) => Ok(false),
        },
    }
}

/// Solves `P A + A^T P = -Q` by vectorisation, without checking stability.
fn lyapunov_raw(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.rows();
    let at = a.transpose();
    let i = Mat::identity(n);
    // column-stacked vec: vec(A^T P) = (I kron A^T) vec P, vec(P A) = (A^T kron I) vec P
    let op = kron(&i, &at).add(&kron(&at, &i))?;
    let mut rhs = Mat::zeros(n * n, 1);
    for c in 0..n {
        for r in 0..n {
            rhs[(c * n + r, 0)] = -q[(r, c)];
        }
    }
    let v = solve_linear(&op, &rhs)?;
    let mut p = Mat::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            p[(r, c)] = v[(c * n + r, 0)];
        }
    }
    Ok(p.symmetrize()?)
}

/// `|P A + A^T P + Q|_F`.
pub fn lyapunov_residual(a: &Mat, p: &Mat, q: &Mat) -> Result<f64> {
    let pa = mat_mul(p, a)?;
    Ok(pa.add(&pa.transpose())?.add(q)?.frobenius_norm())
}

/// Symmetric `P` with `P A_h + A_h^T P = -Q`.
pub fn solve_lyapunov(a_h: &Mat, q: &Mat) -> Result<Mat> {
    if !is_hurwitz(a_h)? {
        return Err(Error::NotHurwitz {
            context: "Lyapunov equation",
        });
    }
    if q.shape() != a_h.shape() {
        return Err(Error::invalid(
            "Lyapunov weight",
            format!("expected {:?}, got {:?}", a_h.shape(), q.shape()),
        ));
    }
    if q.asymmetry() > 1e-12 * q.max_abs().max(1.0) {
        return Err(Error::invalid("Lyapunov weight", "not symmetric"));
    }
    let p = lyapunov_raw(a_h, q)?;
    if q.is_positive_definite() && !p.is_positive_definite() {
        return Err(Error::LyapunovIndefinite);
    }
    Ok(p)
}

/// `|A^T P + P A - P B R^{-1} B^T P + Q|_F`.
pub fn care_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<f64> {
    let pa = mat_mul(p, a)?;
    let bt_p = mat_mul(&b.transpose(), p)?;
    let quad = mat_mul(&bt_p.transpose(), &solve_linear(r, &bt_p)?)?;
    Ok(pa
        .add(&pa.transpose())?
        .sub(&quad)?
        .add(q)?
        .frobenius_norm())
}

/// Stabilising solution of the continuous algebraic Riccati equation.
///
/// Newton–Kleinman from `K0 = 0` when `a` is Hurwitz. Otherwise a
/// stabilising start is built with Bass's construction, which needs `(a, b)`
/// controllable.
pub fn solve_care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    check_care_shapes(a, b, q, r)?;
    let k0 = if is_hurwitz(a)? {
        Mat::zeros(b.cols(), a.rows())
    } else {
        bass_gain(a, b)?
    };
    solve_care_with_gain(a, b, q, r, &k0)
}

fn check_care_shapes(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<()> {
    let n = a.rows();
    let m = b.cols();
    if !a.is_square() || b.rows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::invalid(
            "Riccati data",
            format!(
                "shapes a {:?}, b {:?}, q {:?}, r {:?}",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape()
            ),
        ));
    }
    if !r.is_positive_definite() {
        return Err(Error::invalid(
            "input weight",
            "not symmetric positive definite",
        ));
    }
    if q.asymmetry() > 1e-12 * q.max_abs().max(1.0) {
        return Err(Error::invalid("state weight", "not symmetric"));
    }
    Ok(())
}

/// `K = B^T Z^{-1}` with `(A + beta I) Z + Z (A + beta I)^T = 2 B B^T`, `beta > |A|`.
fn bass_gain(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.rows();
    let beta = a.frobenius_norm() + 1.0;
    // shifted = -(A + beta I) is Hurwitz; Z shifted^T + shifted Z = -2 B B^T
    let shifted = a.add(&Mat::scaled_identity(n, beta))?.scale(-1.0)?;
    let bbt = mat_mul(b, &b.transpose())?.scale(2.0)?;
    let z = lyapunov_raw(&shifted.transpose(), &bbt).map_err(|_| Error::NoStabilizingStart)?;
    if !z.is_positive_definite() {
        return Err(Error::NoStabilizingStart);
    }
    let k = solve_linear(&z, b)?.transpose();
    if !is_hurwitz(&a.sub(&mat_mul(b, &k)?)?)? {
        return Err(Error::NoStabilizingStart);
    }
    Ok(k)
}

/// Newton–Kleinman from a user-supplied stabilising gain `k0`.
///
/// Iterates past [`CARE_TOL`] until the residual stops shrinking, so the
/// returned `P` is accurate to rounding rather than to the residual bound.
pub fn solve_care_with_gain(a: &Mat, b: &Mat, q: &Mat, r: &Mat, k0: &Mat) -> Result<Mat> {
    check_care_shapes(a, b, q, r)?;
    if k0.shape() != (b.cols(), a.rows()) {
        return Err(Error::invalid("initial gain", format!("{:?}", k0.shape())));
    }
    if !is_hurwitz(&a.sub(&mat_mul(b, k0)?)?)? {
        return Err(Error::NoStabilizingStart);
    }
    let bt = b.transpose();
    let mut k = k0.clone();
    let mut best: Option<(f64, Mat)> = None;
    let mut since_improved = 0;
    for _ in 0..CARE_MAX_ITER {
        let ac = a.sub(&mat_mul(b, &k)?)?;
        let w = q.add(&mat_mul(&k.transpose(), &mat_mul(r, &k)?)?)?;
        let p = lyapunov_raw(&ac, &w)?;
        k = solve_linear(r, &mat_mul(&bt, &p)?)?;
        let res = care_residual(a, b, q, r, &p)?;
        if res == 0.0 {
            return Ok(p);
        }
        if best.as_ref().is_none_or(|(r0, _)| res < *r0) {
            best = Some((res, p));
            since_improved = 0;
        } else {
            since_improved += 1;
        }
        // quadratic convergence has ended; further steps only shuffle rounding
        if since_improved >= 3 {
            break;
        }
    }
    let (res, p) = best.expect("at least one iteration ran");
    if res <= CARE_ACCEPT {
        Ok(p)
    } else {
        Err(Error::CareStall {
            iterations: CARE_MAX_ITER,
            residual: res,
        })
    }
}

/// LQR state-feedback design for a nominal model.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrDesign {
    pub q: Mat,
    pub r: Mat,
    pub p_care: Mat,
    /// `K = R^{-1} B^T P`.
    pub k: Mat,
    /// `A_h = A - B K`.
    pub a_h: Mat,
    pub care_residual: f64,
}

impl LqrDesign {
    pub fn new(model: &PlantModel, q: Mat, r: Mat) -> Result<Self> {
        if !q.is_positive_definite() {
            return Err(Error::invalid(
                "state weight",
                "not symmetric positive definite",
            ));
        }
        let p = solve_care(&model.a, &model.b, &q, &r)?;
        if !p.is_positive_definite() {
            return Err(Error::invalid("Riccati solution", "not positive definite"));
        }
        let k = solve_linear(&r, &mat_mul(&model.b.transpose(), &p)?)?;
        let a_h = model.a.sub(&mat_mul(&model.b, &k)?)?;
        if !is_hurwitz(&a_h)? {
            return Err(Error::NotHurwitz {
                context: "LQR closed loop",
            });
        }
        let care_residual = care_residual(&model.a, &model.b, &q, &r, &p)?;
        Ok(Self {
            q,
            r,
            p_care: p,
            k,
            a_h,
            care_residual,
        })
    }

    /// Scaled-identity weights `Q = q_scale I`, `R = r_scale I`.
    pub fn with_scales(model: &PlantModel, q_scale: f64, r_scale: f64) -> Result<Self> {
        Self::new(
            model,
            Mat::scaled_identity(model.n(), q_scale),
            Mat::scaled_identity(model.m(), r_scale),
        )
    }

    /// Reference-model feedback block `theta*_r = -K` (so `A_r + B_r theta*_r = A_h`).
    pub fn theta_star_r(&self) -> Mat {
        self.k.scale(-1.0).expect("finite gain")
    }
}

/// `theta*` with `A_true + B_true theta* = A_h`.
///
/// Square input matrices are solved directly, tall ones in the least-squares
/// sense. A residual above [`MATCHING_ACCEPT`] means `A_h - A_true` is not in
/// the span of `B_true`.
pub fn build_theta_star(a_true: &Mat, b_true: &Mat, a_h: &Mat) -> Result<Mat> {
    if a_true.shape() != a_h.shape() || b_true.rows() != a_true.rows() {
        return Err(Error::invalid(
            "matching data",
            format!(
                "a {:?}, b {:?}, a_h {:?}",
                a_true.shape(),
                b_true.shape(),
                a_h.shape()
            ),
        ));
    }
    let diff = a_h.sub(a_true)?;
    let theta = if b_true.is_square() {
        solve_linear(b_true, &diff)?
    } else {
        let bt = b_true.transpose();
        solve_linear(&mat_mul(&bt, b_true)?, &mat_mul(&bt, &diff)?)?
    };
    let residual = matching_residual(a_true, b_true, a_h, &theta)?;
    if residual > MATCHING_ACCEPT {
        return Err(Error::MatchingViolation { residual });
    }
    Ok(theta)
}

/// `|A + B theta - A_h|_F`.
pub fn matching_residual(a: &Mat, b: &Mat, a_h: &Mat, theta: &Mat) -> Result<f64> {
    Ok(a.add(&mat_mul(b, theta)?)?.sub(a_h)?.frobenius_norm())
}

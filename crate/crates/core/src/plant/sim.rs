use super::TruePlant;
use crate::error::{Error, Result};
use crate::matcore::Mat;

/// States with a Euclidean norm above this abort the run.
pub const DIVERGENCE_GUARD: f64 = 1e9;

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step<F>(mut f: F, x: &Mat, t: f64, dt: f64) -> Result<Mat>
where
    F: FnMut(f64, &Mat) -> Result<Mat>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(
            "time step",
            format!("{dt} (must be positive)"),
        ));
    }
    let h = 0.5 * dt;
    let k1 = checked(f(t, x)?, "rk4 stage 1", t, x)?;
    let x2 = x.add_scaled(&k1, h)?;
    let k2 = checked(f(t + h, &x2)?, "rk4 stage 2", t + h, &x2)?;
    let x3 = x.add_scaled(&k2, h)?;
    let k3 = checked(f(t + h, &x3)?, "rk4 stage 3", t + h, &x3)?;
    let x4 = x.add_scaled(&k3, dt)?;
    let k4 = checked(f(t + dt, &x4)?, "rk4 stage 4", t + dt, &x4)?;
    let incr = k1.add(&k4)?.add_scaled(&k2.add(&k3)?, 2.0)?;
    checked(x.add_scaled(&incr, dt / 6.0)?, "rk4 update", t + dt, x)
}

fn checked(v: Mat, context: &'static str, t: f64, x: &Mat) -> Result<Mat> {
    if v.as_slice().iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            context,
            t,
            x: x.as_slice().to_vec(),
        })
    }
}

/// Number of samples on `[0, horizon]` with spacing `dt` (both ends included).
pub fn sample_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(
            "time step",
            format!("{dt} (must be positive)"),
        ));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("{horizon}")));
    }
    let steps = (horizon / dt).round();
    if steps < 1.0 {
        return Err(Error::invalid(
            "horizon",
            format!("horizon {horizon} with dt {dt} gives fewer than 2 samples"),
        ));
    }
    Ok(steps as usize + 1)
}

/// A feedback law driven by [`simulate`].
///
/// `input` is called at every Runge–Kutta stage of step `k` with the stage
/// state, so state feedback acts continuously while anything indexed by `k`
/// (reference samples, parameter estimates) is held over the step.
pub trait ControlLaw {
    fn input(&self, k: usize, t: f64, x: &Mat) -> Result<Mat>;

    /// Reference state at sample `k`, if the law tracks one.
    fn reference(&self, _k: usize) -> Option<Mat> {
        None
    }

    /// Reference input at sample `k`.
    fn reference_input(&self, _k: usize) -> Option<Mat> {
        None
    }

    /// Snapshot of the adapted parameters.
    fn parameters(&self) -> Option<Mat> {
        None
    }

    /// Called once after the state has been advanced from sample `k`.
    /// `x` is the state at the start of the step.
    fn advance(&mut self, _k: usize, _t: f64, _x: &Mat, _dt: f64) -> Result<()> {
        Ok(())
    }
}

impl<F> ControlLaw for F
where
    F: Fn(usize, f64, &Mat) -> Result<Mat>,
{
    fn input(&self, k: usize, t: f64, x: &Mat) -> Result<Mat> {
        self(k, t, x)
    }
}

/// Time-indexed closed-loop samples. Vectors are stored per sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub x_r: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub u_r: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    /// Lyapunov diagnostic; zero until filled in by the caller.
    pub v: Vec<f64>,
    /// Parameter snapshots, empty for non-adaptive laws.
    pub theta: Vec<Mat>,
}

impl TrajectoryRecord {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            x_r: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            u_r: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            theta: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends one sample. Without a reference, `x_r` is recorded as `x` and `e` as zero.
    pub fn push(&mut self, t: f64, x: &Mat, x_r: Option<&Mat>, u: &Mat, u_r: Option<&Mat>) {
        let xs = x.as_slice().to_vec();
        let xr = x_r
            .map(|m| m.as_slice().to_vec())
            .unwrap_or_else(|| xs.clone());
        let e = xs.iter().zip(&xr).map(|(a, b)| a - b).collect();
        self.times.push(t);
        self.x.push(xs);
        self.x_r.push(xr);
        self.u.push(u.as_slice().to_vec());
        self.u_r.push(
            u_r.map(|m| m.as_slice().to_vec())
                .unwrap_or_else(|| vec![0.0; u.rows()]),
        );
        self.e.push(e);
        self.v.push(0.0);
    }

    /// Largest per-state absolute difference in `x` against another record.
    pub fn max_state_deviation(&self, other: &TrajectoryRecord) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn guard(t: f64, x: &Mat) -> Result<()> {
    let norm = x.norm2();
    if !norm.is_finite() {
        return Err(Error::NonFinite {
            context: "closed-loop state",
            t,
            x: x.as_slice().to_vec(),
        });
    }
    if norm > DIVERGENCE_GUARD {
        return Err(Error::Diverged {
            t,
            norm,
            guard: DIVERGENCE_GUARD,
        });
    }
    Ok(())
}

/// Fixed-step closed-loop simulation of `plant` under `law` from `x0`.
pub fn simulate<C: ControlLaw + ?Sized>(
    plant: &TruePlant,
    law: &mut C,
    x0: &Mat,
    horizon: f64,
    dt: f64,
) -> Result<TrajectoryRecord> {
    let n = sample_count(horizon, dt)?;
    if x0.shape() != (plant.n(), 1) {
        return Err(Error::invalid(
            "initial state",
            format!("expected {}x1, got {:?}", plant.n(), x0.shape()),
        ));
    }
    let mut rec = TrajectoryRecord::with_capacity(n);
    let mut x = x0.clone();
    for k in 0..n {
        let t = k as f64 * dt;
        guard(t, &x)?;
        let u = law.input(k, t, &x)?;
        rec.push(
            t,
            &x,
            law.reference(k).as_ref(),
            &u,
            law.reference_input(k).as_ref(),
        );
        if let Some(th) = law.parameters() {
            rec.theta.push(th);
        }
        if k + 1 == n {
            break;
        }
        let next = rk4_step(
            |s, z| {
                let u = law.input(k, s, z)?;
                plant.derivative(z, &u, s)
            },
            &x,
            t,
            dt,
        )?;
        law.advance(k, t, &x, dt)?;
        x = next;
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::nominal_ghx_model;

    fn scalar(v: f64) -> Mat {
        Mat::col(&[v]).unwrap()
    }

    #[test]
    fn rk4_trivial_cases() {
        let x = Mat::col(&[1.5, -2.0]).unwrap();
        let same = rk4_step(|_, _| Ok(Mat::zeros(2, 1)), &x, 0.0, 0.3).unwrap();
        assert_eq!(same, x);
        let c = rk4_step(|_, _| Ok(scalar(1.0)), &scalar(0.0), 0.0, 0.5).unwrap();
        assert_eq!(c[(0, 0)], 0.5);
        let d = rk4_step(
            |_, z| z.scale(-1.0).map_err(Into::into),
            &scalar(1.0),
            0.0,
            0.1,
        )
        .unwrap();
        assert!((d[(0, 0)] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_rejects_bad_step_and_overflow() {
        assert!(rk4_step(|_, z| Ok(z.clone()), &scalar(1.0), 0.0, 0.0).is_err());
        let err = rk4_step(|_, _| Ok(scalar(f64::MAX)), &scalar(f64::MAX), 0.0, 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn sample_counts() {
        assert_eq!(sample_count(5250.0, 1.0).unwrap(), 5251);
        assert_eq!(sample_count(1.0, 0.1).unwrap(), 11);
        assert!(sample_count(0.2, 1.0).is_err());
        assert!(sample_count(10.0, -1.0).is_err());
    }

    #[test]
    fn equilibrium_is_held() {
        let model = nominal_ghx_model();
        let plant = TruePlant::unperturbed(model.clone()).unwrap();
        let x_eq = model.equilibrium(&Mat::zeros(2, 1)).unwrap();
        let mut law = |_: usize, _: f64, _: &Mat| Ok(Mat::zeros(2, 1));
        let rec = simulate(&plant, &mut law, &x_eq, 200.0, 1.0).unwrap();
        assert_eq!(rec.len(), 201);
        for x in &rec.x {
            assert!((x[0] - x_eq[(0, 0)]).abs() < 1e-9);
            assert!((x[1] - x_eq[(1, 0)]).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_guard_trips() {
        let model = nominal_ghx_model();
        let plant = TruePlant::unperturbed(model).unwrap();
        let mut law = |_: usize, _: f64, x: &Mat| x.scale(1e3).map_err(Into::into);
        let err = simulate(
            &plant,
            &mut law,
            &Mat::col(&[1.0, 1.0]).unwrap(),
            5000.0,
            1.0,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Diverged { .. } | Error::NonFinite { .. }),
            "{err}"
        );
    }
}

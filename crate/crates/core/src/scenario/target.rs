use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::savgol_filter;
use crate::control::{ReferenceSource, TargetTrajectory};
use crate::error::{Error, Result};
use crate::matcore::{solve_linear, Mat};
use crate::plant::{sample_count, PlantModel};

/// Shape of the synthetic target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetProfile {
    /// Plateau, ramp, plateau, reverse ramp, plateau on each state.
    Ramps,
    /// The first plateau held for the whole horizon.
    Constant,
}

/// Bypass flow plateaus and the horizon fractions where they start and end.
const FLOW_LEVELS: [f64; 3] = [0.2, 0.5, 0.3];
const FLOW_BREAKS: [f64; 6] = [0.0, 0.15, 0.3, 0.55, 0.7, 1.0];
/// Heat-rate plateaus.
const HEAT_LEVELS: [f64; 3] = [-40.0, -100.0, -70.0];
const HEAT_BREAKS: [f64; 6] = [0.0, 0.2, 0.35, 0.6, 0.75, 1.0];
/// Relative seeded perturbation of each plateau level.
const LEVEL_JITTER: f64 = 0.03;
/// Feedforward inputs must stay below this multiple of the holding input.
const REACH_FACTOR: f64 = 10.0;

fn interp(t: f64, knots: &[f64], values: &[f64]) -> f64 {
    if t <= knots[0] {
        return values[0];
    }
    for i in 1..knots.len() {
        if t <= knots[i] {
            let w = (t - knots[i - 1]) / (knots[i] - knots[i - 1]);
            return values[i - 1] + w * (values[i] - values[i - 1]);
        }
    }
    values[values.len() - 1]
}

/// Deterministic piecewise-linear target for the two GHX states.
///
/// The plateau levels are jittered by a seeded +-3 %; the result is checked
/// for reachability against `model` (feedforward finite and below ten times
/// the largest holding input along the target).
pub fn synthetic_reference_target(
    model: &PlantModel,
    horizon: f64,
    dt: f64,
    seed: u64,
    profile: TargetProfile,
) -> Result<TargetTrajectory> {
    if horizon < 1000.0 {
        return Err(Error::invalid(
            "horizon",
            format!("{horizon} (synthetic target needs >= 1000 s)"),
        ));
    }
    if model.n() != 2 {
        return Err(Error::invalid(
            "plant",
            "the synthetic target is defined for two states",
        ));
    }
    let n = sample_count(horizon, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |levels: [f64; 3]| -> [f64; 3] {
        levels.map(|l| l * (1.0 + rng.random_range(-LEVEL_JITTER..=LEVEL_JITTER)))
    };
    let flow = jitter(FLOW_LEVELS);
    let heat = jitter(HEAT_LEVELS);
    let knots = |fr: [f64; 6]| fr.map(|f| f * horizon);
    let values = |l: [f64; 3]| [l[0], l[0], l[1], l[1], l[2], l[2]];
    let (fk, fv) = (knots(FLOW_BREAKS), values(flow));
    let (hk, hv) = (knots(HEAT_BREAKS), values(heat));
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let x = times
        .iter()
        .map(|&t| match profile {
            TargetProfile::Ramps => vec![interp(t, &fk, &fv), interp(t, &hk, &hv)],
            TargetProfile::Constant => vec![flow[0], heat[0]],
        })
        .collect();
    let target = TargetTrajectory::new(times, x, ReferenceSource::Synthetic)?;
    check_reachable(model, &target)?;
    Ok(target)
}

/// Feedforward `B^{-1}(dx/dt - A x - D)` stays below [`REACH_FACTOR`] times
/// the largest holding input `B^{-1}(-A x - D)` along the target.
pub fn check_reachable(model: &PlantModel, target: &TargetTrajectory) -> Result<()> {
    let mut hold_max = 0.0_f64;
    let mut ff_max = 0.0_f64;
    for (x, xd) in target.x.iter().zip(target.derivative()) {
        let xm = Mat::col(x)?;
        let hold = model.holding_input(&xm)?;
        let ff = hold.add(&solve_linear(&model.b, &Mat::col(&xd)?)?)?;
        hold_max = hold_max.max(hold.norm2());
        ff_max = ff_max.max(ff.norm2());
    }
    if !ff_max.is_finite() || ff_max > REACH_FACTOR * hold_max.max(f64::MIN_POSITIVE) {
        return Err(Error::Unreachable {
            detail: format!(
                "feedforward norm {ff_max:.4e} exceeds {REACH_FACTOR} x holding input norm {hold_max:.4e}"
            ),
        });
    }
    Ok(())
}

/// Reads a `t,x0,x1,...` CSV, resamples it onto a uniform `dt` grid starting
/// at the first time stamp (linear interpolation) and smooths every state with
/// a Savitzky–Golay filter (`window = 0` disables smoothing).
pub fn ingest_csv_reference(
    path: &Path,
    window: usize,
    poly_order: usize,
    dt: f64,
) -> Result<TargetTrajectory> {
    let name = path.display().to_string();
    let csv_err = |row: usize, detail: String| Error::Csv {
        path: name.clone(),
        row,
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: name.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => csv_err(1, e.to_string()),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let n = cols.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n).map(|i| format!("x{i}")))
        .collect();
    if n == 0 || cols != expected {
        return Err(csv_err(
            1,
            format!("header must be t,x0,x1,..., got {}", cols.join(",")),
        ));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut states: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(row, e.to_string()))?;
        if rec.len() != n + 1 {
            return Err(csv_err(
                row,
                format!("expected {} fields, got {}", n + 1, rec.len()),
            ));
        }
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| csv_err(row, format!("'{f}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(&prev) = times.last() {
            if vals[0] <= prev {
                let what = if vals[0] == prev {
                    "duplicated"
                } else {
                    "decreasing"
                };
                return Err(csv_err(row, format!("{what} time stamp {}", vals[0])));
            }
        }
        times.push(vals[0]);
        states.push(vals[1..].to_vec());
    }
    if times.len() < 2 {
        return Err(csv_err(
            times.len() + 1,
            "need at least two data rows".into(),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("time step", format!("{dt}")));
    }
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    // tolerate rounding in the last stamp
    let steps = ((span / dt) * (1.0 + 1e-12)).floor() as usize;
    if steps < 1 {
        return Err(csv_err(
            times.len() + 1,
            format!("span {span} s is shorter than one step"),
        ));
    }
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let mut resampled = vec![vec![0.0; n]; grid.len()];
    let mut j = 0;
    for (k, &tg) in grid.iter().enumerate() {
        let t = (t0 + tg).min(times[times.len() - 1]);
        while j + 2 < times.len() && times[j + 1] < t {
            j += 1;
        }
        let w = ((t - times[j]) / (times[j + 1] - times[j])).clamp(0.0, 1.0);
        for s in 0..n {
            resampled[k][s] = states[j][s] + w * (states[j + 1][s] - states[j][s]);
        }
    }
    if window > 0 {
        if resampled.len() < window {
            return Err(csv_err(
                times.len() + 1,
                format!(
                    "{} resampled points, filter window needs {window}",
                    resampled.len()
                ),
            ));
        }
        for s in 0..n {
            let col: Vec<f64> = resampled.iter().map(|r| r[s]).collect();
            let f = savgol_filter(&col, window, poly_order)?;
            for (r, v) in resampled.iter_mut().zip(f) {
                r[s] = v;
            }
        }
    }
    TargetTrajectory::new(grid, resampled, ReferenceSource::Csv)
}

//! Named experiments: four linked runs on a shared reference, the multiplier
//! sweep, and their CSV/JSON artifacts.

mod config;
mod output;
mod target;

pub use config::{
    AdaptiveSettings, LambdaMode, LqrWeights, ReferenceKind, ReferenceSettings, ScenarioConfig,
    ThetaLrPreset, PRESET_NAMES,
};
pub use output::{
    parse_sweep_range, read_trajectory_csv, target_csv, trajectory_csv, write_atomic, write_sweep,
    RunArtifacts,
};
pub use target::{
    check_reachable, ingest_csv_reference, synthetic_reference_target, TargetProfile,
};

use std::path::Path;

use serde::Serialize;

use crate::analysis::{lyapunov_trace, MetricsSummary};
use crate::control::{
    generate_reference, run_adaptive_tracking, run_lqr_tracking, solve_lyapunov,
    AdaptiveController, AdaptiveGains, LqrDesign, ParameterTruth, ReferenceTrajectory,
    TargetTrajectory, ThetaParts, TrackingOptions,
};
use crate::error::{Error, Result};
use crate::matcore::{mat_mul, Mat};
use crate::plant::{
    apply_uncertainty, nominal_ghx_model, NonlinearBasis, PerturbationSpec, PlantModel,
    TrajectoryRecord, TruePlant,
};

/// Whether independent runs are spread over a thread pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise sequential.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

fn par_map<T, R, F>(exec: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}

/// CPU time consumed by the calling thread.
pub fn thread_cpu_seconds() -> f64 {
    cpu_clock(libc::CLOCK_THREAD_CPUTIME_ID)
}

/// CPU time consumed by the whole process.
pub fn process_cpu_seconds() -> f64 {
    cpu_clock(libc::CLOCK_PROCESS_CPUTIME_ID)
}

fn cpu_clock(clock: libc::clockid_t) -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(clock, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// The four linked runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RunKind {
    /// LQR on the nominal plant.
    A,
    /// The same LQR on the uncertain plant.
    B,
    /// b plus the adaptive loop.
    C,
    /// c with the constant regressor for the offset error.
    D,
}

impl RunKind {
    pub const ALL: [RunKind; 4] = [RunKind::A, RunKind::B, RunKind::C, RunKind::D];

    pub fn name(self) -> &'static str {
        match self {
            RunKind::A => "a_lqr_nominal",
            RunKind::B => "b_lqr_perturbed",
            RunKind::C => "c_ac_implicit_d",
            RunKind::D => "d_ac_explicit_d",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, RunKind::C | RunKind::D)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub kind: RunKind,
    pub record: TrajectoryRecord,
    /// Against the target trajectory.
    pub metrics: MetricsSummary,
    pub cpu_seconds: f64,
}

impl RunResult {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
}

/// Everything shared by the runs of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSetup {
    pub config: ScenarioConfig,
    pub nominal: PlantModel,
    pub design: LqrDesign,
    pub p_lyap: Mat,
    pub target: TargetTrajectory,
    pub reference: ReferenceTrajectory,
    pub cpu_seconds: f64,
}

impl ScenarioSetup {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let start = thread_cpu_seconds();
        let nominal = nominal_ghx_model();
        let design = LqrDesign::with_scales(&nominal, config.lqr.q_scale, config.lqr.r_scale)?;
        let p_lyap = solve_lyapunov(&design.a_h, &config.q_lyap(nominal.n())?)?;
        let target = build_target(config, &nominal)?;
        let reference = generate_reference(&design, &nominal, &target)?;
        Ok(Self {
            config: config.clone(),
            nominal,
            design,
            p_lyap,
            target,
            reference,
            cpu_seconds: thread_cpu_seconds() - start,
        })
    }

    /// The uncertain plant at `multiplier` with the given nonlinearity.
    pub fn true_plant(
        &self,
        multiplier: f64,
        basis: NonlinearBasis,
        preset: ThetaLrPreset,
    ) -> Result<TruePlant> {
        let n = self.nominal.n();
        let m = self.nominal.m();
        let base = PlantModel {
            basis,
            ..self.nominal.clone()
        };
        let theta_lr = match basis {
            NonlinearBasis::None => None,
            _ => preset.matrix(m, basis.dim(n)),
        };
        let disturbance = self.config.resolved_disturbance();
        match self.config.lambda_mode {
            LambdaMode::Recipe => {
                let spec = PerturbationSpec {
                    theta_lr,
                    disturbance,
                    ..PerturbationSpec::with_multiplier(n, m, multiplier)
                };
                let (model, echo) = apply_uncertainty(&base, &spec)?;
                TruePlant::new(model, echo)
            }
            LambdaMode::Theory => {
                let lambda = Mat::scaled_identity(m, 0.8);
                let mut a = base.a.clone();
                a[(1, 0)] /= multiplier;
                let b = mat_mul(&base.b, &lambda)?;
                let model = PlantModel::new(a, b, base.d.clone(), basis)?;
                let spec = PerturbationSpec {
                    multiplier,
                    lambda,
                    theta_lr,
                    d_tilde: Mat::zeros(n, 1),
                    disturbance,
                };
                spec.check_effectiveness_bound()?;
                TruePlant::new(model, spec)
            }
        }
    }

    /// One of the linked runs on `plant` (ignored for run a).
    pub fn run(&self, kind: RunKind, plant: &TruePlant) -> Result<RunResult> {
        let start = thread_cpu_seconds();
        let mut record = match kind {
            RunKind::A => {
                let nominal = TruePlant::unperturbed(self.nominal.clone())?;
                run_lqr_tracking(&nominal, &self.design, &self.reference)?
            }
            RunKind::B => run_lqr_tracking(plant, &self.design, &self.reference)?,
            RunKind::C | RunKind::D => {
                let basis = if kind == RunKind::D {
                    NonlinearBasis::SinePlusConstant
                } else {
                    plant.model.basis
                };
                let (ctrl, truth) = self.controller(plant, basis)?;
                let opts = TrackingOptions {
                    scheme: self.config.adaptive.scheme,
                    explicit_d: kind == RunKind::D,
                    truth: Some(truth),
                    x0: None,
                };
                run_adaptive_tracking(plant, &self.reference, ctrl, &opts)?.0
            }
        };
        if !kind.is_adaptive() {
            record.v = lyapunov_trace(&record, &self.p_lyap, None)?;
        }
        let metrics = MetricsSummary::compute(
            &record.times,
            &record.x,
            &self.reference.x_target,
            &record.u,
        )?;
        Ok(RunResult {
            kind,
            record,
            metrics,
            cpu_seconds: thread_cpu_seconds() - start,
        })
    }

    /// Controller with the configured initial estimate, and the truth for diagnostics.
    pub fn controller(
        &self,
        plant: &TruePlant,
        basis: NonlinearBasis,
    ) -> Result<(AdaptiveController, ParameterTruth)> {
        let n = self.nominal.n();
        let m = self.nominal.m();
        let gains = AdaptiveGains {
            gamma: Mat::scaled_identity(m, self.config.adaptive.gamma_scale),
            sigma: self.config.sigma,
            q_lyap: self.config.q_lyap(n)?,
        };
        let parts = ThetaParts::from_plant(plant, &self.nominal, &self.design.a_h, basis)?;
        let theta0 = parts.initial(self.config.adaptive.init, &self.design.theta_star_r())?;
        let truth = ParameterTruth::new(parts.assemble()?, &plant.spec.lambda, &gains.gamma)?;
        let ctrl = AdaptiveController::new(&self.design, &self.nominal, basis, gains, theta0)?;
        Ok((ctrl, truth))
    }

    fn kinds(&self) -> Vec<RunKind> {
        if self.config.adaptive.enabled {
            RunKind::ALL.to_vec()
        } else {
            vec![RunKind::A, RunKind::B]
        }
    }
}

fn build_target(config: &ScenarioConfig, nominal: &PlantModel) -> Result<TargetTrajectory> {
    let r = &config.reference;
    match r.kind {
        ReferenceKind::Synthetic => synthetic_reference_target(
            nominal,
            config.horizon,
            config.dt,
            config.seed,
            TargetProfile::Ramps,
        ),
        ReferenceKind::Constant => {
            let hold = r.hold.clone().unwrap_or_else(|| vec![0.0; nominal.n()]);
            if hold.len() != nominal.n() {
                return Err(Error::Config(format!(
                    "reference.hold has {} entries, the state has {}",
                    hold.len(),
                    nominal.n()
                )));
            }
            TargetTrajectory::constant(&hold, config.horizon, config.dt)
        }
        ReferenceKind::Csv => {
            let path = r
                .path
                .as_deref()
                .ok_or_else(|| Error::Config("reference.path missing".into()))?;
            let t =
                ingest_csv_reference(Path::new(path), r.savgol_window, r.poly_order, config.dt)?;
            check_reachable(nominal, &t)?;
            Ok(t)
        }
    }
}

/// In-memory result of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub setup: ScenarioSetup,
    pub runs: Vec<RunResult>,
    /// Ratios to run a, in the order of `runs`.
    pub normalized: Vec<MetricsSummary>,
    pub primary: RunKind,
    pub cpu_seconds: f64,
    pub steps: usize,
}

impl ScenarioOutcome {
    pub fn run(&self, kind: RunKind) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.kind == kind)
    }

    pub fn normalized(&self, kind: RunKind) -> Option<&MetricsSummary> {
        self.runs
            .iter()
            .position(|r| r.kind == kind)
            .map(|i| &self.normalized[i])
    }
}

/// Runs a–d of `config` without touching the file system.
pub fn simulate_scenario(config: &ScenarioConfig, exec: Execution) -> Result<ScenarioOutcome> {
    let setup = ScenarioSetup::new(config)?;
    let plant = setup.true_plant(config.multiplier, config.basis, config.theta_lr_preset)?;
    let runs = par_map(exec, setup.kinds(), |k| setup.run(k, &plant))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let baseline = runs[0].metrics.clone();
    let normalized = runs
        .iter()
        .map(|r| r.metrics.normalized(&baseline))
        .collect();
    let primary = if !config.adaptive.enabled {
        RunKind::B
    } else if config.explicit_d {
        RunKind::D
    } else {
        RunKind::C
    };
    let cpu_seconds = setup.cpu_seconds + runs.iter().map(|r| r.cpu_seconds).sum::<f64>();
    let steps = runs.iter().map(|r| r.record.len().saturating_sub(1)).sum();
    Ok(ScenarioOutcome {
        setup,
        runs,
        normalized,
        primary,
        cpu_seconds,
        steps,
    })
}

/// Runs the scenario and writes its artifacts under `out_dir`.
pub fn run_scenario(
    config: &ScenarioConfig,
    out_dir: &Path,
    exec: Execution,
) -> Result<RunArtifacts> {
    let outcome = simulate_scenario(config, exec)?;
    output::write_scenario(&outcome, out_dir)
}

/// Disturbance setting of a sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSetting {
    /// No matched nonlinearity.
    None,
    /// `theta_lr sin(x)` in the span of the input matrix.
    Matched,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub multiplier: f64,
    pub setting: SweepSetting,
    pub run: &'static str,
    pub ok: bool,
    pub error: Option<String>,
    /// Ratios to run a.
    pub normalized: Option<MetricsSummary>,
    pub raw: Option<MetricsSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub multipliers: Vec<f64>,
    pub baseline: MetricsSummary,
    pub rows: Vec<SweepRow>,
    pub cpu_seconds: f64,
}

impl SweepSummary {
    /// `(multiplier, normalized metrics)` of one run and setting, failures as `None`.
    pub fn series(
        &self,
        setting: SweepSetting,
        kind: RunKind,
    ) -> Vec<(f64, Option<&MetricsSummary>)> {
        self.rows
            .iter()
            .filter(|r| r.setting == setting && r.run == kind.name())
            .map(|r| (r.multiplier, r.normalized.as_ref()))
            .collect()
    }
}

/// Runs b–d for every multiplier, with and without the matched nonlinearity.
///
/// Failing points are recorded and the sweep carries on.
pub fn run_multiplier_sweep(
    config: &ScenarioConfig,
    multipliers: &[f64],
    exec: Execution,
) -> Result<SweepSummary> {
    if multipliers.is_empty() {
        return Err(Error::Config("empty multiplier list".into()));
    }
    if multipliers.iter().any(|m| !(*m >= 1.0 && m.is_finite())) {
        return Err(Error::Config("multipliers must be >= 1".into()));
    }
    if multipliers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "multipliers must be strictly ascending".into(),
        ));
    }
    let setup = ScenarioSetup::new(config)?;
    let a = setup.run(RunKind::A, &TruePlant::unperturbed(setup.nominal.clone())?)?;
    let matched_preset = match config.theta_lr_preset {
        ThetaLrPreset::Zero => ThetaLrPreset::Identity,
        p => p,
    };
    let kinds: Vec<RunKind> = setup
        .kinds()
        .into_iter()
        .filter(|k| *k != RunKind::A)
        .collect();
    let mut points = Vec::new();
    for &m in multipliers {
        for setting in [SweepSetting::None, SweepSetting::Matched] {
            for &k in &kinds {
                points.push((m, setting, k));
            }
        }
    }
    let rows = par_map(exec, points, |(m, setting, kind)| {
        let start = thread_cpu_seconds();
        let (basis, preset) = match setting {
            SweepSetting::None => (NonlinearBasis::None, ThetaLrPreset::Zero),
            SweepSetting::Matched => (NonlinearBasis::Sine, matched_preset),
        };
        let result = setup
            .true_plant(m, basis, preset)
            .and_then(|plant| setup.run(kind, &plant));
        let row = match result {
            Ok(r) => SweepRow {
                multiplier: m,
                setting,
                run: kind.name(),
                ok: true,
                error: None,
                normalized: Some(r.metrics.normalized(&a.metrics)),
                raw: Some(r.metrics),
            },
            Err(e) => SweepRow {
                multiplier: m,
                setting,
                run: kind.name(),
                ok: false,
                error: Some(format!("{}: {e}", e.kind())),
                normalized: None,
                raw: None,
            },
        };
        (row, thread_cpu_seconds() - start)
    });
    let cpu_seconds = setup.cpu_seconds + a.cpu_seconds + rows.iter().map(|(_, c)| c).sum::<f64>();
    Ok(SweepSummary {
        multipliers: multipliers.to_vec(),
        baseline: a.metrics,
        rows: rows.into_iter().map(|(r, _)| r).collect(),
        cpu_seconds,
    })
}

use std::fs;
use std::path::Path;

use ghx_mrac::analysis::MetricsSummary;
use ghx_mrac::control::{generate_reference, LqrDesign};
use ghx_mrac::plant::nominal_ghx_model;
use ghx_mrac::scenario::{
    read_trajectory_csv, run_multiplier_sweep, run_scenario, simulate_scenario,
    synthetic_reference_target, write_sweep, Execution, ReferenceKind, RunKind, ScenarioConfig,
    SweepSetting, TargetProfile,
};

fn read_target(path: &Path) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let mut t = Vec::new();
    let mut x = Vec::new();
    for row in rdr.records() {
        let v: Vec<f64> = row.unwrap().iter().map(|s| s.parse().unwrap()).collect();
        t.push(v[0]);
        x.push(v[1..].to_vec());
    }
    (t, x)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn degenerate_scenario_reproduces_baseline() {
    let out = simulate_scenario(
        &ScenarioConfig::preset("nominal").unwrap(),
        Execution::default(),
    )
    .unwrap();
    let a = &out.run(RunKind::A).unwrap().record;
    for kind in [RunKind::B, RunKind::C, RunKind::D] {
        let dev = a.max_state_deviation(&out.run(kind).unwrap().record);
        assert!(dev <= 1e-6, "{}: {dev}", kind.name());
    }
}

#[test]
fn summary_is_recomputable_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::preset("disturbed_ac").unwrap();
    let art = run_scenario(&cfg, dir.path(), Execution::default()).unwrap();
    let (_, target) = read_target(&dir.path().join("target.csv"));
    let runs = art.summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    for entry in runs {
        let name = entry["name"].as_str().unwrap();
        let rec = read_trajectory_csv(&dir.path().join(format!("run_{name}.csv"))).unwrap();
        assert_eq!(rec.len(), 5251);
        let m = MetricsSummary::compute(&rec.times, &rec.x, &target, &rec.u).unwrap();
        for (i, v) in m.mae.iter().enumerate() {
            assert!(close(*v, entry["mae"][i].as_f64().unwrap()), "{name} mae");
            assert!(
                close(m.itae[i], entry["itae"][i].as_f64().unwrap()),
                "{name} itae"
            );
        }
        assert!(close(m.ce.l1, entry["ce"]["l1"].as_f64().unwrap()));
        assert!(close(m.ce.l2, entry["ce"]["l2"].as_f64().unwrap()));
    }
    let on_disk: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk, art.summary);
    assert_eq!(on_disk["primary"], "c_ac_implicit_d");
    assert_eq!(on_disk["timing"]["steps"], 4 * 5250);
    assert!(dir.path().join("run.log").exists());
    assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e
        .unwrap()
        .path()
        .to_string_lossy()
        .ends_with(".tmp")));
}

#[test]
fn exported_reference_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::preset("perturbed_ac").unwrap();
    let first = simulate_scenario(&cfg, Execution::default()).unwrap();
    run_scenario(&cfg, dir.path(), Execution::default()).unwrap();

    let mut again = cfg.clone();
    again.reference.kind = ReferenceKind::Csv;
    again.reference.path = Some(dir.path().join("target.csv").display().to_string());
    again.reference.savgol_window = 0;
    let second = simulate_scenario(&again, Execution::default()).unwrap();
    for (a, b) in first.runs.iter().zip(&second.runs) {
        for (x, y) in a.metrics.mae.iter().zip(&b.metrics.mae) {
            assert!(close(*x, *y), "{}: {x} vs {y}", a.name());
        }
        assert!(close(a.metrics.ce.l1, b.metrics.ce.l1));
    }
}

#[test]
fn nominal_lqr_tracks_default_profile() {
    let cfg = ScenarioConfig::preset("perturbed_no_ac").unwrap();
    let out = simulate_scenario(&cfg, Execution::default()).unwrap();
    let rec = &out.run(RunKind::A).unwrap().record;
    let target = &out.setup.reference.x_target;
    let skip = rec.len() / 20;
    for j in 0..2 {
        let lo = target.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min);
        let hi = target
            .iter()
            .map(|x| x[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let worst = rec.x[skip..]
            .iter()
            .zip(&target[skip..])
            .map(|(x, t)| (x[j] - t[j]).abs())
            .fold(0.0, f64::max);
        assert!(
            worst <= 0.05 * (hi - lo),
            "state {j}: {worst} vs range {}",
            hi - lo
        );
    }
}

#[test]
fn constant_profile_is_an_equilibrium_hold() {
    let model = nominal_ghx_model();
    let design = LqrDesign::with_scales(&model, 10.0, 1000.0).unwrap();
    let target =
        synthetic_reference_target(&model, 2000.0, 1.0, 3, TargetProfile::Constant).unwrap();
    let reference = generate_reference(&design, &model, &target).unwrap();
    let hold = &target.x[0];
    for x in &reference.x_r {
        assert!((x[0] - hold[0]).abs() <= 1e-9 && (x[1] - hold[1]).abs() <= 1e-9 * hold[1].abs());
    }
    let u0 = &reference.u_r[0];
    assert!(reference.u_r.iter().all(|u| u == u0));
}

#[test]
fn seeds_change_the_target() {
    let model = nominal_ghx_model();
    let a = synthetic_reference_target(&model, 5250.0, 1.0, 1, TargetProfile::Ramps).unwrap();
    let b = synthetic_reference_target(&model, 5250.0, 1.0, 2, TargetProfile::Ramps).unwrap();
    let c = synthetic_reference_target(&model, 5250.0, 1.0, 1, TargetProfile::Ramps).unwrap();
    assert_ne!(a.x, b.x);
    assert_eq!(a.x, c.x);
}

#[test]
fn single_point_sweep_is_self_normalized() {
    let cfg = ScenarioConfig::preset("perturbed_ac").unwrap();
    let sweep = run_multiplier_sweep(&cfg, &[1.0], Execution::Sequential).unwrap();
    let (_, m) = sweep.series(SweepSetting::None, RunKind::B)[0];
    let m = m.unwrap();
    assert_eq!((m.ce.l1, m.ce.l2), (1.0, 1.0));
    assert_eq!(m.mae, vec![1.0, 1.0]);
}

#[test]
fn sweep_records_failures_and_continues() {
    let mut cfg = ScenarioConfig::preset("perturbed_ac").unwrap();
    cfg.adaptive.gamma_scale = 1e3;
    cfg.adaptive.q_lyap_scale = 1.0;
    let sweep = run_multiplier_sweep(&cfg, &[1.0, 1.5], Execution::default()).unwrap();
    assert_eq!(sweep.rows.len(), 2 * 2 * 3);
    for r in &sweep.rows {
        if r.run == RunKind::B.name() {
            assert!(r.ok);
        } else {
            assert!(!r.ok);
            assert!(r.error.as_deref().unwrap().starts_with("diverged"));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let files = write_sweep(&sweep, dir.path()).unwrap();
    let text = fs::read_to_string(&files[1]).unwrap();
    assert_eq!(text.lines().count(), 1 + sweep.rows.len());
    assert!(text
        .lines()
        .next()
        .unwrap()
        .starts_with("multiplier,setting,run,ok,mae0,mae1"));
}

#[test]
fn sweep_rejects_bad_grids() {
    let cfg = ScenarioConfig::preset("perturbed_ac").unwrap();
    assert!(run_multiplier_sweep(&cfg, &[], Execution::Sequential).is_err());
    assert!(run_multiplier_sweep(&cfg, &[0.9, 1.2], Execution::Sequential).is_err());
    assert!(run_multiplier_sweep(&cfg, &[1.5, 1.2], Execution::Sequential).is_err());
}

#[test]
fn sequential_and_parallel_agree() {
    let cfg = ScenarioConfig::preset("disturbed_ac_scalar").unwrap();
    let a = simulate_scenario(&cfg, Execution::Sequential).unwrap();
    let b = simulate_scenario(&cfg, Execution::Parallel).unwrap();
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(x.record, y.record);
    }
}

#[test]
fn disabled_adaptation_runs_two_loops() {
    let out = simulate_scenario(
        &ScenarioConfig::preset("disturbed_no_ac").unwrap(),
        Execution::default(),
    )
    .unwrap();
    assert_eq!(out.runs.len(), 2);
    assert_eq!(out.primary, RunKind::B);
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use ghx_mrac::scenario::{
    parse_sweep_range, run_multiplier_sweep, run_scenario, write_sweep, Execution, ReferenceKind,
    ScenarioConfig, PRESET_NAMES,
};
use ghx_mrac::Error;

/// Run LQR / adaptive tracking scenarios on the heat-exchanger model.
#[derive(Debug, Parser)]
#[command(name = "ghx-mrac", version)]
struct Cli {
    /// Named preset (see --list).
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the uncertainty multiplier.
    #[arg(long)]
    multiplier: Option<f64>,
    /// Overrides the reference seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplier sweep `start:stop:step` instead of a single scenario.
    #[arg(long)]
    sweep: Option<String>,
    /// Use a recorded `t,x0,x1` trajectory as the target.
    #[arg(long)]
    reference_csv: Option<PathBuf>,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
    /// Print the preset names and exit.
    #[arg(long)]
    list: bool,
}

fn load(cli: &Cli) -> ghx_mrac::Result<ScenarioConfig> {
    let mut cfg = match (&cli.scenario, &cli.config) {
        (Some(name), None) => ScenarioConfig::preset(name)?,
        (None, Some(path)) => ScenarioConfig::from_file(path)?,
        (None, None) => ScenarioConfig::preset("perturbed_ac")?,
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--scenario and --config are exclusive".into(),
            ))
        }
    };
    if let Some(m) = cli.multiplier {
        cfg.multiplier = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.reference_csv {
        cfg.reference.kind = ReferenceKind::Csv;
        cfg.reference.path = Some(p.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> ghx_mrac::Result<serde_json::Value> {
    let cfg = load(cli)?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    if let Some(range) = &cli.sweep {
        let grid = parse_sweep_range(range)?;
        let summary = run_multiplier_sweep(&cfg, &grid, exec)?;
        let files = write_sweep(&summary, &cli.out_dir)?;
        let failed = summary.rows.iter().filter(|r| !r.ok).count();
        return Ok(json!({
            "status": "ok",
            "points": summary.rows.len(),
            "failed": failed,
            "files": files,
        }));
    }
    let art = run_scenario(&cfg, &cli.out_dir, exec)?;
    let primary = art.summary["runs"]
        .as_array()
        .and_then(|runs| runs.iter().find(|r| r["name"] == art.primary))
        .map(|r| r["normalized"].clone())
        .unwrap_or_default();
    Ok(json!({
        "status": "ok",
        "scenario": cfg.name,
        "primary": art.primary,
        "normalized": primary,
        "files": art.files,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list {
        for name in PRESET_NAMES {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    match run(&cli) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = json!({ "status": "error", "kind": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}

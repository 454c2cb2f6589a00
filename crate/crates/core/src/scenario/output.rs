use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::{ScenarioOutcome, SweepSummary};
use crate::error::{Error, Result};
use crate::plant::TrajectoryRecord;

/// Files written by one scenario.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
    pub primary: &'static str,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let conv = |e: csv::Error| Error::Csv {
        path: "<memory>".into(),
        row: 0,
        detail: e.to_string(),
    };
    w.write_record(header).map_err(conv)?;
    for r in rows {
        w.write_record(&r).map_err(conv)?;
    }
    w.into_inner().map_err(|e| Error::Csv {
        path: "<memory>".into(),
        row: 0,
        detail: e.to_string(),
    })
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// `t, x*, xr*, u*, e*, V` with full precision.
pub fn trajectory_csv(record: &TrajectoryRecord) -> Result<Vec<u8>> {
    let n = record.x.first().map_or(0, Vec::len);
    let m = record.u.first().map_or(0, Vec::len);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(names("x", n))
        .chain(names("xr", n))
        .chain(names("u", m))
        .chain(names("e", n))
        .chain(std::iter::once("V".to_string()))
        .collect();
    let rows = (0..record.len()).map(|k| {
        std::iter::once(record.times[k])
            .chain(record.x[k].iter().copied())
            .chain(record.x_r[k].iter().copied())
            .chain(record.u[k].iter().copied())
            .chain(record.e[k].iter().copied())
            .chain(std::iter::once(record.v[k]))
            .map(fmt)
            .collect()
    });
    csv_bytes(&header, rows)
}

/// `t, x*` of the target trajectory.
pub fn target_csv(times: &[f64], x: &[Vec<f64>]) -> Result<Vec<u8>> {
    let n = x.first().map_or(0, Vec::len);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(names("x", n))
        .collect();
    let rows = times.iter().zip(x).map(|(t, row)| {
        std::iter::once(*t)
            .chain(row.iter().copied())
            .map(fmt)
            .collect()
    });
    csv_bytes(&header, rows)
}

/// Reads a file written by [`trajectory_csv`]. `u_r` and `theta` are left empty.
pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryRecord> {
    let shown = path.display().to_string();
    let bad = |row: usize, detail: String| Error::Csv {
        path: shown.clone(),
        row,
        detail,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(0, e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let count = |p: &str| {
        header
            .iter()
            .filter(|h| {
                h.strip_prefix(p)
                    .is_some_and(|r| r.parse::<usize>().is_ok())
            })
            .count()
    };
    let (n, m) = (count("x"), count("u"));
    if header.len() != 2 + 3 * n + m || header.get(0) != Some("t") {
        return Err(bad(
            1,
            format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        ));
    }
    let mut rec = TrajectoryRecord::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        let vals = row
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(line, e.to_string()))?;
        if vals.len() != header.len() {
            return Err(bad(
                line,
                format!("{} fields, expected {}", vals.len(), header.len()),
            ));
        }
        rec.times.push(vals[0]);
        rec.x.push(vals[1..1 + n].to_vec());
        rec.x_r.push(vals[1 + n..1 + 2 * n].to_vec());
        rec.u.push(vals[1 + 2 * n..1 + 2 * n + m].to_vec());
        rec.e.push(vals[1 + 2 * n + m..1 + 3 * n + m].to_vec());
        rec.v.push(vals[1 + 3 * n + m]);
    }
    Ok(rec)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    name: &'a str,
    mae: &'a [f64],
    itae: &'a [f64],
    ce: &'a crate::analysis::ControlEffort,
    normalized: &'a crate::analysis::MetricsSummary,
    cpu_seconds: f64,
}

pub(super) fn write_scenario(outcome: &ScenarioOutcome, out_dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = out_dir.join(name);
        write_atomic(&p, bytes)?;
        files.push(p);
        Ok(())
    };

    let reference = &outcome.setup.reference;
    put(
        "target.csv",
        &target_csv(&reference.times, &reference.x_target)?,
    )?;
    for run in &outcome.runs {
        put(
            &format!("run_{}.csv", run.name()),
            &trajectory_csv(&run.record)?,
        )?;
    }

    let runs: Vec<RunSummary> = outcome
        .runs
        .iter()
        .zip(&outcome.normalized)
        .map(|(r, n)| RunSummary {
            name: r.name(),
            mae: &r.metrics.mae,
            itae: &r.metrics.itae,
            ce: &r.metrics.ce,
            normalized: n,
            cpu_seconds: r.cpu_seconds,
        })
        .collect();
    let physical = reference.horizon();
    let summary = json!({
        "config": &outcome.setup.config,
        "primary": outcome.primary.name(),
        "runs": runs,
        "timing": {
            "cpu_seconds": outcome.cpu_seconds,
            "steps": outcome.steps,
            "cpu_seconds_per_physical_second": outcome.cpu_seconds / (physical * outcome.runs.len() as f64),
        },
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
    put("summary.json", text.as_bytes())?;

    let mut log = String::new();
    let cfg = &outcome.setup.config;
    let _ = writeln!(
        log,
        "scenario {} multiplier {} seed {}",
        cfg.name, cfg.multiplier, cfg.seed
    );
    let _ = writeln!(
        log,
        "lqr care residual {:.3e}, reference {} samples",
        outcome.setup.design.care_residual,
        reference.len()
    );
    for (r, n) in outcome.runs.iter().zip(&outcome.normalized) {
        let _ = writeln!(
            log,
            "{:<16} mae {:?} itae {:?} ce_l1 {:.6e} | normalized mae {:?} ce_l1 {:.4} | cpu {:.3}s",
            r.name(),
            r.metrics.mae,
            r.metrics.itae,
            r.metrics.ce.l1,
            n.mae,
            n.ce.l1,
            r.cpu_seconds
        );
    }
    let _ = writeln!(log, "primary {}", outcome.primary.name());
    let _ = writeln!(
        log,
        "cpu {:.3}s over {} steps",
        outcome.cpu_seconds, outcome.steps
    );
    put("run.log", log.as_bytes())?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        files,
        summary,
        primary: outcome.primary.name(),
    })
}

/// Writes `sweep.json` and `sweep.csv` (normalized metrics, one row per point and run).
pub fn write_sweep(summary: &SweepSummary, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let json_path = out_dir.join("sweep.json");
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&json_path, text.as_bytes())?;

    let n = summary.baseline.mae.len();
    let header: Vec<String> = ["multiplier", "setting", "run", "ok"]
        .into_iter()
        .map(String::from)
        .chain(names("mae", n))
        .chain(names("itae", n))
        .chain([
            "ce_l1".to_string(),
            "ce_l2".to_string(),
            "error".to_string(),
        ])
        .collect();
    let rows = summary.rows.iter().map(|r| {
        let setting = serde_json::to_value(r.setting)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        let mut out = vec![
            r.multiplier.to_string(),
            setting,
            r.run.to_string(),
            r.ok.to_string(),
        ];
        match &r.normalized {
            Some(m) => {
                out.extend(m.mae.iter().chain(&m.itae).map(|v| fmt(*v)));
                out.push(fmt(m.ce.l1));
                out.push(fmt(m.ce.l2));
            }
            None => out.extend(std::iter::repeat_n(String::new(), 2 * n + 2)),
        }
        out.push(r.error.clone().unwrap_or_default());
        out
    });
    let csv_path = out_dir.join("sweep.csv");
    write_atomic(&csv_path, &csv_bytes(&header, rows)?)?;
    Ok(vec![json_path, csv_path])
}

/// Parses `start:stop:step` into an inclusive ascending grid.
pub fn parse_sweep_range(spec: &str) -> Result<Vec<f64>> {
    let bad = |detail: &str| Error::Config(format!("sweep range '{spec}': {detail}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, s] = parts.as_slice() else {
        return Err(bad("expected start:stop:step"));
    };
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let (start, stop, step) = (parse(a)?, parse(b)?, parse(s)?);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(bad("not finite"));
    }
    if step <= 0.0 || stop < start {
        return Err(bad("need step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(bad("too many points"));
    }
    // snap to 12 decimals so 1.0:1.8:0.1 yields 1.7, not 1.7000000000000002
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::Mat;

    #[test]
    fn sweep_range() {
        assert_eq!(parse_sweep_range("1:2:0.5").unwrap(), vec![1.0, 1.5, 2.0]);
        let g = parse_sweep_range("1.0:2.0:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[7], 1.7);
        assert_eq!(g[10], 2.0);
        assert!(parse_sweep_range("1:2").is_err());
        assert!(parse_sweep_range("2:1:0.1").is_err());
        assert!(parse_sweep_range("1:2:0").is_err());
        assert!(parse_sweep_range("a:2:1").is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let mut rec = TrajectoryRecord::default();
        for k in 0..5 {
            let t = k as f64;
            let x = Mat::col(&[0.1 * t, -1.0 / 3.0 + t]).unwrap();
            let xr = Mat::col(&[0.0, 1e-17 * t]).unwrap();
            let u = Mat::col(&[std::f64::consts::PI, -t]).unwrap();
            rec.push(t, &x, Some(&xr), &u, None);
            rec.v[k] = 0.5 * t;
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.csv");
        write_atomic(&p, &trajectory_csv(&rec).unwrap()).unwrap();
        let back = read_trajectory_csv(&p).unwrap();
        assert_eq!(back.times, rec.times);
        assert_eq!(back.x, rec.x);
        assert_eq!(back.x_r, rec.x_r);
        assert_eq!(back.u, rec.u);
        assert_eq!(back.e, rec.e);
        assert_eq!(back.v, rec.v);
        assert!(!dir.path().join("run.csv.tmp").exists());
    }
}

//! Writers for manifests, metadata, trajectory CSVs and plot data.

use std::fs;
use std::io::Write;
use std::path::Path;

use pfsi_core::diagnostics::{step_diagnostics, lyapunov_value};
use pfsi_core::galerkin::{ProcessRun, Trajectory};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::CliError;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `manifest.json`: resolved configuration plus artifact versions; no timing.
pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, cache_sha256: Option<&str>) -> Result<(), CliError> {
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": command,
            "config": cfg,
            "config_toml": cfg.to_toml(),
            "versions": {
                "pfsi": env!("CARGO_PKG_VERSION"),
                "cache_format": pfsi_core::cache::FORMAT_VERSION,
            },
            "cache_sha256": cache_sha256,
        }),
    )
}

/// `metadata.json`: run facts that legitimately differ between reruns.
pub fn write_metadata(dir: &Path, command: &str, wall_seconds: f64, workers: usize) -> Result<(), CliError> {
    write_json(
        &dir.join("metadata.json"),
        &json!({
            "command": command,
            "wall_seconds": wall_seconds,
            "workers": workers,
        }),
    )
}

/// Trajectory CSV with modal coordinates and per-step energies.
pub fn write_trajectory(path: &Path, run: &ProcessRun, traj: &Trajectory, delta: f64) -> Result<(), CliError> {
    let (m, n) = (run.coup.m(), run.coup.n());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("alpha_{i}")));
    header.extend((1..=n).map(|j| format!("beta_{j}")));
    header.extend((1..=n).map(|j| format!("gamma_{j}")));
    header.extend(["E", "scriptE", "L", "dissipation"].map(String::from));
    w.write_record(&header)?;
    for s in &traj.states {
        let d = step_diagnostics(run, s);
        let mut row = vec![s.t.to_string()];
        row.extend(s.alpha.iter().map(|x| x.to_string()));
        row.extend(s.beta.iter().map(|x| x.to_string()));
        row.extend(s.gamma.iter().map(|x| x.to_string()));
        row.push(d.e.to_string());
        row.push(d.script_e.to_string());
        row.push(lyapunov_value(run, s, delta).to_string());
        row.push(d.dissipation.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated columns with a `#` header line, readable by gnuplot.
pub fn write_columns(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# {}", header.join(" "))?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    Ok(())
}

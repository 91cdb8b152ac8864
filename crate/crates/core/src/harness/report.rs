//! Report files. JSON reports carry a `schema_version` and no wall-clock
//! data; timestamps go to a separate metadata file.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pipeline::TrajectoryPoint;
use crate::sde::PathPoint;

pub const SCHEMA_VERSION: u32 = 1;

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Serializes `report` (which must be a JSON object) with `schema_version`
/// and `kind` prepended.
pub fn report_json<R: Serialize>(kind: &str, report: &R) -> Result<String> {
    let Value::Object(body) = serde_json::to_value(report)? else {
        return Err(Error::Serde("report must serialize to an object".into()));
    };
    let mut out = serde_json::Map::new();
    out.insert("schema_version".into(), SCHEMA_VERSION.into());
    out.insert("kind".into(), kind.into());
    out.extend(body);
    let mut text = serde_json::to_string_pretty(&Value::Object(out))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json_report<R: Serialize>(kind: &str, report: &R, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, report_json(kind, report)?)?;
    Ok(())
}

/// Header `t,coord_0,...,coord_{d-1},injected_var`, one row per recorded step.
pub fn trajectory_csv(points: &[TrajectoryPoint]) -> Result<String> {
    let Some(first) = points.first() else {
        return Err(Error::Config("empty trajectory".into()));
    };
    let d = first.state.len();
    let mut out = String::from("t");
    for i in 0..d {
        write!(out, ",coord_{i}").unwrap();
    }
    out.push_str(",injected_var\n");
    for p in points {
        if p.state.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: p.state.len(),
            });
        }
        write!(out, "{}", p.t).unwrap();
        for v in &p.state {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{}", p.injected_var).unwrap();
    }
    Ok(out)
}

pub fn write_trajectory_csv(points: &[TrajectoryPoint], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, trajectory_csv(points)?)?;
    Ok(())
}

/// Header `t,coord_0,...,coord_{d-1}`, one row per integrator point.
pub fn write_path_csv(points: &[PathPoint], path: &Path) -> Result<()> {
    let Some(first) = points.first() else {
        return Err(Error::Config("empty path".into()));
    };
    let mut out = String::from("t");
    for i in 0..first.state.len() {
        write!(out, ",coord_{i}").unwrap();
    }
    out.push('\n');
    for p in points {
        write!(out, "{}", p.t).unwrap();
        for v in &p.state {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    ensure_parent(path)?;
    std::fs::write(path, out)?;
    Ok(())
}

/// Header `step,loss`, steps counted from 1.
pub fn write_loss_csv(losses: &[f64], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut out = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{},{l}", i + 1).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    command: &'a str,
    unix_time_secs: u64,
    crate_version: &'static str,
}

/// Writes `metadata.json` next to the reports of one run.
pub fn write_run_metadata(dir: &Path, command: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let unix_time_secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = RunMetadata {
        command,
        unix_time_secs,
        crate_version: env!("CARGO_PKG_VERSION"),
    };
    std::fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

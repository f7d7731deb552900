//! Trajectory CSV and JSON report files.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::models::OrderBounds;

pub const CRATE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fixed leading columns of the trajectory CSV; per-mode coefficients
/// `c0, c1, ...` follow when states are stored.
pub const CSV_COLUMNS: [&str; 5] = ["t", "norm_H", "norm_Ahalf", "Q", "Q_2p"];

/// Header embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    /// Order constants together with how they were obtained.
    pub constants: OrderBounds,
    pub versions: Versions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub decaylab: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            decaylab: CRATE_VERSION,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a ReportMeta,
    result: &'a T,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// 17 significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, coefficients: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let states = if coefficients { traj.states.as_deref() } else { None };
    let mut header: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    if let Some(s) = states.and_then(|s| s.first()) {
        header.extend((0..s.len()).map(|j| format!("c{j}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..traj.len() {
        let mut row = vec![
            fmt_float(traj.times[k]),
            fmt_float(traj.norm_h[k]),
            fmt_float(traj.norm_ahalf[k]),
            fmt_opt(traj.q[k]),
            fmt_opt(traj.q_d[k]),
        ];
        if let Some(s) = states {
            row.extend(s[k].0.iter().map(|&c| fmt_float(c)));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report<T: Serialize>(path: &Path, meta: &ReportMeta, result: &T) -> Result<()> {
    write_json(path, &Envelope { meta, result })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegratorConfig};
    use crate::models::make_ode2_slow;
    use crate::spectral::StateVector;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_float(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(fmt_float(-2.0), "-2.0000000000000000e0");
        assert_eq!("3.3333333333333331e-1".parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn csv_layout() {
        let prob = make_ode2_slow();
        let tr = integrate(&prob, &StateVector(vec![0.0, 0.0]), &IntegratorConfig::uniform(0.1, 0.3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory_csv(&path, &tr, true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,norm_H,norm_Ahalf,Q,Q_2p,c0,c1");
        // zero state: quotients missing
        assert!(lines.next().unwrap().contains(",,,"));
        write_trajectory_csv(&path, &tr, false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,norm_H,norm_Ahalf,Q,Q_2p");
    }
}

//! Parameter sweeps: the cartesian product of the configured axes, one
//! experiment per grid point, run concurrently.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::config::{set_path, ExperimentConfig};
use super::output::{write_json, Versions};
use super::run::{run_experiment, RunOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub path: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub dir: String,
    pub assignments: Vec<Assignment>,
    pub config_hash: Option<String>,
    pub pass: bool,
    /// Set when the point's configuration was rejected.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepIndex {
    pub base_config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    pub points: Vec<SweepPoint>,
    pub pass: bool,
}

pub const INDEX_FILE: &str = "index.json";

/// Grid points in lexicographic order, last axis fastest.
pub fn expand(doc: &Value) -> Result<Vec<Vec<Assignment>>> {
    let base = ExperimentConfig::from_value(doc.clone())?;
    let Some(spec) = base.sweep else {
        return Ok(vec![Vec::new()]);
    };
    let count = spec
        .axes
        .iter()
        .try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()))
        .unwrap_or(usize::MAX);
    if count > spec.budget {
        return Err(Error::Config {
            path: "sweep.budget".into(),
            message: format!("grid has {count} points, budget is {}", spec.budget),
        });
    }
    let mut points = vec![Vec::new()];
    for axis in &spec.axes {
        points = points
            .into_iter()
            .flat_map(|prefix: Vec<Assignment>| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(Assignment {
                        path: axis.path.clone(),
                        value: v.clone(),
                    });
                    p
                })
            })
            .collect();
    }
    Ok(points)
}

/// Document for one grid point, without the sweep block.
pub fn point_config(doc: &Value, assignments: &[Assignment]) -> Result<ExperimentConfig> {
    let mut d = doc.clone();
    if let Value::Object(m) = &mut d {
        m.remove("sweep");
    }
    for a in assignments {
        set_path(&mut d, &a.path, a.value.clone())?;
    }
    ExperimentConfig::from_value(d)
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub out_dir: PathBuf,
    pub index: SweepIndex,
    pub pass: bool,
}

/// Runs every grid point into `out/point_NNNN` and writes `out/index.json`.
///
/// Every point configuration is checked before anything runs, so a bad axis
/// value fails the whole sweep as a configuration error.
pub fn run_sweep(doc: &Value, opts: &RunOptions) -> Result<SweepOutcome> {
    let mut base = ExperimentConfig::from_value(doc.clone())?;
    if let Some(seed) = opts.seed {
        base.seed = seed;
    }
    base.validate()?;
    let grid = expand(doc)?;
    let configs = grid
        .iter()
        .map(|a| point_config(doc, a))
        .collect::<Result<Vec<_>>>()?;
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| base.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)?;

    let points: Vec<SweepPoint> = configs
        .par_iter()
        .zip(grid.par_iter())
        .enumerate()
        .map(|(index, (cfg, assignments))| {
            let dir = format!("point_{index:04}");
            let point_opts = RunOptions {
                out_dir: Some(out_dir.join(&dir)),
                ..opts.clone()
            };
            let (pass, hash, error) = match run_experiment(cfg, &point_opts) {
                Ok(o) => {
                    let mut c = cfg.clone();
                    c.seed = opts.seed.unwrap_or(c.seed);
                    (o.pass, Some(c.hash()), None)
                }
                Err(e) => (false, None, Some(e.to_string())),
            };
            SweepPoint {
                index,
                dir,
                assignments: assignments.clone(),
                config_hash: hash,
                pass,
                error,
            }
        })
        .collect();
    if let Some(e) = points.iter().find_map(|p| p.error.clone()) {
        return Err(Error::Config {
            path: "sweep".into(),
            message: e,
        });
    }
    let pass = points.iter().all(|p| p.pass);
    let index = SweepIndex {
        base_config_hash: base.hash(),
        seed: base.seed,
        versions: Versions::default(),
        points,
        pass,
    };
    write_json(&out_dir.join(INDEX_FILE), &index)?;
    Ok(SweepOutcome { out_dir, index, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn expansion_order_and_budget() {
        let doc = json!({
            "model": {"name": "ode2_fast", "lambda": 1.0, "beta": 10.0},
            "sweep": {"axes": [
                {"path": "model.beta", "values": [2.0, 3.0]},
                {"path": "model.p", "values": [1, 2, 3]}
            ]}
        });
        let g = expand(&doc).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[1][0].value, json!(2.0));
        assert_eq!(g[1][1].value, json!(2));
        assert_eq!(g[3][0].value, json!(3.0));
        let c = point_config(&doc, &g[5]).unwrap();
        assert!(c.sweep.is_none());
        assert_eq!(
            c.model,
            crate::experiment::ModelSpec::Ode2Fast {
                lambda: 1.0,
                beta: 3.0,
                p: 3.0,
                q: 1.0
            }
        );

        let mut small = doc.clone();
        small["sweep"]["budget"] = json!(5);
        let e = expand(&small).unwrap_err();
        assert!(e.to_string().contains("6 points"), "{e}");
    }

    #[test]
    fn no_axes_is_one_point() {
        let doc = json!({"model": {"name": "ode2_slow"}});
        assert_eq!(expand(&doc).unwrap(), vec![Vec::<Assignment>::new()]);
    }
}

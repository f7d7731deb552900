//! The JSON experiment document and its resolution into a problem and datum.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierOptions, Verdict};
use crate::error::{Error, Result};
use crate::fast::{FastOptions, ValidationConfig};
use crate::integrator::IntegratorConfig;
use crate::models::{
    make_custom, make_dirichlet_interval_with, make_neumann_interval_with, make_ode2_fast, make_ode2_slow,
    ConstantsProvenance, OrderBounds, PdeOptions, PolyTerm, ProblemDefinition, SamplingOptions, SUBCRITICAL_SHIFT,
};
use crate::slow::{certificate_for, sample_member, CertifyOptions};
use crate::spectral::{SpectrumSpec, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    #[serde(default)]
    pub initial: Option<InitialData>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default)]
    pub output: OutputSpec,
    /// Drives constant sampling and certificate-driven initial data.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_seed() -> u64 {
    SamplingOptions::default().seed
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Ode2Slow,
    Ode2Fast {
        lambda: f64,
        beta: f64,
        #[serde(default = "one")]
        p: f64,
        #[serde(default = "one")]
        q: f64,
    },
    NeumannInterval {
        modes: usize,
        p: f64,
        #[serde(default = "one")]
        c: f64,
        #[serde(default)]
        grid_size: Option<usize>,
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        samples: Option<usize>,
    },
    DirichletInterval {
        modes: usize,
        p: f64,
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "yes")]
        critical: bool,
        /// Explicit shift, overriding `critical`.
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        grid_size: Option<usize>,
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        samples: Option<usize>,
    },
    Custom {
        eigenvalues: Vec<f64>,
        #[serde(default)]
        multiplicities: Option<Vec<usize>>,
        terms: Vec<PolyTerm>,
        /// Supplied constants; sampled when absent.
        #[serde(default)]
        bounds: Option<SuppliedBounds>,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default)]
        samples: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuppliedBounds {
    pub k0: f64,
    pub p: f64,
    pub q: f64,
    pub lipschitz: f64,
    #[serde(default)]
    pub sign_condition: bool,
}

/// Exactly one source of initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Coefficients(Vec<f64>),
    /// `kernel_constant(a)`, `mode(k, a)` or `zero`.
    Preset(String),
    /// A random member of the slow certificate set, drawn with the seed.
    Certified(CertifiedInit),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifiedInit {
    pub waive_sign_condition: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analyses {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyRequest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_quotients: Option<QuotientRequest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify_slow: Option<CertifyRequest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub construct_fast: Option<ConstructFastRequest>,
}

impl Analyses {
    pub fn is_empty(&self) -> bool {
        self.classify.is_none()
            && self.check_quotients.is_none()
            && self.certify_slow.is_none()
            && self.construct_fast.is_none()
    }

    /// Whether any request needs a forward trajectory from `initial`.
    pub fn needs_trajectory(&self) -> bool {
        self.classify.is_some() || self.check_quotients.is_some() || self.certify_slow.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyRequest {
    /// Fails the run unless the verdict matches.
    pub expect: Option<Verdict>,
    pub options: ClassifierOptions,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuotientRequest {
    /// Exponents to check; `[0, 2p]` when absent.
    pub d: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyRequest {
    pub waive_sign_condition: bool,
    /// Integrate and watch the certified bounds along the run.
    pub monitor: bool,
    /// Number of random perturbations for the openness probe.
    pub openness_samples: usize,
    /// Perturbation size as a fraction of the openness radius.
    pub openness_fraction: f64,
}

impl Default for CertifyRequest {
    fn default() -> Self {
        Self {
            waive_sign_condition: false,
            monitor: true,
            openness_samples: 0,
            openness_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructFastRequest {
    /// Index into the distinct eigenvalues.
    pub eigen_index: usize,
    /// Defaults to the first mode of the eigenvalue's block.
    pub v0: Option<Vec<f64>>,
    /// Defaults to the first mode above the block, or zero.
    pub w0: Option<Vec<f64>>,
    pub r0: f64,
    /// Rescale `(v0, w0)` so that `|v0|_D + |w0|_D = fill * r0`; `null` keeps them as given.
    pub fill: Option<f64>,
    pub options: FastOptions,
    pub validate: bool,
    pub validation: ValidationConfig,
}

impl Default for ConstructFastRequest {
    fn default() -> Self {
        Self {
            eigen_index: 1,
            v0: None,
            w0: None,
            r0: 0.1,
            fill: Some(0.999),
            options: FastOptions::default(),
            validate: true,
            validation: ValidationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Used when no directory is given on the command line.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    /// Largest number of grid points a sweep may expand to.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    256
}

/// One parameter axis: a dotted key path into the document and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<Value>,
}

fn config_err(path: impl Into<String>, message: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        message: message.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path == "." { "<root>".into() } else { path }, e.into_inner())
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_value(parse_json(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_value(load_value(path)?)
    }

    /// SHA-256 of the canonical JSON form, ignoring the sweep block.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.sweep = None;
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn build_problem(&self) -> Result<ProblemDefinition> {
        build_model(&self.model, self.seed).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => config_err(format!("model.{name}"), reason),
            Error::Config { .. } => e,
            other => config_err("model", other),
        })
    }

    /// Initial datum, or `None` when the document has none.
    pub fn build_initial(&self, prob: &ProblemDefinition) -> Result<Option<StateVector>> {
        let Some(init) = &self.initial else {
            return Ok(None);
        };
        let n = prob.dim();
        let u = match init {
            InitialData::Coefficients(c) => {
                if c.len() != n {
                    return Err(config_err(
                        "initial.coefficients",
                        format!("expected {n} coefficients, got {}", c.len()),
                    ));
                }
                StateVector(c.clone())
            }
            InitialData::Preset(s) => parse_preset(s, prob).map_err(|m| config_err("initial.preset", m))?,
            InitialData::Certified(opts) => {
                let cert = certificate_for(
                    prob,
                    &CertifyOptions {
                        waive_sign_condition: opts.waive_sign_condition,
                    },
                )
                .map_err(|e| config_err("initial.certified", e))?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                sample_member(&prob.spectrum, &cert, &mut rng)
            }
        };
        prob.spectrum.check_state(&u).map_err(|e| config_err("initial", e))?;
        Ok(Some(u))
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => config_err(format!("integrator.{name}"), reason),
            other => config_err("integrator.t_end", other),
        })?;
        if self.analyses.needs_trajectory() && self.initial.is_none() {
            return Err(config_err("initial", "required by the requested analyses"));
        }
        if let Some(s) = &self.sweep {
            for (i, a) in s.axes.iter().enumerate() {
                if a.values.is_empty() {
                    return Err(config_err(format!("sweep.axes[{i}].values"), "axis has no values"));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_json(s: &str) -> Result<Value> {
    serde_json::from_str(s).map_err(|e| config_err("<document>", e))
}

pub fn load_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(path.display().to_string(), e))?;
    parse_json(&text)
}

fn pde_options(grid_size: Option<usize>, radius: Option<f64>, samples: Option<usize>, seed: u64) -> PdeOptions {
    let d = PdeOptions::default();
    PdeOptions {
        grid_size,
        radius: radius.unwrap_or(d.radius),
        sampling: SamplingOptions {
            seed,
            samples: samples.unwrap_or(d.sampling.samples),
            ..d.sampling
        },
    }
}

pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<ProblemDefinition> {
    match spec {
        ModelSpec::Ode2Slow => Ok(make_ode2_slow()),
        &ModelSpec::Ode2Fast { lambda, beta, p, q } => make_ode2_fast(lambda, beta, p, q),
        &ModelSpec::NeumannInterval {
            modes,
            p,
            c,
            grid_size,
            radius,
            samples,
        } => make_neumann_interval_with(modes, p, c, &pde_options(grid_size, radius, samples, seed)),
        &ModelSpec::DirichletInterval {
            modes,
            p,
            c,
            critical,
            lambda,
            grid_size,
            radius,
            samples,
        } => {
            let shift = lambda.unwrap_or(if critical { 1.0 } else { SUBCRITICAL_SHIFT });
            make_dirichlet_interval_with(modes, p, c, shift, &pde_options(grid_size, radius, samples, seed))
        }
        ModelSpec::Custom {
            eigenvalues,
            multiplicities,
            terms,
            bounds,
            radius,
            samples,
        } => {
            let mult = multiplicities.clone().unwrap_or_else(|| vec![1; eigenvalues.len()]);
            let spectrum = SpectrumSpec::new(eigenvalues.clone(), mult).map_err(|e| config_err("model.eigenvalues", e))?;
            let bounds = bounds.as_ref().map(|b| OrderBounds {
                k0: b.k0,
                p: b.p,
                q: b.q,
                lipschitz: b.lipschitz,
                sign_condition: b.sign_condition,
                radius: *radius,
                provenance: ConstantsProvenance::Supplied,
            });
            let sampling = SamplingOptions {
                seed,
                samples: samples.unwrap_or(SamplingOptions::default().samples),
                ..SamplingOptions::default()
            };
            make_custom(spectrum, terms.clone(), bounds, *radius, &sampling)
        }
    }
}

fn parse_preset(s: &str, prob: &ProblemDefinition) -> std::result::Result<StateVector, String> {
    let n = prob.dim();
    let s = s.trim();
    if s == "zero" {
        return Ok(StateVector::zeros(n));
    }
    let (head, args) = s
        .strip_suffix(')')
        .and_then(|r| r.split_once('('))
        .ok_or_else(|| format!("unrecognised preset `{s}`"))?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("bad argument in `{s}`: {e}"))?;
    match (head.trim(), nums.as_slice()) {
        ("kernel_constant", &[a]) => {
            let kernel = prob.spectrum.kernel_range();
            if kernel.is_empty() {
                return Err("kernel_constant needs a nontrivial kernel".into());
            }
            Ok(StateVector::unit(n, kernel.start).scaled(a))
        }
        ("mode", &[k, a]) => {
            if k < 0.0 || k.fract() != 0.0 || k as usize >= n {
                return Err(format!("mode index {k} outside 0..{n}"));
            }
            Ok(StateVector::unit(n, k as usize).scaled(a))
        }
        _ => Err(format!("unrecognised preset `{s}`")),
    }
}

/// Sets `value` at a dotted path such as `model.beta` or `initial.coefficients.1`,
/// creating object keys as needed.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert((*part).to_string(), value);
                    return Ok(());
                }
                map.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(arr) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| config_err(path, format!("`{part}` is not an array index")))?;
                let len = arr.len();
                let slot = arr
                    .get_mut(idx)
                    .ok_or_else(|| config_err(path, format!("index {idx} out of range 0..{len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(config_err(path, format!("`{part}` does not address an object or array"))),
        };
    }
    Err(config_err(path, "empty key path"))
}

//! The single-experiment pipeline.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{
    CertifyRequest, ClassifyRequest, ConstructFastRequest, ExperimentConfig, QuotientRequest,
};
use super::output::{write_json, write_report, write_trajectory_csv, ReportMeta, Versions};
use crate::classifier::{classify_with, verify_slow_conclusions, ClassificationReport, SlowConclusions, Verdict};
use crate::error::{Error, Result};
use crate::fast::{choose_params_with, solve_fixed_point_with, validate_solution, FastParams, ValidationReport};
use crate::integrator::{integrate, Termination, Trajectory};
use crate::models::ProblemDefinition;
use crate::quotients::{check_quotient_inequalities, QuotientCheckReport};
use crate::slow::{
    certificate_for, certify, monitor_certified_run, openness_probe, CertifyOptions, Membership, MonitorReport,
    OpennessReport, SigmaSlack, SlowCertificate,
};
use crate::spectral::{SpectralPart, StateVector};

/// Which part of the document to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Every analysis the document requests.
    #[default]
    Full,
    /// Trajectory CSV only.
    Simulate,
    Classify,
    CertifySlow,
    ConstructFast,
    CheckQuotients,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Write per-mode coefficients to the CSV.
    pub store_states: bool,
    pub mode: Mode,
}

/// One analysis as recorded in the run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisOutcome {
    pub analysis: &'static str,
    pub pass: bool,
    /// Report file, relative to the output directory.
    pub report: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub file: String,
    pub samples: usize,
    pub steps: usize,
    pub final_time: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: Option<String>,
    pub u0: Option<StateVector>,
    pub trajectory: Option<TrajectorySummary>,
    pub error: Option<String>,
    pub analyses: Vec<AnalysisOutcome>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub summary: RunSummary,
    pub pass: bool,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CONFIG_FILE: &str = "config.json";

/// Restricts the document to what `mode` asks for.
fn select(cfg: &mut ExperimentConfig, mode: Mode) {
    let a = &mut cfg.analyses;
    match mode {
        Mode::Full => {}
        Mode::Simulate => *a = Default::default(),
        Mode::Classify => {
            *a = super::config::Analyses {
                classify: Some(a.classify.take().unwrap_or_default()),
                ..Default::default()
            }
        }
        Mode::CheckQuotients => {
            *a = super::config::Analyses {
                check_quotients: Some(a.check_quotients.take().unwrap_or_default()),
                ..Default::default()
            }
        }
        Mode::CertifySlow => {
            *a = super::config::Analyses {
                certify_slow: Some(a.certify_slow.take().unwrap_or_default()),
                ..Default::default()
            }
        }
        Mode::ConstructFast => {
            *a = super::config::Analyses {
                construct_fast: Some(a.construct_fast.take().unwrap_or_default()),
                ..Default::default()
            }
        }
    }
}

/// Runs one experiment.
///
/// Configuration problems come back as `Err`; numerical failures inside an
/// analysis are recorded in the summary and make the run fail.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    select(&mut cfg, opts.mode);
    cfg.validate()?;
    let prob = cfg.build_problem()?;
    let u0 = cfg.build_initial(&prob)?;
    if opts.mode == Mode::Simulate && u0.is_none() {
        return Err(Error::Config {
            path: "initial".into(),
            message: "simulate needs initial data".into(),
        });
    }

    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)?;
    // the resolved document, seed included, so a run can be repeated from its artifacts
    write_json(&out_dir.join(CONFIG_FILE), &cfg)?;
    let meta = ReportMeta {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        model: prob.name.clone(),
        constants: prob.bounds.clone(),
        versions: Versions::default(),
    };

    let mut summary = RunSummary {
        name: cfg.name.clone(),
        u0: u0.clone(),
        trajectory: None,
        error: None,
        analyses: Vec::new(),
        pass: true,
    };

    let mut traj = None;
    if let Some(u0) = &u0 {
        let mut icfg = cfg.integrator.clone();
        let write_coeffs = icfg.store_states || opts.store_states;
        icfg.store_states = write_coeffs || cfg.analyses.needs_trajectory();
        match integrate(&prob, u0, &icfg) {
            Ok(tr) => {
                write_trajectory_csv(&out_dir.join(TRAJECTORY_FILE), &tr, write_coeffs)?;
                summary.trajectory = Some(TrajectorySummary {
                    file: TRAJECTORY_FILE.into(),
                    samples: tr.len(),
                    steps: tr.steps,
                    final_time: tr.final_time(),
                    termination: tr.terminated,
                });
                traj = Some(tr);
            }
            Err(e) => {
                summary.error = Some(e.to_string());
                summary.pass = false;
            }
        }
    }

    let a = &cfg.analyses;
    let ctx = Ctx {
        prob: &prob,
        meta: &meta,
        dir: &out_dir,
        cfg: &cfg,
    };
    if let Some(req) = &a.classify {
        summary.analyses.push(ctx.record("classify", "classification.json", |p| {
            run_classify(&ctx, need(&traj)?, req, p)
        })?);
    }
    if let Some(req) = &a.check_quotients {
        summary.analyses.push(ctx.record("check_quotients", "quotients.json", |p| {
            run_quotients(&ctx, need(&traj)?, req, p)
        })?);
    }
    if let Some(req) = &a.certify_slow {
        summary.analyses.push(ctx.record("certify_slow", "certificate.json", |p| {
            run_certify(&ctx, u0.as_ref().expect("validated"), req, p)
        })?);
    }
    if let Some(req) = &a.construct_fast {
        summary.analyses.push(ctx.record("construct_fast", "fast_solution.json", |p| {
            run_construct(&ctx, req, p)
        })?);
    }
    summary.pass &= summary.analyses.iter().all(|a| a.pass);
    write_report(&out_dir.join(SUMMARY_FILE), &meta, &summary)?;
    Ok(RunOutcome {
        out_dir,
        pass: summary.pass,
        summary,
    })
}

fn need(traj: &Option<Trajectory>) -> Result<&Trajectory> {
    traj.as_ref().ok_or(Error::StatesNotStored)
}

struct Ctx<'a> {
    prob: &'a ProblemDefinition,
    meta: &'a ReportMeta,
    dir: &'a Path,
    cfg: &'a ExperimentConfig,
}

impl Ctx<'_> {
    /// Runs an analysis that writes `file` and returns its pass flag.
    /// Configuration errors abort the run; other failures are recorded.
    fn record(
        &self,
        analysis: &'static str,
        file: &str,
        f: impl FnOnce(&Path) -> Result<bool>,
    ) -> Result<AnalysisOutcome> {
        let path = self.dir.join(file);
        Ok(match f(&path) {
            Ok(pass) => AnalysisOutcome {
                analysis,
                pass,
                report: Some(file.into()),
                error: None,
            },
            Err(e @ Error::Config { .. }) => return Err(e),
            Err(e) => AnalysisOutcome {
                analysis,
                pass: false,
                report: None,
                error: Some(e.to_string()),
            },
        })
    }
}

#[derive(Serialize)]
struct ClassifyOutput {
    report: ClassificationReport,
    slow_conclusions: Option<SlowConclusions>,
    expect: Option<Verdict>,
    pass: bool,
}

fn run_classify(ctx: &Ctx, traj: &Trajectory, req: &ClassifyRequest, path: &Path) -> Result<bool> {
    let report = classify_with(traj, ctx.prob, &req.options)?;
    let slow_conclusions = if report.verdict == Verdict::Slow {
        Some(verify_slow_conclusions(traj, ctx.prob, &report)?)
    } else {
        None
    };
    let pass = req.expect.is_none_or(|v| v == report.verdict);
    write_report(
        path,
        ctx.meta,
        &ClassifyOutput {
            report,
            slow_conclusions,
            expect: req.expect,
            pass,
        },
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct QuotientOutput {
    checks: Vec<QuotientCheckReport>,
    pass: bool,
}

fn run_quotients(ctx: &Ctx, traj: &Trajectory, req: &QuotientRequest, path: &Path) -> Result<bool> {
    let ds = req.d.clone().unwrap_or_else(|| vec![0.0, 2.0 * ctx.prob.bounds.p]);
    let checks = ds
        .iter()
        .map(|&d| check_quotient_inequalities(traj, ctx.prob, d))
        .collect::<Result<Vec<_>>>()?;
    let pass = checks.iter().all(|c| c.pass);
    write_report(path, ctx.meta, &QuotientOutput { checks, pass })?;
    Ok(pass)
}

#[derive(Serialize)]
struct Slacks {
    norm: f64,
    quotient: f64,
    sigma0: SigmaSlack,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct CertifyOutput {
    K1: f64,
    sigma0: f64,
    membership: Membership,
    slacks: Slacks,
    M1_hat: Option<f64>,
    certificate: SlowCertificate,
    monitor: Option<MonitorReport>,
    openness: Option<OpennessReport>,
    pass: bool,
}

fn run_certify(ctx: &Ctx, u0: &StateVector, req: &CertifyRequest, path: &Path) -> Result<bool> {
    let cert = certificate_for(
        ctx.prob,
        &CertifyOptions {
            waive_sign_condition: req.waive_sign_condition,
        },
    )?;
    let membership = certify(u0, &ctx.prob.spectrum, &cert);
    let monitor = if req.monitor && membership.member {
        Some(monitor_certified_run(ctx.prob, u0, &cert, &ctx.cfg.integrator)?)
    } else {
        None
    };
    let openness = (req.openness_samples > 0).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
        openness_probe(u0, &ctx.prob.spectrum, &cert, req.openness_samples, req.openness_fraction, &mut rng)
    });
    let pass = membership.member
        && monitor.as_ref().is_none_or(|m| m.pass)
        && openness.as_ref().is_none_or(|o| o.pass);
    write_report(
        path,
        ctx.meta,
        &CertifyOutput {
            K1: cert.k1,
            sigma0: cert.sigma0,
            membership,
            slacks: Slacks {
                norm: membership.norm_slack,
                quotient: membership.quotient_slack,
                sigma0: cert.slack,
            },
            M1_hat: monitor.as_ref().map(|m| m.m1_hat),
            certificate: cert,
            monitor,
            openness,
            pass,
        },
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct FastOutput {
    eigen_index: usize,
    lambda: f64,
    params: FastParams,
    v0: StateVector,
    w0: StateVector,
    u0: StateVector,
    w1: StateVector,
    iterations: usize,
    residual: f64,
    distances: Vec<f64>,
    contraction_ratios: Vec<f64>,
    max_sup_norm: f64,
    validation: Option<ValidationReport>,
    pass: bool,
}

fn coeffs_or(default: StateVector, given: &Option<Vec<f64>>, key: &str) -> Result<StateVector> {
    match given {
        None => Ok(default),
        Some(c) if c.len() == default.len() => Ok(StateVector(c.clone())),
        Some(c) => Err(Error::Config {
            path: format!("analyses.construct_fast.{key}"),
            message: format!("expected {} coefficients, got {}", default.len(), c.len()),
        }),
    }
}

fn run_construct(ctx: &Ctx, req: &ConstructFastRequest, path: &Path) -> Result<bool> {
    let spectrum = &ctx.prob.spectrum;
    let n = spectrum.total_dim();
    let block = req.eigen_index;
    if block >= spectrum.num_blocks() {
        return Err(Error::Config {
            path: "analyses.construct_fast.eigen_index".into(),
            message: format!("index {block} outside 0..{}", spectrum.num_blocks()),
        });
    }
    let lambda = spectrum.eigenvalues()[block];
    let params = choose_params_with(ctx.prob, lambda, req.r0, &req.options)?;
    let split = spectrum.split(block);
    let mut v0 = coeffs_or(StateVector::unit(n, split.lambda.start), &req.v0, "v0")?;
    let above = split.range(SpectralPart::Plus);
    let w0_default = if above.is_empty() {
        StateVector::zeros(n)
    } else {
        StateVector::unit(n, above.start)
    };
    let mut w0 = coeffs_or(w0_default, &req.w0, "w0")?;
    if let Some(fill) = req.fill {
        let sum = spectrum.norm_d(&v0) + spectrum.norm_d(&w0);
        if sum > 0.0 {
            let s = fill * params.r0 / sum;
            v0 = v0.scaled(s);
            w0 = w0.scaled(s);
        }
    }
    let sol = solve_fixed_point_with(ctx.prob, &v0, &w0, &params, &req.options)?;
    let validation = if req.validate {
        Some(validate_solution(&sol, ctx.prob, &params, &req.validation)?)
    } else {
        None
    };
    let pass = sol.residual <= req.options.tolerance && validation.as_ref().is_none_or(|v| v.pass);
    write_report(
        path,
        ctx.meta,
        &FastOutput {
            eigen_index: block,
            lambda,
            params,
            v0: sol.v0,
            w0: sol.w0,
            u0: sol.u0,
            w1: sol.w1,
            iterations: sol.iterations,
            residual: sol.residual,
            distances: sol.distances,
            contraction_ratios: sol.contraction_ratios,
            max_sup_norm: sol.max_sup_norm,
            validation,
            pass,
        },
    )?;
    Ok(pass)
}

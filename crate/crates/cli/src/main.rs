use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decaylab::experiment::{load_value, run_experiment, run_sweep, ExperimentConfig, Mode, RunOptions, SUMMARY_FILE};
use decaylab::Error;

/// Decay-rate experiments for u' + Au = f(u) in spectral coordinates.
#[derive(Parser)]
#[command(name = "decaylab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment document (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled constants and random initial data.
    #[arg(long)]
    seed: Option<u64>,
    /// Write per-mode coefficients to the trajectory CSV.
    #[arg(long)]
    store_states: bool,
}

#[derive(Args)]
struct FastArgs {
    /// Index of the eigenvalue among the distinct eigenvalues.
    #[arg(long)]
    eigen_index: Option<usize>,
    /// Comma-separated coefficients of v0.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    v0: Option<Vec<f64>>,
    /// Comma-separated coefficients of w0.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w0: Option<Vec<f64>>,
    /// Requested smallness radius r0.
    #[arg(long)]
    r0: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis the document requests.
    Run(Common),
    /// Integrate and write the trajectory CSV.
    Simulate(Common),
    /// Classify the trajectory as null, slow or fast.
    Classify(Common),
    /// Compute the slow certificate and monitor the run.
    CertifySlow(Common),
    /// Construct a fast solution by fixed-point iteration.
    ConstructFast {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fast: FastArgs,
    },
    /// Check the Dirichlet-quotient inequalities along the trajectory.
    CheckQuotients(Common),
    /// Run the parameter sweep described by the document's `sweep` block.
    Sweep(Common),
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn options(c: &Common, mode: Mode) -> RunOptions {
    RunOptions {
        out_dir: c.out.clone(),
        seed: c.seed,
        store_states: c.store_states,
        mode,
    }
}

fn apply_fast_flags(cfg: &mut ExperimentConfig, f: &FastArgs) {
    let req = cfg.analyses.construct_fast.get_or_insert_with(Default::default);
    if let Some(i) = f.eigen_index {
        req.eigen_index = i;
    }
    if let Some(v) = &f.v0 {
        req.v0 = Some(v.clone());
    }
    if let Some(w) = &f.w0 {
        req.w0 = Some(w.clone());
    }
    if let Some(r) = f.r0 {
        req.r0 = r;
    }
}

fn execute(cli: Cli) -> Result<bool, Error> {
    let (common, mode, fast) = match &cli.command {
        Command::Run(c) => (c, Mode::Full, None),
        Command::Simulate(c) => (c, Mode::Simulate, None),
        Command::Classify(c) => (c, Mode::Classify, None),
        Command::CertifySlow(c) => (c, Mode::CertifySlow, None),
        Command::ConstructFast { common, fast } => (common, Mode::ConstructFast, Some(fast)),
        Command::CheckQuotients(c) => (c, Mode::CheckQuotients, None),
        Command::Sweep(c) => {
            let doc = load_value(&c.config)?;
            let out = run_sweep(&doc, &options(c, Mode::Full))?;
            let failed = out.index.points.iter().filter(|p| !p.pass).count();
            println!(
                "sweep: {} points, {} failed; index at {}",
                out.index.points.len(),
                failed,
                out.out_dir.join(decaylab::experiment::INDEX_FILE).display()
            );
            return Ok(out.pass);
        }
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(f) = fast {
        apply_fast_flags(&mut cfg, f);
    }
    let out = run_experiment(&cfg, &options(common, mode))?;
    for a in &out.summary.analyses {
        let status = if a.pass { "pass" } else { "FAIL" };
        match (&a.report, &a.error) {
            (_, Some(e)) => println!("{}: {status} ({e})", a.analysis),
            (Some(r), None) => println!("{}: {status} -> {}", a.analysis, out.out_dir.join(r).display()),
            (None, None) => println!("{}: {status}", a.analysis),
        }
    }
    if let Some(e) = &out.summary.error {
        println!("integration failed: {e}");
    }
    println!(
        "{} -> {}",
        if out.pass { "pass" } else { "FAIL" },
        out.out_dir.join(SUMMARY_FILE).display()
    );
    Ok(out.pass)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

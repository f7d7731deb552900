//! Config-driven experiment runner: JSON documents in, CSV and JSON reports out.

mod config;
mod output;
mod run;
mod sweep;

pub use config::{
    build_model, load_value, parse_json, set_path, Analyses, CertifiedInit, CertifyRequest, ClassifyRequest,
    ConstructFastRequest, ExperimentConfig, InitialData, ModelSpec, OutputSpec, QuotientRequest, SuppliedBounds,
    SweepAxis, SweepSpec,
};
pub use output::{fmt_float, write_trajectory_csv, ReportMeta, Versions, CRATE_VERSION, CSV_COLUMNS};
pub use run::{
    run_experiment, AnalysisOutcome, Mode, RunOptions, RunOutcome, RunSummary, TrajectorySummary, CONFIG_FILE,
    SUMMARY_FILE, TRAJECTORY_FILE,
};
pub use sweep::{expand, point_config, run_sweep, Assignment, SweepIndex, SweepOutcome, SweepPoint, INDEX_FILE};

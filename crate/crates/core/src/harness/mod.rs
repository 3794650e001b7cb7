//! Batch experiments: JSON configuration, seeded parallel runs, CSV/SVG/JSON
//! artifacts, summary statistics and randomized property suites.
//!
//! Artifacts written by [`run_experiment`] into the output directory:
//!
//! - `trajectory_seed<seed>.csv`: `t,queue,Q,cleared_cum,arrived_cum,explored`
//!   for every recorded round, queues 0-based;
//! - `aggregate.csv`: `t,policy,mean_Q,std_Q`, the queue length averaged over
//!   the queues of each policy, with its mean and standard deviation across seeds;
//! - `estimates.csv`: final estimates of learning queues;
//! - `chart.svg` and `summary.json`.
//!
//! Every number in `summary.json` can be recomputed from the CSV files, see
//! [`load_output`].

mod config;
mod run;
pub mod stats;
mod suites;
mod svg;

use std::path::PathBuf;

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::model::ModelError;

pub use config::{load_config, ConfigError, ExperimentConfig, PolicySpec, Preset, DEFAULT_RECORD_STRIDE};
pub use run::{
    build_policies, execute, load_output, parse_estimates_csv, parse_trajectory_csv, run_experiment, AggregateRow,
    EstimatorErrors, ExperimentOutput, RunSummary, SeedRun, SeriesStats,
};
pub use suites::{property_suite, SuiteReport, SUITES};
pub use svg::{render_chart, ChartSeries};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize summary: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv line {line}: {detail}")]
    Csv { line: usize, detail: String },
    #[error("unknown property suite {0:?}")]
    UnknownSuite(String),
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line() as usize);
        HarnessError::Csv { line, detail: e.to_string() }
    }
}

//! Files, orchestration and the command line around [`mbtlearn_core`].
//!
//! * [`formats`] reads and writes every artifact: Mealy machines, test
//!   suites, traces, datasets, normalization statistics, network weights and
//!   result tables.
//! * [`config`] loads the pipeline configuration.
//! * [`pipeline`] implements the stages (learn, generate, run a suite,
//!   train and evaluate, report) and the end-to-end run.
//! * [`cli`] maps the `mbtlearn` subcommands onto the stages.

use std::path::{Path, PathBuf};

pub mod cli;
pub mod config;
pub mod formats;
pub mod pipeline;

pub use mbtlearn_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sul(#[from] mbtlearn_core::harness::SulError),
    #[error(transparent)]
    Learn(#[from] mbtlearn_core::learner::LearnError),
    #[error(transparent)]
    Testgen(#[from] mbtlearn_core::testgen::TestgenError),
    #[error(transparent)]
    Dataset(#[from] mbtlearn_core::dataset::DatasetError),
    #[error(transparent)]
    Rnn(#[from] mbtlearn_core::rnn::RnnError),
    #[error(transparent)]
    Eval(#[from] mbtlearn_core::eval::EvalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// 1 for usage and configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn format(path: &Path, msg: impl ToString) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

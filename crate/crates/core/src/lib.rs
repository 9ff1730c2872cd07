//! Workbench for asking whether hardware performance counters can detect
//! soft errors.
//!
//! The pipeline: assemble a guest workload ([`asm`], [`benchmarks`]), run it on
//! the instrumented emulator ([`sim`]), inject single-bit upsets into the
//! integer register file and label the outcomes ([`injector`]), turn the
//! counter dumps into cleaned feature datasets ([`dataset`]), explore them
//! ([`analysis`]) and train detectors ([`models`]).

pub mod analysis;
pub mod asm;
pub mod benchmarks;
pub mod dataset;
pub mod exec;
pub mod injector;
pub mod io;
pub mod models;
pub mod sim;

pub use exec::Execution;

/// Crate-level error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Asm(#[from] asm::AsmErrors),
    #[error(transparent)]
    Load(#[from] sim::LoadError),
    #[error(transparent)]
    Schedule(#[from] sim::ScheduleError),
    #[error(transparent)]
    Checkpoint(#[from] sim::CheckpointDecodeError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error("{0}")]
    Config(String),
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Asm(_) => "asm",
            Error::Load(_) => "load",
            Error::Schedule(_) => "schedule",
            Error::Checkpoint(_) => "checkpoint",
            Error::Analysis(_) => "analysis",
            Error::Dataset(_) => "dataset",
            Error::Model(_) => "model",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("event scheduled at {at} but virtual time is already {now}")]
    ScheduleInPast { at: f64, now: f64 },
    #[error("invalid simulation time {0}")]
    InvalidTime(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("distribution has an infinite mean")]
    InfiniteMean,
    #[error("min-composition needs at least one component")]
    EmptyComposition,
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServerError {
    #[error("clone {0} is already resident")]
    DuplicateClone(String),
    #[error("clone {0} is not resident")]
    NotResident(String),
    #[error("server time would move backwards from {last} to {to}")]
    TimeRegression { last: f64, to: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("unstable: load {load:.4} >= 1 (arrival rate {rate}, mean service {mean})")]
    Unstable { load: f64, rate: f64, mean: f64 },
    #[error("no stable cloning factor: smallest load over candidates is {min_load:.4} (must be < 1)")]
    NoStableCandidate { min_load: f64 },
    #[error("laws and capacities differ in length ({laws} vs {capacities})")]
    LengthMismatch { laws: usize, capacities: usize },
    #[error("invalid theory input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),
    #[error("series grids differ")]
    GridMismatch,
    #[error("baseline value {0} is not positive")]
    NonPositiveBaseline(f64),
    #[error("paired inputs differ in length ({0} vs {1})")]
    Unpaired(usize, usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{0}")]
    Unstable(String),
    #[error("missing replication file {0}")]
    MissingFile(PathBuf),
    #[error("figure kind `{figure}` cannot be produced from a `{kind}` run")]
    FigureMismatch { figure: String, kind: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

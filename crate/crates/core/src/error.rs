use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("census schema error at row {row}: {message}")]
    Schema { row: usize, message: String },

    #[error("missing cell: {geo} {age} {gender}")]
    MissingCell {
        geo: String,
        age: String,
        gender: String,
    },

    #[error("invalid level: cannot go from {from} to {to}")]
    InvalidLevel { from: String, to: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inclusion design error: {0}")]
    Design(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("bounding box constraint violated: {0}")]
    Constraint(String),

    #[error("insufficient authors: requested {requested}, have {available}")]
    InsufficientAuthors { requested: usize, available: usize },

    #[error("insufficient users: requested {requested}, have {available}")]
    InsufficientUsers { requested: usize, available: usize },

    #[error("clock moved backwards: last reading {last_ms} ms, now {now_ms} ms")]
    ClockRegression { last_ms: u64, now_ms: u64 },

    #[error("snowflake field out of range: {0}")]
    IdRange(String),

    #[error("32-bit id space exhausted")]
    IdSpaceExhausted,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("confusion spec error: {0}")]
    Spec(String),

    #[error("join error: {0}")]
    Join(String),

    #[error("singular design matrix; collinear columns: {}", columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("geo unit {0} cannot be predicted: all of its cells were dropped")]
    UnpredictableUnit(String),

    #[error("division by zero: actual population of {0} is zero")]
    ZeroActual(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("variant {variant}: {source}")]
    Variant {
        variant: String,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage} failed ({source}); inputs: {inputs:?}; reproduce with: {repro}")]
    Stage {
        stage: String,
        inputs: Vec<PathBuf>,
        repro: String,
        #[source]
        source: Box<Error>,
    },

    #[error("output directory {0} is locked by another pipeline run")]
    Locked(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidLevel { .. }
            | Error::InvalidArgument(_)
            | Error::Design(_)
            | Error::Config(_)
            | Error::Constraint(_)
            | Error::Spec(_)
            | Error::IdRange(_)
            | Error::Locked(_) => ErrorClass::Config,
            Error::SingularDesign { .. }
            | Error::UnpredictableUnit(_)
            | Error::ZeroActual(_)
            | Error::DegenerateSample(_) => ErrorClass::Numerical,
            Error::Variant { source, .. } | Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}

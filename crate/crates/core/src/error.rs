use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every stage of the synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("embedding row for class `{class_id}` has near-zero norm")]
    ZeroVector { class_id: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid blend coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("requested top-{k} but only {available} classes are available")]
    KTooLarge { k: usize, available: usize },

    #[error("label {label} is out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },

    #[error("objective became non-finite during {context}")]
    NonFinite { context: &'static str },

    #[error("init strategy {strategy} is incompatible with R={r}, S={s}")]
    IncompatibleStrategy {
        strategy: &'static str,
        r: usize,
        s: usize,
    },

    #[error("class-wise folding needs at least {needed} distinct classes, got {got}")]
    TooFewClasses { needed: usize, got: usize },

    #[error("invalid fold count {k}: {reason}")]
    InvalidFolds { k: usize, reason: &'static str },

    #[error("no class has any evaluation samples")]
    EmptyEvaluation,

    #[error("only {reachable} valid labels reachable from `{class_id}`, needed {needed}")]
    Unreachable {
        class_id: String,
        needed: usize,
        reachable: usize,
    },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("non-finite value at {path}:{line}")]
    NonFiniteInput { path: PathBuf, line: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the pipeline stage it surfaced in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of the numeric optimization itself, as opposed to
    /// bad inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared across the pipeline.
///
/// Variants map onto the CLI exit codes: configuration problems exit with 2,
/// data/schema problems with 3, everything else (training, evaluation,
/// explanation, orchestration) with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{table}: missing required column {column}")]
    MissingColumn { table: String, column: String },

    #[error("{table} line {line}: {message}")]
    Row {
        table: String,
        line: u64,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("input: {0}")]
    Input(String),

    #[error("data integrity: {0}")]
    Integrity(String),

    #[error("split: {0}")]
    Split(String),

    #[error("rebalance: {0}")]
    Rebalance(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("explanation: {0}")]
    Explain(String),

    #[error("pipeline: {0}")]
    Pipeline(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline stage it occurred in. Nested stage
    /// wrappers collapse to the innermost stage name.
    pub fn stage(stage: &'static str, err: Error) -> Self {
        match err {
            Error::Stage { .. } => err,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    pub fn stage_name(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// CLI exit code: 2 config, 3 data/schema, 4 pipeline.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) => 2,
            Error::Io { .. }
            | Error::MissingColumn { .. }
            | Error::Row { .. }
            | Error::Input(_)
            | Error::Integrity(_) => 3,
            _ => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_contract() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(
            Error::MissingColumn {
                table: "PATIENTS".into(),
                column: "SUBJECT_ID".into()
            }
            .exit_code(),
            3
        );
        assert_eq!(Error::Rebalance("x".into()).exit_code(), 4);
    }

    #[test]
    fn stage_wrapping_preserves_inner_code_and_name() {
        let err = Error::stage(
            "ingest",
            Error::io("LABEVENTS.csv", std::io::Error::from(std::io::ErrorKind::NotFound)),
        );
        assert_eq!(err.stage_name(), Some("ingest"));
        assert_eq!(err.exit_code(), 3);
        // double wrapping keeps the innermost stage
        let err = Error::stage("features", err);
        assert_eq!(err.stage_name(), Some("ingest"));
    }
}

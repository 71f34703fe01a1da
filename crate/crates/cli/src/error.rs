use std::fmt;
use std::process::ExitCode;

use rumorsage::model::ModelError;
use rumorsage::train_eval::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    /// An output could not be written.
    Output,
    BadConfig,
    BadInput,
    Numeric,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Output => 1,
            Failure::BadConfig => 2,
            Failure::BadInput => 3,
            Failure::Numeric => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Failure::Output => "output",
            Failure::BadConfig => "bad_config",
            Failure::BadInput => "bad_input",
            Failure::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(kind: Failure, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    /// The context chain joined by `: `, skipping causes already quoted by
    /// an outer message.
    pub fn message(&self) -> String {
        let mut msg = self.error.to_string();
        for cause in self.error.chain().skip(1) {
            let c = cause.to_string();
            if !msg.contains(&c) {
                msg.push_str(": ");
                msg.push_str(&c);
            }
        }
        msg
    }

    /// One line of JSON for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind.as_str(),
            "code": self.kind.code(),
            "message": self.message(),
        })
        .to_string()
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.as_str(), self.message())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Config(_) => Failure::BadConfig,
            TrainError::NonFinite { .. } => Failure::Numeric,
            TrainError::Model(m) => model_failure(m),
            TrainError::TooFewGraphs { .. } | TrainError::Unlabeled(_) | TrainError::Artifact(_) => Failure::BadInput,
        };
        CliError::new(kind, e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::new(model_failure(&e), e)
    }
}

fn model_failure(e: &ModelError) -> Failure {
    if e.is_non_finite() {
        Failure::Numeric
    } else if matches!(e, ModelError::Config(_)) {
        Failure::BadConfig
    } else {
        Failure::BadInput
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Tags an error with the exit category it belongs to.
pub trait Classify<T> {
    fn or_fail(self, kind: Failure) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_fail(self, kind: Failure) -> CliResult<T> {
        self.map_err(|e| CliError::new(kind, e))
    }
}

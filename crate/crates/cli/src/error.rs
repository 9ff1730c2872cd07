use std::fmt;

use pmufault::dataset::DatasetError;
use pmufault::models::ModelError;
use serde::Serialize;

/// Error reported on stderr as one JSON object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    /// Features a model needs but the dataset lacks.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing_features: Vec<String>,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
            missing_features: Vec::new(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    /// 2 for bad invocations and configs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.kind.as_str() {
            "usage" | "config" => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<pmufault::Error> for CliError {
    fn from(e: pmufault::Error) -> Self {
        let missing = match &e {
            pmufault::Error::Model(ModelError::FeatureMismatch { missing }) => missing.clone(),
            pmufault::Error::Dataset(DatasetError::UnknownFeatures(missing)) => missing.clone(),
            _ => Vec::new(),
        };
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
            missing_features: missing,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        pmufault::Error::from(e).into()
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        pmufault::Error::from(e).into()
    }
}

impl From<pmufault::analysis::AnalysisError> for CliError {
    fn from(e: pmufault::analysis::AnalysisError) -> Self {
        pmufault::Error::from(e).into()
    }
}

//! Request and response bodies exchanged between the service and its clients.

use serde::{Deserialize, Serialize};

use crate::engine::PipelineConfig;
use crate::jobs::{InputSpec, JobError, ParamGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    #[serde(default)]
    pub config: PipelineConfig,
    pub input: InputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRequest {
    #[serde(default)]
    pub config: PipelineConfig,
    pub workers: Vec<usize>,
    pub input: InputSpec,
    /// Records per second of the source; 0 means unthrottled.
    #[serde(default)]
    pub replay_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRequest {
    #[serde(default)]
    pub config: PipelineConfig,
    #[serde(default)]
    pub grid: ParamGrid,
    pub input: InputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Input,
    NotFound,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ApiError,
}

impl From<&JobError> for ApiError {
    fn from(e: &JobError) -> Self {
        let kind = match e {
            JobError::Config(_) => ErrorKind::Config,
            JobError::Input(_) => ErrorKind::Input,
            JobError::Internal(_) => ErrorKind::Internal,
        };
        ApiError { kind, message: e.to_string() }
    }
}

//! Typed client for the tweetguard HTTP service.

use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use tweetguard_core::api::{
    ApiError, BenchRequest, CreateSession, ErrorBody, ErrorKind, EvalRequest, Health, SessionCreated, TuneRequest,
};
use tweetguard_core::engine::PipelineConfig;
use tweetguard_core::ingest::SyntheticConfig;
use tweetguard_core::jobs::{BenchResult, EvalResult, PushOutcome, RunSummary, TuneResult};

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service could not be reached or the exchange broke off.
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error.
    #[error("{} ({status})", .error.message)]
    Api { status: StatusCode, error: ApiError },
}

impl ClientError {
    pub fn kind(&self) -> Option<ErrorKind> {
        match self {
            ClientError::Api { error, .. } => Some(error.kind),
            ClientError::Transport(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        let base = base_url.into().trim_end_matches('/').to_string();
        Self { base, http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn check(resp: Response) -> Result<Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let error = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => b.error,
            // axum's own rejections (malformed JSON etc.) are plain text
            Err(_) => ApiError {
                kind: if status.is_client_error() { ErrorKind::Config } else { ErrorKind::Internal },
                message: text,
            },
        };
        Err(ClientError::Api { status, error })
    }

    async fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self.http.post(self.url(path)).json(body).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    async fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self.http.get(self.url(path)).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get_json("/health").await
    }

    pub async fn eval(&self, req: &EvalRequest) -> Result<EvalResult, ClientError> {
        self.post_json("/v1/eval", req).await
    }

    pub async fn bench(&self, req: &BenchRequest) -> Result<BenchResult, ClientError> {
        self.post_json("/v1/bench", req).await
    }

    pub async fn tune(&self, req: &TuneRequest) -> Result<TuneResult, ClientError> {
        self.post_json("/v1/tune", req).await
    }

    /// Synthetic stream as newline-delimited JSON.
    pub async fn generate(&self, cfg: &SyntheticConfig) -> Result<String, ClientError> {
        let resp = self.http.post(self.url("/v1/generate")).json(cfg).send().await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn create_session(&self, config: &PipelineConfig) -> Result<String, ClientError> {
        let created: SessionCreated = self.post_json("/v1/sessions", &CreateSession { config: config.clone() }).await?;
        Ok(created.id)
    }

    /// Pushes newline-delimited JSON posts; `flush` runs a partial batch.
    pub async fn push(&self, session: &str, jsonl: String, flush: bool) -> Result<PushOutcome, ClientError> {
        let resp = self
            .http
            .post(self.url(&format!("/v1/sessions/{session}/records?flush={flush}")))
            .body(jsonl)
            .send()
            .await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn summary(&self, session: &str) -> Result<RunSummary, ClientError> {
        self.get_json(&format!("/v1/sessions/{session}/metrics")).await
    }

    pub async fn report(&self, session: &str) -> Result<String, ClientError> {
        let resp = self.http.get(self.url(&format!("/v1/sessions/{session}/report"))).send().await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn model(&self, session: &str) -> Result<Vec<u8>, ClientError> {
        let resp = self.http.get(self.url(&format!("/v1/sessions/{session}/model"))).send().await?;
        Ok(Self::check(resp).await?.bytes().await?.to_vec())
    }

    pub async fn delete_session(&self, session: &str) -> Result<(), ClientError> {
        let resp = self.http.delete(self.url(&format!("/v1/sessions/{session}"))).send().await?;
        Self::check(resp).await?;
        Ok(())
    }
}

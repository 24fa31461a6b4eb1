//! Typed calls against a running `nma serve`.

use nma_core::api::{ClustersView, DendrogramView, ErrorBody, NodeView, RenameRequest};
use nma_core::explain::Explanation;
use nma_core::ingest::LogLine;
use nma_core::NodeId;
use reqwest::{RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server answered {status}: {message}")]
    Status { status: StatusCode, message: String },
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_string(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn call<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(ClientError::Status { status, message })
    }

    pub async fn dendrogram(&self) -> Result<DendrogramView> {
        self.call(self.http.get(self.url("/dendrogram"))).await
    }

    pub async fn clusters(&self, cut: f64) -> Result<ClustersView> {
        self.call(self.http.get(self.url("/clusters")).query(&[("cut", cut)])).await
    }

    pub async fn rename(&self, node: NodeId, name: &str) -> Result<NodeView> {
        let body = RenameRequest { name: name.to_string() };
        self.call(self.http.post(self.url(&format!("/clusters/{node}/name"))).json(&body))
            .await
    }

    pub async fn explain(&self, label: &str) -> Result<Explanation> {
        self.call(self.http.get(self.url("/explain")).query(&[("label", label)])).await
    }

    pub async fn classify_explain(&self, record: &LogLine) -> Result<Explanation> {
        self.call(self.http.post(self.url("/classify-explain")).json(record)).await
    }
}

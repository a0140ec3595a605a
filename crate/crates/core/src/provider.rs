//! Errors and HTTP plumbing shared by the provider adapters (layout,
//! chart-to-table, embeddings, LLM).

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

pub const ENV_LLM_ENDPOINT: &str = "DOCRAG_LLM_ENDPOINT";
pub const ENV_LLM_KEY: &str = "DOCRAG_LLM_KEY";
pub const ENV_EMBED_ENDPOINT: &str = "DOCRAG_EMBED_ENDPOINT";
pub const ENV_EMBED_KEY: &str = "DOCRAG_EMBED_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider rejected the request: {0}")]
    Permanent(String),
    #[error("invalid provider response: {0}")]
    InvalidResponse(String),
}

impl ProviderError {
    /// Worth retrying: the same request may succeed later.
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Unreachable(_) | ProviderError::Transient(_))
    }
}

/// A remote endpoint plus optional bearer key.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn with_key(mut self, key: Option<String>) -> Self {
        self.api_key = key.filter(|k| !k.is_empty());
        self
    }

    /// Reads `<endpoint_var>` (required) and `<key_var>` (optional).
    pub fn from_env(endpoint_var: &str, key_var: &str) -> Result<Self, ProviderError> {
        let url = std::env::var(endpoint_var)
            .map_err(|_| ProviderError::Unreachable(format!("{endpoint_var} is not set")))?;
        Ok(Self::new(url).with_key(std::env::var(key_var).ok()))
    }

    pub(crate) fn client(&self) -> Result<reqwest::blocking::Client, ProviderError> {
        reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ProviderError::Permanent(format!("building HTTP client: {e}")))
    }

    /// POSTs `body` as JSON and returns the response body of a 2xx reply.
    pub(crate) fn post_json<T: Serialize + ?Sized>(&self, body: &T) -> Result<(u16, String), ProviderError> {
        let client = self.client()?;
        let mut request = client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key).header("api-key", key);
        }
        let response = request.send().map_err(classify_send_error)?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ProviderError::Transient(format!("reading response body: {e}")))?;
        if status.is_success() {
            return Ok((status.as_u16(), text));
        }
        let message = format!("{} {}: {}", status.as_u16(), status.canonical_reason().unwrap_or(""), truncate(&text, 200));
        if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
            Err(ProviderError::Transient(message))
        } else {
            Err(ProviderError::Permanent(message))
        }
    }
}

fn classify_send_error(err: reqwest::Error) -> ProviderError {
    if err.is_timeout() {
        ProviderError::Transient(format!("timed out: {err}"))
    } else if err.is_connect() {
        ProviderError::Unreachable(err.to_string())
    } else {
        ProviderError::Transient(err.to_string())
    }
}

fn truncate(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classification() {
        let (url, _rx) = testing::serve(vec![
            (503, "busy".into()),
            (400, "bad".into()),
            (200, "{}".into()),
        ]);
        let endpoint = HttpEndpoint::new(url);
        assert!(matches!(endpoint.post_json(&1), Err(ProviderError::Transient(_))));
        assert!(matches!(endpoint.post_json(&1), Err(ProviderError::Permanent(_))));
        assert_eq!(endpoint.post_json(&1).unwrap(), (200, "{}".to_string()));
    }

    #[test]
    fn unreachable_endpoint() {
        // Bind then drop to get a port nobody listens on.
        let port = std::net::TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let endpoint = HttpEndpoint::new(format!("http://127.0.0.1:{port}"));
        let err = endpoint.post_json(&1).unwrap_err();
        assert!(err.is_transient(), "{err:?}");
    }

    #[test]
    fn bearer_key_sent() {
        let (url, rx) = testing::serve(vec![(200, "{}".into())]);
        HttpEndpoint::new(url)
            .with_key(Some("secret".into()))
            .post_json(&serde_json::json!({"a": 1}))
            .unwrap();
        let req = rx.recv().unwrap();
        assert!(req
            .headers
            .iter()
            .any(|(k, v)| k == "authorization" && v == "Bearer secret"));
        assert_eq!(req.body, r#"{"a":1}"#);
    }
}

//! Blocking JSON-over-HTTP client shared by the remote backends.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::BackendError;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub timeout: Duration,
    /// Extra attempts after the first for retryable failures.
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

pub struct JsonClient {
    client: reqwest::blocking::Client,
    bearer: Option<String>,
    config: HttpConfig,
}

impl JsonClient {
    pub fn new(config: HttpConfig, bearer: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(JsonClient { client, bearer, config })
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(&self, url: &str, body: &Req) -> Result<Resp, BackendError> {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| BackendError::Transport(format!("{url}: {e}")))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transport(format!("{url}: HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Protocol(format!("{url}: HTTP {status}: {text}")));
        }
        resp.json::<Resp>()
            .map_err(|e| BackendError::Protocol(format!("{url}: bad response body: {e}")))
    }

    /// POST `body` as JSON, retrying transport failures with exponential backoff.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, url: &str, body: &Req) -> Result<Resp, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(url, body) {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    std::thread::sleep(self.config.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, LlmBackend, Prompt};

/// Environment variable holding the bearer token for the remote backend.
/// Tokens are never read from configuration files.
pub const TOKEN_ENV: &str = "CTRLBOT_LLM_TOKEN";
const BASE_URL_ENV: &str = "CTRLBOT_LLM_BASE_URL";
const MODEL_ENV: &str = "CTRLBOT_LLM_MODEL";

fn default_path() -> String {
    "/v1/chat/completions".into()
}
fn default_timeout() -> u64 {
    30
}
fn default_max_in_flight() -> usize {
    4
}
fn default_auth_header() -> String {
    "Authorization".into()
}
fn default_id() -> String {
    "remote".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            id: default_id(),
            base_url: base_url.into(),
            path: default_path(),
            model: model.into(),
            timeout_secs: default_timeout(),
            max_in_flight: default_max_in_flight(),
            auth_header: default_auth_header(),
        }
    }

    /// Reads a TOML file, then lets the environment override base URL and model.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Unavailable(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| BackendError::Unavailable(format!("{}: {e}", path.display())))?;
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            cfg.base_url = url;
        }
        if let Ok(model) = std::env::var(MODEL_ENV) {
            cfg.model = model;
        }
        Ok(cfg)
    }

    /// Configuration from the environment alone, if a base URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(BASE_URL_ENV).ok()?;
        let model = std::env::var(MODEL_ENV).unwrap_or_else(|_| "default".into());
        Some(Self::new(url, model))
    }

    fn url(&self) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), self.path.trim_start_matches('/'))
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Chat-completions client. Requests beyond `max_in_flight` wait for a slot.
pub struct RemoteBackend {
    config: RemoteConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
    slots: Slots,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let token = std::env::var(TOKEN_ENV).ok();
        Self::with_token(config, token)
    }

    pub fn with_token(config: RemoteConfig, token: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let slots = Slots { free: Mutex::new(config.max_in_flight.max(1)), cv: Condvar::new() };
        Ok(Self { config, token, client, slots })
    }

    fn request(&self, prompt: &Prompt, temperature: f64) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt.render()}],
            "temperature": temperature,
        });
        let mut req = self.client.post(self.config.url()).json(&body);
        if let Some(token) = &self.token {
            req = req.header(self.config.auth_header.as_str(), format!("Bearer {token}"));
        }
        let resp = req.send().map_err(map_err)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("HTTP {status}")));
        }
        let value: serde_json::Value = resp.json().map_err(map_err)?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .unwrap_or_default()
            .trim()
            .to_string();
        if content.is_empty() {
            Err(BackendError::Refusal)
        } else {
            Ok(content)
        }
    }
}

fn map_err(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Unavailable(e.to_string())
    }
}

impl LlmBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn complete(&self, prompt: &Prompt, temperature: f64) -> Result<String, BackendError> {
        let _permit = self.slots.acquire();
        self.request(prompt, temperature)
    }

    fn health(&self) -> Result<(), BackendError> {
        self.client.get(&self.config.base_url).send().map(|_| ()).map_err(map_err)
    }
}

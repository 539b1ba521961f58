use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::header::CONTENT_TYPE;

use super::{
    check_response, decode_response, encode_wire, ChatProvider, LlmError, ProviderRequest,
};
use crate::message::Message;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Client for an OpenAI-compatible `POST {base_url}/chat/completions`
/// endpoint. No retries.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    base_url: String,
    api_key: Option<String>,
    cap: Option<u32>,
    client: Client,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Result<Self, LlmError> {
        Self::with_timeout(base_url, api_key, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(
        base_url: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, LlmError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::ProviderUnreachable(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            cap: None,
            client,
        })
    }

    pub fn with_cap(mut self, cap: Option<u32>) -> Self {
        self.cap = cap;
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<Message, LlmError> {
        request.validate()?;
        let mut req = self
            .client
            .post(self.endpoint())
            .header(CONTENT_TYPE, "application/json")
            .body(encode_wire(request));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| LlmError::ProviderUnreachable(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .bytes()
            .map_err(|e| LlmError::ProviderUnreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::ProviderUnreachable(format!(
                "HTTP {status}: {}",
                String::from_utf8_lossy(&body)
            )));
        }
        let mut message = decode_response(&body)?;
        if message.agent_name.is_none() {
            message.agent_name = request.agent().map(str::to_string);
        }
        check_response(request, message, self.cap)
    }
}

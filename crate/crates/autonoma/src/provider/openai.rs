use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{Completion, CompletionBackend, CompletionRequest, ProviderError, Usage};

const TRANSPORT_RETRIES: u32 = 2;

/// Any OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct OpenAiBackend {
    client: reqwest::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl OpenAiBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let client = reqwest::Client::builder().timeout(Duration::from_secs(120)).build().expect("http client");
        OpenAiBackend { client, base_url: base_url.into().trim_end_matches('/').to_string(), model: model.into(), api_key }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

#[async_trait]
impl CompletionBackend for OpenAiBackend {
    async fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderError> {
        let mut body = json!({
            "model": self.model,
            "messages": req.messages.iter().map(|m| json!({"role": m.role.as_str(), "content": m.content})).collect::<Vec<_>>(),
            "temperature": req.params.temperature,
        });
        if let Some(max) = req.params.max_tokens {
            body["max_tokens"] = json!(max);
        }

        let mut last_err = String::new();
        for attempt in 0..=TRANSPORT_RETRIES {
            if attempt > 0 {
                tokio::time::sleep(Duration::from_millis(200 * u64::from(attempt))).await;
            }
            let mut call = self.client.post(self.endpoint()).json(&body);
            if let Some(key) = &self.api_key {
                call = call.bearer_auth(key);
            }
            let resp = match call.send().await {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "completion transport error");
                    last_err = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if !status.is_success() {
                let text = resp.text().await.unwrap_or_default();
                return Err(ProviderError::Unavailable(format!("HTTP {status}: {}", truncate(&text, 200))));
            }
            let parsed: ChatResponse =
                resp.json().await.map_err(|e| ProviderError::Unavailable(format!("malformed response: {e}")))?;
            let text = parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| ProviderError::Unavailable("response has no choices".into()))?;
            let usage = parsed
                .usage
                .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
                .unwrap_or_default();
            return Ok(Completion { text, usage });
        }
        Err(ProviderError::Unavailable(last_err))
    }

    fn identity(&self) -> String {
        format!("openai-compatible:{}", self.model)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

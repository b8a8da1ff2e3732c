//! OpenAI-compatible `POST {base_url}/chat/completions` client.

use super::{ChatProvider, Completion, LlmError, PromptBundle, Role, TokenUsage};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout", with = "crate::finstore::warehouse::duration_ms")]
    pub timeout: Duration,
}

fn default_timeout() -> Duration {
    Duration::from_secs(30)
}

pub struct RemoteChatProvider {
    id: String,
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

impl RemoteChatProvider {
    /// Fails when `api_key_env` names a variable that is not set.
    pub fn new(config: &RemoteConfig) -> Result<Self, String> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            id: format!("remote:{}", config.model),
            base_url: config.base_url.trim_end_matches('/').to_string(),
            model: config.model.clone(),
            api_key,
            client,
        })
    }

    fn body(&self, bundle: &PromptBundle) -> serde_json::Value {
        let mut messages = Vec::new();
        if !bundle.system_text.is_empty() {
            messages.push(json!({ "role": "system", "content": bundle.system_text }));
        }
        for m in &bundle.messages {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({ "role": role, "content": m.content }));
        }
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": bundle.decoding.temperature,
            "max_tokens": bundle.decoding.max_tokens,
        })
    }
}

impl ChatProvider for RemoteChatProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, bundle: &PromptBundle) -> Result<Completion, LlmError> {
        let provider = self.id.clone();
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&self.body(bundle));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout {
                    provider: provider.clone(),
                }
            } else {
                LlmError::Transport {
                    provider: provider.clone(),
                    message: e.to_string(),
                }
            }
        })?;
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            let message = resp.text().unwrap_or_default();
            return Err(match status {
                401 | 403 => LlmError::Auth {
                    provider,
                    status,
                    message,
                },
                429 => LlmError::RateLimited { provider, message },
                500..=599 => LlmError::Transport {
                    provider,
                    message: format!("server error {status}: {message}"),
                },
                _ => LlmError::Rejected {
                    provider,
                    status,
                    message,
                },
            });
        }
        let body: ChatResponse = resp.json().map_err(|e| LlmError::BadResponse {
            provider: provider.clone(),
            message: e.to_string(),
        })?;
        let choice = body.choices.into_iter().next().ok_or_else(|| LlmError::BadResponse {
            provider: provider.clone(),
            message: "no choices in response".into(),
        })?;
        let usage = body
            .usage
            .map(|u| TokenUsage {
                prompt: u.prompt_tokens,
                completion: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(Completion {
            text: choice.message.content.unwrap_or_default(),
            usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(url: &str) -> RemoteConfig {
        RemoteConfig {
            base_url: url.into(),
            model: "m".into(),
            api_key_env: None,
            timeout: Duration::from_millis(300),
        }
    }

    #[test]
    fn missing_key_variable_is_named() {
        let mut c = config("http://127.0.0.1:9");
        c.api_key_env = Some("FINSQL_TEST_SURELY_UNSET_KEY".into());
        let err = RemoteChatProvider::new(&c).err().unwrap();
        assert!(err.contains("FINSQL_TEST_SURELY_UNSET_KEY"));
    }

    #[test]
    fn connection_refused_is_retryable() {
        let p = RemoteChatProvider::new(&config("http://127.0.0.1:9")).unwrap();
        let err = p.chat(&PromptBundle::user("s", "u")).unwrap_err();
        assert!(err.is_retryable(), "{err}");
    }

    #[test]
    fn request_body_shape() {
        let p = RemoteChatProvider::new(&config("http://x/")).unwrap();
        let mut b = PromptBundle::user("sys", "hello");
        b.messages.push(super::super::Message::assistant("prior"));
        let v = p.body(&b);
        assert_eq!(v["messages"][0]["role"], "system");
        assert_eq!(v["messages"][2]["role"], "assistant");
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(p.base_url, "http://x");
    }
}

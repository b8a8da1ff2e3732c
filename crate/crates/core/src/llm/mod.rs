//! Chat-completion providers behind one gateway that owns retries and
//! call accounting.

mod remote;
mod scripted;

pub use remote::{RemoteChatProvider, RemoteConfig};
pub use scripted::{Matcher, ScriptError, ScriptRule, ScriptedProvider};

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 2048,
        }
    }
}

/// Everything sent in one completion call. Assistant turns carry earlier
/// model output when a prompt continues a conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub messages: Vec<Message>,
    pub decoding: Decoding,
}

impl PromptBundle {
    pub fn new(system_text: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            system_text: system_text.into(),
            messages,
            decoding: Decoding::default(),
        }
    }

    /// A bundle holding a single user turn.
    pub fn user(system_text: impl Into<String>, text: impl Into<String>) -> Self {
        Self::new(system_text, vec![Message::user(text)])
    }

    pub fn is_empty(&self) -> bool {
        self.system_text.trim().is_empty() && self.messages.iter().all(|m| m.content.trim().is_empty())
    }

    /// System text and all turns joined by blank lines; what scripted rules
    /// match against.
    pub fn concatenated(&self) -> String {
        std::iter::once(self.system_text.as_str())
            .chain(self.messages.iter().map(|m| m.content.as_str()))
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u32,
    pub completion: u32,
}

/// Raw provider output before the gateway stamps it.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReply {
    pub text: String,
    pub provider_id: String,
    #[serde(with = "crate::finstore::warehouse::duration_ms")]
    pub latency: Duration,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("prompt bundle is empty")]
    EmptyBundle,
    #[error("no_script_match: no scripted rule matches the prompt starting {excerpt:?}")]
    NoScriptMatch { excerpt: String },
    #[error("provider `{provider}` transport error: {message}")]
    Transport { provider: String, message: String },
    #[error("provider `{provider}` timed out")]
    Timeout { provider: String },
    #[error("provider `{provider}` rejected credentials ({status}): {message}")]
    Auth {
        provider: String,
        status: u16,
        message: String,
    },
    #[error("provider `{provider}` rate limited the request: {message}")]
    RateLimited { provider: String, message: String },
    #[error("provider `{provider}` rejected the request ({status}): {message}")]
    Rejected {
        provider: String,
        status: u16,
        message: String,
    },
    #[error("provider `{provider}` returned an unusable response: {message}")]
    BadResponse { provider: String, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport { .. } | LlmError::Timeout { .. })
    }

    /// Stable machine-readable name of the error class.
    pub fn code(&self) -> &'static str {
        match self {
            LlmError::EmptyBundle => "empty_bundle",
            LlmError::NoScriptMatch { .. } => "no_script_match",
            LlmError::Transport { .. } => "transport",
            LlmError::Timeout { .. } => "timeout",
            LlmError::Auth { .. } => "auth",
            LlmError::RateLimited { .. } => "rate_limited",
            LlmError::Rejected { .. } => "rejected",
            LlmError::BadResponse { .. } => "bad_response",
            LlmError::Exhausted { .. } => "exhausted",
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;

    fn chat(&self, bundle: &PromptBundle) -> Result<Completion, LlmError>;

    /// Readiness; `Err` carries the reason.
    fn health(&self) -> Result<(), String> {
        Ok(())
    }

    /// Whether calls may be issued from several threads at once without
    /// changing results.
    fn concurrency_safe(&self) -> bool {
        true
    }

    /// Called before each pipeline run; stateful providers rewind here so
    /// every question starts from the same state.
    fn start_session(&self) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub retries: u32,
    #[serde(with = "crate::finstore::warehouse::duration_ms")]
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            base_backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Self {
            provider,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn provider(&self) -> &Arc<dyn ChatProvider> {
        &self.provider
    }

    /// One completion. Transport failures and timeouts are retried with
    /// exponential backoff; every other error is returned at once.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<ModelReply, LlmError> {
        if bundle.is_empty() {
            return Err(LlmError::EmptyBundle);
        }
        let mut attempt = 0;
        loop {
            let started = Instant::now();
            match self.provider.chat(bundle) {
                Ok(c) => {
                    return Ok(ModelReply {
                        text: c.text,
                        provider_id: self.provider.id().to_string(),
                        latency: started.elapsed(),
                        usage: c.usage,
                    })
                }
                Err(e) if e.is_retryable() && attempt < self.retry.retries => {
                    tracing::warn!(provider = self.provider.id(), attempt, error = %e, "retrying completion");
                    std::thread::sleep(self.retry.base_backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err(e) if e.is_retryable() => {
                    return Err(LlmError::Exhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Whitespace token count, used where a provider reports no usage.
pub(crate) fn approx_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        fails: u32,
        calls: AtomicU32,
        error: LlmError,
    }

    impl ChatProvider for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }

        fn chat(&self, _: &PromptBundle) -> Result<Completion, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fails {
                Err(self.error.clone())
            } else {
                Ok(Completion {
                    text: "ok".into(),
                    usage: TokenUsage::default(),
                })
            }
        }
    }

    fn gateway(fails: u32, error: LlmError) -> (Gateway, Arc<Flaky>) {
        let p = Arc::new(Flaky {
            fails,
            calls: AtomicU32::new(0),
            error,
        });
        let g = Gateway::new(p.clone()).with_retry(RetryPolicy {
            retries: 2,
            base_backoff: Duration::ZERO,
        });
        (g, p)
    }

    fn transport() -> LlmError {
        LlmError::Transport {
            provider: "flaky".into(),
            message: "reset".into(),
        }
    }

    #[test]
    fn retries_transport_errors() {
        let (g, p) = gateway(2, transport());
        let reply = g.complete(&PromptBundle::user("", "hi")).unwrap();
        assert_eq!(reply.text, "ok");
        assert_eq!(reply.provider_id, "flaky");
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_with_last_cause() {
        let (g, p) = gateway(3, transport());
        let err = g.complete(&PromptBundle::user("", "hi")).unwrap_err();
        assert!(matches!(&err, LlmError::Exhausted { attempts: 3, last } if **last == transport()));
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let auth = LlmError::Auth {
            provider: "flaky".into(),
            status: 401,
            message: "bad key".into(),
        };
        let (g, p) = gateway(1, auth.clone());
        assert_eq!(g.complete(&PromptBundle::user("", "hi")).unwrap_err(), auth);
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn empty_bundle_is_refused() {
        let (g, p) = gateway(0, transport());
        assert_eq!(
            g.complete(&PromptBundle::user(" ", "")).unwrap_err(),
            LlmError::EmptyBundle
        );
        assert_eq!(p.calls.load(Ordering::SeqCst), 0);
    }
}

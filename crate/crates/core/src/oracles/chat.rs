use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::retry::with_retries;
use crate::error::{Result, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// `POST /v1/chat` request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn system_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn first_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

/// `POST /v1/chat` response body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
}

pub trait ChatService: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

impl<T: ChatService + ?Sized> ChatService for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        (**self).complete(request)
    }
}

/// Greedy-decoding chat client with retry on transport failure.
#[derive(Clone)]
pub struct ChatClient {
    service: Arc<dyn ChatService>,
    pub model_id: String,
    /// Total attempts per call, at least 1.
    pub max_retries: u32,
    pub backoff: Duration,
    pub max_tokens: u32,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("model_id", &self.model_id)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl ChatClient {
    /// Sampling temperature is always zero.
    pub const TEMPERATURE: f64 = 0.0;

    pub fn new(service: Arc<dyn ChatService>, model_id: impl Into<String>) -> Self {
        Self {
            service,
            model_id: model_id.into(),
            max_retries: 3,
            backoff: Duration::from_millis(200),
            max_tokens: 512,
        }
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    pub fn complete(&self, messages: Vec<ChatMessage>) -> Result<String> {
        let request = ChatRequest {
            messages,
            temperature: Self::TEMPERATURE,
            max_tokens: self.max_tokens,
        };
        let response = with_retries(self.max_retries, self.backoff, || {
            self.service
                .complete(&request)
                .map_err(|e| e.with_stage("chat"))
        })?;
        Ok(response.content)
    }

    /// Single system + user exchange.
    pub fn chat(&self, system_text: &str, user_text: &str) -> Result<String> {
        self.complete(vec![ChatMessage::system(system_text), ChatMessage::user(user_text)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        fail_first: u32,
        calls: AtomicU32,
    }

    impl ChatService for Flaky {
        fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
            assert_eq!(request.temperature, 0.0);
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(TransportError::new("http", "connection reset"))
            } else {
                Ok(ChatResponse { content: format!("ok after {n}") })
            }
        }
    }

    fn client(fail_first: u32) -> (Arc<Flaky>, ChatClient) {
        let svc = Arc::new(Flaky { fail_first, calls: AtomicU32::new(0) });
        let c = ChatClient::new(svc.clone(), "m").with_retries(3, Duration::ZERO);
        (svc, c)
    }

    #[test]
    fn transient_failure_recovers() {
        let (svc, c) = client(2);
        assert_eq!(c.chat("s", "u").unwrap(), "ok after 2");
        assert_eq!(svc.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn persistent_failure_stops_after_max_retries_calls() {
        let (svc, c) = client(u32::MAX);
        let err = c.chat("s", "u").unwrap_err();
        assert!(matches!(err, Error::Transport(ref t) if t.stage == "chat"));
        assert_eq!(svc.calls.load(Ordering::SeqCst), 3);
    }
}

//! Target negative log-likelihood of the answer sentence given a prompt.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::retry::with_retries;
use crate::error::{Error, Result, TransportError};

/// `POST /v1/loss` request body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossRequest {
    pub prompt: String,
    pub target: String,
}

/// `POST /v1/loss` response body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossResponse {
    pub nll: f64,
    pub token_count: u32,
}

pub trait LossService: Send + Sync {
    fn loss(&self, request: &LossRequest) -> Result<LossResponse, TransportError>;
}

impl<T: LossService + ?Sized> LossService for Arc<T> {
    fn loss(&self, request: &LossRequest) -> Result<LossResponse, TransportError> {
        (**self).loss(request)
    }
}

/// Offline stand-in for a language model: every whitespace token of the
/// target costs `present_cost` if it also occurs as a whitespace token of the
/// prompt and `absent_cost` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeywordLossRule {
    pub present_cost: f64,
    pub absent_cost: f64,
}

impl Default for KeywordLossRule {
    fn default() -> Self {
        Self {
            present_cost: 0.1,
            absent_cost: 1.0,
        }
    }
}

impl KeywordLossRule {
    /// `(present, absent)` token counts.
    pub fn counts(prompt: &str, target: &str) -> (u32, u32) {
        let vocab: HashSet<&str> = prompt.split_whitespace().collect();
        let mut present = 0;
        let mut absent = 0;
        for token in target.split_whitespace() {
            if vocab.contains(token) {
                present += 1;
            } else {
                absent += 1;
            }
        }
        (present, absent)
    }

    pub fn evaluate(&self, prompt: &str, target: &str) -> LossResponse {
        let (present, absent) = Self::counts(prompt, target);
        LossResponse {
            nll: present as f64 * self.present_cost + absent as f64 * self.absent_cost,
            token_count: present + absent,
        }
    }
}

impl LossService for KeywordLossRule {
    fn loss(&self, request: &LossRequest) -> Result<LossResponse, TransportError> {
        Ok(self.evaluate(&request.prompt, &request.target))
    }
}

#[derive(Clone)]
pub enum LossBackend {
    Remote {
        service: Arc<dyn LossService>,
        model_id: String,
    },
    Mock(KeywordLossRule),
}

impl std::fmt::Debug for LossBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossBackend::Remote { model_id, .. } => write!(f, "Remote({model_id})"),
            LossBackend::Mock(rule) => write!(f, "Mock({rule:?})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossOracle {
    pub backend: LossBackend,
    pub max_retries: u32,
    pub backoff: Duration,
}

impl LossOracle {
    pub fn mock(rule: KeywordLossRule) -> Self {
        Self {
            backend: LossBackend::Mock(rule),
            max_retries: 1,
            backoff: Duration::ZERO,
        }
    }

    pub fn remote(service: Arc<dyn LossService>, model_id: impl Into<String>) -> Self {
        Self {
            backend: LossBackend::Remote {
                service,
                model_id: model_id.into(),
            },
            max_retries: 3,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn model_id(&self) -> String {
        match &self.backend {
            LossBackend::Remote { model_id, .. } => model_id.clone(),
            LossBackend::Mock(rule) => format!("mock-keyword({},{})", rule.present_cost, rule.absent_cost),
        }
    }
}

/// Summed NLL of `target` as a forced continuation of `prompt`.
pub fn target_nll(oracle: &LossOracle, prompt: &str, target: &str) -> Result<LossResponse> {
    if target.trim().is_empty() {
        return Err(Error::Precondition("target text is empty".into()));
    }
    match &oracle.backend {
        LossBackend::Mock(rule) => Ok(rule.evaluate(prompt, target)),
        LossBackend::Remote { service, .. } => {
            let request = LossRequest {
                prompt: prompt.to_string(),
                target: target.to_string(),
            };
            let response = with_retries(oracle.max_retries, oracle.backoff, || {
                service.loss(&request).map_err(|e| e.with_stage("loss"))
            })?;
            if !response.nll.is_finite() || response.nll < 0.0 {
                return Err(Error::Protocol(format!("loss service returned nll {}", response.nll)));
            }
            if response.token_count == 0 {
                return Err(Error::Protocol(
                    "loss service tokenized a non-empty target to zero tokens".into(),
                ));
            }
            Ok(response)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_rule_examples() {
        let oracle = LossOracle::mock(KeywordLossRule::default());
        let r = target_nll(&oracle, "a b c", "a d").unwrap();
        assert!((r.nll - 1.1).abs() < 1e-12);
        assert_eq!(r.token_count, 2);

        let r = target_nll(&oracle, "x y z w", "y z w").unwrap();
        assert!((r.nll - 0.1 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_target_rejected() {
        let oracle = LossOracle::mock(KeywordLossRule::default());
        assert!(matches!(target_nll(&oracle, "a", " "), Err(Error::Precondition(_))));
    }

    struct Bad(LossResponse);
    impl LossService for Bad {
        fn loss(&self, _: &LossRequest) -> Result<LossResponse, TransportError> {
            Ok(self.0)
        }
    }

    #[test]
    fn remote_responses_are_validated() {
        let zero = LossOracle::remote(Arc::new(Bad(LossResponse { nll: 1.0, token_count: 0 })), "m");
        assert!(matches!(target_nll(&zero, "p", "t"), Err(Error::Protocol(_))));
        let neg = LossOracle::remote(Arc::new(Bad(LossResponse { nll: -1.0, token_count: 1 })), "m");
        assert!(matches!(target_nll(&neg, "p", "t"), Err(Error::Protocol(_))));
    }
}

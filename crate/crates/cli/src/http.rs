//! Blocking JSON-over-HTTP clients for the external services.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use storyreason::oracles::{
    ChatRequest, ChatResponse, ChatService, GradientRequest, GradientResponse, GradientService,
    LossRequest, LossResponse, LossService,
};
use storyreason::perception::{
    CaptionRequest, CaptionResponse, CaptionService, SegmentRequest, SegmentResponse,
    SegmentationService,
};
use storyreason::TransportError;

/// One base URL; every service trait is implemented on top of it.
#[derive(Clone)]
pub struct HttpService {
    base: String,
    agent: ureq::Agent,
    token: Option<String>,
}

impl std::fmt::Debug for HttpService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpService").field("base", &self.base).finish()
    }
}

impl HttpService {
    pub fn new(base: impl Into<String>, timeout: Duration, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            agent,
            token,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, TransportError> {
        let url = format!("{}{path}", self.base);
        let mut request = self.agent.post(&url);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| TransportError::new("http", format!("{url}: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(TransportError::new("http", format!("{url}: status {status}: {text}")));
        }
        response
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::new("http", format!("{url}: bad response body: {e}")))
    }
}

impl SegmentationService for HttpService {
    fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse, TransportError> {
        self.post("/v1/segment", request)
    }
}

impl CaptionService for HttpService {
    fn caption(&self, request: &CaptionRequest) -> Result<CaptionResponse, TransportError> {
        self.post("/v1/caption", request)
    }
}

impl ChatService for HttpService {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.post("/v1/chat", request)
    }
}

impl LossService for HttpService {
    fn loss(&self, request: &LossRequest) -> Result<LossResponse, TransportError> {
        self.post("/v1/loss", request)
    }
}

impl GradientService for HttpService {
    fn segment_gradients(&self, request: &GradientRequest) -> Result<GradientResponse, TransportError> {
        self.post("/v1/segment_gradients", request)
    }
}

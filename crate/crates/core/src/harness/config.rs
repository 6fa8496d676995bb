use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gspo::GspoConfig;
use crate::perception::SegmentParams;
use crate::prompt::DEFAULT_CONTEXT_LIMIT;

/// Where a service lives: an HTTP base URL or `mock:<fixture dir>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Http(String),
    Mock(PathBuf),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(dir) = s.strip_prefix("mock:") {
            return Ok(Endpoint::Mock(PathBuf::from(dir)));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Endpoint::Http(s.trim_end_matches('/').to_string()));
        }
        Err(Error::Precondition(format!("endpoint {s:?} is neither http(s):// nor mock:<dir>")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Endpoints {
    pub segmentation: Option<String>,
    pub caption: Option<String>,
    pub chat: Option<String>,
    pub loss: Option<String>,
    pub gradient: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Models {
    pub perception: String,
    pub chat: String,
    pub loss: String,
}

impl Default for Models {
    fn default() -> Self {
        Self {
            perception: "sam-vit-h+blip2".into(),
            chat: "gpt-3.5-turbo".into(),
            loss: "vicuna-7b".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub endpoints: Endpoints,
    pub models: Models,
    /// Bearer token passed through to HTTP services. Never written out.
    #[serde(skip_serializing)]
    pub api_token: Option<String>,
    pub timeout_secs: u64,
    /// Total attempts per service call.
    pub max_retries: u32,
    pub story_retries: u32,
    pub context_limit: usize,
    pub segment: SegmentParams,
    pub gspo: GspoConfig,
    pub label_set: String,
    pub cache_dir: Option<PathBuf>,
    pub parallelism: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            endpoints: Endpoints::default(),
            models: Models::default(),
            api_token: None,
            timeout_secs: 60,
            max_retries: 3,
            story_retries: crate::story::DEFAULT_STORY_RETRIES,
            context_limit: DEFAULT_CONTEXT_LIMIT,
            segment: SegmentParams::default(),
            gspo: GspoConfig::default(),
            label_set: "pipa".into(),
            cache_dir: None,
            parallelism: 1,
        }
    }
}

/// Environment variables that override endpoint settings.
pub const ENV_OVERRIDES: [(&str, &str); 6] = [
    ("STORYREASON_SEGMENTATION_URL", "segmentation"),
    ("STORYREASON_CAPTION_URL", "caption"),
    ("STORYREASON_CHAT_URL", "chat"),
    ("STORYREASON_LOSS_URL", "loss"),
    ("STORYREASON_GRADIENT_URL", "gradient"),
    ("STORYREASON_API_TOKEN", "token"),
];

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
    }

    /// Applies [`ENV_OVERRIDES`] looked up through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        for (name, field) in ENV_OVERRIDES {
            let Some(value) = var(name).filter(|v| !v.is_empty()) else { continue };
            let slot = match field {
                "segmentation" => &mut self.endpoints.segmentation,
                "caption" => &mut self.endpoints.caption,
                "chat" => &mut self.endpoints.chat,
                "loss" => &mut self.endpoints.loss,
                "gradient" => &mut self.endpoints.gradient,
                _ => &mut self.api_token,
            };
            *slot = Some(value);
        }
    }

    /// Points every unset endpoint at the same mock fixture directory.
    pub fn with_mock_defaults(mut self, dir: &Path) -> Self {
        let mock = format!("mock:{}", dir.display());
        for slot in [
            &mut self.endpoints.segmentation,
            &mut self.endpoints.caption,
            &mut self.endpoints.chat,
            &mut self.endpoints.loss,
            &mut self.endpoints.gradient,
        ] {
            slot.get_or_insert_with(|| mock.clone());
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = serde_json::from_str(r#"{"context_limit": 2048, "gspo": {"k": 5}}"#).unwrap();
        assert_eq!(c.context_limit, 2048);
        assert_eq!(c.gspo.k, 5);
        assert_eq!(c.gspo.batch_size, 16);
        assert_eq!(c.segment.nms_iou, 0.7);
    }

    #[test]
    fn env_overrides_and_token_is_not_serialized() {
        let mut c = Config::default();
        c.apply_env(|k| match k {
            "STORYREASON_CHAT_URL" => Some("http://localhost:9000".into()),
            "STORYREASON_API_TOKEN" => Some("secret".into()),
            _ => None,
        });
        assert_eq!(c.endpoints.chat.as_deref(), Some("http://localhost:9000"));
        assert_eq!(c.api_token.as_deref(), Some("secret"));
        assert!(!serde_json::to_string(&c).unwrap().contains("secret"));
    }

    #[test]
    fn endpoint_forms() {
        assert_eq!(Endpoint::parse("mock:fx").unwrap(), Endpoint::Mock("fx".into()));
        assert_eq!(Endpoint::parse("http://h:1/").unwrap(), Endpoint::Http("http://h:1".into()));
        assert!(Endpoint::parse("ftp://x").is_err());
    }
}

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::Config;

/// What was run, with which models, prompts and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Config,
    pub model_ids: BTreeMap<String, String>,
    pub prompt_versions: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: impl Into<String>, config: &Config) -> Self {
        let model_ids = BTreeMap::from([
            ("perception".to_string(), config.models.perception.clone()),
            ("chat".to_string(), config.models.chat.clone()),
            ("loss".to_string(), config.models.loss.clone()),
        ]);
        Self {
            command: command.into(),
            config: config.clone(),
            model_ids,
            prompt_versions: BTreeMap::new(),
            seeds: Vec::new(),
            cache_hits: 0,
            cache_misses: 0,
            started_at: unix_now(),
            finished_at: 0,
        }
    }

    pub fn finish(&mut self, cache_hits: usize, cache_misses: usize) {
        self.cache_hits = cache_hits;
        self.cache_misses = cache_misses;
        self.finished_at = unix_now();
    }
}

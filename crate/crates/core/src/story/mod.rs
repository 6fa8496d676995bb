//! Fusion of a perception bundle into a coordinate-free social story.

mod fusion;
mod sheet;
mod validate;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use fusion::{
    build_fusion_prompt, extract_sheet, FUSION_PROMPT_VERSION, FUSION_SYSTEM_PROMPT, SHEET_CLOSE,
    SHEET_OPEN,
};
pub use sheet::{render_caption_sheet, CaptionSheet};
pub use validate::{coordinate_leaks, mentions, validate_story, ValidationReport};

use crate::error::Result;
use crate::oracles::{ChatClient, ChatMessage};
use crate::perception::PerceptionBundle;

/// Re-prompts after the first fusion call when validation fails.
pub const DEFAULT_STORY_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialStory {
    pub text: String,
    pub symbols_mentioned: BTreeSet<String>,
    pub source_bundle_hash: String,
    /// Validation problems left after the last attempt.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SocialStory {
    pub fn is_validated(&self) -> bool {
        self.warnings.is_empty()
    }
}

fn repair_request(report: &ValidationReport) -> String {
    format!(
        "The story has problems: {}. Rewrite the whole paragraph so that it mentions every \
person symbol and contains no numerical coordinates.",
        report.summary()
    )
}

/// Fuses `bundle` into a story with at most `1 + retries` chat calls.
pub fn generate_story(bundle: &PerceptionBundle, client: &ChatClient, retries: u32) -> Result<SocialStory> {
    let sheet = render_caption_sheet(bundle);
    let (system, user) = build_fusion_prompt(&sheet);
    let mut messages = vec![ChatMessage::system(system), ChatMessage::user(user)];

    let mut attempt = 0;
    loop {
        let text = client.complete(messages.clone())?.trim().to_string();
        let report = validate_story(&text, bundle);
        let mut warnings = Vec::new();
        if text.is_empty() {
            warnings.push("empty story".to_string());
        }
        if !report.passed() {
            warnings.push(report.summary());
        }
        if warnings.is_empty() || attempt >= retries {
            if !warnings.is_empty() {
                log::warn!("story for {} kept with warnings: {}", bundle.image_ref, warnings.join("; "));
            }
            let symbols_mentioned = bundle
                .symbols
                .entries
                .iter()
                .filter(|e| mentions(&text, &e.symbol))
                .map(|e| e.symbol.clone())
                .collect();
            return Ok(SocialStory {
                text,
                symbols_mentioned,
                source_bundle_hash: bundle.digest(),
                warnings,
            });
        }
        attempt += 1;
        let request = if report.passed() {
            "The story is empty. Write the paragraph.".to_string()
        } else {
            repair_request(&report)
        };
        messages.push(ChatMessage::assistant(text));
        messages.push(ChatMessage::user(request));
    }
}

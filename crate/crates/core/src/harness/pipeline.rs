use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cache::Cache;
use super::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::gspo::TrainExample;
use crate::hash::{json_digest, key_of};
use crate::oracles::ChatClient;
use crate::parallel::map_bounded;
use crate::perception::{
    match_query_boxes, perceive, CaptionService, LoadedImage, PerceptionBundle, SegmentParams,
    SegmentationService,
};
use crate::prompt::{assemble_chat, format_query, parse_answer, LabelSet, ParsedAnswer, Query, SocialPrompt};
use crate::story::{generate_story, SocialStory, FUSION_PROMPT_VERSION};

pub struct Services {
    pub segmenter: Arc<dyn SegmentationService>,
    pub captioner: Arc<dyn CaptionService>,
    /// Identifies the segmentation and caption models in cache keys.
    pub perception_model_id: String,
    pub chat: ChatClient,
    pub segment_params: SegmentParams,
    pub story_retries: u32,
    pub context_limit: usize,
}

/// A failed record: which stage broke and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub reason: String,
}

impl StageFailure {
    fn new(stage: &str, err: Error) -> Self {
        let stage = match &err {
            Error::UnmatchableQuery(_) => "unmatchable-query",
            Error::AmbiguousQuery(_) => "ambiguous-query",
            Error::ContextOverflow { .. } => "context-overflow",
            Error::NoTemplate { .. } => "no-template",
            Error::UnknownLabel { .. } => "unknown-label",
            _ => stage,
        };
        Self { stage: stage.to_string(), reason: err.to_string() }
    }

    pub fn message(&self) -> String {
        format!("{}: {}", self.stage, self.reason)
    }
}

/// Story and query text for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prepared {
    pub story: SocialStory,
    pub query: Query,
}

impl Prepared {
    pub fn query_text(&self) -> String {
        format_query(&self.query)
    }

    pub fn train_example(&self, gold_label: &str) -> TrainExample {
        TrainExample {
            story: self.story.text.clone(),
            query: self.query_text(),
            gold_label: gold_label.to_string(),
        }
    }
}

/// Perception bundle for an image, cached by image content, perception
/// model and filter thresholds.
pub fn cached_bundle(image: &LoadedImage, services: &Services, cache: &Cache) -> Result<PerceptionBundle> {
    let mut params = services.segment_params.clone();
    params.parallelism = 1;
    let key = key_of(&[&image.sha256, &services.perception_model_id, &json_digest(&params)]);
    cache.get_or_insert_with("bundles", &key, || {
        perceive(
            image,
            &format!("sha256:{}", image.sha256),
            &services.segmenter,
            &services.captioner,
            &services.segment_params,
        )
    })
}

/// Story cached by bundle content, chat model and fusion prompt version.
pub fn cached_story(bundle: &PerceptionBundle, services: &Services, cache: &Cache) -> Result<SocialStory> {
    let key = key_of(&[&bundle.digest(), &services.chat.model_id, FUSION_PROMPT_VERSION]);
    cache.get_or_insert_with("stories", &key, || {
        generate_story(bundle, &services.chat, services.story_retries)
    })
}

/// Perception, story and query matching for one record.
pub fn prepare(record: &DatasetRecord, services: &Services, cache: &Cache) -> Result<Prepared, StageFailure> {
    let bytes = std::fs::read(&record.image_ref)
        .map_err(|e| StageFailure::new("load-image", Error::Io(e)))?;
    let image = LoadedImage::decode(bytes).map_err(|e| StageFailure::new("load-image", e))?;
    let bundle = cached_bundle(&image, services, cache).map_err(|e| StageFailure::new("perceive", e))?;
    let story = cached_story(&bundle, services, cache).map_err(|e| StageFailure::new("narrate", e))?;
    let (s1, s2) = match_query_boxes(&record.b1, &record.b2, &bundle)
        .map_err(|e| StageFailure::new("match-query", e))?;
    let query = Query::new(s1, s2).map_err(|e| StageFailure::new("match-query", e))?;
    Ok(Prepared { story, query })
}

/// Reasoning call on a prepared record.
pub fn reason(
    prepared: &Prepared,
    services: &Services,
    prompt: &SocialPrompt,
    labels: &LabelSet,
) -> Result<ParsedAnswer, StageFailure> {
    let (system, user) = assemble_chat(prompt, &prepared.story.text, &prepared.query_text(), services.context_limit)
        .map_err(|e| StageFailure::new("assemble", e))?;
    let raw = services.chat.chat(&system, &user).map_err(|e| StageFailure::new("reason", e))?;
    parse_answer(&raw, labels).map_err(|e| StageFailure::new("parse", e))
}

/// Full chain for one record.
pub fn run_pipeline(
    record: &DatasetRecord,
    services: &Services,
    prompt: &SocialPrompt,
    labels: &LabelSet,
    cache: &Cache,
) -> Result<ParsedAnswer, StageFailure> {
    let prepared = prepare(record, services, cache)?;
    reason(&prepared, services, prompt, labels)
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub record_id: String,
    pub label: Option<String>,
    #[serde(default)]
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Prediction {
    pub fn from_result(record_id: &str, result: Result<ParsedAnswer, StageFailure>) -> Self {
        match result {
            Ok(a) => Self {
                record_id: record_id.to_string(),
                label: Some(a.label),
                explanation: a.explanation,
                failure: None,
            },
            Err(f) => Self {
                record_id: record_id.to_string(),
                label: None,
                explanation: String::new(),
                failure: Some(f.message()),
            },
        }
    }
}

/// Predictions for `records` in input order, up to `parallelism` at a time.
pub fn predict_all(
    records: &[&DatasetRecord],
    services: &Services,
    prompt: &SocialPrompt,
    labels: &LabelSet,
    cache: &Cache,
    parallelism: usize,
) -> Vec<Prediction> {
    map_bounded(records, parallelism, |r| {
        Prediction::from_result(&r.record_id, run_pipeline(r, services, prompt, labels, cache))
    })
}

pub fn predictions_to_jsonl(predictions: &[Prediction]) -> String {
    predictions
        .iter()
        .map(|p| serde_json::to_string(p).expect("serializable prediction") + "\n")
        .collect()
}

pub fn predictions_from_jsonl(text: &str) -> Result<Vec<Prediction>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Dataset(format!("predictions line {}: {e}", i + 1)))
        })
        .collect()
}

//! Image perception: segmentation, person classification, symbol assignment
//! and dense/task-oriented captions.

mod geometry;
mod image_io;
mod mask;
mod pipeline;
mod service;
mod symbols;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use geometry::{center_to_corner, iou, nms, nms_indices, BBox, Scored};
pub use image_io::{decode_b64, LoadedImage};
pub use mask::{mask_centroid, Mask};
pub use pipeline::{
    classify_person, collect_captions, perceive, two_stage_segment, Captions, SegmentParams,
};
pub use service::{
    questions, CaptionRequest, CaptionResponse, CaptionService, MaskRecord, SegmentMode,
    SegmentRequest, SegmentResponse, SegmentationService,
};
pub use symbols::{assign_symbols, match_query_boxes};

use crate::error::{Error, Result};

/// Reserved symbol for the image-level caption record.
pub const IMAGE_SYMBOL: &str = "IMG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedObject {
    pub object_id: String,
    pub mask: Mask,
    /// Tight box of `mask`.
    pub bbox: BBox,
    /// Foreground pixel count of `mask`.
    pub area: u64,
    pub score: f64,
}

impl SegmentedObject {
    /// Derives box and area from the mask so the invariants hold by
    /// construction.
    pub fn from_mask(object_id: impl Into<String>, mask: Mask, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Protocol(format!("mask score {score} outside [0, 1]")));
        }
        let bbox = mask.tight_bbox()?;
        let area = mask.area();
        Ok(Self {
            object_id: object_id.into(),
            mask,
            bbox,
            area,
            score,
        })
    }

    pub fn centroid(&self) -> (f64, f64) {
        mask_centroid(&self.mask).expect("segmented objects have non-empty masks")
    }
}

impl Scored for SegmentedObject {
    fn score(&self) -> f64 {
        self.score
    }

    fn bbox(&self) -> &BBox {
        &self.bbox
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Person,
    Other,
}

impl ObjectKind {
    pub fn prefix(self) -> char {
        match self {
            ObjectKind::Person => 'P',
            ObjectKind::Other => 'O',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolEntry {
    pub symbol: String,
    pub object_id: String,
    pub kind: ObjectKind,
}

/// Ordered symbol assignment: `P1..Pn` for persons, `O1..Om` for the rest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolTable {
    pub entries: Vec<SymbolEntry>,
}

impl SymbolTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, symbol: &str) -> Option<&SymbolEntry> {
        self.entries.iter().find(|e| e.symbol == symbol)
    }

    pub fn persons(&self) -> impl Iterator<Item = &SymbolEntry> {
        self.entries.iter().filter(|e| e.kind == ObjectKind::Person)
    }

    pub fn person_symbols(&self) -> Vec<String> {
        self.persons().map(|e| e.symbol.clone()).collect()
    }

    /// Checks consecutive numbering per kind and uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut counters = [0usize; 2];
        for e in &self.entries {
            let slot = match e.kind {
                ObjectKind::Person => 0,
                ObjectKind::Other => 1,
            };
            counters[slot] += 1;
            let expected = format!("{}{}", e.kind.prefix(), counters[slot]);
            if e.symbol != expected {
                return Err(Error::Precondition(format!(
                    "symbol {} out of sequence, expected {expected}",
                    e.symbol
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub symbol: String,
    pub caption: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl CaptionRecord {
    pub fn error(&self) -> Option<&str> {
        self.attributes.get("error").map(String::as_str)
    }
}

/// Everything perception extracted from one image, keyed by symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionBundle {
    /// Path or content hash of the source image.
    pub image_ref: String,
    pub objects: Vec<SegmentedObject>,
    pub symbols: SymbolTable,
    pub captions: Vec<CaptionRecord>,
    pub image_caption: CaptionRecord,
}

impl PerceptionBundle {
    pub fn object(&self, object_id: &str) -> Option<&SegmentedObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    pub fn caption_for(&self, symbol: &str) -> Option<&CaptionRecord> {
        self.captions.iter().find(|c| c.symbol == symbol)
    }

    pub fn digest(&self) -> String {
        crate::hash::json_digest(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.symbols.validate()?;
        if self.image_caption.symbol != IMAGE_SYMBOL {
            return Err(Error::Precondition(format!(
                "image caption has symbol {}, expected {IMAGE_SYMBOL}",
                self.image_caption.symbol
            )));
        }
        for entry in &self.symbols.entries {
            let n = self.captions.iter().filter(|c| c.symbol == entry.symbol).count();
            if n != 1 {
                return Err(Error::Precondition(format!(
                    "symbol {} has {n} caption records",
                    entry.symbol
                )));
            }
            if self.object(&entry.object_id).is_none() {
                return Err(Error::Precondition(format!(
                    "symbol {} refers to unknown object {}",
                    entry.symbol, entry.object_id
                )));
            }
        }
        if self.captions.len() != self.symbols.len() {
            return Err(Error::Precondition(
                "caption records reference symbols outside the table".into(),
            ));
        }
        Ok(())
    }
}

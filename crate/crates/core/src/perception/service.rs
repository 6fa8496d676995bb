//! Wire types and client traits for the segmentation and caption services.

use serde::{Deserialize, Serialize};

use super::mask::Mask;
use crate::error::{Error, Result, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMode {
    Everything,
    Points,
}

/// `POST /v1/segment` request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image_b64: String,
    pub mode: SegmentMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_level: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub rle: Vec<u32>,
    pub width: u32,
    pub height: u32,
    /// `[x0, y0, w, h]`; informational, the mask is authoritative.
    pub bbox: [f64; 4],
    pub area: u64,
    pub score: f64,
}

impl MaskRecord {
    pub fn from_mask(mask: &Mask, score: f64) -> Self {
        let bbox = mask
            .tight_bbox()
            .map(|b| [b.x0, b.y0, b.w, b.h])
            .unwrap_or([0.0; 4]);
        Self {
            rle: mask.rle.clone(),
            width: mask.width,
            height: mask.height,
            bbox,
            area: mask.area(),
            score,
        }
    }

    pub fn to_mask(&self) -> Result<Mask> {
        Mask::new(self.width, self.height, self.rle.clone())
    }
}

/// `POST /v1/segment` response body.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<MaskRecord>,
}

/// `POST /v1/caption` request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

/// `POST /v1/caption` response body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub text: String,
}

pub trait SegmentationService: Send + Sync {
    fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse, TransportError>;
}

pub trait CaptionService: Send + Sync {
    fn caption(&self, request: &CaptionRequest) -> Result<CaptionResponse, TransportError>;
}

impl<T: SegmentationService + ?Sized> SegmentationService for std::sync::Arc<T> {
    fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse, TransportError> {
        (**self).segment(request)
    }
}

impl<T: CaptionService + ?Sized> CaptionService for std::sync::Arc<T> {
    fn caption(&self, request: &CaptionRequest) -> Result<CaptionResponse, TransportError> {
        (**self).caption(request)
    }
}

/// The fixed VQA questions and the short keys mock fixtures use for them.
pub mod questions {
    pub const IS_PERSON: &str = "Is this a person? Answer yes or no.";
    pub const AGE: &str = "How old is this person?";
    pub const GENDER: &str = "What is the gender of this person?";
    pub const SCENE: &str = "What social scenario or event is shown in this picture?";

    const TABLE: [(&str, &str); 4] = [
        (IS_PERSON, "person"),
        (AGE, "age"),
        (GENDER, "gender"),
        (SCENE, "scene"),
    ];

    /// Short attribute key for a known question.
    pub fn key(question: &str) -> Option<&'static str> {
        TABLE.iter().find(|(q, _)| *q == question).map(|(_, k)| *k)
    }
}

pub(crate) fn check_mask_size(mask: &Mask, width: u32, height: u32) -> Result<()> {
    if mask.width != width || mask.height != height {
        return Err(Error::Protocol(format!(
            "service returned a {}x{} mask for a {width}x{height} image",
            mask.width, mask.height
        )));
    }
    Ok(())
}

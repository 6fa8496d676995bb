//! Service-backed perception steps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geometry::nms;
use super::image_io::LoadedImage;
use super::mask::mask_centroid;
use super::service::{
    check_mask_size, questions, CaptionRequest, CaptionService, SegmentMode, SegmentRequest,
    SegmentationService,
};
use super::symbols::assign_symbols;
use super::{CaptionRecord, ObjectKind, PerceptionBundle, SegmentedObject, SymbolTable, IMAGE_SYMBOL};
use crate::error::{Error, Result, TransportError};
use crate::parallel::map_bounded;

/// Filtering thresholds applied after the second segmentation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Minimum mask area in pixels. `None` means 0.5% of the image area.
    #[serde(default)]
    pub area_min: Option<u64>,
    #[serde(default = "SegmentParams::default_score_min")]
    pub score_min: f64,
    #[serde(default = "SegmentParams::default_nms_iou")]
    pub nms_iou: f64,
    #[serde(default = "SegmentParams::default_parallelism")]
    pub parallelism: usize,
}

impl SegmentParams {
    pub const DEFAULT_AREA_FRACTION: f64 = 0.005;

    fn default_score_min() -> f64 {
        0.5
    }

    fn default_nms_iou() -> f64 {
        0.7
    }

    fn default_parallelism() -> usize {
        1
    }

    pub fn area_min_for(&self, image: &LoadedImage) -> u64 {
        self.area_min
            .unwrap_or_else(|| (image.pixel_count() as f64 * Self::DEFAULT_AREA_FRACTION).ceil() as u64)
    }
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            area_min: None,
            score_min: Self::default_score_min(),
            nms_iou: Self::default_nms_iou(),
            parallelism: Self::default_parallelism(),
        }
    }
}

/// Segment-everything pass, then a point-prompted pass at the mask centroids
/// keeping only the whole-object level, then score/area filtering and NMS.
pub fn two_stage_segment(
    image: &LoadedImage,
    service: &dyn SegmentationService,
    params: &SegmentParams,
) -> Result<Vec<SegmentedObject>> {
    let image_b64 = image.to_b64();
    let first = service
        .segment(&SegmentRequest {
            image_b64: image_b64.clone(),
            mode: SegmentMode::Everything,
            points: None,
            semantic_level: None,
        })
        .map_err(|e| e.with_stage("segment-everything"))?;

    let mut points = Vec::with_capacity(first.masks.len());
    for record in &first.masks {
        let mask = match record.to_mask() {
            Ok(m) => m,
            Err(Error::EmptyMask) => continue,
            Err(e) => return Err(Error::Protocol(format!("segment-everything: {e}"))),
        };
        check_mask_size(&mask, image.width(), image.height())?;
        let (x, y) = mask_centroid(&mask)?;
        points.push([x, y]);
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }

    let second = service
        .segment(&SegmentRequest {
            image_b64,
            mode: SegmentMode::Points,
            points: Some(points),
            semantic_level: Some("highest".into()),
        })
        .map_err(|e| e.with_stage("segment-points"))?;

    let area_min = params.area_min_for(image);
    let mut objects = Vec::with_capacity(second.masks.len());
    for (i, record) in second.masks.iter().enumerate() {
        let mask = match record.to_mask() {
            Ok(m) => m,
            Err(Error::EmptyMask) => continue,
            Err(e) => return Err(Error::Protocol(format!("segment-points: {e}"))),
        };
        check_mask_size(&mask, image.width(), image.height())?;
        let obj = SegmentedObject::from_mask(format!("m{i:03}"), mask, record.score)?;
        if obj.score >= params.score_min && obj.area >= area_min {
            objects.push(obj);
        }
    }
    Ok(nms(&objects, params.nms_iou))
}

fn ask(
    service: &dyn CaptionService,
    image_b64: String,
    mask_rle: Option<Vec<u32>>,
    question: Option<&str>,
) -> Result<String, TransportError> {
    service
        .caption(&CaptionRequest {
            image_b64,
            mask_rle,
            question: question.map(str::to_string),
        })
        .map(|r| r.text.trim().to_string())
}

/// Yes/no VQA on the masked object; anything not starting with "yes" is
/// [`ObjectKind::Other`].
pub fn classify_person(
    image: &LoadedImage,
    object: &SegmentedObject,
    service: &dyn CaptionService,
) -> Result<ObjectKind> {
    let crop = image.masked_crop_b64(&object.mask)?;
    let answer = ask(service, crop, Some(object.mask.rle.clone()), Some(questions::IS_PERSON))
        .map_err(|e| e.with_stage("classify"))?;
    Ok(if answer.to_ascii_lowercase().starts_with("yes") {
        ObjectKind::Person
    } else {
        ObjectKind::Other
    })
}

/// Per-symbol records plus the image-level record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Captions {
    pub records: Vec<CaptionRecord>,
    pub image: CaptionRecord,
}

fn object_record(
    image: &LoadedImage,
    object: &SegmentedObject,
    symbol: &str,
    kind: ObjectKind,
    service: &dyn CaptionService,
) -> CaptionRecord {
    let mut attributes = BTreeMap::new();
    let result = (|| -> Result<String> {
        let crop = image.masked_crop_b64(&object.mask)?;
        let rle = Some(object.mask.rle.clone());
        let caption = ask(service, crop.clone(), rle.clone(), None)?;
        if kind == ObjectKind::Person {
            let age = ask(service, crop.clone(), rle.clone(), Some(questions::AGE))?;
            let gender = ask(service, crop, rle, Some(questions::GENDER))?;
            attributes.insert("age".to_string(), age);
            attributes.insert("gender".to_string(), gender);
        }
        Ok(caption)
    })();
    let caption = match result {
        Ok(c) => c,
        Err(e) => {
            log::warn!("caption for {symbol} failed: {e}");
            attributes.clear();
            attributes.insert("error".to_string(), e.to_string());
            String::new()
        }
    };
    CaptionRecord {
        symbol: symbol.to_string(),
        caption,
        attributes,
    }
}

/// Dense captions for every symbol, age/gender for persons and a scene
/// question for the whole image. Per-object failures are recorded in an
/// `error` attribute instead of aborting.
pub fn collect_captions(
    image: &LoadedImage,
    objects: &[SegmentedObject],
    symbols: &SymbolTable,
    service: &dyn CaptionService,
    parallelism: usize,
) -> Result<Captions> {
    let mut jobs = Vec::with_capacity(symbols.len());
    for entry in &symbols.entries {
        let object = objects
            .iter()
            .find(|o| o.object_id == entry.object_id)
            .ok_or_else(|| Error::Precondition(format!("no object for {}", entry.symbol)))?;
        jobs.push((entry, object));
    }
    let records = map_bounded(&jobs, parallelism, |(entry, object)| {
        object_record(image, object, &entry.symbol, entry.kind, service)
    });

    let mut attributes = BTreeMap::new();
    let image_b64 = image.to_b64();
    let caption = match ask(service, image_b64.clone(), None, None)
        .and_then(|c| ask(service, image_b64, None, Some(questions::SCENE)).map(|s| (c, s)))
    {
        Ok((caption, scene)) => {
            attributes.insert("scene".to_string(), scene);
            caption
        }
        Err(e) => {
            attributes.insert("error".to_string(), e.to_string());
            String::new()
        }
    };
    Ok(Captions {
        records,
        image: CaptionRecord {
            symbol: IMAGE_SYMBOL.to_string(),
            caption,
            attributes,
        },
    })
}

/// Full perception for one image.
pub fn perceive(
    image: &LoadedImage,
    image_ref: &str,
    segmenter: &dyn SegmentationService,
    captioner: &dyn CaptionService,
    params: &SegmentParams,
) -> Result<PerceptionBundle> {
    let objects = two_stage_segment(image, segmenter, params)?;
    let kinds = map_bounded(&objects, params.parallelism, |o| classify_person(image, o, captioner))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let symbols = assign_symbols(&objects, &kinds)?;
    let captions = collect_captions(image, &objects, &symbols, captioner, params.parallelism)?;
    let bundle = PerceptionBundle {
        image_ref: image_ref.to_string(),
        objects,
        symbols,
        captions: captions.records,
        image_caption: captions.image,
    };
    bundle.validate()?;
    Ok(bundle)
}

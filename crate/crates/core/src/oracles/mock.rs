//! Deterministic offline backends driven by a fixture directory.
//!
//! Layout:
//!
//! ```text
//! <dir>/perception/*.json   one file per image (see `ImageFixture`)
//! <dir>/chat.json           canned replies and answer rules (optional)
//! <dir>/loss.json           keyword loss rule (optional)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::chat::{ChatRequest, ChatResponse, ChatService};
use super::hints::{GradientRequest, GradientResponse, GradientService};
use super::loss::{KeywordLossRule, LossRequest, LossResponse, LossService};
use crate::error::{Error, Result, TransportError};
use crate::gspo::OVERFLOW_PENALTY;
use crate::hash::{json_digest, sha256_hex};
use crate::perception::{
    decode_b64, questions, CaptionRequest, CaptionResponse, CaptionService, Mask, MaskRecord,
    SegmentMode, SegmentRequest, SegmentResponse, SegmentationService,
};
use crate::prompt::{assemble, PromptSegment, SegmentKind, SocialPrompt, DEFAULT_CONTEXT_LIMIT};
use crate::story::{extract_sheet, FUSION_SYSTEM_PROMPT};

/// A mask given either as a pixel rectangle `[x0, y0, w, h]` or as raw RLE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureShape {
    Rect { rect: [u32; 4] },
    Rle { rle: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureMask {
    #[serde(flatten)]
    pub shape: FixtureShape,
    pub score: f64,
}

/// Object-level mask returned by point prompts, with its VQA answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureObject {
    #[serde(flatten)]
    pub mask: FixtureMask,
    #[serde(default)]
    pub caption: String,
    /// Answers keyed by question key (`person`, `age`, `gender`).
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
    /// Every request for this object except the person question fails.
    #[serde(default)]
    pub fail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFixture {
    /// Image path relative to the fixture directory.
    pub image: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub scene: String,
    /// First-stage masks (parts and fragments).
    #[serde(default)]
    pub everything: Vec<FixtureMask>,
    /// Second-stage masks; a point prompt returns every object containing it.
    #[serde(default)]
    pub objects: Vec<FixtureObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRule {
    pub keyword: String,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatFixture {
    /// Replies keyed by SHA-256 of the last user message.
    #[serde(default)]
    pub canned: BTreeMap<String, String>,
    /// First rule whose keyword occurs in the story decides the answer.
    #[serde(default)]
    pub answer_rules: Vec<AnswerRule>,
    #[serde(default = "default_label")]
    pub default_label: String,
}

fn default_label() -> String {
    "friends".to_string()
}

fn to_mask(shape: &FixtureShape, width: u32, height: u32) -> Result<Mask> {
    match shape {
        FixtureShape::Rect { rect: [x, y, w, h] } => Mask::rect(width, height, *x, *y, *w, *h),
        FixtureShape::Rle { rle } => Mask::new(width, height, rle.clone()),
    }
}

struct LoadedObject {
    mask: Mask,
    score: f64,
    fixture: FixtureObject,
}

struct LoadedImageFixture {
    fixture: ImageFixture,
    everything: Vec<MaskRecord>,
    objects: Vec<LoadedObject>,
}

/// Parsed fixture directory.
#[derive(Clone)]
pub struct MockFixtures {
    pub dir: PathBuf,
    images: Arc<HashMap<String, LoadedImageFixture>>,
    objects_by_rle: Arc<HashMap<String, (String, usize)>>,
    pub chat: ChatFixture,
    pub loss_rule: KeywordLossRule,
}

impl std::fmt::Debug for MockFixtures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockFixtures")
            .field("dir", &self.dir)
            .field("images", &self.images.len())
            .finish()
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
}

impl MockFixtures {
    pub fn load(dir: &Path) -> Result<Self> {
        let mut images = HashMap::new();
        let mut objects_by_rle = HashMap::new();
        let perception = dir.join("perception");
        if perception.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&perception)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for path in files {
                let fixture: ImageFixture = read_json(&path)?;
                let bytes = std::fs::read(dir.join(&fixture.image))?;
                let sha = sha256_hex(&bytes);
                let (w, h) = (fixture.width, fixture.height);
                let everything = fixture
                    .everything
                    .iter()
                    .map(|m| Ok(MaskRecord::from_mask(&to_mask(&m.shape, w, h)?, m.score)))
                    .collect::<Result<Vec<_>>>()?;
                let mut objects = Vec::new();
                for (i, o) in fixture.objects.iter().enumerate() {
                    let mask = to_mask(&o.mask.shape, w, h)?;
                    objects_by_rle
                        .entry(json_digest(&mask.rle))
                        .or_insert_with(|| (sha.clone(), i));
                    objects.push(LoadedObject { mask, score: o.mask.score, fixture: o.clone() });
                }
                images.insert(sha, LoadedImageFixture { fixture, everything, objects });
            }
        }
        let chat_path = dir.join("chat.json");
        let chat = if chat_path.exists() { read_json(&chat_path)? } else { ChatFixture::default() };
        let loss_path = dir.join("loss.json");
        let loss_rule = if loss_path.exists() { read_json(&loss_path)? } else { KeywordLossRule::default() };
        Ok(Self {
            dir: dir.to_path_buf(),
            images: Arc::new(images),
            objects_by_rle: Arc::new(objects_by_rle),
            chat,
            loss_rule,
        })
    }

    /// Image paths named by the perception fixtures, relative to `dir`.
    pub fn image_paths(&self) -> Vec<PathBuf> {
        let mut paths: Vec<PathBuf> = self.images.values().map(|f| self.dir.join(&f.fixture.image)).collect();
        paths.sort();
        paths
    }

    pub fn segmentation(&self) -> MockSegmentation {
        MockSegmentation { fixtures: self.clone(), calls: AtomicUsize::new(0) }
    }

    pub fn caption(&self) -> MockCaption {
        MockCaption { fixtures: self.clone(), calls: AtomicUsize::new(0) }
    }

    pub fn chat_service(&self) -> MockChat {
        MockChat::new(self.chat.clone())
    }

    pub fn gradient(&self) -> MockGradient {
        MockGradient::new(self.loss_rule)
    }

    fn image_for(&self, image_b64: &str) -> Result<&LoadedImageFixture, TransportError> {
        let bytes = decode_b64(image_b64).map_err(|e| TransportError::new("mock", e.to_string()))?;
        let sha = sha256_hex(&bytes);
        self.images
            .get(&sha)
            .ok_or_else(|| TransportError::new("mock", format!("no fixture for image {sha}")))
    }
}

pub struct MockSegmentation {
    fixtures: MockFixtures,
    calls: AtomicUsize,
}

impl MockSegmentation {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SegmentationService for MockSegmentation {
    fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let image = self.fixtures.image_for(&request.image_b64)?;
        let masks = match request.mode {
            SegmentMode::Everything => image.everything.clone(),
            SegmentMode::Points => {
                let points = request.points.as_deref().unwrap_or_default();
                let mut out = Vec::new();
                for [x, y] in points {
                    let (px, py) = (x.floor().max(0.0) as u32, y.floor().max(0.0) as u32);
                    for o in &image.objects {
                        if o.mask.contains(px, py) {
                            out.push(MaskRecord::from_mask(&o.mask, o.score));
                        }
                    }
                }
                out
            }
        };
        Ok(SegmentResponse { masks })
    }
}

pub struct MockCaption {
    fixtures: MockFixtures,
    calls: AtomicUsize,
}

impl MockCaption {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CaptionService for MockCaption {
    fn caption(&self, request: &CaptionRequest) -> Result<CaptionResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = request.question.as_deref().map(|q| {
            questions::key(q).map(str::to_string).unwrap_or_else(|| q.to_string())
        });
        let text = match &request.mask_rle {
            None => {
                let image = self.fixtures.image_for(&request.image_b64)?;
                match key.as_deref() {
                    None => image.fixture.caption.clone(),
                    Some("scene") => image.fixture.scene.clone(),
                    Some(other) => return Err(TransportError::new("mock", format!("no image answer for {other:?}"))),
                }
            }
            Some(rle) => {
                let (sha, i) = self
                    .fixtures
                    .objects_by_rle
                    .get(&json_digest(rle))
                    .ok_or_else(|| TransportError::new("mock", "no fixture object for mask"))?;
                let object = &self.fixtures.images[sha].objects[*i].fixture;
                if object.fail && key.as_deref() != Some("person") {
                    return Err(TransportError::new("mock", "injected caption failure"));
                }
                match key {
                    None => object.caption.clone(),
                    Some(k) => object.answers.get(&k).cloned().unwrap_or_else(|| match k.as_str() {
                        "person" => "no".to_string(),
                        _ => "unknown".to_string(),
                    }),
                }
            }
        };
        Ok(CaptionResponse { text })
    }
}

/// Canned, fusion and rule-based replies.
pub struct MockChat {
    pub fixture: ChatFixture,
    calls: AtomicUsize,
}

impl MockChat {
    pub fn new(fixture: ChatFixture) -> Self {
        Self { fixture, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn fuse(sheet: &str) -> String {
        let mut sentences = Vec::new();
        for line in sheet.lines() {
            let Some((symbol, rest)) = line.split_once(": ") else { continue };
            if symbol == "IMG" {
                sentences.push(format!("The picture shows {}", rest.trim_end_matches('.')));
                continue;
            }
            let (caption, attrs) = match rest.rsplit_once(" (") {
                Some((c, a)) => (c, Some(a.trim_end_matches(')'))),
                None => (rest, None),
            };
            let mut s = format!("{symbol} is {caption}");
            if let Some(a) = attrs {
                s.push_str(&format!(", with {}", a.replace('=', " ")));
            }
            sentences.push(s);
        }
        let mut out = sentences.join(". ");
        if !out.is_empty() {
            out.push('.');
        }
        out
    }

    fn answer(&self, user: &str) -> String {
        let story = user
            .split_once("### Story\n")
            .map(|(_, rest)| rest.split("\n\n### ").next().unwrap_or(rest))
            .unwrap_or(user)
            .to_lowercase();
        let hit = self
            .fixture
            .answer_rules
            .iter()
            .find(|r| story.contains(&r.keyword.to_lowercase()));
        match hit {
            Some(rule) => format!(
                "The final answer is {}. The story mentions {}.",
                rule.label, rule.keyword
            ),
            None => format!(
                "The final answer is {}. Nothing in the story points elsewhere.",
                self.fixture.default_label
            ),
        }
    }
}

impl ChatService for MockChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let last = request
            .last_user_text()
            .ok_or_else(|| TransportError::new("mock", "request has no user message"))?;
        if let Some(content) = self.fixture.canned.get(&sha256_hex(last.as_bytes())) {
            return Ok(ChatResponse { content: content.clone() });
        }
        let content = if request.system_text() == Some(FUSION_SYSTEM_PROMPT) {
            let first = request.first_user_text().unwrap_or_default();
            Self::fuse(extract_sheet(first).unwrap_or_default())
        } else {
            self.answer(last)
        };
        Ok(ChatResponse { content })
    }
}

impl LossService for MockLoss {
    fn loss(&self, request: &LossRequest) -> Result<LossResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.rule.evaluate(&request.prompt, &request.target))
    }
}

/// Keyword loss rule behind the loss service interface, with a call counter.
pub struct MockLoss {
    pub rule: KeywordLossRule,
    calls: AtomicUsize,
}

impl MockLoss {
    pub fn new(rule: KeywordLossRule) -> Self {
        Self { rule, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Probe-surrogate scores over every example in the request, using the
/// keyword loss rule. Requires the four prompt segments.
pub struct MockGradient {
    pub rule: KeywordLossRule,
    pub context_limit: usize,
    calls: AtomicUsize,
}

impl MockGradient {
    pub fn new(rule: KeywordLossRule) -> Self {
        Self { rule, context_limit: DEFAULT_CONTEXT_LIMIT, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn prompt(texts: &[String]) -> Result<SocialPrompt> {
        let seg = |m: usize| PromptSegment::new(SegmentKind::ALL[m], format!("s{m}"), texts[m].clone());
        SocialPrompt::from_segments([seg(0)?, seg(1)?, seg(2)?, seg(3)?])
    }

    pub fn scores(&self, request: &GradientRequest) -> Result<Vec<Vec<f64>>> {
        if request.segments.len() != 4 || request.candidates.len() != 4 {
            return Err(Error::Protocol("expected four segments".into()));
        }
        if request.examples.is_empty() {
            return Err(Error::Protocol("no examples".into()));
        }
        let mut scores = Vec::with_capacity(4);
        for (m, pool) in request.candidates.iter().enumerate() {
            let mut row = Vec::with_capacity(pool.len());
            for candidate in pool {
                let mut texts = request.segments.clone();
                texts[m] = candidate.clone();
                let prompt = Self::prompt(&texts)?;
                let mut sum = 0.0;
                for ex in &request.examples {
                    sum += match assemble(&prompt, &ex.story, &ex.query, self.context_limit) {
                        Ok(text) => self.rule.evaluate(&text, &ex.target).nll,
                        Err(Error::ContextOverflow { .. }) => OVERFLOW_PENALTY,
                        Err(e) => return Err(e),
                    };
                }
                row.push(-(sum / request.examples.len() as f64));
            }
            scores.push(row);
        }
        Ok(scores)
    }
}

impl GradientService for MockGradient {
    fn segment_gradients(&self, request: &GradientRequest) -> Result<GradientResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.scores(request)
            .map(|scores| GradientResponse { scores })
            .map_err(|e| TransportError::new("mock", e.to_string()))
    }
}

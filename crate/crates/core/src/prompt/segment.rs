use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    System,
    Expectation,
    Context,
    Guidance,
}

impl SegmentKind {
    /// Slot order inside a [`SocialPrompt`].
    pub const ALL: [SegmentKind; 4] = [
        SegmentKind::System,
        SegmentKind::Expectation,
        SegmentKind::Context,
        SegmentKind::Guidance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::System => "system",
            SegmentKind::Expectation => "expectation",
            SegmentKind::Context => "context",
            SegmentKind::Guidance => "guidance",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            SegmentKind::System => "System",
            SegmentKind::Expectation => "Expectation",
            SegmentKind::Context => "Context",
            SegmentKind::Guidance => "Guidance",
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSegment {
    pub kind: SegmentKind,
    #[serde(rename = "id")]
    pub candidate_id: String,
    pub text: String,
}

impl PromptSegment {
    pub fn new(kind: SegmentKind, candidate_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let seg = Self {
            kind,
            candidate_id: candidate_id.into(),
            text: text.into(),
        };
        if seg.text.trim().is_empty() {
            return Err(Error::InvalidPrompt(format!(
                "{} segment {:?} has empty text",
                seg.kind, seg.candidate_id
            )));
        }
        Ok(seg)
    }
}

/// System (o), Expectation (r), Context (c) and Guidance (e) segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialPrompt {
    pub system: PromptSegment,
    pub expectation: PromptSegment,
    pub context: PromptSegment,
    pub guidance: PromptSegment,
}

impl SocialPrompt {
    /// Builds a prompt from segments in slot order, checking kinds.
    pub fn from_segments(segments: [PromptSegment; 4]) -> Result<Self> {
        for (seg, kind) in segments.iter().zip(SegmentKind::ALL) {
            if seg.kind != kind {
                return Err(Error::InvalidPrompt(format!(
                    "slot {kind} holds a {} segment",
                    seg.kind
                )));
            }
            if seg.text.trim().is_empty() {
                return Err(Error::InvalidPrompt(format!("{kind} segment is empty")));
            }
        }
        let [system, expectation, context, guidance] = segments;
        Ok(Self {
            system,
            expectation,
            context,
            guidance,
        })
    }

    pub fn segments(&self) -> [&PromptSegment; 4] {
        [&self.system, &self.expectation, &self.context, &self.guidance]
    }

    /// `kind -> candidate id`, the prompt's version identity.
    pub fn version_id(&self) -> String {
        self.segments()
            .iter()
            .map(|s| format!("{}={}", s.kind, s.candidate_id))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// On-disk prompt document: a list of `{kind, id, text}` segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFile {
    #[serde(default)]
    pub version: String,
    pub segments: Vec<PromptSegment>,
}

impl PromptFile {
    pub fn into_prompt(self) -> Result<SocialPrompt> {
        let mut slots: [Option<PromptSegment>; 4] = Default::default();
        for seg in self.segments {
            let i = SegmentKind::ALL.iter().position(|k| *k == seg.kind).unwrap();
            if slots[i].is_some() {
                return Err(Error::InvalidPrompt(format!("duplicate {} segment", seg.kind)));
            }
            slots[i] = Some(seg);
        }
        let [o, r, c, e] = slots;
        let missing = |k: SegmentKind| Error::InvalidPrompt(format!("missing {k} segment"));
        SocialPrompt::from_segments([
            o.ok_or_else(|| missing(SegmentKind::System))?,
            r.ok_or_else(|| missing(SegmentKind::Expectation))?,
            c.ok_or_else(|| missing(SegmentKind::Context))?,
            e.ok_or_else(|| missing(SegmentKind::Guidance))?,
        ])
    }

    pub fn load(path: &std::path::Path) -> Result<SocialPrompt> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str::<PromptFile>(&text)?.into_prompt()
    }
}

const PIPA_PROMPT: &str = include_str!("../../resources/prompts/pipa.json");
const PISC_PROMPT: &str = include_str!("../../resources/prompts/pisc.json");

/// The shipped zero-shot prompt for `PIPA` or `PISC`.
pub fn builtin_prompt(label_set: &str) -> Result<SocialPrompt> {
    let raw = match label_set.to_ascii_uppercase().as_str() {
        "PIPA" => PIPA_PROMPT,
        "PISC" => PISC_PROMPT,
        other => return Err(Error::InvalidPrompt(format!("no builtin prompt for {other}"))),
    };
    serde_json::from_str::<PromptFile>(raw)?.into_prompt()
}

/// Serializes a worked example for the Guidance segment.
pub fn render_exemplar(story: &str, query: &str, answer: &str) -> String {
    format!(
        "Here is an example of how to answer.\nStory: {}\nQuestion: {}\nAnswer: {}",
        story.trim(),
        query.trim(),
        answer.trim()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_prompts_load() {
        for name in ["PIPA", "pisc"] {
            let p = builtin_prompt(name).unwrap();
            assert_eq!(p.system.kind, SegmentKind::System);
            assert!(p.guidance.text.contains("The final answer is"));
        }
        assert!(builtin_prompt("other").is_err());
    }

    #[test]
    fn builtin_context_defines_every_label() {
        use crate::prompt::LabelSet;
        for (name, set) in [("PIPA", LabelSet::pipa()), ("PISC", LabelSet::pisc())] {
            let p = builtin_prompt(name).unwrap();
            for label in &set.labels {
                assert!(p.context.text.contains(label.as_str()), "{name} context lacks {label}");
            }
        }
    }

    #[test]
    fn kinds_must_match_slots() {
        let s = |k| PromptSegment::new(k, "a", "text").unwrap();
        let bad = SocialPrompt::from_segments([
            s(SegmentKind::Expectation),
            s(SegmentKind::System),
            s(SegmentKind::Context),
            s(SegmentKind::Guidance),
        ]);
        assert!(matches!(bad, Err(Error::InvalidPrompt(_))));
        assert!(PromptSegment::new(SegmentKind::System, "a", "  ").is_err());
    }

    #[test]
    fn prompt_file_requires_all_segments() {
        let file = PromptFile {
            version: "v".into(),
            segments: vec![PromptSegment::new(SegmentKind::System, "o", "x").unwrap()],
        };
        assert!(file.into_prompt().is_err());
    }
}

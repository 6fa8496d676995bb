use serde::{Deserialize, Serialize};

use super::segment::SocialPrompt;
use crate::error::{Error, Result};

/// Default context budget in estimated tokens.
pub const DEFAULT_CONTEXT_LIMIT: usize = 4096;

/// `ceil(chars / 4)`; tokenizer-independent estimate.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// A relation question between two person symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub subject: String,
    pub object: String,
}

fn is_person_symbol(s: &str) -> bool {
    s.len() > 1 && s.starts_with('P') && s[1..].bytes().all(|b| b.is_ascii_digit()) && !s[1..].starts_with('0')
}

impl Query {
    pub fn new(subject: impl Into<String>, object: impl Into<String>) -> Result<Self> {
        let q = Self {
            subject: subject.into(),
            object: object.into(),
        };
        for s in [&q.subject, &q.object] {
            if !is_person_symbol(s) {
                return Err(Error::InvalidQuery(format!("{s:?} is not a person symbol")));
            }
        }
        if q.subject == q.object {
            return Err(Error::InvalidQuery(format!("subject and object are both {}", q.subject)));
        }
        Ok(q)
    }
}

pub fn format_query(query: &Query) -> String {
    format!(
        "What is the social relationship between {} and {}?",
        query.subject, query.object
    )
}

fn section(out: &mut String, header: &str, body: &str) {
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    out.push_str("### ");
    out.push_str(header);
    out.push('\n');
    out.push_str(body.trim_end());
}

fn check_budget(parts: &[(&str, &str)], full: &str, limit: usize) -> Result<()> {
    let estimated = estimate_tokens(full);
    if estimated <= limit {
        return Ok(());
    }
    let mut sizes: Vec<(&str, usize)> = parts.iter().map(|(n, t)| (*n, estimate_tokens(t))).collect();
    sizes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let parts = sizes
        .iter()
        .map(|(n, t)| format!("{n}={t}"))
        .collect::<Vec<_>>()
        .join(", ");
    Err(Error::ContextOverflow {
        estimated,
        limit,
        parts,
    })
}

fn parts<'a>(prompt: &'a SocialPrompt, story: &'a str, query: &'a str) -> [(&'static str, &'a str); 6] {
    [
        ("system", prompt.system.text.as_str()),
        ("expectation", prompt.expectation.text.as_str()),
        ("context", prompt.context.text.as_str()),
        ("guidance", prompt.guidance.text.as_str()),
        ("story", story),
        ("query", query),
    ]
}

/// Full reasoning input: the four segments, the story and the query under
/// fixed section headers, in that order.
pub fn assemble(prompt: &SocialPrompt, story: &str, query: &str, limit: usize) -> Result<String> {
    if story.trim().is_empty() {
        return Err(Error::EmptyStory);
    }
    let parts = parts(prompt, story, query);
    let mut out = String::new();
    for seg in prompt.segments() {
        section(&mut out, seg.kind.header(), &seg.text);
    }
    section(&mut out, "Story", story);
    section(&mut out, "Query", query);
    check_budget(&parts, &out, limit)?;
    Ok(out)
}

/// Same content split for a chat call: the System segment as the system
/// message, everything else as the user message.
pub fn assemble_chat(prompt: &SocialPrompt, story: &str, query: &str, limit: usize) -> Result<(String, String)> {
    if story.trim().is_empty() {
        return Err(Error::EmptyStory);
    }
    let parts = parts(prompt, story, query);
    let mut user = String::new();
    for seg in &prompt.segments()[1..] {
        section(&mut user, seg.kind.header(), &seg.text);
    }
    section(&mut user, "Story", story);
    section(&mut user, "Query", query);
    let system = prompt.system.text.trim_end().to_string();
    let combined = format!("{system}\n\n{user}");
    check_budget(&parts, &combined, limit)?;
    Ok((system, user))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{PromptSegment, SegmentKind};

    fn prompt(context: &str) -> SocialPrompt {
        let s = |k: SegmentKind, t: &str| PromptSegment::new(k, "x", t).unwrap();
        SocialPrompt::from_segments([
            s(SegmentKind::System, "SYSTEM-TEXT"),
            s(SegmentKind::Expectation, "EXPECTATION-TEXT"),
            s(SegmentKind::Context, context),
            s(SegmentKind::Guidance, "GUIDANCE-TEXT"),
        ])
        .unwrap()
    }

    #[test]
    fn query_text() {
        let q = Query::new("P2", "P3").unwrap();
        assert!(format_query(&q).contains("between P2 and P3"));
        assert_ne!(
            format_query(&Query::new("P1", "P2").unwrap()),
            format_query(&Query::new("P2", "P1").unwrap())
        );
        assert_eq!(format_query(&q), format_query(&q.clone()));
    }

    #[test]
    fn query_validation() {
        assert!(Query::new("P1", "P1").is_err());
        assert!(Query::new("O1", "P1").is_err());
        assert!(Query::new("P", "P1").is_err());
        assert!(Query::new("P01", "P1").is_err());
    }

    #[test]
    fn section_order() {
        let text = assemble(&prompt("CONTEXT-TEXT"), "STORY-TEXT", "QUERY-TEXT", 4096).unwrap();
        let pos: Vec<usize> = ["SYSTEM-TEXT", "EXPECTATION-TEXT", "CONTEXT-TEXT", "GUIDANCE-TEXT", "STORY-TEXT", "QUERY-TEXT"]
            .iter()
            .map(|m| text.find(m).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(text.starts_with("### System\n"));
    }

    #[test]
    fn empty_story_rejected() {
        assert!(matches!(assemble(&prompt("c"), "  ", "q", 4096), Err(Error::EmptyStory)));
        assert!(matches!(assemble_chat(&prompt("c"), "", "q", 4096), Err(Error::EmptyStory)));
    }

    #[test]
    fn context_swap_changes_only_context_span() {
        let a = assemble(&prompt("CONTEXT-A"), "story", "query", 4096).unwrap();
        let b = assemble(&prompt("CONTEXT-BBB"), "story", "query", 4096).unwrap();
        let start = a.find("CONTEXT-A").unwrap();
        assert_eq!(&a[..start], &b[..start]);
        assert_eq!(&a[start + "CONTEXT-A".len()..], &b[start + "CONTEXT-BBB".len()..]);
    }

    #[test]
    fn overflow_names_parts() {
        let story = "word ".repeat(5000);
        match assemble(&prompt("c"), &story, "q", 4096) {
            Err(Error::ContextOverflow { estimated, limit, parts }) => {
                assert!(estimated > limit);
                assert!(parts.starts_with("story="));
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        let mut s = String::new();
        let mut last = 0;
        for c in "monotone growth ü".chars() {
            s.push(c);
            let e = estimate_tokens(&s);
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn injective_in_story() {
        let p = prompt("c");
        assert_ne!(
            assemble(&p, "story one", "q", 4096).unwrap(),
            assemble(&p, "story two", "q", 4096).unwrap()
        );
    }
}

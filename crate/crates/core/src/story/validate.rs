use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::perception::PerceptionBundle;
use crate::prompt::estimate_tokens;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub missing_symbols: Vec<String>,
    pub coordinate_leaks: Vec<String>,
    pub length_tokens_estimate: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.missing_symbols.is_empty() && self.coordinate_leaks.is_empty()
    }

    /// Human-readable problems, e.g. `missing symbols: P2`.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if !self.missing_symbols.is_empty() {
            parts.push(format!("missing symbols: {}", self.missing_symbols.join(", ")));
        }
        if !self.coordinate_leaks.is_empty() {
            parts.push(format!("coordinate leaks: {}", self.coordinate_leaks.join(", ")));
        }
        parts.join("; ")
    }
}

fn group_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[\(\[]\s*\d+(?:\.\d+)?(?:\s*[,\s]\s*\d+(?:\.\d+)?)+\s*[\)\]]")
            .expect("valid pattern")
    })
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid pattern"))
}

/// Bracketed or parenthesized groups holding only numbers, at least two of
/// which have two or more digits.
pub fn coordinate_leaks(text: &str) -> Vec<String> {
    group_pattern()
        .find_iter(text)
        .filter(|m| {
            number_pattern()
                .find_iter(m.as_str())
                .filter(|n| n.as_str().chars().filter(char::is_ascii_digit).count() >= 2)
                .count()
                >= 2
        })
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Whether `symbol` occurs in `text` not flanked by other alphanumerics.
pub fn mentions(text: &str, symbol: &str) -> bool {
    text.match_indices(symbol).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + symbol.len()..].chars().next();
        !before.is_some_and(|c| c.is_alphanumeric()) && !after.is_some_and(|c| c.is_alphanumeric())
    })
}

pub fn validate_story(text: &str, bundle: &PerceptionBundle) -> ValidationReport {
    ValidationReport {
        missing_symbols: bundle
            .symbols
            .person_symbols()
            .into_iter()
            .filter(|s| !mentions(text, s))
            .collect(),
        coordinate_leaks: coordinate_leaks(text),
        length_tokens_estimate: estimate_tokens(text),
    }
}

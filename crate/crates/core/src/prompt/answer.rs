use serde::{Deserialize, Serialize};

use super::labels::LabelSet;
use crate::error::{Error, Result};

/// First sentence every answer is asked to start with.
pub const ANSWER_PREFIX: &str = "The final answer is";

/// Supervised first sentence for a gold label.
pub fn target_text(label: &str) -> String {
    format!("{ANSWER_PREFIX} {label}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub label: String,
    pub explanation: String,
    pub raw: String,
}

const TRIM: &[char] = &['"', '\'', '*', '`', '“', '”', ':', ' ', '\t'];

/// Extracts the label following the first "the final answer is" (any case).
pub fn parse_answer(text: &str, labels: &LabelSet) -> Result<ParsedAnswer> {
    let needle = ANSWER_PREFIX.to_ascii_lowercase();
    let start = text
        .to_ascii_lowercase()
        .find(&needle)
        .ok_or_else(|| Error::NoTemplate { raw: text.to_string() })?;
    let after = &text[start + needle.len()..];
    let end = after
        .find(['.', '!', '?', '\n'])
        .unwrap_or(after.len());
    let phrase = after[..end].trim_matches(TRIM);
    let explanation = after[end..]
        .trim_start_matches(['.', '!', '?'])
        .trim()
        .to_string();

    match labels.canonicalize(phrase) {
        Some(label) => Ok(ParsedAnswer {
            label: label.to_string(),
            explanation,
            raw: text.to_string(),
        }),
        None => Err(Error::UnknownLabel {
            phrase: phrase.to_string(),
            raw: text.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_label_and_explanation() {
        let a = parse_answer(
            "The final answer is friends. They wear matching jerseys.",
            &LabelSet::pipa(),
        )
        .unwrap();
        assert_eq!(a.label, "friends");
        assert_eq!(a.explanation, "They wear matching jerseys.");
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let a = parse_answer("the final answer is Loves/Spouses!", &LabelSet::pipa()).unwrap();
        assert_eq!(a.label, "loves/spouses");
        assert_eq!(a.explanation, "");
    }

    #[test]
    fn missing_template() {
        assert!(matches!(
            parse_answer("They might be friends.", &LabelSet::pipa()),
            Err(Error::NoTemplate { .. })
        ));
    }

    #[test]
    fn unknown_label_keeps_raw() {
        match parse_answer("The final answer is strangers.", &LabelSet::pisc()) {
            Err(Error::UnknownLabel { phrase, raw }) => {
                assert_eq!(phrase, "strangers");
                assert_eq!(raw, "The final answer is strangers.");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn first_occurrence_wins_and_decorations_stripped() {
        let a = parse_answer(
            "Reasoning first. The final answer is: **colleagues**.\nThe final answer is friends.",
            &LabelSet::pipa(),
        )
        .unwrap();
        assert_eq!(a.label, "colleagues");
    }

    #[test]
    fn round_trip_all_builtin_labels() {
        for set in [LabelSet::pipa(), LabelSet::pisc()] {
            for label in &set.labels {
                let a = parse_answer(&format!("The final answer is {label}."), &set).unwrap();
                assert_eq!(&a.label, label);
            }
        }
    }
}

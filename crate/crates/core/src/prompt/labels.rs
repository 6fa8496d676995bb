use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered canonical labels plus an alias table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub name: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

const PIPA: [&str; 16] = [
    "father-child",
    "mother-child",
    "grandpa-grandchild",
    "grandma-grandchild",
    "friends",
    "siblings",
    "classmates",
    "loves/spouses",
    "presenter-audience",
    "teacher-student",
    "trainer-trainee",
    "leader-subordinate",
    "band members",
    "dance team members",
    "sport team members",
    "colleagues",
];

const PIPA_ALIASES: [(&str, &str); 14] = [
    ("friend", "friends"),
    ("sibling", "siblings"),
    ("classmate", "classmates"),
    ("spouses", "loves/spouses"),
    ("spouse", "loves/spouses"),
    ("lovers", "loves/spouses"),
    ("couple", "loves/spouses"),
    ("colleague", "colleagues"),
    ("band member", "band members"),
    ("band", "band members"),
    ("dance team member", "dance team members"),
    ("sports team members", "sport team members"),
    ("sport team member", "sport team members"),
    ("teammates", "sport team members"),
];

const PISC: [&str; 6] = [
    "commercial",
    "couple",
    "family",
    "friends",
    "professional",
    "no-relation",
];

const PISC_ALIASES: [(&str, &str); 6] = [
    ("friend", "friends"),
    ("no relation", "no-relation"),
    ("no relationship", "no-relation"),
    ("none", "no-relation"),
    ("lovers", "couple"),
    ("colleagues", "professional"),
];

/// Lowercase, alphanumerics only.
pub(crate) fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl LabelSet {
    pub fn new(name: impl Into<String>, labels: Vec<String>, aliases: BTreeMap<String, String>) -> Result<Self> {
        let set = Self {
            name: name.into(),
            labels,
            aliases,
        };
        set.validate()?;
        Ok(set)
    }

    fn from_static(name: &str, labels: &[&str], aliases: &[(&str, &str)]) -> Self {
        Self::new(
            name,
            labels.iter().map(|s| s.to_string()).collect(),
            aliases
                .iter()
                .map(|(a, c)| (a.to_string(), c.to_string()))
                .collect(),
        )
        .expect("builtin label sets are valid")
    }

    pub fn pipa() -> Self {
        Self::from_static("PIPA", &PIPA, &PIPA_ALIASES)
    }

    pub fn pisc() -> Self {
        Self::from_static("PISC", &PISC, &PISC_ALIASES)
    }

    /// Resolves `pipa`, `pisc` (any case) or a path to a JSON label set.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec.to_ascii_lowercase().as_str() {
            "pipa" => Ok(Self::pipa()),
            "pisc" => Ok(Self::pisc()),
            _ => {
                let text = std::fs::read_to_string(spec)?;
                let set: LabelSet = serde_json::from_str(&text)?;
                set.validate()?;
                Ok(set)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, label) in self.labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::InvalidLabelSet("empty label".into()));
            }
            if self.labels[..i].contains(label) {
                return Err(Error::InvalidLabelSet(format!("duplicate label {label:?}")));
            }
        }
        for (alias, target) in &self.aliases {
            if !self.labels.contains(target) {
                return Err(Error::InvalidLabelSet(format!(
                    "alias {alias:?} points to unknown label {target:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Canonical label for a phrase: exact match, then alias, then a case-
    /// and punctuation-insensitive match against labels and aliases.
    pub fn canonicalize(&self, phrase: &str) -> Option<&str> {
        let phrase = phrase.trim();
        if let Some(l) = self.labels.iter().find(|l| *l == phrase) {
            return Some(l);
        }
        if let Some(target) = self.aliases.get(phrase) {
            return self.labels.iter().find(|l| *l == target).map(String::as_str);
        }
        let key = normalize(phrase);
        if key.is_empty() {
            return None;
        }
        if let Some(l) = self.labels.iter().find(|l| normalize(l) == key) {
            return Some(l);
        }
        self.aliases
            .iter()
            .find(|(alias, _)| normalize(alias) == key)
            .and_then(|(_, target)| self.labels.iter().find(|l| *l == target))
            .map(String::as_str)
    }
}

/// The two built-in label sets, keyed by name.
pub fn builtin_label_sets() -> BTreeMap<String, LabelSet> {
    [LabelSet::pipa(), LabelSet::pisc()]
        .into_iter()
        .map(|s| (s.name.clone(), s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sets() {
        let sets = builtin_label_sets();
        let pipa = &sets["PIPA"];
        let pisc = &sets["PISC"];
        assert_eq!(pipa.labels.len(), 16);
        assert!(pipa.contains("loves/spouses"));
        assert_eq!(pisc.labels.len(), 6);
        assert!(pisc.contains("no-relation"));
        for set in [pipa, pisc] {
            let mut sorted = set.labels.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), set.labels.len());
        }
    }

    #[test]
    fn canonicalization_order() {
        let pipa = LabelSet::pipa();
        assert_eq!(pipa.canonicalize("friends"), Some("friends"));
        assert_eq!(pipa.canonicalize("Friend"), Some("friends"));
        assert_eq!(pipa.canonicalize("spouses"), Some("loves/spouses"));
        assert_eq!(pipa.canonicalize("Loves/Spouses"), Some("loves/spouses"));
        assert_eq!(pipa.canonicalize("Band-Members"), Some("band members"));
        assert_eq!(pipa.canonicalize("strangers"), None);
        assert_eq!(pipa.canonicalize("!!"), None);
        assert_eq!(LabelSet::pisc().canonicalize("No relation"), Some("no-relation"));
    }

    #[test]
    fn invalid_sets_rejected() {
        let dup = LabelSet::new("x", vec!["a".into(), "a".into()], BTreeMap::new());
        assert!(matches!(dup, Err(Error::InvalidLabelSet(_))));
        let dangling = LabelSet::new(
            "x",
            vec!["a".into()],
            [("b".to_string(), "c".to_string())].into_iter().collect(),
        );
        assert!(matches!(dangling, Err(Error::InvalidLabelSet(_))));
    }
}

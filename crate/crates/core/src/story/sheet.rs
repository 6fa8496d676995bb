use serde::{Deserialize, Serialize};

use crate::perception::{CaptionRecord, PerceptionBundle};

/// Attribute keys rendered first, in this order; the rest follow
/// alphabetically.
const LEADING_ATTRIBUTES: [&str; 2] = ["age", "gender"];

/// Caption failures are kept in the bundle but never shown to the fusion model.
const HIDDEN_ATTRIBUTES: [&str; 2] = ["error", "scene"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSheet {
    pub lines: Vec<String>,
}

impl CaptionSheet {
    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

fn sentence(caption: &str) -> String {
    let c = caption.trim().trim_end_matches('.').trim_end();
    if c.is_empty() {
        "no description".to_string()
    } else {
        c.to_string()
    }
}

fn attribute_list(record: &CaptionRecord) -> Vec<String> {
    let mut out = Vec::new();
    for key in LEADING_ATTRIBUTES {
        if let Some(v) = record.attributes.get(key) {
            out.push(format!("{key}={}", v.trim()));
        }
    }
    for (k, v) in &record.attributes {
        if !LEADING_ATTRIBUTES.contains(&k.as_str()) && !HIDDEN_ATTRIBUTES.contains(&k.as_str()) {
            out.push(format!("{k}={}", v.trim()));
        }
    }
    out
}

/// Image line first, then one line per symbol in table order.
pub fn render_caption_sheet(bundle: &PerceptionBundle) -> CaptionSheet {
    let image = &bundle.image_caption;
    let mut first = format!("IMG: {}.", sentence(&image.caption));
    if let Some(scene) = image.attributes.get("scene") {
        first.push_str(&format!(" Scene: {}.", sentence(scene)));
    }
    let mut lines = vec![first];
    for entry in &bundle.symbols.entries {
        let mut line = format!("{}: ", entry.symbol);
        match bundle.caption_for(&entry.symbol) {
            Some(record) => {
                line.push_str(&sentence(&record.caption));
                let attrs = attribute_list(record);
                if !attrs.is_empty() {
                    line.push_str(&format!(" ({})", attrs.join(", ")));
                }
            }
            None => line.push_str("no description"),
        }
        lines.push(line);
    }
    CaptionSheet { lines }
}

use super::sheet::CaptionSheet;

/// Bumped whenever the fusion prompt text changes; part of the story cache key.
pub const FUSION_PROMPT_VERSION: &str = "fusion-v1";

pub const SHEET_OPEN: &str = "<<<";
pub const SHEET_CLOSE: &str = ">>>";

pub const FUSION_SYSTEM_PROMPT: &str = "You are an information fusion tool that turns \
image descriptions into a social story. Rules:\n\
1. Do not use coordinates or any numerical positions; use symbols for reference \
(P1, P2, ... for people and O1, O2, ... for other objects).\n\
2. Mention every person symbol at least once.\n\
3. Describe relative positions and interactions with the symbols only.\n\
4. Focus on the social context: who the people are, what they are doing and how they relate.\n\
5. Do not invent objects or people that are not described.";

/// `(system, user)` pair for the fusion call. The sheet is embedded verbatim
/// between `<<<` and `>>>`.
pub fn build_fusion_prompt(sheet: &CaptionSheet) -> (String, String) {
    let user = format!(
        "Here are descriptions of an image. The first line describes the whole image; \
each other line describes one object and starts with its symbol.\n\
{SHEET_OPEN}\n{}\n{SHEET_CLOSE}\n\
Write one coherent paragraph that tells the social story of this image.",
        sheet.text()
    );
    (FUSION_SYSTEM_PROMPT.to_string(), user)
}

/// The sheet text embedded in a fusion user message, if any.
pub fn extract_sheet(user_text: &str) -> Option<&str> {
    let start = user_text.find(SHEET_OPEN)? + SHEET_OPEN.len();
    let end = start + user_text[start..].find(SHEET_CLOSE)?;
    Some(user_text[start..end].trim_matches('\n'))
}

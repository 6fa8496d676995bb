//! The four-segment reasoning prompt, label sets and answer parsing.

mod answer;
mod assemble;
mod labels;
mod segment;

pub use answer::{parse_answer, target_text, ParsedAnswer, ANSWER_PREFIX};
pub use assemble::{assemble, assemble_chat, estimate_tokens, format_query, Query, DEFAULT_CONTEXT_LIMIT};
pub use labels::{builtin_label_sets, LabelSet};
pub use segment::{
    builtin_prompt, render_exemplar, PromptFile, PromptSegment, SegmentKind, SocialPrompt,
};

//! Greedy segment-level prompt search.
//!
//! Each iteration samples a batch, ranks single-segment substitutions with a
//! hint provider, evaluates the `K·M` best-ranked replacements (plus the
//! incumbent when guarded) and keeps the one with the lowest batch loss.

mod candidates;
mod objective;
mod search;

pub use candidates::{Candidate, CandidatePool, SegmentCandidates, Selection};
pub use objective::{
    batch_loss, unflatten, Objective, PromptObjective, TableObjective, TrainExample,
    OVERFLOW_PENALTY,
};
pub use search::{
    brute_force_optimum, enumerate_replacements, gspo_run, top_k_substitutions, GspoConfig,
    GspoError, GspoOutcome, GspoTrace, IterationRecord, BRUTE_FORCE_CAP,
};

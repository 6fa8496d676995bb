//! Social relation reasoning over image-derived stories.
//!
//! The crate is split along the processing chain:
//!
//! - [`perception`]: drives segmentation and caption/VQA services, filters
//!   masks and assigns `P`/`O` symbols to objects.
//! - [`story`]: renders the perception bundle into a caption sheet and fuses
//!   it into a coordinate-free story through a chat service.
//! - [`prompt`]: the four-segment reasoning prompt, label sets and the
//!   answer-template parser.
//! - [`oracles`]: service traits, wire types and deterministic mock backends
//!   for chat, target loss and segment gradient hints.
//! - [`gspo`]: greedy segment-level prompt search and its brute-force
//!   reference.
//! - [`harness`]: datasets, caching, end-to-end execution and accuracy
//!   evaluation.

pub mod error;
pub mod gspo;
pub mod harness;
pub mod hash;
pub mod oracles;
pub mod parallel;
pub mod perception;
pub mod prompt;
pub mod story;

pub use error::{Error, Result, TransportError};

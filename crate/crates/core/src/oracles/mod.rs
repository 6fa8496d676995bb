//! Model-backed capabilities behind traits, with their wire types.

mod chat;
mod hints;
mod loss;
mod mock;
mod retry;

pub use chat::{ChatClient, ChatMessage, ChatRequest, ChatResponse, ChatService, Role};
pub use hints::{
    draw_probe, segment_gradient_hints, GradientExample, GradientHintProvider, GradientRequest,
    GradientResponse, GradientService,
};
pub use loss::{
    target_nll, KeywordLossRule, LossBackend, LossOracle, LossRequest, LossResponse, LossService,
};
pub use retry::with_retries;
pub use mock::{
    AnswerRule, ChatFixture, FixtureMask, FixtureObject, FixtureShape, ImageFixture, MockCaption,
    MockChat, MockFixtures, MockGradient, MockLoss, MockSegmentation,
};

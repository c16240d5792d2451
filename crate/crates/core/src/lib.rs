//! Game-based personality assessment: a trust game played against five
//! single-trait LLM agents, perception of the player's messages, and two
//! assessment pipelines scored against BFI-44 ground truth.

pub mod assessment;
pub mod clock;
pub mod cognition;
pub mod data;
pub mod engine;
pub mod game;
pub mod llm;
pub mod metrics;
pub mod parsing;
pub mod perception;
pub mod personas;
pub mod prompts;
pub mod simulation;
pub mod template;

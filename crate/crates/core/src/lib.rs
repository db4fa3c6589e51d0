//! Topic-guided proactive dialogue over legal corpora.
//!
//! The pipeline: documents are fragmented and embedded into a [`retrieval::VectorIndex`];
//! a first query retrieves a diverse pool with MMR, which is clustered into a
//! [`topics::TopicTree`]; the [`navigator`] walks that tree turn by turn while
//! the [`engine`] answers from the focused node and proposes the next topic.
//! [`dataset`] turns single-turn QA documents into multi-turn dialogues and
//! [`eval`] scores transcripts against them.

pub mod corpus;
pub mod dataset;
pub mod engine;
pub mod eval;
pub mod navigator;
pub mod parallel;
pub mod prompts;
pub mod providers;
pub mod retrieval;
pub mod topics;

pub use engine::{Engine, KnowledgeBase, Mode, Session, SessionConfig};
pub use parallel::Execution;

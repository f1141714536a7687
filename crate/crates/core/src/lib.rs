//! Therapeutic-intent planning for supportive dialogue.
//!
//! A two-stage planner decides *when* to ask (one of ten supportive
//! strategies) and *what* to ask (one of six Socratic methods). The plan
//! conditions a pluggable generation backend. Around it sit a pipeline for
//! building preference-filtered Socratic question corpora, an evaluation
//! harness, a session service and a CLI.

pub mod backends;
pub mod classify;
pub mod cli;
pub mod eval;
pub mod forge;
pub mod gateway;
pub mod generator;
pub mod model;
pub mod pipeline;
pub mod planner;
pub mod text;

pub use classify::{argmax_label, softmax, Distribution};
pub use model::{Conversation, Label, SocraticMethod, Strategy, Turn};
pub use pipeline::{Condition, Pipeline};
pub use planner::{Planner, PlanningSignal};

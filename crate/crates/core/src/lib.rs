//! Structural screen deduplication, a shared GUI state graph, and
//! ambiguity-aware exploration over simulated applications.

pub mod ambiguity;
pub mod error;
pub mod eval_harness;
pub mod explorer;
pub mod gui_sim;
pub mod retrieval_index;
pub mod rng;
pub mod runner;
pub mod scenarios;
pub mod screen_model;
pub mod state_graph;

pub use error::{Error, Result};

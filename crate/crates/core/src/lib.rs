//! Qualitative analysis of partially observable Markov decision processes
//! (POMDPs) with parity objectives.
//!
//! The toolkit works on belief supports (sets of states consistent with the
//! observed history). It classifies a POMDP as strongly or weakly revealing,
//! decides the existence of almost-sure strategies on the belief-support MDP,
//! and reports which answers are exact, only sound, or inconclusive for the
//! given class of model.
//!
//! ```
//! use reveal_core::{cassandra, pipeline};
//!
//! let text = "states: s0\nactions: a\nobservations: o\nstart: 1\npriorities: 0\n\
//!             T: a : s0 : s0 1.0\nO: a : s0 : o 1.0\n";
//! let pomdp = cassandra::parse_pomdp(text).unwrap();
//! let verdict = pipeline::solve(&pomdp, &pipeline::SolveOptions::default()).unwrap();
//! assert_eq!(verdict.answer, pipeline::Answer::ExactYes);
//! ```

pub mod belief;
pub mod cassandra;
pub mod mdp_solve;
pub mod model;
pub mod pipeline;
pub mod random;
pub mod revelation;
pub mod sim;
pub mod support;

pub use model::{ActionId, Mdp, Pomdp, PomdpBuilder, SignalId, StateId};
pub use support::Support;

/// Default cap on the number of explored belief supports (and safety-game
/// positions).
pub const DEFAULT_NODE_CAP: usize = 1 << 22;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("{kind} index {index} out of range")]
    IndexOutOfRange { kind: &'static str, index: usize },
    #[error("exploration exceeded the node cap of {cap}")]
    NodeCap { cap: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

//! Text-to-knowledge-graph generation in two stages: a transformer produces the
//! graph nodes (either as one separator-delimited token sequence or through a
//! set of learnable node queries), then a light head predicts an edge for every
//! ordered pair of node features.
//!
//! The crate is `no_std` + `alloc`. File formats, checkpoints and the command
//! line live in the `grapher` companion crate.
//!
//! Module map:
//!
//! | module     | contents                                                        |
//! |------------|-----------------------------------------------------------------|
//! | [`graph`]  | graphs, triples, normalization, node serialization, adjacency   |
//! | [`corpus`] | deterministic template-based synthetic corpus                   |
//! | [`vocab`]  | word-level vocabulary with the special tokens                   |
//! | [`tensor`] | tape-based reverse-mode autodiff, AdamW, gradient checking      |
//! | [`model`]  | encoder/decoder, node modes, edge heads, inference              |
//! | [`matching`] | Hungarian assignment and slot permutations                    |
//! | [`loss`]   | cross-entropy, focal, sequence focal, edge and total loss       |
//! | [`eval`]   | Exact / Partial / Strict triple scoring                         |
//! | [`train`]  | the training loop                                               |

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod loss;
pub mod matching;
pub(crate) mod math;
pub mod model;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
pub use graph::{KnowledgeGraph, Triple, TripleSet};
pub use model::{EdgeMode, GrapherModel, Imbalance, ModelConfig, NodeMode};

//! Transition-based dependency parsing with feed-forward neural oracles.
//!
//! The crate trains greedy arc-standard (optionally with the swap
//! transition) parsers over CoNLL-U treebanks, supports three feature
//! templates of decreasing extraction cost and a range of embedding
//! sizes, and measures labeled attachment score, parsing throughput
//! and the statistical significance of accuracy differences.

pub mod conllu;
pub mod eval;
pub mod experiments;
pub mod features;
pub mod nn;
pub mod synth;
pub mod trainer;
pub mod transition;

pub use conllu::{parse_conllu, write_conllu, DependencyTree, Sentence, Token};
pub use features::{FeatureTemplate, FeatureVector, Vocabulary};
pub use nn::{ModelParams, SizeConfig};
pub use trainer::{Parser, TrainConfig};
pub use transition::{Configuration, Transition, TransitionKind, TransitionSystem};

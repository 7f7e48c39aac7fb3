//! Behavior classification for two-person conversations.
//!
//! A target speaker's turns are modeled as a hidden behavior-state chain
//! whose emissions are backoff n-gram language models; an influence variant
//! additionally conditions each state transition on a perceived partner
//! pseudo-state, with tunable exponents `alpha` (emissions) and `beta`
//! (partner terms). The crate covers the full pipeline: corpus ingestion
//! and labeling, language-model training and ARPA serialization, joint
//! decoding and classification, hard-EM training, nested leave-one-couple-
//! out evaluation with grid search, outcome histogram analysis, and a
//! synthetic-corpus generator used as the verification oracle.

pub mod corpus;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod hmm;
pub mod ngram;
pub mod outcomes;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

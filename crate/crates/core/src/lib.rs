//! Subword vocabularies and the class-imbalance statistics that guide the
//! choice of their size.
//!
//! The pipeline: [`corpus`] loads and cleans parallel text, [`bpe`] learns
//! and applies vocabularies, [`metrics`] measures the class distribution of
//! the encoded text, [`sweep`] evaluates a grid of sizes and recommends one,
//! and [`bias`] relates per-class test performance to training frequency.

pub mod bias;
pub mod bpe;
pub mod corpus;
mod error;
pub mod metrics;
pub mod sweep;

pub use bpe::{ClassId, EncodedCorpus, Mode, Scheme, Vocabulary};
pub use corpus::{ParallelCorpus, Sentence, SentencePair};
pub use error::{Error, Result};
pub use metrics::{ClassDistribution, ImbalanceStats, KConvention};
pub use sweep::{Recommendation, ScheduleEntry, SweepPoint};

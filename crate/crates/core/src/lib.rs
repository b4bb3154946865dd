//! Temporal grounding of event queries against per-frame image-text
//! embeddings, and correction of video-language model answers with the
//! resulting timestamp facts.
//!
//! Modules follow the data flow:
//!
//! * [`store`]: per-frame embedding files produced offline.
//! * [`scorer`]: frame ranking for one action text.
//! * [`decompose`]: temporal-intent detection and iconic-action splitting.
//! * [`claim`]: grounding, claim rendering, answer correction.
//! * [`parse`]: answers to timestamp sets and order labels.
//! * [`harness`]: timestamp and order evaluation tasks.
//! * [`transform`], [`embed`]: pluggable text-transform and embedding clients.
//! * [`pipeline`]: the end-to-end flow.

pub mod claim;
pub mod decompose;
pub mod embed;
pub mod harness;
pub mod parse;
pub mod pipeline;
pub mod scorer;
pub mod store;
pub mod transform;

pub use claim::{Claim, CorrectionRequest, GroundedAction};
pub use decompose::{ActivationResult, IconicAction};
pub use parse::{OrderLabel, TimestampSet};
pub use pipeline::Pipeline;
pub use scorer::{DnConfig, QueryEmbedding, RankedTimestamps, ScorerConfig, TextMeanPopulation};
pub use store::{BackendMatrix, VideoEmbeddingSet, VideoMeta};

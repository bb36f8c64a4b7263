//! Open-vocabulary pseudo-label mining.
//!
//! Candidate pseudo-labels carry precomputed vision-language scores over
//! the novel classes. Training starts with a burn-in that selects them by
//! that score alone; afterwards each candidate's score is fused with the
//! detector's own novelty estimate. Selected labels enter training through
//! a two-stage assignment (base annotations first) and per-box weights
//! derived from the detector's background probability.
//!
//! [`simulator`] provides a synthetic world in which the whole loop can be
//! run and measured with [`evaluation`].

pub mod assignment;
pub mod error;
pub mod evaluation;
pub mod formats;
pub mod geometry;
pub mod mining;
pub mod scoring;
pub mod simulator;

pub use assignment::{
    adaptive_weight, aggregate_loss, reliability, stratified_assign, Origin, ReliabilityIndicator, TrainingBox,
};
pub use error::{Error, Result};
pub use evaluation::{decompose, judge, precision_recall, weight_quality, Counts, LabelVerdict, StepMetrics, Verdict};
pub use geometry::{iou, match_targets, nms, BBox};
pub use mining::{assign_candidates, mine_online, mining_schedule, select_burnin, Candidate, MiningConfig, Phase};
pub use scoring::{classify, fuse, max_norm, novelty_score, CategorySpace, ClassPosterior, RegionEmbedding};

//! Desk-scale synthetic world: scenes with base objects (annotated), novel
//! objects (hidden) and noise regions, a parametric VLM that scores crops
//! over novel classes, and a parametric detector whose embeddings sharpen
//! as its skill grows.

mod detector;
pub mod rng;
mod run;
mod scene;
mod vlm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use detector::{detector_embed, DetectorConfig, SimDetector, View};
pub use run::{
    build_world, evaluate, run_training_simulation, Calibration, FusionComparison, RunArtifacts, RunResult, RunSummary,
    World, WorldImage,
};
pub use scene::{candidate_proposals, generate_scene, training_proposals, Scene, SceneObject};
pub use vlm::{vlm_score, BetaSpec, SimVlm};

/// Inclusive integer range, serialized as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

impl CountRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }
}

impl TryFrom<[u32; 2]> for CountRange {
    type Error = Error;
    fn try_from(v: [u32; 2]) -> Result<Self> {
        if v[0] > v[1] {
            return Err(Error::Config(format!("count range [{}, {}] is empty", v[0], v[1])));
        }
        Ok(Self { min: v[0], max: v[1] })
    }
}

impl From<CountRange> for [u32; 2] {
    fn from(r: CountRange) -> Self {
        [r.min, r.max]
    }
}

/// Every distribution parameter of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub base_categories: Vec<String>,
    pub novel_categories: Vec<String>,
    pub embedding_dim: usize,
    /// Canvas `[width, height]`.
    pub canvas: [f64; 2],
    pub base_objects: CountRange,
    pub novel_objects: CountRange,
    /// Object side lengths are drawn uniformly from `[min, max]`.
    pub object_size: [f64; 2],
    /// Sub-boxes of an object that carry no valid category on their own.
    pub parts_per_object: CountRange,
    /// Off-object crops and object-plus-context crops per scene.
    pub context_regions: CountRange,
    /// Class-agnostic proposals around each novel object handed to the VLM.
    pub proposals_per_novel: CountRange,
    /// Minimum IoU of those proposals with their object.
    pub proposal_min_iou: f64,
    /// Training proposals jittered around every object.
    pub training_proposals_per_object: u32,
    /// Minimum IoU of jittered training proposals with their object.
    pub training_proposal_min_iou: f64,
    /// Uniformly placed training proposals per scene.
    pub random_training_proposals: u32,
    pub train_scenes: u32,
    pub eval_scenes: u32,
    pub batch_size: u32,
    pub vlm: SimVlm,
    pub detector: DetectorConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            base_categories: names(&["person", "car", "bicycle", "chair", "bottle", "truck"]),
            novel_categories: names(&["dog", "bus", "umbrella", "cup"]),
            embedding_dim: 32,
            canvas: [640.0, 480.0],
            base_objects: CountRange::new(1, 3),
            novel_objects: CountRange::new(0, 2),
            object_size: [60.0, 220.0],
            parts_per_object: CountRange::new(1, 3),
            context_regions: CountRange::new(1, 3),
            proposals_per_novel: CountRange::new(1, 2),
            proposal_min_iou: 0.6,
            training_proposals_per_object: 6,
            training_proposal_min_iou: 0.3,
            random_training_proposals: 8,
            train_scenes: 300,
            eval_scenes: 400,
            batch_size: 2,
            vlm: SimVlm::default(),
            detector: DetectorConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_categories.is_empty() && self.novel_categories.is_empty() {
            return Err(Error::Config("world has no categories".into()));
        }
        if self.novel_categories.is_empty() {
            return Err(Error::Config("world needs at least one novel category".into()));
        }
        if self.base_categories.is_empty() && self.base_objects.max > 0 {
            return Err(Error::Config("base objects requested but no base categories".into()));
        }
        if self.embedding_dim < self.base_categories.len() + self.novel_categories.len() + 1 {
            return Err(Error::Config(format!(
                "embedding_dim {} is smaller than the category count plus background",
                self.embedding_dim
            )));
        }
        let [w, h] = self.canvas;
        let [smin, smax] = self.object_size;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::Config("canvas must have positive size".into()));
        }
        if !(smin > 1.0 && smin <= smax && smax <= w.min(h)) {
            return Err(Error::Config(format!("object_size [{smin}, {smax}] must be increasing and fit the canvas")));
        }
        for (name, v) in
            [("proposal_min_iou", self.proposal_min_iou), ("training_proposal_min_iou", self.training_proposal_min_iou)]
        {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.train_scenes == 0 || self.eval_scenes == 0 || self.batch_size == 0 {
            return Err(Error::Config("train_scenes, eval_scenes and batch_size must be positive".into()));
        }
        self.vlm.validate()?;
        self.detector.validate()?;
        Ok(())
    }
}

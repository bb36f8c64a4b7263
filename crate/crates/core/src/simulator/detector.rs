use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng::{stream, tag};
use super::scene::Scene;
use crate::error::{check_unit, Error, Result};
use crate::geometry::{best_match, BBox};
use crate::scoring::{CategorySpace, RegionEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum View {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Length of the category templates; sets how sharp a converged
    /// detector's posteriors are.
    pub template_norm: f64,
    /// Skill right after base-only pre-training.
    pub initial_skill: f64,
    /// Per-iteration skill gain at unit pseudo-label quality.
    pub skill_rate: f64,
    /// How fast the foreground share of a box's template rises with its IoU
    /// to the underlying object. Share is `0.5 + slope * (iou - 0.5)`, clamped.
    pub overlap_slope: f64,
    /// Per-coordinate Gaussian noise on weak-view embeddings.
    pub weak_noise: f64,
    /// Extra per-coordinate noise on strong-view embeddings.
    pub strong_noise: f64,
    /// Per-iteration step of the noise affinity towards the noise fraction
    /// of the pseudo-labels the detector was just trained on.
    pub affinity_rate: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            template_norm: 6.0,
            initial_skill: 0.1,
            skill_rate: 0.0015,
            overlap_slope: 1.25,
            weak_noise: 0.5,
            strong_noise: 0.5,
            affinity_rate: 0.003,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("initial_skill", self.initial_skill).map_err(|e| Error::Config(e.to_string()))?;
        for (name, v) in [
            ("template_norm", self.template_norm),
            ("skill_rate", self.skill_rate),
            ("overlap_slope", self.overlap_slope),
            ("weak_noise", self.weak_noise),
            ("strong_noise", self.strong_noise),
            ("affinity_rate", self.affinity_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.affinity_rate > 1.0 {
            return Err(Error::Config("affinity_rate must not exceed 1".into()));
        }
        Ok(())
    }
}

/// Parametric detector. Its embedding of a box interpolates between a
/// fixed confusion vector and the template of the box's true content.
///
/// `noise_affinity` is how far the detector has learned to see background
/// as novel from noisy pseudo-labels: the background part of every
/// template is bent towards the sum of the novel templates by that amount.
#[derive(Debug, Clone)]
pub struct SimDetector {
    pub cats: CategorySpace,
    pub config: DetectorConfig,
    pub skill: f64,
    pub noise_affinity: f64,
    pub seed: u64,
    confusion: Vec<f64>,
    novel_sum: Vec<f64>,
}

impl SimDetector {
    pub fn new(cats: CategorySpace, config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let dim = cats.dim();
        let n = cats.num_categories() + 1;
        // The untrained detector sees every box as the same blend of all
        // categories and background.
        let mut confusion = vec![0.0; dim];
        for i in 0..n {
            for (c, e) in confusion.iter_mut().zip(cats.embedding(i)) {
                *c += e / n as f64;
            }
        }
        let norm = confusion.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            confusion.iter_mut().for_each(|v| *v /= norm);
        }
        let mut novel_sum = vec![0.0; dim];
        for i in cats.novel_range() {
            for (c, e) in novel_sum.iter_mut().zip(cats.embedding(i)) {
                *c += e;
            }
        }
        Ok(Self { skill: config.initial_skill, noise_affinity: 0.0, cats, config, seed, confusion, novel_sum })
    }

    pub fn set_skill(&mut self, skill: f64) -> Result<()> {
        check_unit("skill", skill)?;
        self.skill = skill;
        Ok(())
    }

    pub fn set_noise_affinity(&mut self, affinity: f64) -> Result<()> {
        check_unit("noise affinity", affinity)?;
        self.noise_affinity = affinity;
        Ok(())
    }

    /// Background template as currently learned.
    fn background_template(&self) -> Vec<f64> {
        let a = self.noise_affinity;
        let v: Vec<f64> =
            self.cats.background_embedding().iter().zip(&self.novel_sum).map(|(b, n)| (1.0 - a) * b + a * n).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    }

    /// Category index (posterior layout) and foreground share of a box.
    fn truth(&self, scene: &Scene, b: &BBox) -> (usize, f64) {
        let boxes = scene.object_boxes();
        match best_match(b, &boxes) {
            Some((j, v)) => {
                let idx =
                    self.cats.index_of(&scene.objects[j].category).expect("scene categories come from the same world");
                let share = (0.5 + self.config.overlap_slope * (v - 0.5)).clamp(0.0, 1.0);
                (idx, share)
            }
            None => (self.cats.background_index(), 0.0),
        }
    }

    /// True category of a box in posterior layout: its best-IoU object when
    /// that IoU is at least 0.5, else background.
    pub fn true_category(&self, scene: &Scene, b: &BBox) -> usize {
        match best_match(b, &scene.object_boxes()) {
            Some((j, v)) if v >= 0.5 => self.cats.index_of(&scene.objects[j].category).expect("known category"),
            _ => self.cats.background_index(),
        }
    }
}

/// Embeds boxes of one scene. `noise_key` selects the noise realisation so
/// callers can freeze it (evaluation) or vary it (per training iteration).
pub fn detector_embed(
    scene: &Scene,
    boxes: &[BBox],
    det: &SimDetector,
    view: View,
    noise_key: u64,
) -> Vec<RegionEmbedding> {
    let view_tag = match view {
        View::Weak => tag("weak"),
        View::Strong => tag("strong"),
    };
    let sigma = match view {
        View::Weak => det.config.weak_noise,
        View::Strong => (det.config.weak_noise.powi(2) + det.config.strong_noise.powi(2)).sqrt(),
    };
    let norm = det.config.template_norm;
    let bg = det.background_template();
    boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut rng = stream(det.seed, &[tag("detector"), view_tag, scene.image_id, noise_key, i as u64]);
            let (cat, share) = det.truth(scene, b);
            let fg: &[f64] = if cat == det.cats.background_index() { &bg } else { det.cats.embedding(cat) };
            let v = (0..det.cats.dim())
                .map(|d| {
                    let truth = share * fg[d] + (1.0 - share) * bg[d];
                    let mean = norm * ((1.0 - det.skill) * det.confusion[d] + det.skill * truth);
                    let eps: f64 = rng.sample(StandardNormal);
                    mean + sigma * eps
                })
                .collect();
            RegionEmbedding::new(v).expect("finite by construction")
        })
        .collect()
}

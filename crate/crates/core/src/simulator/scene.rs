use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream, tag};
use super::{CountRange, WorldConfig};
use crate::error::Result;
use crate::geometry::{best_match, iou, BBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub category: String,
}

/// One synthetic image. Base objects are visible as annotations; novel
/// objects are withheld from training and only used for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub image_id: u64,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<SceneObject>,
    /// Object parts, context crops and background crops: regions that hold
    /// no valid object of their own.
    pub noise_regions: Vec<BBox>,
    novel_names: Vec<String>,
}

impl Scene {
    pub fn is_novel(&self, category: &str) -> bool {
        self.novel_names.iter().any(|n| n == category)
    }

    /// Base objects, exposed as training labels.
    pub fn annotations(&self) -> Vec<SceneObject> {
        self.objects.iter().filter(|o| !self.is_novel(&o.category)).cloned().collect()
    }

    pub fn hidden_novel(&self) -> Vec<SceneObject> {
        self.objects.iter().filter(|o| self.is_novel(&o.category)).cloned().collect()
    }

    pub fn object_boxes(&self) -> Vec<BBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }
}

fn draw_count(rng: &mut ChaCha8Rng, r: CountRange) -> u32 {
    rng.random_range(r.min..=r.max)
}

fn random_box(rng: &mut ChaCha8Rng, cfg: &WorldConfig) -> BBox {
    let [w, h] = cfg.canvas;
    let [smin, smax] = cfg.object_size;
    let bw = rng.random_range(smin..=smax);
    let bh = rng.random_range(smin..=smax);
    let x1 = rng.random_range(0.0..=(w - bw));
    let y1 = rng.random_range(0.0..=(h - bh));
    BBox::new(x1, y1, x1 + bw, y1 + bh).expect("positive size")
}

/// Deterministic scene for `(seed, image_id)`.
pub fn generate_scene(seed: u64, image_id: u64, cfg: &WorldConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = stream(seed, &[tag("scene"), image_id]);
    let [w, h] = cfg.canvas;

    let mut objects = Vec::new();
    let n_base = if cfg.base_categories.is_empty() { 0 } else { draw_count(&mut rng, cfg.base_objects) };
    for _ in 0..n_base {
        let k = rng.random_range(0..cfg.base_categories.len());
        objects.push(SceneObject { bbox: random_box(&mut rng, cfg), category: cfg.base_categories[k].clone() });
    }
    let n_novel = draw_count(&mut rng, cfg.novel_objects);
    for _ in 0..n_novel {
        let k = rng.random_range(0..cfg.novel_categories.len());
        objects.push(SceneObject { bbox: random_box(&mut rng, cfg), category: cfg.novel_categories[k].clone() });
    }
    let boxes: Vec<BBox> = objects.iter().map(|o| o.bbox).collect();
    // Noise must stay clearly off every object.
    let is_noise = |b: &BBox| best_match(b, &boxes).is_none_or(|(_, v)| v < 0.4);

    let mut noise_regions = Vec::new();
    for o in &objects {
        for _ in 0..draw_count(&mut rng, cfg.parts_per_object) {
            let fw = rng.random_range(0.25..=0.6);
            let fh = rng.random_range(0.25..=0.6);
            let pw = o.bbox.width() * fw;
            let ph = o.bbox.height() * fh;
            let x1 = rng.random_range(o.bbox.x1()..=(o.bbox.x2() - pw));
            let y1 = rng.random_range(o.bbox.y1()..=(o.bbox.y2() - ph));
            if let Ok(b) = BBox::new(x1, y1, x1 + pw, y1 + ph) {
                if is_noise(&b) {
                    noise_regions.push(b);
                }
            }
        }
    }
    let n_context = draw_count(&mut rng, cfg.context_regions);
    for _ in 0..n_context {
        let candidate = if !objects.is_empty() && rng.random_bool(0.5) {
            // object plus surrounding context
            let o = &objects[rng.random_range(0..objects.len())];
            let (cx, cy) = o.bbox.center();
            let scale = rng.random_range(1.8..=2.6);
            let dx = rng.random_range(-0.3..=0.3) * o.bbox.width();
            let dy = rng.random_range(-0.3..=0.3) * o.bbox.height();
            BBox::from_center(cx + dx, cy + dy, o.bbox.width() * scale, o.bbox.height() * scale)
                .ok()
                .and_then(|b| b.clip_to(w, h))
        } else {
            Some(random_box(&mut rng, cfg))
        };
        if let Some(b) = candidate.filter(|b| is_noise(b)) {
            noise_regions.push(b);
        }
    }

    Ok(Scene { image_id, width: w, height: h, objects, noise_regions, novel_names: cfg.novel_categories.clone() })
}

/// Box around `target` with IoU at least `min_iou`, by rejection sampling on
/// center shift and scale. Falls back to the target itself.
pub(crate) fn jitter(rng: &mut ChaCha8Rng, target: &BBox, min_iou: f64, canvas: [f64; 2]) -> BBox {
    let spread = (1.0 - min_iou).max(0.05);
    for _ in 0..64 {
        let (cx, cy) = target.center();
        let dx = rng.random_range(-spread..=spread) * 0.5 * target.width();
        let dy = rng.random_range(-spread..=spread) * 0.5 * target.height();
        let sw = 1.0 + rng.random_range(-spread..=spread) * 0.6;
        let sh = 1.0 + rng.random_range(-spread..=spread) * 0.6;
        let b = BBox::from_center(cx + dx, cy + dy, target.width() * sw, target.height() * sh)
            .ok()
            .and_then(|b| b.clip_to(canvas[0], canvas[1]));
        if let Some(b) = b {
            if iou(&b, target) >= min_iou {
                return b;
            }
        }
    }
    *target
}

/// Class-agnostic proposals handed to the VLM: jittered boxes around novel
/// objects, one jittered box per base object, and every noise region.
pub fn candidate_proposals(scene: &Scene, cfg: &WorldConfig, seed: u64) -> Vec<BBox> {
    let mut rng = stream(seed, &[tag("candidate-proposals"), scene.image_id]);
    let mut out = Vec::new();
    for o in &scene.objects {
        let n = if scene.is_novel(&o.category) { draw_count(&mut rng, cfg.proposals_per_novel) } else { 1 };
        for _ in 0..n {
            out.push(jitter(&mut rng, &o.bbox, cfg.proposal_min_iou, cfg.canvas));
        }
    }
    out.extend(scene.noise_regions.iter().copied());
    out
}

/// Detector training proposals for one iteration: boxes jittered around
/// every object with widely varying overlap, plus uniformly placed boxes.
pub fn training_proposals(scene: &Scene, cfg: &WorldConfig, seed: u64, iteration: u64) -> Vec<BBox> {
    let mut rng = stream(seed, &[tag("training-proposals"), scene.image_id, iteration]);
    let mut out = Vec::new();
    for o in &scene.objects {
        for _ in 0..cfg.training_proposals_per_object {
            let floor = rng.random_range(cfg.training_proposal_min_iou..=0.95);
            out.push(jitter(&mut rng, &o.bbox, floor, cfg.canvas));
        }
    }
    // Pseudo-labels on noise regions also attract proposals.
    for r in &scene.noise_regions {
        out.push(jitter(&mut rng, r, 0.5, cfg.canvas));
    }
    for _ in 0..cfg.random_training_proposals {
        out.push(random_box(&mut rng, cfg));
    }
    out
}

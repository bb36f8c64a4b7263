use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detector::{detector_embed, SimDetector, View};
use super::rng::{stream, tag};
use super::scene::{candidate_proposals, generate_scene, training_proposals, Scene, SceneObject};
use super::vlm::vlm_score;
use super::WorldConfig;
use crate::assignment::{
    aggregate_loss, apply_adaptive_weights, stratified_assign, Origin, ReliabilityIndicator, TrainingBox,
};
use crate::error::{Error, Result};
use crate::evaluation::{judge, match_clip_recall, Counts, ImageLabels, MatchedBaseline, StepMetrics, SCHEMA_VERSION};
use crate::geometry::{best_match, BBox};
use crate::mining::{
    assign_candidates, burnin_indices, mine_online, mining_schedule, Candidate, MiningConfig, Phase, RawProposal,
};
use crate::scoring::{classify, CategorySpace};

const EVAL_ID_OFFSET: u64 = 1 << 32;
const EVAL_NOISE_KEY: u64 = u64::MAX;

/// A scene together with its precomputed candidate pseudo-labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldImage {
    pub scene: Scene,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub cats: CategorySpace,
    pub train: Vec<WorldImage>,
    pub eval: Vec<WorldImage>,
    /// Hidden novel objects of each eval image, aligned with `eval`.
    pub eval_novel: Vec<Vec<SceneObject>>,
    pub seed: u64,
}

impl World {
    pub fn eval_labels(&self) -> Vec<ImageLabels<'_>> {
        self.eval
            .iter()
            .zip(&self.eval_novel)
            .map(|(img, gt)| ImageLabels { candidates: &img.candidates, novel_gt: gt })
            .collect()
    }
}

/// Orthonormal category and background embeddings from a Gaussian draw.
fn text_embeddings(cfg: &WorldConfig, seed: u64) -> Result<CategorySpace> {
    let n = cfg.base_categories.len() + cfg.novel_categories.len() + 1;
    let dim = cfg.embedding_dim;
    let mut rng = stream(seed, &[tag("text-embeddings")]);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let background = basis.pop().expect("n >= 1");
    CategorySpace::new(cfg.base_categories.clone(), cfg.novel_categories.clone(), basis, background)
}

fn world_image(cfg: &WorldConfig, mining: &MiningConfig, seed: u64, image_id: u64) -> Result<WorldImage> {
    let scene = generate_scene(seed, image_id, cfg)?;
    let proposals = candidate_proposals(&scene, cfg, seed);
    let scores = vlm_score(&scene, &proposals, &cfg.novel_categories, &cfg.vlm, seed);
    let raw: Vec<RawProposal> =
        proposals.into_iter().zip(scores).map(|(bbox, scores)| RawProposal { bbox, scores }).collect();
    let candidates = assign_candidates(&raw, mining)?;
    Ok(WorldImage { scene, candidates })
}

/// Generates the category space and the training and evaluation images
/// with their candidates. Deterministic in `seed`.
pub fn build_world(cfg: &WorldConfig, mining: &MiningConfig, seed: u64) -> Result<World> {
    cfg.validate()?;
    mining.validate()?;
    let cats = text_embeddings(cfg, seed)?;
    let train = (0..cfg.train_scenes as u64)
        .into_par_iter()
        .map(|id| world_image(cfg, mining, seed, id))
        .collect::<Result<Vec<_>>>()?;
    let eval = (0..cfg.eval_scenes as u64)
        .into_par_iter()
        .map(|id| world_image(cfg, mining, seed, EVAL_ID_OFFSET + id))
        .collect::<Result<Vec<_>>>()?;
    let eval_novel = eval.iter().map(|img| img.scene.hidden_novel()).collect();
    Ok(World { config: cfg.clone(), cats, train, eval, eval_novel, seed })
}

/// Candidates of one image scored for the given phase, plus the selected
/// indices. During burn-in candidates are returned unscored.
fn select(
    image: &WorldImage,
    det: &SimDetector,
    phase: Phase,
    cfg: &MiningConfig,
    noise_key: u64,
) -> Result<(Vec<Candidate>, Vec<usize>)> {
    match phase {
        Phase::BurnIn => Ok((image.candidates.clone(), burnin_indices(&image.candidates, cfg.burnin_threshold))),
        Phase::Online => {
            let boxes: Vec<BBox> = image.candidates.iter().map(|c| c.bbox).collect();
            let emb = detector_embed(&image.scene, &boxes, det, View::Weak, noise_key);
            let mined = mine_online(&image.candidates, &emb, &det.cats, cfg)?;
            Ok((mined.candidates, mined.selected))
        }
    }
}

/// Mines the evaluation images with frozen detector noise and judges the selection.
pub fn evaluate(world: &World, det: &SimDetector, phase: Phase, cfg: &MiningConfig) -> Result<Counts> {
    let per_image = world
        .eval
        .par_iter()
        .zip(&world.eval_novel)
        .map(|(img, gt)| {
            let (scored, selected) = select(img, det, phase, cfg, EVAL_NOISE_KEY)?;
            let picked: Vec<Candidate> = selected.iter().map(|&i| scored[i].clone()).collect();
            Ok(Counts::from_verdicts(&judge(&picked, gt), gt.len()))
        })
        .collect::<Result<Vec<Counts>>>()?;
    Ok(per_image.into_iter().sum())
}

/// Output of one training step on one image.
struct StepOutcome {
    counts: Counts,
    pairs: Vec<(f64, f64)>,
    boxes: Vec<TrainingBox>,
    losses: Vec<f64>,
}

fn train_image(
    world: &World,
    image: &WorldImage,
    det: &SimDetector,
    phase: Phase,
    cfg: &MiningConfig,
    indicator: ReliabilityIndicator,
    iteration: u64,
) -> Result<StepOutcome> {
    let scene = &image.scene;
    let novel_gt = scene.hidden_novel();
    let (mut scored, selected) = select(image, det, phase, cfg, iteration)?;
    if phase == Phase::BurnIn && indicator == ReliabilityIndicator::Novelty {
        // Reweighting runs during burn-in as well; the novelty estimate is
        // computed for the weights only and never drives selection.
        let (online, _) = select(image, det, Phase::Online, cfg, iteration)?;
        for (c, o) in scored.iter_mut().zip(online) {
            c.novelty = o.novelty;
        }
    }
    let pseudo: Vec<Candidate> = selected.iter().map(|&i| scored[i].clone()).collect();
    let counts = Counts::from_verdicts(&judge(&pseudo, &novel_gt), novel_gt.len());

    let proposals = training_proposals(scene, &world.config, world.seed, iteration);
    let weak = detector_embed(scene, &proposals, det, View::Weak, iteration);
    let bg: Vec<f64> = weak.iter().map(|r| classify(r, &det.cats).map(|p| p.background())).collect::<Result<_>>()?;
    let base_gt: Vec<(BBox, String)> = scene.annotations().into_iter().map(|o| (o.bbox, o.category)).collect();
    let mut boxes = stratified_assign(&proposals, &base_gt, &pseudo, &bg, cfg.fg_iou)?;
    apply_adaptive_weights(&mut boxes, &pseudo, indicator, cfg.lambda_prime)?;

    let gt_boxes: Vec<BBox> = novel_gt.iter().map(|o| o.bbox).collect();
    let pairs = boxes
        .iter()
        .filter(|tb| tb.origin == Origin::Novel)
        .map(|tb| (tb.weight, best_match(&tb.bbox, &gt_boxes).map_or(0.0, |(_, v)| v)))
        .collect();

    let strong = detector_embed(scene, &proposals, det, View::Strong, iteration);
    let losses = boxes
        .iter()
        .zip(&strong)
        .map(|(tb, r)| {
            let post = classify(r, &det.cats)?;
            let target = match tb.origin {
                Origin::Base => det.cats.index_of(&base_gt[tb.target_index.expect("base match")].1),
                Origin::Novel => det.cats.index_of(&pseudo[tb.target_index.expect("pseudo match")].clip_class),
                Origin::Background => Some(det.cats.background_index()),
            }
            .ok_or_else(|| Error::Config("label outside the category space".into()))?;
            Ok(-post.probs()[target].max(1e-300).ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(StepOutcome { counts, pairs, boxes, losses })
}

/// End-of-run comparison between the run's own selection and a VLM-only
/// selection at matched recall, on the evaluation images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionComparison {
    pub run_counts: Counts,
    pub run_noise_fraction: f64,
    pub baseline: MatchedBaseline,
    pub baseline_noise_fraction: f64,
}

/// VLM-only selection at the burn-in threshold on the evaluation images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub counts: Counts,
    pub misclass_fraction: f64,
    pub noise_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub iterations: u64,
    pub log_stride: u64,
    pub indicator: ReliabilityIndicator,
    pub mining: MiningConfig,
    /// Set when `lambda == 1`: selection ignores the detector entirely.
    pub clip_only_baseline: bool,
    pub final_skill: f64,
    pub final_noise_affinity: f64,
    pub final_precision: f64,
    pub final_recall: f64,
    pub final_counts: Counts,
    pub final_decomposition: crate::evaluation::Decomposition,
    /// Mean over all iterations where the rank correlation was defined.
    pub mean_weight_rank_correlation: Option<f64>,
    pub calibration: Calibration,
    pub fusion: FusionComparison,
}

/// Everything needed to export a run's files.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub world: World,
    /// Final-phase scoring of every eval image's candidates with selection flags.
    pub eval_mined: Vec<(Vec<Candidate>, Vec<bool>)>,
    /// Assignment of the last training iteration, per image id.
    pub last_assignments: Vec<(u64, Vec<TrainingBox>)>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: Vec<StepMetrics>,
    pub summary: RunSummary,
    pub artifacts: RunArtifacts,
}

/// Runs burn-in then online mining for `iterations` steps. Every
/// `log_stride` iterations the current selection rule is evaluated on the
/// held-out images. Fully determined by the inputs and `seed`.
pub fn run_training_simulation(
    world_cfg: &WorldConfig,
    cfg: &MiningConfig,
    indicator: ReliabilityIndicator,
    iterations: u64,
    log_stride: u64,
    seed: u64,
) -> Result<RunResult> {
    if iterations == 0 || log_stride == 0 {
        return Err(Error::Validation("iterations and log stride must be positive".into()));
    }
    let world = build_world(world_cfg, cfg, seed)?;
    let mut det = SimDetector::new(world.cats.clone(), world_cfg.detector.clone(), seed)?;

    let mut metrics = Vec::new();
    let mut window_corr: Vec<f64> = Vec::new();
    let mut window_loss: Vec<f64> = Vec::new();
    let mut all_corr: Vec<f64> = Vec::new();
    let mut last_assignments = Vec::new();

    for it in 0..iterations {
        let phase = mining_schedule(it, cfg);
        let mut rng = stream(seed, &[tag("batch"), it]);
        let batch: Vec<usize> = (0..world_cfg.batch_size).map(|_| rng.random_range(0..world.train.len())).collect();
        let outcomes = batch
            .iter()
            .map(|&k| train_image(&world, &world.train[k], &det, phase, cfg, indicator, it))
            .collect::<Result<Vec<_>>>()?;

        let counts: Counts = outcomes.iter().map(|o| o.counts).sum();
        let pairs: Vec<(f64, f64)> = outcomes.iter().flat_map(|o| o.pairs.iter().copied()).collect();
        let (w, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Some(c) = crate::evaluation::spearman(&w, &v) {
            window_corr.push(c);
            all_corr.push(c);
        }
        let boxes: Vec<TrainingBox> = outcomes.iter().flat_map(|o| o.boxes.iter().cloned()).collect();
        let losses: Vec<f64> = outcomes.iter().flat_map(|o| o.losses.iter().copied()).collect();
        window_loss.push(aggregate_loss(&boxes, &losses, cfg.gamma)?);

        let quality = counts.precision() * counts.recall();
        let skill = det.skill + det.config.skill_rate * quality * (1.0 - det.skill);
        det.set_skill(skill.clamp(det.skill, 1.0))?;
        if counts.selected() > 0 {
            let a = det.noise_affinity;
            det.set_noise_affinity(a + det.config.affinity_rate * (counts.noise_fraction() - a))?;
        }

        if it + 1 == iterations {
            last_assignments =
                batch.iter().zip(outcomes).map(|(&k, o)| (world.train[k].scene.image_id, o.boxes)).collect();
        }

        if (it + 1) % log_stride == 0 {
            let c = evaluate(&world, &det, phase, cfg)?;
            metrics.push(StepMetrics {
                schema_version: SCHEMA_VERSION,
                iteration: it + 1,
                phase,
                skill: det.skill,
                num_selected: c.selected(),
                precision: c.precision(),
                recall: c.recall(),
                tp_count: c.tp,
                misclass_count: c.misclass,
                noise_count: c.noise,
                mean_weight_rank_correlation: mean(&window_corr),
                mean_loss: mean(&window_loss).unwrap_or(0.0),
            });
            window_corr.clear();
            window_loss.clear();
        }
    }

    let final_phase = mining_schedule(iterations - 1, cfg);
    let eval_mined = world
        .eval
        .par_iter()
        .map(|img| {
            let (scored, selected) = select(img, &det, final_phase, cfg, EVAL_NOISE_KEY)?;
            let mut flags = vec![false; scored.len()];
            selected.iter().for_each(|&i| flags[i] = true);
            Ok((scored, flags))
        })
        .collect::<Result<Vec<_>>>()?;
    let run_counts: Counts = eval_mined
        .iter()
        .zip(&world.eval_novel)
        .map(|((scored, flags), gt)| {
            let picked: Vec<Candidate> =
                scored.iter().zip(flags).filter(|(_, f)| **f).map(|(c, _)| c.clone()).collect();
            Counts::from_verdicts(&judge(&picked, gt), gt.len())
        })
        .sum();

    let labels = world.eval_labels();
    let calib_counts = crate::evaluation::counts_at_threshold(&labels, cfg.burnin_threshold, |c| c.clip_score);
    let baseline = match_clip_recall(&labels, run_counts.recall());

    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        seed,
        iterations,
        log_stride,
        indicator,
        mining: cfg.clone(),
        clip_only_baseline: cfg.lambda == 1.0,
        final_skill: det.skill,
        final_noise_affinity: det.noise_affinity,
        final_precision: run_counts.precision(),
        final_recall: run_counts.recall(),
        final_counts: run_counts,
        final_decomposition: run_counts.decompose(),
        mean_weight_rank_correlation: mean(&all_corr),
        calibration: Calibration {
            threshold: cfg.burnin_threshold,
            counts: calib_counts,
            misclass_fraction: calib_counts.misclass_fraction(),
            noise_fraction: calib_counts.noise_fraction(),
        },
        fusion: FusionComparison {
            run_counts,
            run_noise_fraction: run_counts.noise_fraction(),
            baseline,
            baseline_noise_fraction: baseline.counts.noise_fraction(),
        },
    };
    Ok(RunResult { metrics, summary, artifacts: RunArtifacts { world, eval_mined, last_assignments } })
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

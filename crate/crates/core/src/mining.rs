//! Pseudo-label lifecycle: candidate pre-assignment from precomputed VLM
//! scores, CLIP-score burn-in selection, and online mining guided by the
//! detector's novelty estimate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::geometry::{nms, BBox};
use crate::scoring::{classify, fuse, max_norm, novel_mass, CategorySpace, RegionEmbedding};

/// Thresholds and mixing scalars for mining and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    /// Weight of the VLM score in the fused confidence.
    pub lambda: f64,
    /// Weight of the pseudo-label confidence in the per-box training weight.
    pub lambda_prime: f64,
    /// Fused-confidence threshold during online mining.
    pub delta: f64,
    /// Overall weight of the novel loss term.
    pub gamma: f64,
    /// CLIP-score threshold during burn-in.
    pub burnin_threshold: f64,
    /// Number of burn-in iterations.
    pub burnin_steps: u64,
    /// Minimum top-1 VLM score for a proposal to become a candidate.
    pub candidate_prefilter: f64,
    pub nms_iou: f64,
    pub fg_iou: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            lambda_prime: 0.5,
            delta: 0.9,
            gamma: 2.0,
            burnin_threshold: 0.8,
            burnin_steps: 500,
            candidate_prefilter: 0.5,
            nms_iou: 0.5,
            fg_iou: 0.5,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("lambda", self.lambda)?;
        check_unit("lambda_prime", self.lambda_prime)?;
        check_unit("delta", self.delta)?;
        check_unit("burnin_threshold", self.burnin_threshold)?;
        check_unit("candidate_prefilter", self.candidate_prefilter)?;
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Validation(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::Validation(format!("nms_iou must lie in (0, 1], got {}", self.nms_iou)));
        }
        if !(self.fg_iou > 0.0 && self.fg_iou < 1.0) {
            return Err(Error::Validation(format!("fg_iou must lie in (0, 1), got {}", self.fg_iou)));
        }
        Ok(())
    }
}

/// A proposal box with its precomputed distribution over novel categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProposal {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub scores: BTreeMap<String, f64>,
}

impl RawProposal {
    /// Highest-scoring class; ties resolve to the lexicographically first name.
    pub fn top1(&self) -> Option<(&str, f64)> {
        let mut best: Option<(&str, f64)> = None;
        for (name, &p) in &self.scores {
            match best {
                Some((_, b)) if p <= b => {}
                _ => best = Some((name.as_str(), p)),
            }
        }
        best
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::Validation(format!("proposal {index} has an empty score distribution")));
        }
        if let Some((k, v)) = self.scores.iter().find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::Validation(format!("proposal {index}: score for {k:?} is {v}")));
        }
        let total: f64 = self.scores.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("proposal {index}: scores sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// A candidate pseudo-label. `novelty` and `fused` are filled in by online
/// mining and stay unset during burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub clip_score: f64,
    pub clip_class: String,
    /// The full VLM distribution the candidate was assigned from.
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub novelty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<f64>,
}

impl Candidate {
    /// Ordering score used wherever candidates are ranked: the fused
    /// confidence if mined, else the VLM score.
    pub fn ranking_score(&self) -> f64 {
        self.fused.unwrap_or(self.clip_score)
    }
}

/// Keeps proposals whose top-1 score reaches the prefilter, then suppresses
/// duplicates with NMS on the top-1 score. Candidates come out in NMS
/// visiting order.
pub fn assign_candidates(raw: &[RawProposal], cfg: &MiningConfig) -> Result<Vec<Candidate>> {
    let mut survivors = Vec::new();
    for (i, p) in raw.iter().enumerate() {
        p.validate(i)?;
        let (class, score) = p.top1().expect("validated non-empty");
        if score >= cfg.candidate_prefilter {
            survivors.push((i, class.to_string(), score));
        }
    }
    let scored: Vec<(BBox, f64)> = survivors.iter().map(|(i, _, s)| (raw[*i].bbox, *s)).collect();
    let kept = nms(&scored, cfg.nms_iou)?;
    Ok(kept
        .into_iter()
        .map(|k| {
            let (i, class, score) = &survivors[k];
            Candidate {
                bbox: raw[*i].bbox,
                clip_score: *score,
                clip_class: class.clone(),
                scores: raw[*i].scores.clone(),
                novelty: None,
                fused: None,
            }
        })
        .collect())
}

/// Burn-in selection: candidates whose VLM score reaches the burn-in threshold.
pub fn select_burnin(candidates: &[Candidate], cfg: &MiningConfig) -> Vec<Candidate> {
    burnin_indices(candidates, cfg.burnin_threshold).into_iter().map(|i| candidates[i].clone()).collect()
}

pub(crate) fn burnin_indices(candidates: &[Candidate], threshold: f64) -> Vec<usize> {
    candidates.iter().enumerate().filter(|(_, c)| c.clip_score >= threshold).map(|(i, _)| i).collect()
}

/// Result of online mining on one image: every input candidate with its
/// novelty and fused score populated, and the indices that passed `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mined {
    pub candidates: Vec<Candidate>,
    pub selected: Vec<usize>,
}

impl Mined {
    pub fn selected_candidates(&self) -> Vec<Candidate> {
        self.selected.iter().map(|&i| self.candidates[i].clone()).collect()
    }

    pub fn is_selected(&self, index: usize) -> bool {
        self.selected.binary_search(&index).is_ok()
    }
}

/// Online mining for one image. `detector_embeddings[i]` is the detector's
/// weak-view embedding of `candidates[i]`.
pub fn mine_online(
    candidates: &[Candidate],
    detector_embeddings: &[RegionEmbedding],
    cats: &CategorySpace,
    cfg: &MiningConfig,
) -> Result<Mined> {
    if candidates.len() != detector_embeddings.len() {
        return Err(Error::Contract(format!(
            "{} candidates but {} detector embeddings",
            candidates.len(),
            detector_embeddings.len()
        )));
    }
    if cats.num_novel() == 0 {
        return Err(Error::Config("online mining needs at least one novel category".into()));
    }
    let z = detector_embeddings
        .iter()
        .map(|r| classify(r, cats).map(|p| novel_mass(&p, cats)))
        .collect::<Result<Vec<f64>>>()?;
    let s_det = max_norm(&z)?;
    let mut out = Vec::with_capacity(candidates.len());
    let mut selected = Vec::new();
    for (i, (c, &d)) in candidates.iter().zip(&s_det).enumerate() {
        let s = fuse(c.clip_score, d, cfg.lambda)?;
        if s >= cfg.delta {
            selected.push(i);
        }
        out.push(Candidate { novelty: Some(d), fused: Some(s), ..c.clone() });
    }
    Ok(Mined { candidates: out, selected })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    BurnIn,
    Online,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::BurnIn => "BURN_IN",
            Phase::Online => "ONLINE",
        }
    }
}

pub fn mining_schedule(iteration: u64, cfg: &MiningConfig) -> Phase {
    if iteration < cfg.burnin_steps {
        Phase::BurnIn
    } else {
        Phase::Online
    }
}

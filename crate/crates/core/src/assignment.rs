//! Stratified label assignment, adaptive per-box weights and the weighted
//! loss aggregate.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::geometry::{iou, match_targets, BBox};
use crate::mining::Candidate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Origin {
    Base,
    Novel,
    Background,
}

/// A proposal after assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBox {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub origin: Origin,
    /// Index into the base annotations (BASE) or the pseudo-labels (NOVEL).
    pub target_index: Option<usize>,
    /// Weak-view background probability.
    #[serde(rename = "b")]
    pub background_score: f64,
    /// Confidence of the matched pseudo-label.
    #[serde(rename = "s")]
    pub pseudo_confidence: Option<f64>,
    #[serde(rename = "w")]
    pub weight: f64,
}

/// Which per-box quantity stands in for the reliability term of the weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReliabilityIndicator {
    /// One minus the weak-view background probability.
    #[default]
    OneMinusBg,
    /// The pseudo-label's own confidence, i.e. plain weighted pseudo-labels.
    PseudoConf,
    /// IoU between the training box and its pseudo-label.
    IouToPseudo,
    /// Max-normalised novelty of the matched candidate.
    Novelty,
}

impl ReliabilityIndicator {
    pub const ALL: [ReliabilityIndicator; 4] = [
        ReliabilityIndicator::OneMinusBg,
        ReliabilityIndicator::PseudoConf,
        ReliabilityIndicator::IouToPseudo,
        ReliabilityIndicator::Novelty,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReliabilityIndicator::OneMinusBg => "ONE_MINUS_BG",
            ReliabilityIndicator::PseudoConf => "PSEUDO_CONF",
            ReliabilityIndicator::IouToPseudo => "IOU_TO_PSEUDO",
            ReliabilityIndicator::Novelty => "NOVELTY",
        }
    }
}

impl std::str::FromStr for ReliabilityIndicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::Validation(format!("unknown reliability indicator {s:?}")))
    }
}

impl std::fmt::Display for ReliabilityIndicator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two-stage assignment. Proposals are first matched against base
/// annotations; only those left as background are matched against the
/// pseudo-labels. `background_scores[i]` is the weak-view background
/// probability of `proposals[i]`.
///
/// Every box starts with weight 1; see [`apply_adaptive_weights`].
pub fn stratified_assign(
    proposals: &[BBox],
    base_gt: &[(BBox, String)],
    pseudo: &[Candidate],
    background_scores: &[f64],
    fg_iou: f64,
) -> Result<Vec<TrainingBox>> {
    if background_scores.len() != proposals.len() {
        return Err(Error::Contract(format!(
            "{} proposals but {} background scores",
            proposals.len(),
            background_scores.len()
        )));
    }
    for &b in background_scores {
        check_unit("background score", b)?;
    }
    let base_boxes: Vec<BBox> = base_gt.iter().map(|(b, _)| *b).collect();
    let stage1 = match_targets(proposals, &base_boxes, fg_iou)?;

    let leftover: Vec<usize> = stage1.iter().filter(|(_, m)| m.is_none()).map(|(i, _)| *i).collect();
    let leftover_boxes: Vec<BBox> = leftover.iter().map(|&i| proposals[i]).collect();
    let pseudo_boxes: Vec<BBox> = pseudo.iter().map(|c| c.bbox).collect();
    let stage2 = match_targets(&leftover_boxes, &pseudo_boxes, fg_iou)?;

    let mut out: Vec<TrainingBox> = proposals
        .iter()
        .zip(background_scores)
        .zip(&stage1)
        .map(|((p, &b), (_, m))| TrainingBox {
            bbox: *p,
            origin: if m.is_some() { Origin::Base } else { Origin::Background },
            target_index: *m,
            background_score: b,
            pseudo_confidence: None,
            weight: 1.0,
        })
        .collect();
    for (k, matched) in stage2 {
        if let Some(j) = matched {
            let tb = &mut out[leftover[k]];
            tb.origin = Origin::Novel;
            tb.target_index = Some(j);
            tb.pseudo_confidence = Some(pseudo[j].ranking_score());
        }
    }
    Ok(out)
}

/// Reliability of a NOVEL training box under the chosen indicator.
pub fn reliability(tb: &TrainingBox, indicator: ReliabilityIndicator, matched: &Candidate) -> Result<f64> {
    if tb.origin != Origin::Novel {
        return Err(Error::Contract(format!("reliability is defined for NOVEL boxes, got {:?}", tb.origin)));
    }
    let r = match indicator {
        ReliabilityIndicator::OneMinusBg => 1.0 - tb.background_score,
        ReliabilityIndicator::PseudoConf => tb.pseudo_confidence.unwrap_or_else(|| matched.ranking_score()),
        ReliabilityIndicator::IouToPseudo => iou(&tb.bbox, &matched.bbox),
        ReliabilityIndicator::Novelty => matched
            .novelty
            .ok_or_else(|| Error::Contract("NOVELTY reliability needs a candidate with a novelty score".into()))?,
    };
    Ok(r.clamp(0.0, 1.0))
}

/// `lambda_prime * s + (1 - lambda_prime) * r`.
pub fn adaptive_weight(s: f64, r: f64, lambda_prime: f64) -> Result<f64> {
    check_unit("pseudo-label confidence", s)?;
    check_unit("reliability", r)?;
    check_unit("lambda_prime", lambda_prime)?;
    Ok(lambda_prime * s + (1.0 - lambda_prime) * r)
}

/// Sets the weight of every NOVEL box from its matched pseudo-label.
pub fn apply_adaptive_weights(
    boxes: &mut [TrainingBox],
    pseudo: &[Candidate],
    indicator: ReliabilityIndicator,
    lambda_prime: f64,
) -> Result<()> {
    for tb in boxes.iter_mut().filter(|tb| tb.origin == Origin::Novel) {
        let j = tb.target_index.ok_or_else(|| Error::Contract("NOVEL box without a target".into()))?;
        let matched = pseudo.get(j).ok_or_else(|| Error::Contract(format!("pseudo-label index {j} out of range")))?;
        let s = tb.pseudo_confidence.unwrap_or_else(|| matched.ranking_score());
        let r = reliability(tb, indicator, matched)?;
        tb.weight = adaptive_weight(s, r, lambda_prime)?;
    }
    Ok(())
}

/// Weighted mean loss over all training boxes: BASE and BACKGROUND losses
/// enter with weight 1, NOVEL losses with `gamma * w_i`, and the sum is
/// divided by the total box count. An empty batch yields 0.
pub fn aggregate_loss(boxes: &[TrainingBox], per_box_losses: &[f64], gamma: f64) -> Result<f64> {
    if boxes.len() != per_box_losses.len() {
        return Err(Error::Contract(format!("{} boxes but {} losses", boxes.len(), per_box_losses.len())));
    }
    if let Some(l) = per_box_losses.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::Validation(format!("per-box loss must be non-negative, got {l}")));
    }
    if boxes.is_empty() {
        return Ok(0.0);
    }
    let (mut base, mut novel) = (0.0, 0.0);
    for (tb, &l) in boxes.iter().zip(per_box_losses) {
        match tb.origin {
            Origin::Novel => novel += tb.weight * l,
            Origin::Base | Origin::Background => base += l,
        }
    }
    Ok((base + gamma * novel) / boxes.len() as f64)
}

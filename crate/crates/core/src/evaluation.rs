//! Pseudo-label quality measurement: TP / mis-class / noise verdicts,
//! precision and recall, error decomposition, recall-matched baselines and
//! the rank correlation between training weights and true overlap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::{Origin, TrainingBox};
use crate::error::{Error, Result};
use crate::geometry::{best_match, descending_order, BBox};
use crate::mining::{Candidate, Phase};
use crate::simulator::SceneObject;

/// IoU a pseudo-label needs with a novel object to count as covering it.
pub const TP_IOU: f64 = 0.5;

/// Bump when CSV columns or summary keys change.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Tp,
    MisClass,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVerdict {
    pub verdict: Verdict,
    /// Best-IoU novel object when that IoU reaches [`TP_IOU`].
    pub gt_index: Option<usize>,
    /// IoU with the best-matching novel object, 0 when there is none.
    pub iou_to_gt: f64,
    /// Correct-class hit on an object already claimed by a higher-ranked
    /// label. Always a NOISE verdict.
    pub duplicate: bool,
}

/// Judges pseudo-labels of one image against its novel objects. Verdicts
/// are returned in input order.
///
/// Each label is matched to its best-IoU novel object (lowest index on
/// ties). IoU >= 0.5 with the right class is a TP, with the wrong class a
/// MIS_CLASS, anything else NOISE. An object validates at most one TP;
/// labels are resolved by descending ranking score, then input index, and
/// later correct-class hits on a claimed object are NOISE.
pub fn judge(pseudo_labels: &[Candidate], novel_gt: &[SceneObject]) -> Vec<LabelVerdict> {
    let gt_boxes: Vec<BBox> = novel_gt.iter().map(|o| o.bbox).collect();
    let order = descending_order(pseudo_labels.iter().map(Candidate::ranking_score));
    let mut claimed = vec![false; novel_gt.len()];
    let mut out = vec![None; pseudo_labels.len()];
    for i in order {
        let label = &pseudo_labels[i];
        let verdict = match best_match(&label.bbox, &gt_boxes) {
            Some((j, v)) if v >= TP_IOU => {
                if novel_gt[j].category != label.clip_class {
                    LabelVerdict { verdict: Verdict::MisClass, gt_index: Some(j), iou_to_gt: v, duplicate: false }
                } else if claimed[j] {
                    LabelVerdict { verdict: Verdict::Noise, gt_index: Some(j), iou_to_gt: v, duplicate: true }
                } else {
                    claimed[j] = true;
                    LabelVerdict { verdict: Verdict::Tp, gt_index: Some(j), iou_to_gt: v, duplicate: false }
                }
            }
            best => LabelVerdict {
                verdict: Verdict::Noise,
                gt_index: None,
                iou_to_gt: best.map_or(0.0, |(_, v)| v),
                duplicate: false,
            },
        };
        out[i] = Some(verdict);
    }
    out.into_iter().map(|v| v.expect("every label judged")).collect()
}

/// Verdict tallies. Adding tallies is associative and commutative, so
/// per-image results can be merged in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub misclass: u64,
    pub noise: u64,
    /// Selections whose best novel IoU reaches 0.5, whatever the verdict.
    pub gt_overlapping: u64,
    pub total_gt: u64,
}

impl Counts {
    pub fn from_verdicts(verdicts: &[LabelVerdict], total_gt: usize) -> Self {
        let mut c = Counts { total_gt: total_gt as u64, ..Default::default() };
        for v in verdicts {
            match v.verdict {
                Verdict::Tp => c.tp += 1,
                Verdict::MisClass => c.misclass += 1,
                Verdict::Noise => c.noise += 1,
            }
            if v.iou_to_gt >= TP_IOU {
                c.gt_overlapping += 1;
            }
        }
        c
    }

    pub fn selected(&self) -> u64 {
        self.tp + self.misclass + self.noise
    }

    pub fn precision(&self) -> f64 {
        if self.selected() == 0 {
            1.0
        } else {
            self.tp as f64 / self.selected() as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.total_gt == 0 {
            0.0
        } else {
            self.tp as f64 / self.total_gt as f64
        }
    }

    pub fn decompose(&self) -> Decomposition {
        decompose_counts(self.tp, self.misclass, self.noise)
    }

    /// Share of wrong-class labels among selections that cover an object.
    pub fn misclass_fraction(&self) -> f64 {
        if self.gt_overlapping == 0 {
            0.0
        } else {
            self.misclass as f64 / self.gt_overlapping as f64
        }
    }

    pub fn noise_fraction(&self) -> f64 {
        if self.selected() == 0 {
            0.0
        } else {
            self.noise as f64 / self.selected() as f64
        }
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            misclass: self.misclass + o.misclass,
            noise: self.noise + o.noise,
            gt_overlapping: self.gt_overlapping + o.gt_overlapping,
            total_gt: self.total_gt + o.total_gt,
        }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

/// Precision is 1 for an empty selection; recall is 0 without objects.
pub fn precision_recall(verdicts: &[LabelVerdict], total_novel_gt: usize) -> (f64, f64) {
    let c = Counts::from_verdicts(verdicts, total_novel_gt);
    (c.precision(), c.recall())
}

/// Percentage breakdown of a selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub tp_pct: f64,
    pub misclass_pct: f64,
    pub noise_pct: f64,
}

pub fn decompose(verdicts: &[LabelVerdict]) -> Decomposition {
    Counts::from_verdicts(verdicts, 0).decompose()
}

fn decompose_counts(tp: u64, misclass: u64, noise: u64) -> Decomposition {
    let n = (tp + misclass + noise) as f64;
    if n == 0.0 {
        return Decomposition { tp_pct: 0.0, misclass_pct: 0.0, noise_pct: 0.0 };
    }
    Decomposition {
        tp_pct: 100.0 * tp as f64 / n,
        misclass_pct: 100.0 * misclass as f64 / n,
        noise_pct: 100.0 * noise as f64 / n,
    }
}

/// One image's candidates and novel objects, as consumed by threshold sweeps.
#[derive(Debug, Clone, Copy)]
pub struct ImageLabels<'a> {
    pub candidates: &'a [Candidate],
    pub novel_gt: &'a [SceneObject],
}

/// Tallies the candidates whose score (as picked by `score`) reaches
/// `threshold`, image by image.
pub fn counts_at_threshold(images: &[ImageLabels<'_>], threshold: f64, score: impl Fn(&Candidate) -> f64) -> Counts {
    images
        .iter()
        .map(|img| {
            let selected: Vec<Candidate> = img.candidates.iter().filter(|c| score(c) >= threshold).cloned().collect();
            Counts::from_verdicts(&judge(&selected, img.novel_gt), img.novel_gt.len())
        })
        .sum()
}

/// A VLM-only baseline picked to match a target recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedBaseline {
    pub threshold: f64,
    pub counts: Counts,
    /// `baseline recall - target recall`.
    pub recall_residual: f64,
}

/// Sweeps the VLM-score threshold over every distinct candidate score and
/// returns the selection whose recall is nearest `target_recall`. Ties go to
/// the higher threshold.
pub fn match_clip_recall(images: &[ImageLabels<'_>], target_recall: f64) -> MatchedBaseline {
    let mut thresholds: Vec<f64> = images.iter().flat_map(|img| img.candidates.iter().map(|c| c.clip_score)).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    // Above every score nothing is selected.
    let mut best = MatchedBaseline {
        threshold: f64::INFINITY,
        counts: counts_at_threshold(images, f64::INFINITY, |c| c.clip_score),
        recall_residual: -target_recall,
    };
    for t in thresholds {
        let counts = counts_at_threshold(images, t, |c| c.clip_score);
        let residual = counts.recall() - target_recall;
        if residual.abs() < best.recall_residual.abs() {
            best = MatchedBaseline { threshold: t, counts, recall_residual: residual };
        }
    }
    best
}

/// Spearman rank correlation between the weights of NOVEL boxes and their
/// IoU with the best-matching novel object. `None` when fewer than two
/// NOVEL boxes exist or either side is constant.
pub fn weight_quality(training_boxes: &[TrainingBox], novel_gt: &[SceneObject]) -> Option<f64> {
    let gt: Vec<BBox> = novel_gt.iter().map(|o| o.bbox).collect();
    let (w, v): (Vec<f64>, Vec<f64>) = training_boxes
        .iter()
        .filter(|tb| tb.origin == Origin::Novel)
        .map(|tb| (tb.weight, best_match(&tb.bbox, &gt).map_or(0.0, |(_, v)| v)))
        .unzip();
    spearman(&w, &v)
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let r = (start + end - 1) as f64 / 2.0 + 1.0;
        for &k in &idx[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// One logged step of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub schema_version: u32,
    pub iteration: u64,
    pub phase: Phase,
    pub skill: f64,
    pub num_selected: u64,
    pub precision: f64,
    pub recall: f64,
    pub tp_count: u64,
    pub misclass_count: u64,
    pub noise_count: u64,
    /// Mean over the window's iterations where the correlation is defined;
    /// empty when none was.
    pub mean_weight_rank_correlation: Option<f64>,
    /// Mean weighted training loss over the window.
    pub mean_loss: f64,
}

impl StepMetrics {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp_count,
            misclass: self.misclass_count,
            noise: self.noise_count,
            gt_overlapping: 0,
            total_gt: 0,
        }
    }
}

/// Column order of the metrics CSV.
pub const CSV_COLUMNS: [&str; 12] = [
    "schema_version",
    "iteration",
    "phase",
    "skill",
    "num_selected",
    "precision",
    "recall",
    "tp_count",
    "misclass_count",
    "noise_count",
    "mean_weight_rank_correlation",
    "mean_loss",
];

/// Writes one CSV row per logged step. Floats use Rust's shortest
/// round-trip formatting so output is byte-stable.
pub fn write_metrics_csv<W: Write>(rows: &[StepMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.schema_version.to_string(),
            r.iteration.to_string(),
            r.phase.as_str().to_string(),
            r.skill.to_string(),
            r.num_selected.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.tp_count.to_string(),
            r.misclass_count.to_string(),
            r.noise_count.to_string(),
            r.mean_weight_rank_correlation.map(|v| v.to_string()).unwrap_or_default(),
            r.mean_loss.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Centered moving average with a window of `window` points, shrinking at
/// the edges.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use clap::ValueEnum;
use ovdmine::evaluation::{counts_at_threshold, ImageLabels};
use ovdmine::formats::{parse_records, GroundTruthImage, ImageCandidates};
use ovdmine::simulator::SceneObject;
use ovdmine::{Candidate, Counts};
use serde::Serialize;

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreKind {
    /// Top-1 VLM score.
    Clip,
    /// The `fused` field of a mined-label file.
    Fused,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub threshold: f64,
    pub selected: u64,
    pub tp: u64,
    pub misclass: u64,
    pub noise: u64,
    pub tp_pct: f64,
    pub misclass_pct: f64,
    pub noise_pct: f64,
    pub precision: f64,
    pub recall: f64,
}

impl AuditRow {
    fn new(threshold: f64, c: &Counts) -> Self {
        let d = c.decompose();
        Self {
            threshold,
            selected: c.selected(),
            tp: c.tp,
            misclass: c.misclass,
            noise: c.noise,
            tp_pct: d.tp_pct,
            misclass_pct: d.misclass_pct,
            noise_pct: d.noise_pct,
            precision: c.precision(),
            recall: c.recall(),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Judges the candidates of `candidates` against `ground_truth` at every
/// threshold. Objects count as novel when their category is in `novel`, or,
/// if that is `None`, when any candidate carries a score for it. Images in
/// the ground truth without candidates still count towards recall.
pub fn cmd_audit(
    candidates: &Path,
    ground_truth: &Path,
    thresholds: &[f64],
    score: ScoreKind,
    novel: Option<&[String]>,
) -> Result<Vec<AuditRow>> {
    if thresholds.is_empty() || thresholds.iter().any(|t| t.is_nan()) {
        return Err(CliError::Validation("thresholds must be a non-empty list of numbers".into()));
    }
    let cand_what = candidates.display().to_string();
    let cand_recs: Vec<ImageCandidates> = parse_records(&read(candidates)?, &cand_what)?;
    let gt_what = ground_truth.display().to_string();
    let gt_recs: Vec<GroundTruthImage> = parse_records(&read(ground_truth)?, &gt_what)?;

    let mut gt: BTreeMap<u64, &[SceneObject]> = BTreeMap::new();
    for (i, g) in gt_recs.iter().enumerate() {
        if gt.insert(g.image_id, &g.objects).is_some() {
            return Err(CliError::Validation(format!("{gt_what}: record {i}: duplicate image_id {}", g.image_id)));
        }
    }

    let mut per_image: BTreeMap<u64, Vec<Candidate>> = BTreeMap::new();
    for (i, rec) in cand_recs.iter().enumerate() {
        let at = |m: String| CliError::Validation(format!("{cand_what}: record {i}: {m}"));
        if !gt.contains_key(&rec.image_id) {
            return Err(at(format!("image_id {} has no ground-truth entry", rec.image_id)));
        }
        if per_image.contains_key(&rec.image_id) {
            return Err(at(format!("duplicate image_id {}", rec.image_id)));
        }
        let mut list = Vec::with_capacity(rec.candidates.len());
        for (k, c) in rec.candidates.iter().enumerate() {
            if score == ScoreKind::Fused && c.fused.is_none() {
                return Err(at(format!("candidate {k} has no fused score")));
            }
            list.push(c.to_candidate().map_err(|e| at(format!("candidate {k}: {e}")))?);
        }
        per_image.insert(rec.image_id, list);
    }

    let novel: BTreeSet<String> = match novel {
        Some(n) => n.iter().cloned().collect(),
        None => cand_recs.iter().flat_map(|r| r.candidates.iter().flat_map(|c| c.scores.keys().cloned())).collect(),
    };
    let novel_gt: Vec<(u64, Vec<SceneObject>)> = gt
        .iter()
        .map(|(id, objs)| (*id, objs.iter().filter(|o| novel.contains(&o.category)).cloned().collect()))
        .collect();
    let empty: Vec<Candidate> = Vec::new();
    let images: Vec<ImageLabels<'_>> = novel_gt
        .iter()
        .map(|(id, objs)| ImageLabels { candidates: per_image.get(id).unwrap_or(&empty), novel_gt: objs })
        .collect();

    let pick = |c: &Candidate| match score {
        ScoreKind::Clip => c.clip_score,
        ScoreKind::Fused => c.fused.unwrap_or(f64::NEG_INFINITY),
    };
    Ok(thresholds.iter().map(|&t| AuditRow::new(t, &counts_at_threshold(&images, t, pick))).collect())
}

pub fn write_audit_csv(path: &Path, rows: &[AuditRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn format_table(rows: &[AuditRow]) -> String {
    let mut s = format!(
        "{:>9} {:>8} {:>7} {:>10} {:>7} {:>9} {:>7}\n",
        "threshold", "selected", "tp%", "misclass%", "noise%", "precision", "recall"
    );
    for r in rows {
        s += &format!(
            "{:>9.3} {:>8} {:>7.2} {:>10.2} {:>7.2} {:>9.4} {:>7.4}\n",
            r.threshold, r.selected, r.tp_pct, r.misclass_pct, r.noise_pct, r.precision, r.recall
        );
    }
    s
}

//! JSON file schemas: candidate files, mined-label files, ground truth and
//! assignment dumps.
//!
//! Candidate file: `[{"image_id": 7, "candidates": [{"box": [x1, y1, x2, y2],
//! "scores": {"dog": 0.8, "cup": 0.2}}]}]`. A mined-label file has the same
//! shape and adds `novelty`, `fused` and `selected` to each candidate.
//! Ground truth: `[{"image_id": 7, "objects": [{"box": [...], "category": "dog"}]}]`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assignment::TrainingBox;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::mining::{Candidate, RawProposal};
use crate::simulator::{RunArtifacts, SceneObject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRecord {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub novelty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<bool>,
}

impl CandidateRecord {
    pub fn from_candidate(c: &Candidate, selected: Option<bool>) -> Self {
        Self { bbox: c.bbox, scores: c.scores.clone(), novelty: c.novelty, fused: c.fused, selected }
    }

    /// Candidate with its class and score taken from the top-1 entry.
    pub fn to_candidate(&self) -> Result<Candidate> {
        let raw = RawProposal { bbox: self.bbox, scores: self.scores.clone() };
        let (class, score) = raw.top1().ok_or_else(|| Error::Validation("candidate has no scores".into()))?;
        Ok(Candidate {
            bbox: self.bbox,
            clip_score: score,
            clip_class: class.to_string(),
            scores: self.scores.clone(),
            novelty: self.novelty,
            fused: self.fused,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageCandidates {
    pub image_id: u64,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthImage {
    pub image_id: u64,
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentImage {
    pub image_id: u64,
    pub boxes: Vec<TrainingBox>,
}

/// Parses a top-level JSON array record by record so a schema violation
/// names the offending element.
pub fn parse_records<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| {
        Error::Validation(format!("{what}: expected a JSON array (line {}, column {}): {e}", e.line(), e.column()))
    })?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| serde_json::from_value(v).map_err(|e| Error::Validation(format!("{what}: record {i}: {e}"))))
        .collect()
}

pub fn read_records<T: DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    parse_records(&text, what)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Evaluation-image candidates of a run, in candidate-file form.
pub fn export_candidates(artifacts: &RunArtifacts) -> Vec<ImageCandidates> {
    artifacts
        .world
        .eval
        .iter()
        .map(|img| ImageCandidates {
            image_id: img.scene.image_id,
            candidates: img.candidates.iter().map(|c| CandidateRecord::from_candidate(c, None)).collect(),
        })
        .collect()
}

/// Final-phase mining of the evaluation images.
pub fn export_mined(artifacts: &RunArtifacts) -> Vec<ImageCandidates> {
    artifacts
        .world
        .eval
        .iter()
        .zip(&artifacts.eval_mined)
        .map(|(img, (scored, flags))| ImageCandidates {
            image_id: img.scene.image_id,
            candidates: scored.iter().zip(flags).map(|(c, &f)| CandidateRecord::from_candidate(c, Some(f))).collect(),
        })
        .collect()
}

/// All objects (base and novel) of the evaluation images.
pub fn export_ground_truth(artifacts: &RunArtifacts) -> Vec<GroundTruthImage> {
    artifacts
        .world
        .eval
        .iter()
        .map(|img| GroundTruthImage { image_id: img.scene.image_id, objects: img.scene.objects.clone() })
        .collect()
}

pub fn export_assignments(artifacts: &RunArtifacts) -> Vec<AssignmentImage> {
    artifacts
        .last_assignments
        .iter()
        .map(|(id, boxes)| AssignmentImage { image_id: *id, boxes: boxes.clone() })
        .collect()
}

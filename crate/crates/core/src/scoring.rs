//! Embedding-space classification and per-candidate scores: the region
//! posterior, the novelty mass on novel categories, per-image max
//! normalisation and the detector/VLM fusion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};

/// Base and novel categories with their text embeddings plus the learned
/// background embedding.
///
/// Posterior layout is `[base..., novel..., background]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpace {
    base_names: Vec<String>,
    novel_names: Vec<String>,
    /// One vector per category, base first then novel.
    embeddings: Vec<Vec<f64>>,
    background: Vec<f64>,
    dim: usize,
    logit_scale: f64,
}

impl CategorySpace {
    pub fn new(
        base_names: Vec<String>,
        novel_names: Vec<String>,
        embeddings: Vec<Vec<f64>>,
        background: Vec<f64>,
    ) -> Result<Self> {
        let dim = background.len();
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if embeddings.len() != base_names.len() + novel_names.len() {
            return Err(Error::Config(format!(
                "{} embeddings for {} categories",
                embeddings.len(),
                base_names.len() + novel_names.len()
            )));
        }
        if let Some(dup) = base_names.iter().find(|n| novel_names.contains(n)) {
            return Err(Error::Config(format!("category {dup:?} is both base and novel")));
        }
        let mut all: Vec<&String> = base_names.iter().chain(novel_names.iter()).collect();
        all.sort();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate category name".into()));
        }
        for (i, e) in embeddings.iter().chain(std::iter::once(&background)).enumerate() {
            if e.len() != dim {
                return Err(Error::Config(format!("embedding {i} has length {}, expected {dim}", e.len())));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("embedding {i} has non-finite entries")));
            }
        }
        Ok(Self { base_names, novel_names, embeddings, background, dim, logit_scale: 1.0 })
    }

    /// Multiplies every dot product before the softmax. Defaults to 1.
    pub fn with_logit_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("logit scale must be positive, got {scale}")));
        }
        self.logit_scale = scale;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn logit_scale(&self) -> f64 {
        self.logit_scale
    }
    pub fn base_names(&self) -> &[String] {
        &self.base_names
    }
    pub fn novel_names(&self) -> &[String] {
        &self.novel_names
    }
    pub fn num_base(&self) -> usize {
        self.base_names.len()
    }
    pub fn num_novel(&self) -> usize {
        self.novel_names.len()
    }
    /// Number of named categories (background excluded).
    pub fn num_categories(&self) -> usize {
        self.embeddings.len()
    }
    pub fn background_index(&self) -> usize {
        self.embeddings.len()
    }
    pub fn novel_range(&self) -> std::ops::Range<usize> {
        self.num_base()..self.num_categories()
    }
    pub fn embedding(&self, index: usize) -> &[f64] {
        if index == self.background_index() {
            &self.background
        } else {
            &self.embeddings[index]
        }
    }
    pub fn background_embedding(&self) -> &[f64] {
        &self.background
    }

    /// Position of a category in the posterior layout.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.base_names.iter().chain(self.novel_names.iter()).position(|n| n == name)
    }

    pub fn name_of(&self, index: usize) -> Option<&str> {
        self.base_names.iter().chain(self.novel_names.iter()).nth(index).map(String::as_str)
    }

    pub fn is_novel(&self, name: &str) -> bool {
        self.novel_names.iter().any(|n| n == name)
    }

    pub fn is_base(&self, name: &str) -> bool {
        self.base_names.iter().any(|n| n == name)
    }

    /// Scaled dot products in posterior layout.
    pub fn logits(&self, r: &RegionEmbedding) -> Result<Vec<f64>> {
        if r.dim() != self.dim {
            return Err(Error::Config(format!(
                "region embedding has length {}, category space has dim {}",
                r.dim(),
                self.dim
            )));
        }
        Ok(self
            .embeddings
            .iter()
            .chain(std::iter::once(&self.background))
            .map(|c| self.logit_scale * dot(&r.0, c))
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A region's visual embedding produced by the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionEmbedding(Vec<f64>);

impl RegionEmbedding {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("region embedding has non-finite entries".into()));
        }
        Ok(Self(vector))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Softmax posterior over categories and background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPosterior {
    probs: Vec<f64>,
}

impl ClassPosterior {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Background probability; the last entry.
    pub fn background(&self) -> f64 {
        *self.probs.last().expect("posterior always has a background slot")
    }

    pub fn argmax(&self) -> usize {
        crate::geometry::descending_order(self.probs.iter().copied())[0]
    }
}

/// Softmax of the region's dot products with every category embedding and
/// the background embedding. The max logit is subtracted first; this does
/// not change the result.
pub fn classify(r: &RegionEmbedding, cats: &CategorySpace) -> Result<ClassPosterior> {
    let logits = cats.logits(r)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(ClassPosterior { probs: exps.into_iter().map(|e| e / total).collect() })
}

/// Classifies a batch in parallel. Results are identical to calling
/// [`classify`] on each element.
pub fn classify_batch(regions: &[RegionEmbedding], cats: &CategorySpace) -> Result<Vec<ClassPosterior>> {
    regions.par_iter().map(|r| classify(r, cats)).collect()
}

/// Share of the posterior mass that falls on novel categories. Shares the
/// softmax denominator with [`classify`], so it is computed as the sum of
/// the novel entries of that posterior.
pub fn novelty_score(r: &RegionEmbedding, cats: &CategorySpace) -> Result<f64> {
    if cats.num_novel() == 0 {
        return Err(Error::Config("novelty score needs at least one novel category".into()));
    }
    let posterior = classify(r, cats)?;
    Ok(novel_mass(&posterior, cats))
}

pub(crate) fn novel_mass(posterior: &ClassPosterior, cats: &CategorySpace) -> f64 {
    posterior.probs[cats.novel_range()].iter().sum()
}

/// Divides every score by the largest one. Scores must be positive.
pub fn max_norm(z: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = z.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Validation(format!("max-norm needs positive finite scores, got {bad}")));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(z.iter().map(|v| v / max).collect())
}

/// Convex combination `lambda * s_clip + (1 - lambda) * s_det`.
pub fn fuse(s_clip: f64, s_det: f64, lambda: f64) -> Result<f64> {
    check_unit("clip score", s_clip)?;
    check_unit("detector score", s_det)?;
    check_unit("lambda", lambda)?;
    Ok(lambda * s_clip + (1.0 - lambda) * s_det)
}

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::rng::{stream, tag};
use super::scene::Scene;
use crate::error::{check_unit, Error, Result};
use crate::geometry::{best_match, BBox};

/// Beta distribution given by its mean and concentration (`alpha + beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    pub mean: f64,
    pub concentration: f64,
}

impl BetaSpec {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.mean > 0.0 && self.mean < 1.0 && self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::Config(format!("{name}: mean must lie in (0, 1) and concentration be positive")));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        Beta::new(self.mean * self.concentration, (1.0 - self.mean) * self.concentration)
            .expect("validated parameters")
            .sample(rng)
    }
}

/// Parametric stand-in for precomputed CLIP crop scores over the novel
/// classes. True-object crops are almost always right; crops of noise
/// regions get confident scores on an arbitrary class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimVlm {
    /// Probability that a crop of a novel object is given a wrong class.
    pub misclass_rate: f64,
    /// Top-1 score on a correctly classified object crop, mapped onto `[1/K, 1]`.
    pub true_score: BetaSpec,
    /// Top-1 score on a wrongly classified object crop.
    pub wrong_score: BetaSpec,
    /// Top-1 score on a noise crop.
    pub noise_score: BetaSpec,
}

impl Default for SimVlm {
    fn default() -> Self {
        Self {
            misclass_rate: 0.1,
            true_score: BetaSpec { mean: 0.8, concentration: 6.0 },
            wrong_score: BetaSpec { mean: 0.59, concentration: 6.0 },
            noise_score: BetaSpec { mean: 0.55, concentration: 3.0 },
        }
    }
}

impl SimVlm {
    pub fn validate(&self) -> Result<()> {
        check_unit("misclass_rate", self.misclass_rate).map_err(|e| Error::Config(e.to_string()))?;
        self.true_score.validate("true_score")?;
        self.wrong_score.validate("wrong_score")?;
        self.noise_score.validate("noise_score")
    }
}

/// Spreads `1 - top` over the other classes so that `top` stays the maximum.
fn distribution(rng: &mut ChaCha8Rng, names: &[String], top_index: usize, top: f64) -> BTreeMap<String, f64> {
    let k = names.len();
    let mut out = BTreeMap::new();
    if k == 1 {
        out.insert(names[0].clone(), 1.0);
        return out;
    }
    let rest = 1.0 - top;
    let raw: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut others: Vec<f64> = raw.iter().map(|u| rest * u / total).collect();
    if others.iter().any(|&o| o >= top) {
        others = vec![rest / (k - 1) as f64; k - 1];
    }
    let mut it = others.into_iter();
    for (i, name) in names.iter().enumerate() {
        let p = if i == top_index { top } else { it.next().expect("k - 1 others") };
        out.insert(name.clone(), p);
    }
    out
}

/// Scores each proposal over the novel classes. A proposal with IoU >= 0.5
/// to a hidden novel object is classified correctly with probability
/// `1 - misclass_rate`; every other proposal draws a noise score on a
/// uniformly chosen class. Deterministic in `(seed, scene.image_id)`.
pub fn vlm_score(
    scene: &Scene,
    proposals: &[BBox],
    novel_names: &[String],
    vlm: &SimVlm,
    seed: u64,
) -> Vec<BTreeMap<String, f64>> {
    let mut rng = stream(seed, &[tag("vlm"), scene.image_id]);
    let novel = scene.hidden_novel();
    let novel_boxes: Vec<BBox> = novel.iter().map(|o| o.bbox).collect();
    let k = novel_names.len();
    let floor = 1.0 / k as f64;
    let lift = |x: f64| floor + (1.0 - floor) * x;
    proposals
        .iter()
        .map(|p| match best_match(p, &novel_boxes) {
            Some((j, v)) if v >= 0.5 => {
                let truth = novel_names
                    .iter()
                    .position(|n| *n == novel[j].category)
                    .expect("scene categories come from the same world");
                if k > 1 && rng.random_bool(vlm.misclass_rate) {
                    let wrong = (truth + rng.random_range(1..k)) % k;
                    let t = lift(vlm.wrong_score.sample(&mut rng));
                    distribution(&mut rng, novel_names, wrong, t)
                } else {
                    let t = lift(vlm.true_score.sample(&mut rng));
                    distribution(&mut rng, novel_names, truth, t)
                }
            }
            _ => {
                let c = rng.random_range(0..k);
                let t = lift(vlm.noise_score.sample(&mut rng));
                distribution(&mut rng, novel_names, c, t)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::rng::stream;

    #[test]
    fn distribution_keeps_top_and_sums_to_one() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut rng = stream(0, &[1]);
        for i in 0..500 {
            let top = 0.25 + 0.75 * (i as f64 / 499.0);
            let d = distribution(&mut rng, &names, i % 4, top);
            let total: f64 = d.values().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let max = d.values().copied().fold(0.0, f64::max);
            assert_eq!(max, top);
            assert_eq!(d[&names[i % 4]], top);
        }
    }
}

//! Axis-aligned box arithmetic: IoU, greedy NMS and max-IoU target matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in corner form. Construction guarantees finite
/// coordinates and strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(Error::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box from center and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Clip to a `width x height` canvas. Returns `None` when nothing of
    /// positive area remains.
    pub fn clip_to(&self, width: f64, height: f64) -> Option<Self> {
        BBox::new(self.x1.max(0.0), self.y1.max(0.0), self.x2.min(width), self.y2.min(height)).ok()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression.
///
/// Boxes are visited by descending score, equal scores by ascending input
/// index. A box is kept unless it overlaps an already-kept box with IoU
/// strictly greater than `iou_threshold`. Returned indices follow the
/// visiting order.
pub fn nms(boxes: &[(BBox, f64)], iou_threshold: f64) -> Result<Vec<usize>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Validation(format!("nms iou threshold must lie in (0, 1], got {iou_threshold}")));
    }
    if let Some((i, _)) = boxes.iter().enumerate().find(|(_, (_, s))| !s.is_finite()) {
        return Err(Error::Validation(format!("non-finite score at index {i}")));
    }
    let order = descending_order(boxes.iter().map(|(_, s)| *s));
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let candidate = &boxes[idx].0;
        if kept.iter().all(|&k| iou(&boxes[k].0, candidate) <= iou_threshold) {
            kept.push(idx);
        }
    }
    Ok(kept)
}

/// Indices sorted by descending score, ties by ascending index.
pub(crate) fn descending_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Best target for one box: `(index, iou)` of the maximum-IoU target, lowest
/// index on ties. `None` when there are no targets.
pub fn best_match(query: &BBox, targets: &[BBox]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, t) in targets.iter().enumerate() {
        let v = iou(query, t);
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((j, v)),
        }
    }
    best
}

/// Assigns each proposal its maximum-IoU target when that IoU reaches
/// `fg_iou`; otherwise `None`.
pub fn match_targets(proposals: &[BBox], targets: &[BBox], fg_iou: f64) -> Result<Vec<(usize, Option<usize>)>> {
    if !(fg_iou > 0.0 && fg_iou < 1.0) {
        return Err(Error::Validation(format!("fg_iou must lie in (0, 1), got {fg_iou}")));
    }
    Ok(proposals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let matched = best_match(p, targets).filter(|&(_, v)| v >= fg_iou).map(|(j, _)| j);
            (i, matched)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 2.0, 1.0, 1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = b(3.0, 4.0, 10.0, 12.5);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        // edge-touching boxes share no area
        assert_eq!(iou(&b(0.0, 0.0, 1.0, 1.0), &b(1.0, 0.0, 2.0, 1.0)), 0.0);
    }

    #[test]
    fn iou_matches_rasterized_count() {
        // Count cell centers of a fine grid inside each box.
        let a = b(0.0, 0.0, 2.0, 2.0);
        let c = b(1.0, 1.0, 3.0, 3.0);
        let n = 600;
        let step = 3.0 / n as f64;
        let (mut inter, mut union) = (0u64, 0u64);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = ((i as f64 + 0.5) * step, (j as f64 + 0.5) * step);
                let ina = x < 2.0 && y < 2.0;
                let inc = x > 1.0 && y > 1.0;
                inter += (ina && inc) as u64;
                union += (ina || inc) as u64;
            }
        }
        let raster = inter as f64 / union as f64;
        assert!((raster - 1.0 / 7.0).abs() < 1e-3);
        assert!((iou(&a, &c) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn nms_basic_cases() {
        assert!(nms(&[], 0.5).unwrap().is_empty());
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(nms(&[(a, 0.3)], 0.5).unwrap(), vec![0]);
        assert_eq!(nms(&[(a, 0.8), (a, 0.9)], 0.5).unwrap(), vec![1]);
        // equal scores keep the lower index
        assert_eq!(nms(&[(a, 0.5), (a, 0.5)], 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn nms_rejects_bad_threshold() {
        let a = b(0.0, 0.0, 1.0, 1.0);
        assert!(nms(&[(a, 1.0)], 0.0).is_err());
        assert!(nms(&[(a, 1.0)], 1.5).is_err());
        assert!(nms(&[(a, f64::NAN)], 0.5).is_err());
    }

    #[test]
    fn match_targets_thresholds() {
        let t = b(0.0, 0.0, 10.0, 10.0);
        // IoU = 60/100
        let p = b(0.0, 0.0, 10.0, 6.0);
        assert_eq!(match_targets(&[p], &[t], 0.5).unwrap(), vec![(0, Some(0))]);
        let q = b(0.0, 0.0, 10.0, 3.0);
        assert_eq!(match_targets(&[q], &[t], 0.5).unwrap(), vec![(0, None)]);
        assert_eq!(match_targets(&[p], &[], 0.5).unwrap(), vec![(0, None)]);
        // tie goes to the lower target index
        assert_eq!(match_targets(&[t], &[t, t], 0.5).unwrap(), vec![(0, Some(0))]);
        assert!(match_targets(&[p], &[t], 1.0).is_err());
    }

    #[test]
    fn bbox_json_is_corner_array() {
        let a = b(1.0, 2.0, 3.0, 4.0);
        assert_eq!(serde_json::to_string(&a).unwrap(), "[1.0,2.0,3.0,4.0]");
        assert!(serde_json::from_str::<BBox>("[3.0,2.0,1.0,4.0]").is_err());
    }
}

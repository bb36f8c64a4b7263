//! Independent reference implementations used as test oracles. The
//! oracles here only borrow the library's data types; `checks` pits them
//! against the library.
#![allow(dead_code)]

pub mod checks;

use ovdmine::evaluation::Verdict;
use ovdmine::simulator::SceneObject;
use ovdmine::{BBox, Candidate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---- formulas, written out term by term ----

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Posterior over `cats` (background last), no stabilisation.
pub fn eq1(r: &[f64], cats: &[Vec<f64>], bg: &[f64]) -> Vec<f64> {
    let mut denom = dot(r, bg).exp();
    for c in cats {
        denom += dot(r, c).exp();
    }
    let mut out: Vec<f64> = cats.iter().map(|c| dot(r, c).exp() / denom).collect();
    out.push(dot(r, bg).exp() / denom);
    out
}

pub fn eq2(r: &[f64], cats: &[Vec<f64>], bg: &[f64], novel: std::ops::Range<usize>) -> f64 {
    let mut num = 0.0;
    let mut denom = dot(r, bg).exp();
    for (j, c) in cats.iter().enumerate() {
        let e = dot(r, c).exp();
        denom += e;
        if novel.contains(&j) {
            num += e;
        }
    }
    num / denom
}

pub fn eq3(z: &[f64]) -> Vec<f64> {
    let mut m = z[0];
    for &v in z {
        if v > m {
            m = v;
        }
    }
    z.iter().map(|v| v / m).collect()
}

pub fn eq4(s_clip: f64, s_det: f64, lambda: f64) -> f64 {
    lambda * s_clip + (1.0 - lambda) * s_det
}

pub fn eq6(s: f64, r: f64, lambda_prime: f64) -> f64 {
    lambda_prime * s + (1.0 - lambda_prime) * r
}

// ---- geometry ----

pub fn ref_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    inter / union
}

/// All-pairs suppression: a box survives iff no surviving box ranked
/// above it overlaps it by more than `thr`.
pub fn naive_nms(boxes: &[([f64; 4], f64)], thr: f64) -> Vec<usize> {
    let n = boxes.len();
    let ranked_before = |i: usize, j: usize| boxes[i].1 > boxes[j].1 || (boxes[i].1 == boxes[j].1 && i < j);
    let mut order: Vec<usize> = (0..n).collect();
    // selection sort by rank, no library sort
    for a in 0..n {
        let mut best = a;
        for b in a + 1..n {
            if ranked_before(order[b], order[best]) {
                best = b;
            }
        }
        order.swap(a, best);
    }
    let mut alive = vec![true; n];
    for a in 0..n {
        if !alive[order[a]] {
            continue;
        }
        for b in a + 1..n {
            if ref_iou(boxes[order[a]].0, boxes[order[b]].0) > thr {
                alive[order[b]] = false;
            }
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// Exhaustive argmax with lowest index on ties.
pub fn argmax_iou(p: [f64; 4], targets: &[[f64; 4]]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, t) in targets.iter().enumerate() {
        let v = ref_iou(p, *t);
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((j, v));
        }
    }
    best
}

pub fn ref_match(proposals: &[[f64; 4]], targets: &[[f64; 4]], fg: f64) -> Vec<Option<usize>> {
    proposals
        .iter()
        .map(|p| match argmax_iou(*p, targets) {
            Some((j, v)) if v >= fg => Some(j),
            _ => None,
        })
        .collect()
}

/// Reference judge: labels visited by (score desc, index asc); every GT
/// object validates at most one TP.
pub fn ref_judge(labels: &[([f64; 4], String, f64)], gt: &[([f64; 4], String)]) -> Vec<Verdict> {
    let n = labels.len();
    let mut visited = vec![false; n];
    let mut claimed = vec![false; gt.len()];
    let mut out = vec![Verdict::Noise; n];
    let gt_boxes: Vec<[f64; 4]> = gt.iter().map(|g| g.0).collect();
    for _ in 0..n {
        let mut next: Option<usize> = None;
        for i in 0..n {
            if visited[i] {
                continue;
            }
            match next {
                None => next = Some(i),
                Some(k) if labels[i].2 > labels[k].2 => next = Some(i),
                _ => {}
            }
        }
        let i = next.unwrap();
        visited[i] = true;
        out[i] = match argmax_iou(labels[i].0, &gt_boxes) {
            Some((j, v)) if v >= 0.5 => {
                if gt[j].1 != labels[i].1 {
                    Verdict::MisClass
                } else if claimed[j] {
                    Verdict::Noise
                } else {
                    claimed[j] = true;
                    Verdict::Tp
                }
            }
            _ => Verdict::Noise,
        };
    }
    out
}

pub fn ref_spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let below = x.iter().filter(|&&u| u < v).count() as f64;
                let equal = x.iter().filter(|&&u| u == v).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    cov / (va * vb).sqrt()
}

// ---- generators ----

/// Box on a 100x100 canvas, snapped to a grid of 1/4 so exact ties occur.
pub fn random_box(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let q = |v: f64| (v * 4.0).round() / 4.0;
    let x1 = q(rng.random_range(0.0..90.0));
    let y1 = q(rng.random_range(0.0..90.0));
    let w = q(rng.random_range(1.0..40.0));
    let h = q(rng.random_range(1.0..40.0));
    [x1, y1, x1 + w, y1 + h]
}

/// Box near `t`, often overlapping it heavily.
pub fn near_box(rng: &mut ChaCha8Rng, t: [f64; 4]) -> [f64; 4] {
    let w = t[2] - t[0];
    let h = t[3] - t[1];
    let dx = rng.random_range(-0.3..0.3) * w;
    let dy = rng.random_range(-0.3..0.3) * h;
    let sw = rng.random_range(0.7..1.3);
    let sh = rng.random_range(0.7..1.3);
    [t[0] + dx, t[1] + dy, t[0] + dx + w * sw, t[1] + dy + h * sh]
}

pub fn bbox(b: [f64; 4]) -> BBox {
    BBox::try_from(b).unwrap()
}

pub fn candidate(b: [f64; 4], class: &str, score: f64) -> Candidate {
    Candidate {
        bbox: bbox(b),
        clip_score: score,
        clip_class: class.to_string(),
        scores: [(class.to_string(), score)].into(),
        novelty: None,
        fused: None,
    }
}

pub fn object(b: [f64; 4], class: &str) -> SceneObject {
    SceneObject { bbox: bbox(b), category: class.to_string() }
}

pub fn random_unit_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

//! Library-versus-oracle comparisons shared by the core tests and the
//! acceptance target. Each returns a report; callers decide how to assert.

use ovdmine::assignment::Origin;
use ovdmine::evaluation::spearman;
use ovdmine::mining::RawProposal;
use ovdmine::simulator::{candidate_proposals, generate_scene, training_proposals, WorldConfig};
use ovdmine::{
    adaptive_weight, assign_candidates, classify, fuse, judge, match_targets, max_norm, nms, novelty_score,
    stratified_assign, CategorySpace, MiningConfig, RegionEmbedding,
};
use rand::Rng;

use super::*;

#[derive(Debug, Default)]
pub struct FormulaReport {
    /// Worst relative error per equation: posterior, novelty, max-norm,
    /// fusion, weight.
    pub max_rel_err: [f64; 5],
    /// Inputs where novelty differs in any bit from the summed posterior.
    pub identity_mismatches: usize,
    pub inputs: usize,
}

fn random_space(rng: &mut ChaCha8Rng) -> (CategorySpace, Vec<Vec<f64>>, Vec<f64>) {
    let dim = rng.random_range(2..12);
    let nb = rng.random_range(0..5);
    let nn = rng.random_range(1..5);
    let embs: Vec<Vec<f64>> = (0..nb + nn).map(|_| random_unit_vec(rng, dim, 1.5)).collect();
    let bg = random_unit_vec(rng, dim, 1.5);
    let base = (0..nb).map(|i| format!("b{i}")).collect();
    let novel = (0..nn).map(|i| format!("n{i}")).collect();
    let cats = CategorySpace::new(base, novel, embs.clone(), bg.clone()).unwrap();
    (cats, embs, bg)
}

/// `n` random inputs for each of the posterior, novelty, max-norm, fusion
/// and weight formulas.
pub fn formulas(seed: u64, n: usize) -> FormulaReport {
    let mut rng = rng(seed);
    let mut rep = FormulaReport { inputs: n, ..Default::default() };
    let bump = |k: usize, got: f64, want: f64, rep: &mut FormulaReport| {
        let e = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
        if e > rep.max_rel_err[k] || e.is_nan() {
            rep.max_rel_err[k] = if e.is_nan() { f64::INFINITY } else { e };
        }
    };
    for _ in 0..n {
        let (cats, embs, bg) = random_space(&mut rng);
        let r = random_unit_vec(&mut rng, cats.dim(), 3.0);
        let emb = RegionEmbedding::new(r.clone()).unwrap();

        let post = classify(&emb, &cats).unwrap();
        for (got, want) in post.probs().iter().zip(eq1(&r, &embs, &bg)) {
            bump(0, *got, want, &mut rep);
        }

        let z = novelty_score(&emb, &cats).unwrap();
        bump(1, z, eq2(&r, &embs, &bg, cats.novel_range()), &mut rep);
        let summed: f64 = post.probs()[cats.novel_range()].iter().sum();
        if z.to_bits() != summed.to_bits() {
            rep.identity_mismatches += 1;
        }

        let k = rng.random_range(1..20);
        let zs: Vec<f64> = (0..k).map(|_| rng.random_range(1e-6..1.0)).collect();
        for (got, want) in max_norm(&zs).unwrap().iter().zip(eq3(&zs)) {
            bump(2, *got, want, &mut rep);
        }

        let (a, b, l) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
        bump(3, fuse(a, b, l).unwrap(), eq4(a, b, l), &mut rep);
        bump(4, adaptive_weight(a, b, l).unwrap(), eq6(a, b, l), &mut rep);
    }
    rep
}

fn random_cluster(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 4]> {
    let seeds: Vec<[f64; 4]> = (0..rng.random_range(1..6)).map(|_| random_box(rng)).collect();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.7) {
                let t = seeds[rng.random_range(0..seeds.len())];
                near_box(rng, t)
            } else {
                random_box(rng)
            }
        })
        .collect()
}

/// Instances where library NMS and the all-pairs reference keep different sets.
pub fn nms_mismatches(seed: u64, instances: usize) -> usize {
    let mut rng = rng(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let n = rng.random_range(0..60);
        let boxes = random_cluster(&mut rng, n);
        // coarse scores so equal-score ties are common
        let input: Vec<([f64; 4], f64)> =
            boxes.into_iter().map(|b| (b, (rng.random_range(0..20) as f64) / 20.0)).collect();
        let thr = [0.3, 0.5, 0.7, rng.random_range(0.05..1.0)][rng.random_range(0..4)];
        let lib_in: Vec<_> = input.iter().map(|(b, s)| (bbox(*b), *s)).collect();
        let mut got = nms(&lib_in, thr).unwrap();
        got.sort_unstable();
        if got != naive_nms(&input, thr) {
            bad += 1;
        }
    }
    bad
}

pub fn match_mismatches(seed: u64, instances: usize) -> usize {
    let mut rng = rng(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let targets: Vec<[f64; 4]> = (0..10).map(|_| random_box(&mut rng)).collect();
        let proposals: Vec<[f64; 4]> = (0..50)
            .map(|_| {
                if rng.random_bool(0.6) {
                    let t = targets[rng.random_range(0..targets.len())];
                    near_box(&mut rng, t)
                } else {
                    random_box(&mut rng)
                }
            })
            .collect();
        let fg = rng.random_range(0.1..0.9);
        let p: Vec<_> = proposals.iter().map(|b| bbox(*b)).collect();
        let t: Vec<_> = targets.iter().map(|b| bbox(*b)).collect();
        let got: Vec<Option<usize>> = match_targets(&p, &t, fg).unwrap().into_iter().map(|(_, m)| m).collect();
        if got != ref_match(&proposals, &targets, fg) {
            bad += 1;
        }
    }
    bad
}

pub fn judge_mismatches(seed: u64, instances: usize) -> usize {
    let mut rng = rng(seed);
    let classes = ["dog", "bus", "cup"];
    let mut bad = 0;
    for _ in 0..instances {
        let gt: Vec<([f64; 4], String)> = (0..rng.random_range(0..5))
            .map(|_| (random_box(&mut rng), classes[rng.random_range(0..3)].to_string()))
            .collect();
        let labels: Vec<([f64; 4], String, f64)> = (0..rng.random_range(0..12))
            .map(|_| {
                let b = if !gt.is_empty() && rng.random_bool(0.7) {
                    let g = &gt[rng.random_range(0..gt.len())];
                    near_box(&mut rng, g.0)
                } else {
                    random_box(&mut rng)
                };
                let c = classes[rng.random_range(0..3)].to_string();
                (b, c, (rng.random_range(0..6) as f64) / 5.0)
            })
            .collect();
        let cands: Vec<_> = labels.iter().map(|(b, c, s)| candidate(*b, c, *s)).collect();
        let objs: Vec<_> = gt.iter().map(|(b, c)| object(*b, c)).collect();
        let got: Vec<_> = judge(&cands, &objs).into_iter().map(|v| v.verdict).collect();
        if got != ref_judge(&labels, &gt) {
            bad += 1;
        }
    }
    bad
}

/// Batches where `assign_candidates` differs from prefilter followed by
/// the reference NMS.
pub fn assign_mismatches(seed: u64, instances: usize) -> usize {
    let mut rng = rng(seed);
    let names = ["a", "b", "c"];
    let mut bad = 0;
    for _ in 0..instances {
        let n = rng.random_range(0..30);
        let boxes = random_cluster(&mut rng, n);
        let raw: Vec<RawProposal> = boxes
            .iter()
            .map(|b| {
                let w: Vec<f64> = (0..3).map(|_| rng.random_range(1..20) as f64).collect();
                let t: f64 = w.iter().sum();
                RawProposal {
                    bbox: bbox(*b),
                    scores: names.iter().zip(&w).map(|(n, v)| (n.to_string(), v / t)).collect(),
                }
            })
            .collect();
        let cfg = MiningConfig::default();
        let got: Vec<[f64; 4]> = assign_candidates(&raw, &cfg).unwrap().iter().map(|c| c.bbox.to_array()).collect();

        let mut top: Vec<([f64; 4], f64)> = Vec::new();
        for p in &raw {
            let mut best = f64::MIN;
            for v in p.scores.values() {
                if *v > best {
                    best = *v;
                }
            }
            if best >= cfg.candidate_prefilter {
                top.push((p.bbox.to_array(), best));
            }
        }
        let mut want: Vec<[f64; 4]> = naive_nms(&top, cfg.nms_iou).into_iter().map(|i| top[i].0).collect();
        let mut got_sorted = got.clone();
        let key = |a: &[f64; 4], b: &[f64; 4]| a.partial_cmp(b).unwrap();
        got_sorted.sort_by(key);
        want.sort_by(key);
        if got_sorted != want {
            bad += 1;
        }
    }
    bad
}

#[derive(Debug, Default)]
pub struct StratifiedReport {
    pub scenes: usize,
    pub proposals: usize,
    pub base_overlapping: usize,
    pub novel: usize,
    pub violations: usize,
}

/// Generates scenes, uses every candidate proposal (including those on
/// base objects) as a pseudo-label, assigns training proposals and counts
/// boxes that overlap a base annotation by `fg_iou` yet came out NOVEL.
pub fn stratified(seed: u64, scenes: usize) -> StratifiedReport {
    let cfg = WorldConfig::default();
    let fg = MiningConfig::default().fg_iou;
    let mut rep = StratifiedReport { scenes, ..Default::default() };
    for id in 0..scenes as u64 {
        let scene = generate_scene(seed, id, &cfg).unwrap();
        let base_gt: Vec<_> = scene.annotations().into_iter().map(|o| (o.bbox, o.category)).collect();
        let pseudo: Vec<_> = candidate_proposals(&scene, &cfg, seed)
            .into_iter()
            .map(|b| candidate(b.to_array(), &cfg.novel_categories[0], 0.95))
            .collect();
        let props = training_proposals(&scene, &cfg, seed, id);
        let bgs = vec![0.5; props.len()];
        let boxes = stratified_assign(&props, &base_gt, &pseudo, &bgs, fg).unwrap();
        let base_arr: Vec<[f64; 4]> = base_gt.iter().map(|(b, _)| b.to_array()).collect();
        for tb in &boxes {
            rep.proposals += 1;
            let over_base = argmax_iou(tb.bbox.to_array(), &base_arr).is_some_and(|(_, v)| v >= fg);
            if over_base {
                rep.base_overlapping += 1;
            }
            if tb.origin == Origin::Novel {
                rep.novel += 1;
                if over_base {
                    rep.violations += 1;
                }
            }
        }
    }
    rep
}

/// Largest gap between the library's rank correlation and the reference.
pub fn spearman_max_gap(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(3..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        match spearman(&a, &b) {
            Some(v) => worst = worst.max((v - ref_spearman(&a, &b)).abs()),
            None => assert!(ref_spearman(&a, &b).is_nan()),
        }
    }
    worst
}

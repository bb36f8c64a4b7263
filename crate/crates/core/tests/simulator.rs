use ovdmine::evaluation::counts_at_threshold;
use ovdmine::simulator::*;
use ovdmine::*;

fn small_world() -> WorldConfig {
    WorldConfig { train_scenes: 40, eval_scenes: 40, ..Default::default() }
}

#[test]
fn scene_count_histogram_matches_ranges() {
    let cfg = WorldConfig::default();
    let mut base = [0usize; 4];
    let mut novel = [0usize; 3];
    for id in 0..1000 {
        let s = generate_scene(17, id, &cfg).unwrap();
        let nb = s.annotations().len();
        let nn = s.hidden_novel().len();
        assert!((1..=3).contains(&nb) && nn <= 2, "scene {id}: {nb} base, {nn} novel");
        base[nb] += 1;
        novel[nn] += 1;
    }
    // uniform over each inclusive range: expected 333 per bin, sd about 15
    for &c in &base[1..] {
        assert!((283..=383).contains(&c), "{base:?}");
    }
    for &c in &novel {
        assert!((283..=383).contains(&c), "{novel:?}");
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = MiningConfig { burnin_steps: 20, ..Default::default() };
    let a = run_training_simulation(&small_world(), &cfg, ReliabilityIndicator::OneMinusBg, 60, 10, 5).unwrap();
    let b = run_training_simulation(&small_world(), &cfg, ReliabilityIndicator::OneMinusBg, 60, 10, 5).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(serde_json::to_string(&a.summary).unwrap(), serde_json::to_string(&b.summary).unwrap());
    assert_eq!(a.metrics.len(), 6);
    for w in a.metrics.windows(2) {
        assert!(w[1].skill >= w[0].skill);
    }
}

#[test]
fn perfect_noiseless_detector_recovers_truth() {
    let mut wc = small_world();
    wc.detector.weak_noise = 0.0;
    wc.detector.strong_noise = 0.0;
    let world = build_world(&wc, &MiningConfig::default(), 3).unwrap();
    let mut det = SimDetector::new(world.cats.clone(), wc.detector.clone(), 3).unwrap();
    det.set_skill(1.0).unwrap();
    for (k, img) in world.train.iter().enumerate() {
        let mut boxes = candidate_proposals(&img.scene, &wc, 3);
        boxes.extend(training_proposals(&img.scene, &wc, 3, k as u64));
        let emb = detector_embed(&img.scene, &boxes, &det, View::Weak, 0);
        for (b, e) in boxes.iter().zip(&emb) {
            let p = classify(e, &world.cats).unwrap();
            assert_eq!(p.argmax(), det.true_category(&img.scene, b));
        }
    }
}

#[test]
fn untrained_noiseless_detector_ignores_truth() {
    let mut wc = small_world();
    wc.detector.weak_noise = 0.0;
    wc.detector.strong_noise = 0.0;
    let world = build_world(&wc, &MiningConfig::default(), 4).unwrap();
    let mut det = SimDetector::new(world.cats.clone(), wc.detector.clone(), 4).unwrap();
    det.set_skill(0.0).unwrap();
    let img = &world.train[0];
    let boxes = training_proposals(&img.scene, &wc, 4, 0);
    let emb = detector_embed(&img.scene, &boxes, &det, View::Strong, 0);
    for e in &emb[1..] {
        assert_eq!(e, &emb[0]);
    }
}

#[test]
fn novelty_gap_grows_with_skill() {
    let wc = WorldConfig { train_scenes: 1, eval_scenes: 60, ..Default::default() };
    let skills = [0.2, 0.5, 0.8];
    let mut gap = [0.0; 3];
    let seeds = 20;
    for seed in 0..seeds {
        let world = build_world(&wc, &MiningConfig::default(), seed).unwrap();
        let mut det = SimDetector::new(world.cats.clone(), wc.detector.clone(), seed).unwrap();
        for (k, &s) in skills.iter().enumerate() {
            det.set_skill(s).unwrap();
            let (mut novel, mut noise) = (Vec::new(), Vec::new());
            for img in &world.eval {
                if img.candidates.is_empty() {
                    continue;
                }
                let boxes: Vec<BBox> = img.candidates.iter().map(|c| c.bbox).collect();
                let emb = detector_embed(&img.scene, &boxes, &det, View::Weak, 0);
                let z: Vec<f64> = emb.iter().map(|e| novelty_score(e, &world.cats).unwrap()).collect();
                let s_det = max_norm(&z).unwrap();
                let objs = img.scene.object_boxes();
                for (b, v) in boxes.iter().zip(s_det) {
                    match ovdmine::geometry::best_match(b, &objs) {
                        Some((j, o)) if o >= 0.5 => {
                            if img.scene.is_novel(&img.scene.objects[j].category) {
                                novel.push(v);
                            }
                        }
                        _ => noise.push(v),
                    }
                }
            }
            let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
            gap[k] += (mean(&novel) - mean(&noise)) / seeds as f64;
        }
    }
    assert!(gap[0] < gap[1] && gap[1] < gap[2], "{gap:?}");
}

#[test]
fn noiseless_vlm_never_misclassifies() {
    let mut wc = small_world();
    wc.vlm.misclass_rate = 0.0;
    wc.base_objects = CountRange::new(0, 0);
    wc.parts_per_object = CountRange::new(0, 0);
    wc.context_regions = CountRange::new(0, 0);
    wc.proposals_per_novel = CountRange::new(1, 1);
    wc.eval_scenes = 200;
    let cfg = MiningConfig::default();
    let world = build_world(&wc, &cfg, 8).unwrap();
    let counts = counts_at_threshold(&world.eval_labels(), cfg.burnin_threshold, |c| c.clip_score);
    assert!(counts.selected() > 50);
    assert_eq!(counts.misclass, 0);
    assert_eq!(counts.noise, 0);
    let d = counts.decompose();
    assert_eq!((d.tp_pct, d.misclass_pct, d.noise_pct), (100.0, 0.0, 0.0));
}

#[test]
fn clip_only_run_equals_clip_threshold() {
    let cfg = MiningConfig { lambda: 1.0, burnin_steps: 10, ..Default::default() };
    let run = run_training_simulation(&small_world(), &cfg, ReliabilityIndicator::OneMinusBg, 50, 10, 2).unwrap();
    assert!(run.summary.clip_only_baseline);
    let labels = run.artifacts.world.eval_labels();
    let clip = counts_at_threshold(&labels, cfg.delta, |c| c.clip_score);
    assert_eq!(run.summary.final_counts, clip);
    assert_eq!(run.summary.final_precision, clip.precision());
}

#[test]
fn invalid_world_rejected() {
    let wc = WorldConfig { novel_categories: vec![], ..Default::default() };
    assert!(build_world(&wc, &MiningConfig::default(), 0).is_err());
    let wc = WorldConfig { embedding_dim: 3, ..Default::default() };
    assert!(build_world(&wc, &MiningConfig::default(), 0).is_err());
}

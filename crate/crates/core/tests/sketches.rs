mod common;

use std::collections::HashMap;

use common::*;
use gmsketch::harness::{envelope, EnvelopeKind};
use gmsketch::{
    CmSketch, EstimatorKind, GmFactorSketch, GmHash, GmSketch, Observation, PointEstimator, Sketch, SketchConfig,
    TreeModel,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn injective_hashing_reproduces_the_exact_estimator() {
    let mut r = rng(1);
    let mut models = vec![
        TreeModel::chain(vec![8]).unwrap(),
        TreeModel::chain(vec![3, 8]).unwrap(),
        TreeModel::chain(vec![8, 8, 8]).unwrap(),
        TreeModel::star(2, 8, 2).unwrap(),
    ];
    models.extend((0..8).map(|_| random_model(&mut r, 3, 8)));
    let bins = 1 << 16;
    for (i, model) in models.iter().enumerate() {
        let seed = find_collision_free_seed(model, 1000 * i as u64, 3, bins);
        let stream = random_stream(&mut r, model, 1000);
        let exact = exact_of(model, &stream);
        let cfg = SketchConfig::new(bins, 3, seed).unwrap();
        let mut sketches: Vec<Sketch> = [EstimatorKind::GmHash, EstimatorKind::GmSketch, EstimatorKind::GmFactorSketch]
            .into_iter()
            .map(|k| Sketch::new(k, model.clone(), cfg).unwrap())
            .collect();
        for x in &stream {
            for s in &mut sketches {
                s.update(x).unwrap();
            }
        }
        for x in domain(model) {
            let want = exact.query(&x).unwrap();
            for s in &sketches {
                let got = s.query(&x).unwrap();
                assert!(relative_close(got, want, 1e-12), "{} on {:?} at {x}: {got} vs {want}", s.kind(), model);
            }
        }
    }
}

#[test]
fn count_min_never_underestimates() {
    let mut r = rng(2);
    for _ in 0..50 {
        let model = random_model(&mut r, 4, 10);
        let stream = random_stream(&mut r, &model, 500);
        let mut truth: HashMap<Observation, u64> = HashMap::new();
        let cfg = SketchConfig::new(r.random_range(1..40), r.random_range(1..4), r.random()).unwrap();
        let mut cm = CmSketch::new(model.clone(), cfg).unwrap();
        for x in &stream {
            cm.update(x).unwrap();
            *truth.entry(x.clone()).or_default() += 1;
        }
        for _ in 0..200 {
            let x = if r.random_bool(0.5) { stream[r.random_range(0..stream.len())].clone() } else { draw(&mut r, &model) };
            let exact = truth.get(&x).copied().unwrap_or(0);
            assert!(cm.estimate_count(&x).unwrap() >= exact);
            assert!(cm.query(&x).unwrap() >= exact as f64 / stream.len() as f64);
        }
    }
}

#[test]
fn factor_counts_never_undercount() {
    let mut r = rng(3);
    for _ in 0..30 {
        let model = random_model(&mut r, 4, 12);
        let stream = random_stream(&mut r, &model, 400);
        let exact = exact_of(&model, &stream);
        let mut s = GmFactorSketch::new(model.clone(), SketchConfig::new(r.random_range(1..20), 3, r.random()).unwrap())
            .unwrap();
        for x in &stream {
            s.update(x).unwrap();
        }
        for x in domain(&model).into_iter().take(2000) {
            for k in 0..model.len() {
                assert!(s.marginal_count(k, x[k]) >= exact.marginal_count(k, x[k]));
            }
            for (c, p) in model.edges() {
                assert!(s.pair_count(&x, c) >= exact.joint_count(c, x[c], x[p]));
            }
        }
    }
}

fn all_kinds(model: &TreeModel, cfg: SketchConfig) -> Vec<Sketch> {
    EstimatorKind::ALL.into_iter().map(|k| Sketch::new(k, model.clone(), cfg).unwrap()).collect()
}

#[test]
fn merging_split_streams_matches_one_pass() {
    let mut r = rng(4);
    for _ in 0..20 {
        let model = random_model(&mut r, 4, 16);
        let stream = random_stream(&mut r, &model, 300);
        let cut = r.random_range(0..=stream.len());
        let cfg = SketchConfig::new(r.random_range(1..50), r.random_range(1..4), r.random()).unwrap();
        let mut whole = all_kinds(&model, cfg);
        let mut left = all_kinds(&model, cfg);
        let mut right = all_kinds(&model, cfg);
        for (i, x) in stream.iter().enumerate() {
            for s in &mut whole {
                s.update(x).unwrap();
            }
            for s in if i < cut { &mut left } else { &mut right } {
                s.update(x).unwrap();
            }
        }
        for ((mut l, r), w) in left.into_iter().zip(&right).zip(&whole) {
            l.merge(r).unwrap();
            assert_eq!(&l, w);
        }
    }
}

#[test]
fn merging_an_empty_sketch_changes_nothing() {
    let model = TreeModel::chain(vec![5, 5, 5]).unwrap();
    let mut r = rng(5);
    let stream = random_stream(&mut r, &model, 200);
    let cfg = SketchConfig::new(7, 3, 11).unwrap();
    for kind in EstimatorKind::ALL {
        let mut s = Sketch::new(kind, model.clone(), cfg).unwrap();
        for x in &stream {
            s.update(x).unwrap();
        }
        let before = s.clone();
        s.merge(&Sketch::new(kind, model.clone(), cfg).unwrap()).unwrap();
        assert_eq!(s, before);
        for x in domain(&model) {
            assert_eq!(s.query(&x).unwrap(), before.query(&x).unwrap());
        }
    }
}

#[test]
fn merge_rejects_mismatches() {
    let model = TreeModel::chain(vec![4, 4]).unwrap();
    let a = SketchConfig::new(8, 2, 1).unwrap();
    let b = SketchConfig::new(8, 2, 2).unwrap();
    for kind in EstimatorKind::ALL {
        let mut s = Sketch::new(kind, model.clone(), a).unwrap();
        assert!(s.merge(&Sketch::new(kind, model.clone(), b).unwrap()).is_err());
        let other = TreeModel::chain(vec![4, 5]).unwrap();
        assert!(s.merge(&Sketch::new(kind, other, a).unwrap()).is_err());
    }
    let mut cm = Sketch::new(EstimatorKind::CountMin, model.clone(), a).unwrap();
    assert!(cm.merge(&Sketch::new(EstimatorKind::GmSketch, model, a).unwrap()).is_err());
}

#[test]
fn absorb_matches_streaming_updates() {
    let mut r = rng(6);
    for _ in 0..20 {
        let model = random_model(&mut r, 5, 30);
        let stream = random_stream(&mut r, &model, 500);
        let exact = exact_of(&model, &stream);
        let cfg = SketchConfig::new(r.random_range(1..64), 3, r.random()).unwrap();
        for kind in [EstimatorKind::GmHash, EstimatorKind::GmSketch, EstimatorKind::GmFactorSketch] {
            let mut streamed = Sketch::new(kind, model.clone(), cfg).unwrap();
            for x in &stream {
                streamed.update(x).unwrap();
            }
            let mut bulk = Sketch::new(kind, model.clone(), cfg).unwrap();
            bulk.absorb(&exact).unwrap();
            assert_eq!(bulk, streamed);
        }
    }
}

#[test]
fn snapshots_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(7);
    let model = TreeModel::star(3, 20, 3).unwrap();
    let stream = random_stream(&mut r, &model, 300);
    for kind in EstimatorKind::ALL {
        let mut s = Sketch::new(kind, model.clone(), SketchConfig::new(13, 3, 77).unwrap()).unwrap();
        for x in &stream {
            s.update(x).unwrap();
        }
        let path = dir.path().join(format!("{kind}.json"));
        s.save(&path).unwrap();
        let back = Sketch::load(&path).unwrap();
        assert_eq!(back, s);
        for x in stream.iter().take(50) {
            assert_eq!(back.query(x).unwrap().to_bits(), s.query(x).unwrap().to_bits());
        }
    }
}

#[test]
fn corrupt_snapshots_are_rejected() {
    let model = TreeModel::chain(vec![3, 3]).unwrap();
    let mut s = Sketch::new(EstimatorKind::GmFactorSketch, model, SketchConfig::new(4, 2, 1).unwrap()).unwrap();
    s.update(&Observation::new(vec![1, 2])).unwrap();
    let json = serde_json::to_string(&s).unwrap();
    let bumped = json.replace("\"n\":1", "\"n\":2");
    assert_ne!(bumped, json);
    assert!(serde_json::from_str::<Sketch>(&bumped).is_err());
}

#[test]
fn every_row_sums_to_the_stream_length() {
    let mut r = rng(8);
    let model = random_model(&mut r, 5, 40);
    let stream = random_stream(&mut r, &model, 777);
    let cfg = SketchConfig::new(9, 4, 3).unwrap();
    let mut gm = GmSketch::new(model.clone(), cfg).unwrap();
    let mut gh = GmHash::new(model.clone(), 9, 3).unwrap();
    let mut cm = CmSketch::new(model.clone(), cfg).unwrap();
    for x in &stream {
        gm.update(x).unwrap();
        gh.update(x).unwrap();
        cm.update(x).unwrap();
    }
    assert!(cm.table().row_sums().all(|s| s == 777));
    for k in 0..model.len() {
        assert!(gm.marginal_table(k).row_sums().all(|s| s == 777));
        assert!(gh.marginal_table(k).row_sums().all(|s| s == 777));
        if let Some(t) = gm.pair_table(k) {
            assert!(t.row_sums().all(|s| s == 777));
        }
    }
}

/// Coverage of the median sketch's envelope, which inherits the single-hash
/// bound at `delta = 1/4` once `d >= 8 ln(1/delta)`.
#[test]
fn median_sketch_stays_inside_its_envelope() {
    let delta: f64 = 0.25;
    let model = TreeModel::chain(vec![64, 64, 64]).unwrap();
    let mut r = rng(9);
    let stream = random_stream(&mut r, &model, 5000);
    let exact = exact_of(&model, &stream);
    let x = stream[0].clone();
    let k = model.len() as f64;
    let fmin = std::iter::once(exact.marginal(0, x[0]))
        .chain(model.edges().map(|(c, p)| exact.joint(c, x[c], x[p])))
        .fold(f64::INFINITY, f64::min);
    let bins = (2.0 * k * k / (fmin * 0.25)).ceil() as u64;
    let depth = (8.0 * (1.0 / delta).ln()).ceil() as usize;
    let (lo, hi) = envelope(&exact, &x, bins, EnvelopeKind::GmSketch).unwrap();
    let truth = exact.query(&x).unwrap();
    let seeds = 200;
    let mut violations = 0;
    for seed in 0..seeds {
        let mut s = GmSketch::new(model.clone(), SketchConfig::new(bins, depth, seed).unwrap()).unwrap();
        s.absorb(&exact).unwrap();
        let p = s.query(&x).unwrap();
        if p < truth * lo || p > truth * hi {
            violations += 1;
        }
    }
    let frac = violations as f64 / seeds as f64;
    assert!(frac <= delta + 3.0 * binomial_se(delta, seeds as usize), "violation fraction {frac}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gm_estimates_are_finite_and_nonnegative(seed: u64, bins in 1u64..32, depth in 1usize..5) {
        let mut r = rng(seed);
        let model = random_model(&mut r, 4, 9);
        let stream = random_stream(&mut r, &model, 100);
        let cfg = SketchConfig::new(bins, depth, seed).unwrap();
        for kind in EstimatorKind::ALL {
            let mut s = Sketch::new(kind, model.clone(), cfg).unwrap();
            for x in &stream {
                s.update(x).unwrap();
            }
            for _ in 0..20 {
                let p = s.query(&draw(&mut r, &model)).unwrap();
                prop_assert!(p.is_finite() && p >= 0.0);
            }
        }
    }

    #[test]
    fn merge_is_order_independent(seed: u64, cut_a in 0usize..60, cut_b in 0usize..60) {
        let mut r = rng(seed);
        let model = random_model(&mut r, 3, 6);
        let stream = random_stream(&mut r, &model, 60);
        let (lo, hi) = (cut_a.min(cut_b), cut_a.max(cut_b));
        let cfg = SketchConfig::new(5, 2, seed).unwrap();
        for kind in EstimatorKind::ALL {
            let parts: Vec<Sketch> = [&stream[..lo], &stream[lo..hi], &stream[hi..]]
                .iter()
                .map(|part| {
                    let mut s = Sketch::new(kind, model.clone(), cfg).unwrap();
                    for x in *part {
                        s.update(x).unwrap();
                    }
                    s
                })
                .collect();
            let mut ab_c = parts[0].clone();
            ab_c.merge(&parts[1]).unwrap();
            ab_c.merge(&parts[2]).unwrap();
            let mut c_ba = parts[2].clone();
            c_ba.merge(&parts[1]).unwrap();
            c_ba.merge(&parts[0]).unwrap();
            prop_assert_eq!(ab_c, c_ba);
        }
    }
}

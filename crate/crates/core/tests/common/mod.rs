#![allow(dead_code)]

use gmsketch::{ExactEstimator, Observation, TreeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tree: variable `k > 0` hangs off a uniformly chosen earlier one.
pub fn random_model(rng: &mut impl Rng, max_k: usize, max_card: u32) -> TreeModel {
    let k = rng.random_range(1..=max_k);
    let parents = (0..k).map(|j| (j > 0).then(|| rng.random_range(0..j))).collect();
    let cards = (0..k).map(|_| rng.random_range(1..=max_card)).collect();
    TreeModel::from_parents(parents, cards).unwrap()
}

/// Skewed stream: the root favours small values and each child copies its
/// parent's value (folded into range) more often than not.
pub fn random_stream(rng: &mut impl Rng, model: &TreeModel, n: usize) -> Vec<Observation> {
    (0..n).map(|_| draw(rng, model)).collect()
}

pub fn draw(rng: &mut impl Rng, model: &TreeModel) -> Observation {
    let mut x = vec![0u32; model.len()];
    for k in 0..model.len() {
        let card = model.cardinality(k);
        x[k] = match model.parent(k) {
            None => {
                let a = rng.random_range(1..=card);
                rng.random_range(1..=a)
            }
            Some(p) if rng.random_bool(0.6) => (x[p] - 1) % card + 1,
            Some(_) => rng.random_range(1..=card),
        };
    }
    Observation::new(x)
}

pub fn exact_of(model: &TreeModel, stream: &[Observation]) -> ExactEstimator {
    let mut e = ExactEstimator::new(model.clone()).unwrap();
    for x in stream {
        e.update(x).unwrap();
    }
    e
}

/// Every point of the model's domain.
pub fn domain(model: &TreeModel) -> Vec<Observation> {
    let mut out = vec![Vec::new()];
    for &c in model.cardinalities() {
        out = out.into_iter().flat_map(|p| (1..=c).map(move |v| [p.clone(), vec![v]].concat())).collect();
    }
    out.into_iter().map(Observation::new).collect()
}

/// Binomial standard error of a proportion `p` over `n` trials.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Whether every replica's hashes are injective on the variable and
/// pair-key domains of `model`.
pub fn collision_free(model: &TreeModel, seed: u64, depth: usize, bins: u64) -> bool {
    use std::collections::HashSet;
    (0..depth).all(|i| {
        let h = gmsketch::HashTuple::derive(seed, i, model.len(), bins).unwrap();
        let vars = (0..model.len()).all(|k| {
            let m = model.cardinality(k) as u64;
            (1..=m).map(|v| h.get(k).index(v)).collect::<HashSet<_>>().len() as u64 == m
        });
        let pairs = model.edges().all(|(c, p)| {
            let keys = model.cardinality(c) as u64 * model.cardinality(p) as u64;
            (1..=keys).map(|key| h.get(c).index(key)).collect::<HashSet<_>>().len() as u64 == keys
        });
        vars && pairs
    })
}

/// First seed from `start` whose hashes pass [`collision_free`].
pub fn find_collision_free_seed(model: &TreeModel, start: u64, depth: usize, bins: u64) -> u64 {
    (start..start + 10_000).find(|&s| collision_free(model, s, depth, bins)).expect("no collision-free seed")
}

pub fn relative_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

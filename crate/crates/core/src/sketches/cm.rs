use serde::{Deserialize, Serialize};

use super::{PointEstimator, SketchConfig};
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, HashFn};
use crate::model::{Observation, TreeModel};
use crate::table::CounterTable;

/// Seed-path tag separating whole-vector hashes from per-variable ones.
const WHOLE_VECTOR: u64 = u64::MAX;

/// `limbs = limbs * mul + add` on a little-endian base-2^32 number.
fn mul_add(limbs: &mut Vec<u32>, mul: u32, add: u32) {
    let mut carry = add as u64;
    for limb in limbs.iter_mut() {
        let t = *limb as u64 * mul as u64 + carry;
        *limb = t as u32;
        carry = t >> 32;
    }
    if carry != 0 {
        limbs.push(carry as u32);
    }
}

/// Count-min sketch over whole observation vectors.
///
/// An observation is keyed by its mixed-radix index
/// `x_1 + M_1 (x_2 - 1) + M_1 M_2 (x_3 - 1) + ...`, which can exceed 64 bits,
/// so keys are hashed limb by limb.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CmRepr", into = "CmRepr")]
pub struct CmSketch {
    model: TreeModel,
    config: SketchConfig,
    hashes: Vec<HashFn>,
    table: CounterTable,
    n: u64,
}

#[derive(Serialize, Deserialize)]
struct CmRepr {
    model: TreeModel,
    config: SketchConfig,
    n: u64,
    table: CounterTable,
}

impl TryFrom<CmRepr> for CmSketch {
    type Error = Error;

    fn try_from(r: CmRepr) -> Result<Self> {
        let mut s = CmSketch::new(r.model, r.config)?;
        r.table.check(r.config.depth, r.config.bins as usize, r.n)?;
        s.table = r.table;
        s.n = r.n;
        Ok(s)
    }
}

impl From<CmSketch> for CmRepr {
    fn from(s: CmSketch) -> Self {
        CmRepr { model: s.model, config: s.config, n: s.n, table: s.table }
    }
}

impl CmSketch {
    pub fn new(model: TreeModel, config: SketchConfig) -> Result<Self> {
        config.validate()?;
        let bins = usize::try_from(config.bins).map_err(|_| Error::InvalidParameter("bin count too large".into()))?;
        let limbs = Self::key_limbs(&model);
        let hashes = (0..config.depth)
            .map(|i| HashFn::wide(derive_seed(config.seed, &[WHOLE_VECTOR, i as u64]), config.bins, limbs))
            .collect::<Result<_>>()?;
        Ok(CmSketch { table: CounterTable::new(config.depth, bins), model, config, hashes, n: 0 })
    }

    /// Limbs needed for the largest key, `prod_k M_k`.
    fn key_limbs(model: &TreeModel) -> usize {
        let mut max = vec![1u32];
        for &c in model.cardinalities() {
            mul_add(&mut max, c, 0);
        }
        max.len()
    }

    pub fn config(&self) -> SketchConfig {
        self.config
    }

    pub fn table(&self) -> &CounterTable {
        &self.table
    }

    pub fn hashes(&self) -> &[HashFn] {
        &self.hashes
    }

    /// Mixed-radix key of `x` as little-endian 32-bit limbs.
    pub fn encode(&self, x: &Observation) -> Result<Vec<u32>> {
        self.model.check(x)?;
        let mut limbs = Vec::with_capacity(self.hashes.first().map_or(2, HashFn::limbs));
        for (&v, &card) in x.iter().zip(self.model.cardinalities()).rev() {
            mul_add(&mut limbs, card, v - 1);
        }
        mul_add(&mut limbs, 1, 1);
        Ok(limbs)
    }

    /// Adds `weight` occurrences of an already encoded key.
    pub fn update_encoded(&mut self, key: &[u32], weight: u64) {
        for (i, h) in self.hashes.iter().enumerate() {
            self.table.add(i, h.index_limbs(key), weight);
        }
        self.n += weight;
    }

    /// `min_i c(i, h^i(x))`.
    pub fn estimate_count(&self, x: &Observation) -> Result<u64> {
        let key = self.encode(x)?;
        Ok(self.hashes.iter().enumerate().map(|(i, h)| self.table.get(i, h.index_limbs(&key))).min().unwrap_or(0))
    }

    pub fn merge(&mut self, other: &CmSketch) -> Result<()> {
        if self.model != other.model {
            return Err(Error::ConfigMismatch("models differ".into()));
        }
        if self.config != other.config {
            return Err(Error::ConfigMismatch(format!("{:?} vs {:?}", self.config, other.config)));
        }
        self.table.merge(&other.table)?;
        self.n += other.n;
        Ok(())
    }
}

impl PointEstimator for CmSketch {
    fn model(&self) -> &TreeModel {
        &self.model
    }

    fn n(&self) -> u64 {
        self.n
    }

    fn update(&mut self, x: &Observation) -> Result<()> {
        let key = self.encode(x)?;
        self.update_encoded(&key, 1);
        Ok(())
    }

    fn query(&self, x: &Observation) -> Result<f64> {
        let count = self.estimate_count(x)?;
        if self.n == 0 {
            return Err(Error::Empty);
        }
        Ok(count as f64 / self.n as f64)
    }

    fn space(&self) -> usize {
        self.config.depth * self.config.bins as usize
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::hashing::pair_key;

    fn obs(v: &[u32]) -> Observation {
        Observation::new(v.to_vec())
    }

    fn limbs_to_u128(limbs: &[u32]) -> u128 {
        limbs.iter().rev().fold(0u128, |acc, &l| (acc << 32) | l as u128)
    }

    #[test]
    fn two_variable_key_is_pair_key() {
        let s = CmSketch::new(TreeModel::chain(vec![5, 7]).unwrap(), SketchConfig::new(8, 2, 0).unwrap()).unwrap();
        for a in 1..=5 {
            for b in 1..=7 {
                let key = limbs_to_u128(&s.encode(&obs(&[a, b])).unwrap());
                assert_eq!(key, pair_key(a as u64, b as u64, 5).unwrap() as u128);
            }
        }
    }

    #[test]
    fn key_is_bijective_on_small_domain() {
        let s = CmSketch::new(TreeModel::chain(vec![3, 4, 2]).unwrap(), SketchConfig::new(8, 1, 0).unwrap()).unwrap();
        let mut keys = HashSet::new();
        for a in 1..=3 {
            for b in 1..=4 {
                for c in 1..=2 {
                    keys.insert(limbs_to_u128(&s.encode(&obs(&[a, b, c])).unwrap()));
                }
            }
        }
        assert_eq!(keys, (1..=24u128).collect());
    }

    #[test]
    fn wide_keys() {
        let model = TreeModel::star(2, 1 << 16, 32).unwrap();
        let s = CmSketch::new(model, SketchConfig::new(8, 1, 0).unwrap()).unwrap();
        assert_eq!(s.hashes()[0].limbs(), 17);
        let top: Vec<u32> = std::iter::once(2).chain(std::iter::repeat(1 << 16).take(32)).collect();
        let key = s.encode(&Observation::new(top)).unwrap();
        // 2 * 2^512 exactly: limb 16 holds 2, everything below is zero.
        assert_eq!(key.len(), 17);
        assert_eq!(key[16], 2);
        assert!(key[..16].iter().all(|&l| l == 0));
    }

    #[test]
    fn updates_and_queries() {
        let mut s = CmSketch::new(TreeModel::chain(vec![4, 4]).unwrap(), SketchConfig::new(3, 4, 5).unwrap()).unwrap();
        s.update(&obs(&[1, 2])).unwrap();
        assert!(s.table().row_sums().all(|r| r == 1));
        s.update(&obs(&[1, 2])).unwrap();
        for (i, h) in s.hashes().iter().enumerate() {
            let key = s.encode(&obs(&[1, 2])).unwrap();
            assert_eq!(s.table().get(i, h.index_limbs(&key)), 2);
        }
        for t in 0..998u32 {
            s.update(&obs(&[t % 4 + 1, t / 4 % 4 + 1])).unwrap();
        }
        assert!(s.table().row_sums().all(|r| r == 1000));
        assert!(s.update(&obs(&[5, 1])).is_err());
    }

    #[test]
    fn injective_regime_is_exact() {
        let mut s =
            CmSketch::new(TreeModel::chain(vec![4, 4]).unwrap(), SketchConfig::new(1 << 20, 2, 5).unwrap()).unwrap();
        let domain: Vec<_> = (1..=4).flat_map(|a| (1..=4).map(move |b| obs(&[a, b]))).collect();
        let slots: HashSet<_> = domain
            .iter()
            .map(|x| {
                let k = s.encode(x).unwrap();
                (s.hashes()[0].index_limbs(&k), s.hashes()[1].index_limbs(&k))
            })
            .collect();
        let row0: HashSet<_> = slots.iter().map(|s| s.0).collect();
        assert_eq!(row0.len(), 16, "collision in the audit; pick another seed");
        for x in [[1, 1], [1, 1], [1, 1], [3, 2]] {
            s.update(&obs(&x)).unwrap();
        }
        assert_eq!(s.query(&obs(&[1, 1])).unwrap(), 0.75);
        assert_eq!(s.query(&obs(&[4, 4])).unwrap(), 0.0);
    }

    #[test]
    fn empty_query_errors() {
        let s = CmSketch::new(TreeModel::chain(vec![2]).unwrap(), SketchConfig::new(2, 1, 0).unwrap()).unwrap();
        assert!(matches!(s.query(&obs(&[1])), Err(Error::Empty)));
    }
}

use serde::{Deserialize, Serialize};

use super::factor_tables::FactorTables;
use super::{PointEstimator, SketchConfig};
use crate::error::Result;
use crate::model::{ExactEstimator, Observation, TreeModel};
use crate::table::CounterTable;

/// Hashed conditionals and priors from a single hash: `2K - 1` tables of
/// `m` bins, each conditional estimated as a ratio of two bins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GmHash {
    tables: FactorTables,
}

impl GmHash {
    pub fn new(model: TreeModel, bins: u64, seed: u64) -> Result<Self> {
        let config = SketchConfig::new(bins, 1, seed)?;
        Ok(GmHash { tables: FactorTables::new(model, config)? })
    }

    pub fn config(&self) -> SketchConfig {
        self.tables.config()
    }

    /// `c_k`, one row of `m` counters.
    pub fn marginal_table(&self, k: usize) -> &CounterTable {
        self.tables.marginal_table(k)
    }

    /// `c̄_k`; `None` for the root.
    pub fn pair_table(&self, k: usize) -> Option<&CounterTable> {
        self.tables.pair_table(k)
    }

    pub fn hashes(&self) -> &crate::hashing::HashTuple {
        self.tables.hashes(0)
    }

    pub fn absorb(&mut self, exact: &ExactEstimator) -> Result<()> {
        self.tables.absorb(exact)
    }

    pub fn merge(&mut self, other: &GmHash) -> Result<()> {
        self.tables.merge(&other.tables)
    }
}

impl PointEstimator for GmHash {
    fn model(&self) -> &TreeModel {
        self.tables.model()
    }

    fn n(&self) -> u64 {
        self.tables.n()
    }

    fn update(&mut self, x: &Observation) -> Result<()> {
        self.tables.update(x)
    }

    fn query(&self, x: &Observation) -> Result<f64> {
        self.tables.check_query(x)?;
        Ok(self.tables.replica_estimate(0, x))
    }

    fn space(&self) -> usize {
        self.tables.space()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(v: &[u32]) -> Observation {
        Observation::new(v.to_vec())
    }

    #[test]
    fn single_update_touches_one_bin_per_table() {
        let mut s = GmHash::new(TreeModel::chain(vec![3, 3]).unwrap(), 8, 1).unwrap();
        s.update(&obs(&[2, 3])).unwrap();
        assert_eq!(s.marginal_table(0).row_sums().next(), Some(1));
        assert_eq!(s.marginal_table(1).row_sums().next(), Some(1));
        assert_eq!(s.pair_table(1).unwrap().row_sums().next(), Some(1));
        assert!(s.pair_table(0).is_none());
    }

    #[test]
    fn point_mass_is_one_for_any_width() {
        for bins in [1, 2, 7, 1000] {
            let mut s = GmHash::new(TreeModel::chain(vec![4, 4, 4]).unwrap(), bins, 3).unwrap();
            for _ in 0..5 {
                s.update(&obs(&[1, 1, 1])).unwrap();
            }
            assert_eq!(s.query(&obs(&[1, 1, 1])).unwrap(), 1.0);
            let h = s.hashes().get(1);
            assert_eq!(s.marginal_table(1).get(0, h.index(1)), 5);
        }
    }

    #[test]
    fn empty_parent_bin_gives_zero() {
        let mut s = GmHash::new(TreeModel::chain(vec![64, 64]).unwrap(), 1 << 20, 9).unwrap();
        s.update(&obs(&[1, 1])).unwrap();
        // The parent value 40 is unseen and, with 2^20 bins, shares no bin with 1.
        let h = s.hashes().get(0);
        assert_ne!(h.index(40), h.index(1));
        assert_eq!(s.query(&obs(&[40, 1])).unwrap(), 0.0);
    }

    #[test]
    fn query_errors() {
        let s = GmHash::new(TreeModel::chain(vec![2, 2]).unwrap(), 4, 0).unwrap();
        assert!(matches!(s.query(&obs(&[1, 1])), Err(crate::Error::Empty)));
        assert!(GmHash::new(TreeModel::chain(vec![2, 2]).unwrap(), 0, 0).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::factor_tables::FactorTables;
use super::{PointEstimator, SketchConfig};
use crate::error::Result;
use crate::hashing::HashTuple;
use crate::model::{ExactEstimator, Observation, TreeModel};
use crate::table::CounterTable;

/// A count-min sketch per factor: every prior, parent marginal and
/// variable-parent pair frequency is the row minimum over `d` hash rows, and
/// each conditional is the ratio of two such estimates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GmFactorSketch {
    tables: FactorTables,
}

impl GmFactorSketch {
    pub fn new(model: TreeModel, config: SketchConfig) -> Result<Self> {
        Ok(GmFactorSketch { tables: FactorTables::new(model, config)? })
    }

    pub fn config(&self) -> SketchConfig {
        self.tables.config()
    }

    pub fn marginal_table(&self, k: usize) -> &CounterTable {
        self.tables.marginal_table(k)
    }

    pub fn pair_table(&self, k: usize) -> Option<&CounterTable> {
        self.tables.pair_table(k)
    }

    pub fn hashes(&self, replica: usize) -> &HashTuple {
        self.tables.hashes(replica)
    }

    /// Count-min estimate of `n P̄_k(x_k)`.
    pub fn marginal_count(&self, k: usize, value: u32) -> u64 {
        (0..self.tables.config().depth)
            .map(|i| self.tables.marginal_bin(i, k, value))
            .min()
            .unwrap_or(0)
    }

    /// Count-min estimate of `n P̄_k(x_k, x_pa(k))`.
    ///
    /// # Panics
    ///
    /// If `child` is the root.
    pub fn pair_count(&self, x: &Observation, child: usize) -> u64 {
        let parent = self.model().parent(child).expect("child is not the root");
        (0..self.tables.config().depth)
            .map(|i| self.tables.pair_bin(i, x, child, parent))
            .min()
            .unwrap_or(0)
    }

    pub fn absorb(&mut self, exact: &ExactEstimator) -> Result<()> {
        self.tables.absorb(exact)
    }

    pub fn merge(&mut self, other: &GmFactorSketch) -> Result<()> {
        self.tables.merge(&other.tables)
    }
}

impl PointEstimator for GmFactorSketch {
    fn model(&self) -> &TreeModel {
        self.tables.model()
    }

    fn n(&self) -> u64 {
        self.tables.n()
    }

    fn update(&mut self, x: &Observation) -> Result<()> {
        self.tables.update(x)
    }

    /// A zero parent estimate makes the whole product 0, whatever the pair
    /// estimate holds.
    fn query(&self, x: &Observation) -> Result<f64> {
        self.tables.check_query(x)?;
        let mut p = self.marginal_count(0, x[0]) as f64 / self.n() as f64;
        for (child, parent) in self.model().edges() {
            let den = self.marginal_count(parent, x[parent]);
            if den == 0 {
                return Ok(0.0);
            }
            p *= self.pair_count(x, child) as f64 / den as f64;
        }
        Ok(p)
    }

    fn space(&self) -> usize {
        self.tables.space()
    }
}

use serde::{Deserialize, Serialize};

use super::factor_tables::FactorTables;
use super::{lower_median, PointEstimator, SketchConfig};
use crate::error::Result;
use crate::hashing::HashTuple;
use crate::model::{ExactEstimator, Observation, TreeModel};
use crate::table::CounterTable;

/// `d` independent [`GmHash`](super::GmHash) replicas; the estimate is the
/// median of the replica estimates (the lower median for even `d`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GmSketch {
    tables: FactorTables,
}

impl GmSketch {
    pub fn new(model: TreeModel, config: SketchConfig) -> Result<Self> {
        Ok(GmSketch { tables: FactorTables::new(model, config)? })
    }

    pub fn config(&self) -> SketchConfig {
        self.tables.config()
    }

    /// `c_k(i, .)` for all replicas `i`, one per row.
    pub fn marginal_table(&self, k: usize) -> &CounterTable {
        self.tables.marginal_table(k)
    }

    pub fn pair_table(&self, k: usize) -> Option<&CounterTable> {
        self.tables.pair_table(k)
    }

    pub fn hashes(&self, replica: usize) -> &HashTuple {
        self.tables.hashes(replica)
    }

    /// Estimates of the individual replicas, in replica order.
    pub fn replica_estimates(&self, x: &Observation) -> Result<Vec<f64>> {
        self.tables.check_query(x)?;
        Ok((0..self.tables.config().depth).map(|i| self.tables.replica_estimate(i, x)).collect())
    }

    pub fn absorb(&mut self, exact: &ExactEstimator) -> Result<()> {
        self.tables.absorb(exact)
    }

    pub fn merge(&mut self, other: &GmSketch) -> Result<()> {
        self.tables.merge(&other.tables)
    }
}

impl PointEstimator for GmSketch {
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
        let mut estimates = self.replica_estimates(x)?;
        Ok(lower_median(&mut estimates))
    }

    fn space(&self) -> usize {
        self.tables.space()
    }
}

use serde::{Deserialize, Serialize};

use super::SketchConfig;
use crate::error::{Error, Result};
use crate::hashing::HashTuple;
use crate::model::{ExactEstimator, Observation, TreeModel};
use crate::table::CounterTable;

/// Hashed factor counts shared by the graphical-model sketches.
///
/// For every replica `i` and variable `k` one hash function `h^i_k` maps
/// `x_k` into row `i` of the variable table `c_k` and the pair key of
/// `(x_k, x_pa(k))` into row `i` of the edge table `c̄_k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FactorTablesRepr", into = "FactorTablesRepr")]
pub(crate) struct FactorTables {
    model: TreeModel,
    config: SketchConfig,
    hashes: Vec<HashTuple>,
    marginals: Vec<CounterTable>,
    /// `None` at the root.
    pairs: Vec<Option<CounterTable>>,
    n: u64,
}

#[derive(Serialize, Deserialize)]
struct FactorTablesRepr {
    model: TreeModel,
    config: SketchConfig,
    n: u64,
    marginals: Vec<CounterTable>,
    pairs: Vec<Option<CounterTable>>,
}

impl TryFrom<FactorTablesRepr> for FactorTables {
    type Error = Error;

    fn try_from(r: FactorTablesRepr) -> Result<Self> {
        let mut tables = FactorTables::new(r.model, r.config)?;
        let (d, m) = (r.config.depth, r.config.bins as usize);
        if r.marginals.len() != tables.marginals.len() || r.pairs.len() != tables.pairs.len() {
            return Err(Error::InvalidParameter("snapshot table count does not match the model".into()));
        }
        for t in &r.marginals {
            t.check(d, m, r.n)?;
        }
        for (have, want) in r.pairs.iter().zip(&tables.pairs) {
            match (have, want) {
                (Some(t), Some(_)) => t.check(d, m, r.n)?,
                (None, None) => {}
                _ => return Err(Error::InvalidParameter("snapshot edge tables do not match the model".into())),
            }
        }
        tables.marginals = r.marginals;
        tables.pairs = r.pairs;
        tables.n = r.n;
        Ok(tables)
    }
}

impl From<FactorTables> for FactorTablesRepr {
    fn from(t: FactorTables) -> Self {
        FactorTablesRepr { model: t.model, config: t.config, n: t.n, marginals: t.marginals, pairs: t.pairs }
    }
}

impl FactorTables {
    pub fn new(model: TreeModel, config: SketchConfig) -> Result<Self> {
        config.validate()?;
        let bins = usize::try_from(config.bins).map_err(|_| Error::InvalidParameter("bin count too large".into()))?;
        let hashes = (0..config.depth)
            .map(|i| HashTuple::derive(config.seed, i, model.len(), config.bins))
            .collect::<Result<_>>()?;
        let marginals = (0..model.len()).map(|_| CounterTable::new(config.depth, bins)).collect();
        let pairs = (0..model.len())
            .map(|k| model.parent(k).map(|_| CounterTable::new(config.depth, bins)))
            .collect();
        Ok(FactorTables { model, config, hashes, marginals, pairs, n: 0 })
    }

    pub fn model(&self) -> &TreeModel {
        &self.model
    }

    pub fn config(&self) -> SketchConfig {
        self.config
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn space(&self) -> usize {
        self.model.table_count() * self.config.depth * self.config.bins as usize
    }

    pub fn marginal_table(&self, k: usize) -> &CounterTable {
        &self.marginals[k]
    }

    pub fn pair_table(&self, k: usize) -> Option<&CounterTable> {
        self.pairs[k].as_ref()
    }

    pub fn hashes(&self, replica: usize) -> &HashTuple {
        &self.hashes[replica]
    }

    pub fn update(&mut self, x: &Observation) -> Result<()> {
        self.model.check(x)?;
        self.n += 1;
        for (i, h) in self.hashes.iter().enumerate() {
            for (k, &v) in x.iter().enumerate() {
                self.marginals[k].add(i, h.get(k).index(v as u64), 1);
            }
            for (child, parent) in self.model.edges() {
                let key = self.model.edge_key(x, child, parent);
                let slot = h.get(child).index(key);
                self.pairs[child].as_mut().expect("edge table").add(i, slot, 1);
            }
        }
        Ok(())
    }

    /// Adds the exact factor counts of another stream. Counter-identical to
    /// replaying that stream through [`FactorTables::update`].
    pub fn absorb(&mut self, exact: &ExactEstimator) -> Result<()> {
        if exact.model() != &self.model {
            return Err(Error::ConfigMismatch("exact estimator has a different model".into()));
        }
        for (i, h) in self.hashes.iter().enumerate() {
            for k in 0..self.model.len() {
                let hk = h.get(k);
                let table = &mut self.marginals[k];
                for (v, &count) in exact.marginal_table(k).iter().enumerate() {
                    if count != 0 {
                        table.add(i, hk.index(v as u64 + 1), count);
                    }
                }
                if let Some(table) = self.pairs[k].as_mut() {
                    for (j, &count) in exact.joint_table(k).iter().enumerate() {
                        if count != 0 {
                            table.add(i, hk.index(j as u64 + 1), count);
                        }
                    }
                }
            }
        }
        self.n += exact.n();
        Ok(())
    }

    pub fn merge(&mut self, other: &FactorTables) -> Result<()> {
        if self.model != other.model {
            return Err(Error::ConfigMismatch("models differ".into()));
        }
        if self.config != other.config {
            return Err(Error::ConfigMismatch(format!("{:?} vs {:?}", self.config, other.config)));
        }
        for (a, b) in self.marginals.iter_mut().zip(&other.marginals) {
            a.merge(b)?;
        }
        for (a, b) in self.pairs.iter_mut().zip(&other.pairs) {
            if let (Some(a), Some(b)) = (a, b) {
                a.merge(b)?;
            }
        }
        self.n += other.n;
        Ok(())
    }

    /// `c_k(i, h^i_k(value))`.
    #[inline]
    pub fn marginal_bin(&self, replica: usize, k: usize, value: u32) -> u64 {
        self.marginals[k].get(replica, self.hashes[replica].get(k).index(value as u64))
    }

    /// `c̄_k(i, h^i_k(pair key))` for the edge into `child`.
    #[inline]
    pub fn pair_bin(&self, replica: usize, x: &Observation, child: usize, parent: usize) -> u64 {
        let key = self.model.edge_key(x, child, parent);
        let table = self.pairs[child].as_ref().expect("edge table");
        table.get(replica, self.hashes[replica].get(child).index(key))
    }

    pub fn check_query(&self, x: &Observation) -> Result<()> {
        self.model.check(x)?;
        if self.n == 0 {
            return Err(Error::Empty);
        }
        Ok(())
    }

    /// Single-replica estimate: the root prior times one ratio of two bins
    /// per edge. A zero denominator bin makes the estimate 0.
    pub fn replica_estimate(&self, replica: usize, x: &Observation) -> f64 {
        let mut p = self.marginal_bin(replica, 0, x[0]) as f64 / self.n as f64;
        for (child, parent) in self.model.edges() {
            let den = self.marginal_bin(replica, parent, x[parent]);
            if den == 0 {
                return 0.0;
            }
            p *= self.pair_bin(replica, x, child, parent) as f64 / den as f64;
        }
        p
    }
}

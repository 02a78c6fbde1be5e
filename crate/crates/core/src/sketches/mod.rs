//! Streaming point-probability estimators.
//!
//! [`CmSketch`] counts whole observation vectors. The three graphical-model
//! sketches ([`GmHash`], [`GmSketch`], [`GmFactorSketch`]) keep one table per
//! variable and one per variable-parent pair, updated identically, and differ
//! only in how the bins are combined at query time.

mod cm;
mod factor_tables;
mod gmfactor;
mod gmhash;
mod gmsketch;

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cm::CmSketch;
pub use gmfactor::GmFactorSketch;
pub use gmhash::GmHash;
pub use gmsketch::GmSketch;

use crate::error::{Error, Result};
use crate::model::{ExactEstimator, Observation, TreeModel};

/// Bins per table, number of replicas and the master seed all hash
/// functions are derived from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub bins: u64,
    pub depth: usize,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(bins: u64, depth: usize, seed: u64) -> Result<Self> {
        let cfg = SketchConfig { bins, depth, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::ZeroBins);
        }
        if self.depth == 0 {
            return Err(Error::InvalidParameter("depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Common surface of every estimator.
pub trait PointEstimator {
    fn model(&self) -> &TreeModel;

    /// Stream length.
    fn n(&self) -> u64;

    fn update(&mut self, x: &Observation) -> Result<()>;

    /// Estimated probability of `x`. Not clamped to `[0, 1]`.
    fn query(&self, x: &Observation) -> Result<f64>;

    /// Counters held, excluding hash-function storage.
    fn space(&self) -> usize;
}

impl PointEstimator for ExactEstimator {
    fn model(&self) -> &TreeModel {
        ExactEstimator::model(self)
    }

    fn n(&self) -> u64 {
        ExactEstimator::n(self)
    }

    fn update(&mut self, x: &Observation) -> Result<()> {
        ExactEstimator::update(self, x)
    }

    fn query(&self, x: &Observation) -> Result<f64> {
        ExactEstimator::query(self, x)
    }

    fn space(&self) -> usize {
        let m = self.model();
        m.cardinalities().iter().map(|&c| c as usize).sum::<usize>()
            + m.edges().map(|(c, p)| m.cardinality(c) as usize * m.cardinality(p) as usize).sum::<usize>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "cm")]
    CountMin,
    #[serde(rename = "gmhash")]
    GmHash,
    #[serde(rename = "gmsketch")]
    GmSketch,
    #[serde(rename = "gmfactor")]
    GmFactorSketch,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] =
        [EstimatorKind::CountMin, EstimatorKind::GmHash, EstimatorKind::GmSketch, EstimatorKind::GmFactorSketch];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::CountMin => "cm",
            EstimatorKind::GmHash => "gmhash",
            EstimatorKind::GmSketch => "gmsketch",
            EstimatorKind::GmFactorSketch => "gmfactor",
        }
    }

    /// Replica count actually used: `GmHash` always has one.
    pub fn effective_depth(self, depth: usize) -> usize {
        match self {
            EstimatorKind::GmHash => 1,
            _ => depth,
        }
    }

    /// Counters per bin index: `d` rows for CM, `(2K - 1) d` for the
    /// graphical-model sketches.
    pub fn counters_per_bin(self, model: &TreeModel, depth: usize) -> usize {
        let d = self.effective_depth(depth);
        match self {
            EstimatorKind::CountMin => d,
            _ => model.table_count() * d,
        }
    }

    /// Largest bin count whose space fits in `budget` counters, or `None`
    /// when not even one bin fits.
    pub fn bins_for_budget(self, model: &TreeModel, depth: usize, budget: u64) -> Option<u64> {
        let m = budget / self.counters_per_bin(model, depth) as u64;
        (m >= 1).then_some(m)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator {s:?} (cm, gmhash, gmsketch, gmfactor)")))
    }
}

/// Any of the four sketches. This is also the snapshot format: serialized as
/// JSON tagged by `kind`, carrying the model, config, `n` and every counter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Sketch {
    #[serde(rename = "cm")]
    CountMin(CmSketch),
    #[serde(rename = "gmhash")]
    GmHash(GmHash),
    #[serde(rename = "gmsketch")]
    GmSketch(GmSketch),
    #[serde(rename = "gmfactor")]
    GmFactorSketch(GmFactorSketch),
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            Sketch::CountMin($s) => $body,
            Sketch::GmHash($s) => $body,
            Sketch::GmSketch($s) => $body,
            Sketch::GmFactorSketch($s) => $body,
        }
    };
}

impl Sketch {
    pub fn new(kind: EstimatorKind, model: TreeModel, config: SketchConfig) -> Result<Self> {
        Ok(match kind {
            EstimatorKind::CountMin => Sketch::CountMin(CmSketch::new(model, config)?),
            EstimatorKind::GmHash => Sketch::GmHash(GmHash::new(model, config.bins, config.seed)?),
            EstimatorKind::GmSketch => Sketch::GmSketch(GmSketch::new(model, config)?),
            EstimatorKind::GmFactorSketch => Sketch::GmFactorSketch(GmFactorSketch::new(model, config)?),
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            Sketch::CountMin(_) => EstimatorKind::CountMin,
            Sketch::GmHash(_) => EstimatorKind::GmHash,
            Sketch::GmSketch(_) => EstimatorKind::GmSketch,
            Sketch::GmFactorSketch(_) => EstimatorKind::GmFactorSketch,
        }
    }

    pub fn config(&self) -> SketchConfig {
        dispatch!(self, s => s.config())
    }

    /// Counter-wise sum with a sketch of the same kind and config.
    pub fn merge(&mut self, other: &Sketch) -> Result<()> {
        match (self, other) {
            (Sketch::CountMin(a), Sketch::CountMin(b)) => a.merge(b),
            (Sketch::GmHash(a), Sketch::GmHash(b)) => a.merge(b),
            (Sketch::GmSketch(a), Sketch::GmSketch(b)) => a.merge(b),
            (Sketch::GmFactorSketch(a), Sketch::GmFactorSketch(b)) => a.merge(b),
            (a, b) => Err(Error::ConfigMismatch(format!("cannot merge {} into {}", b.kind(), a.kind()))),
        }
    }

    /// Adds every count held by `exact`, as if its stream had been replayed.
    /// Not available for [`CmSketch`], which needs whole observations.
    pub fn absorb(&mut self, exact: &ExactEstimator) -> Result<()> {
        match self {
            Sketch::CountMin(_) => Err(Error::InvalidParameter("count-min needs the raw stream".into())),
            Sketch::GmHash(s) => s.absorb(exact),
            Sketch::GmSketch(s) => s.absorb(exact),
            Sketch::GmFactorSketch(s) => s.absorb(exact),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

impl PointEstimator for Sketch {
    fn model(&self) -> &TreeModel {
        dispatch!(self, s => s.model())
    }

    fn n(&self) -> u64 {
        dispatch!(self, s => s.n())
    }

    fn update(&mut self, x: &Observation) -> Result<()> {
        dispatch!(self, s => s.update(x))
    }

    fn query(&self, x: &Observation) -> Result<f64> {
        dispatch!(self, s => s.query(x))
    }

    fn space(&self) -> usize {
        dispatch!(self, s => s.space())
    }
}

/// Lower median: the element of rank `ceil(d / 2)`.
pub(crate) fn lower_median(values: &mut [f64]) -> f64 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(mid, f64::total_cmp).1
}

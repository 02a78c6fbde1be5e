//! Tree-structured Bayesian networks and the exact factored MLE.
//!
//! Variables are 0-indexed in the Rust API with the root at index 0. Values
//! are 1-indexed (`x_k` in `1..=M_k`) everywhere, since the pair encoding
//! depends on it. The JSON model file uses 1-indexed variables.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::pair_key;

/// Largest joint table [`ExactEstimator`] will allocate (cells per edge).
pub const DENSE_JOINT_LIMIT: u128 = 1 << 28;

/// A directed tree over `K` categorical variables rooted at variable 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct TreeModel {
    parents: Vec<Option<usize>>,
    cardinalities: Vec<u32>,
}

/// On-disk model description. Variables are 1-indexed; `parents` lists
/// `[child, parent]` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub parents: Vec<[usize; 2]>,
    pub cardinalities: Vec<u32>,
}

impl TryFrom<ModelFile> for TreeModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.cardinalities.len() != file.k {
            return Err(Error::InvalidTree(format!(
                "K = {} but {} cardinalities given",
                file.k,
                file.cardinalities.len()
            )));
        }
        let mut parents = vec![None; file.k];
        for &[child, parent] in &file.parents {
            if child == 0 || child > file.k || parent == 0 || parent > file.k {
                return Err(Error::InvalidTree(format!("edge [{child}, {parent}] out of range 1..={}", file.k)));
            }
            if parents[child - 1].replace(parent - 1).is_some() {
                return Err(Error::InvalidTree(format!("variable {child} has more than one parent")));
            }
        }
        TreeModel::from_parents(parents, file.cardinalities)
    }
}

impl From<TreeModel> for ModelFile {
    fn from(model: TreeModel) -> Self {
        ModelFile {
            k: model.len(),
            parents: model.edges().map(|(c, p)| [c + 1, p + 1]).collect(),
            cardinalities: model.cardinalities,
        }
    }
}

impl TreeModel {
    /// Builds and validates a model from a parent vector (`None` only at the
    /// root, index 0).
    pub fn from_parents(parents: Vec<Option<usize>>, cardinalities: Vec<u32>) -> Result<Self> {
        let model = TreeModel { parents, cardinalities };
        model.validate()?;
        Ok(model)
    }

    /// `K` variables in a chain `0 <- 1 <- 2 ...`.
    pub fn chain(cardinalities: Vec<u32>) -> Result<Self> {
        let parents = (0..cardinalities.len()).map(|k| k.checked_sub(1)).collect();
        Self::from_parents(parents, cardinalities)
    }

    /// Root with cardinality `root_cardinality` and `children` leaves of
    /// cardinality `child_cardinality` (a naive Bayes structure).
    pub fn star(root_cardinality: u32, child_cardinality: u32, children: usize) -> Result<Self> {
        let mut parents = vec![None];
        parents.extend(std::iter::repeat(Some(0)).take(children));
        let mut cards = vec![root_cardinality];
        cards.extend(std::iter::repeat(child_cardinality).take(children));
        Self::from_parents(parents, cards)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Checks that the parent map is a tree rooted at variable 0 and every
    /// cardinality is positive.
    pub fn validate(&self) -> Result<()> {
        let k = self.parents.len();
        if k == 0 {
            return Err(Error::InvalidTree("model has no variables".into()));
        }
        if self.cardinalities.len() != k {
            return Err(Error::InvalidTree(format!("{k} variables but {} cardinalities", self.cardinalities.len())));
        }
        if let Some(v) = self.cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::InvalidTree(format!("variable {} has cardinality 0", v + 1)));
        }
        if let Some(p) = self.parents[0] {
            return Err(Error::InvalidTree(format!("root has parent {}", p + 1)));
        }
        for (child, parent) in self.parents.iter().enumerate().skip(1) {
            match parent {
                None => return Err(Error::InvalidTree(format!("variable {} has no parent", child + 1))),
                Some(p) if *p >= k => {
                    return Err(Error::InvalidTree(format!("variable {} has parent {} out of range", child + 1, p + 1)))
                }
                Some(p) if *p == child => {
                    return Err(Error::InvalidTree(format!("variable {} is its own parent", child + 1)))
                }
                _ => {}
            }
        }
        // Every parent chain must reach the root within K steps.
        for start in 1..k {
            let mut v = start;
            let mut steps = 0;
            while let Some(p) = self.parents[v] {
                v = p;
                steps += 1;
                if steps > k {
                    return Err(Error::InvalidTree(format!("cycle through variable {}", start + 1)));
                }
            }
        }
        Ok(())
    }

    /// Number of variables `K`.
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parents[k]
    }

    pub fn cardinality(&self, k: usize) -> u32 {
        self.cardinalities[k]
    }

    pub fn cardinalities(&self) -> &[u32] {
        &self.cardinalities
    }

    /// `(child, parent)` for every non-root variable, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents.iter().enumerate().filter_map(|(c, p)| p.map(|p| (c, p)))
    }

    /// Number of hash tables a graphical-model sketch keeps per replica:
    /// one per variable and one per edge.
    pub fn table_count(&self) -> usize {
        2 * self.len() - 1
    }

    /// Validates an observation against the model.
    pub fn check(&self, x: &Observation) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: x.len() });
        }
        for (&v, &card) in x.iter().zip(&self.cardinalities) {
            if v == 0 || v > card {
                return Err(Error::ValueOutOfRange { what: "observation value", value: v as u64, max: card as u64 });
            }
        }
        Ok(())
    }

    /// Pair key of edge `child <- parent(child)` under `x`. `x` must be valid.
    #[inline]
    pub(crate) fn edge_key(&self, x: &Observation, child: usize, parent: usize) -> u64 {
        x[child] as u64 + self.cardinalities[child] as u64 * (x[parent] as u64 - 1)
    }
}

/// One `K`-dimensional observation with 1-indexed values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(Vec<u32>);

impl Observation {
    pub fn new(values: Vec<u32>) -> Self {
        Observation(values)
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }
}

impl From<Vec<u32>> for Observation {
    fn from(v: Vec<u32>) -> Self {
        Observation(v)
    }
}

impl std::ops::Deref for Observation {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl FromStr for Observation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|e| Error::InvalidParameter(format!("bad value {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(Observation)
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Exact factor counts: `n P̄_k(i)` per variable and `n P̄_k(i, j)` per edge.
///
/// Space is `O(sum_k M_k + sum_k M_k M_pa(k))` counters, so this is only for
/// modest cardinalities; it serves as the reference every sketch is checked
/// against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactEstimator {
    model: TreeModel,
    n: u64,
    marginals: Vec<Vec<u64>>,
    /// Indexed by `pair_key - 1`; empty for the root.
    joints: Vec<Vec<u64>>,
}

impl ExactEstimator {
    pub fn new(model: TreeModel) -> Result<Self> {
        let marginals = model.cardinalities.iter().map(|&c| vec![0; c as usize]).collect();
        let mut joints = vec![Vec::new(); model.len()];
        for (child, parent) in model.edges() {
            let cells = model.cardinality(child) as u128 * model.cardinality(parent) as u128;
            if cells > DENSE_JOINT_LIMIT {
                return Err(Error::TableTooLarge { variable: child + 1, cells });
            }
            joints[child] = vec![0; cells as usize];
        }
        Ok(ExactEstimator { model, n: 0, marginals, joints })
    }

    pub fn model(&self) -> &TreeModel {
        &self.model
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn update(&mut self, x: &Observation) -> Result<()> {
        self.model.check(x)?;
        self.n += 1;
        for (k, &v) in x.iter().enumerate() {
            self.marginals[k][v as usize - 1] += 1;
        }
        for (child, parent) in self.model.edges() {
            let key = self.model.edge_key(x, child, parent);
            self.joints[child][key as usize - 1] += 1;
        }
        Ok(())
    }

    /// Count of `x_k = value`.
    pub fn marginal_count(&self, k: usize, value: u32) -> u64 {
        self.marginals[k][value as usize - 1]
    }

    /// Count of `x_child = child_value, x_pa(child) = parent_value`.
    ///
    /// # Panics
    ///
    /// If `child` is the root or a value is out of range.
    pub fn joint_count(&self, child: usize, child_value: u32, parent_value: u32) -> u64 {
        let key = pair_key(child_value as u64, parent_value as u64, self.model.cardinality(child) as u64)
            .expect("value in range");
        self.joints[child][key as usize - 1]
    }

    /// Per-variable counts, indexed by `value - 1`.
    pub fn marginal_table(&self, k: usize) -> &[u64] {
        &self.marginals[k]
    }

    /// Per-edge counts indexed by `pair_key - 1`. Empty for the root.
    pub fn joint_table(&self, child: usize) -> &[u64] {
        &self.joints[child]
    }

    /// `P̄_k(x_k)`.
    pub fn marginal(&self, k: usize, value: u32) -> f64 {
        self.marginal_count(k, value) as f64 / self.n as f64
    }

    /// `P̄_k(x_k, x_pa(k))`.
    pub fn joint(&self, child: usize, child_value: u32, parent_value: u32) -> f64 {
        self.joint_count(child, child_value, parent_value) as f64 / self.n as f64
    }

    /// Whole-model MLE `P̄(x) = P̄_1(x_1) prod_k P̄_k(x_k | x_pa(k))`.
    ///
    /// A conditional whose parent value was never observed makes the whole
    /// product 0.
    pub fn query(&self, x: &Observation) -> Result<f64> {
        self.model.check(x)?;
        if self.n == 0 {
            return Err(Error::Empty);
        }
        let mut p = self.marginal_count(0, x[0]) as f64 / self.n as f64;
        for (child, parent) in self.model.edges() {
            let den = self.marginal_count(parent, x[parent]);
            if den == 0 {
                return Ok(0.0);
            }
            let num = self.joints[child][self.model.edge_key(x, child, parent) as usize - 1];
            p *= num as f64 / den as f64;
        }
        Ok(p)
    }

    /// `Δ(x)`: the smallest empirical co-occurrence frequency over the
    /// variable-parent pairs of `x`.
    pub fn delta(&self, x: &Observation) -> Result<f64> {
        self.model.check(x)?;
        if self.n == 0 {
            return Err(Error::Empty);
        }
        self.model
            .edges()
            .map(|(child, parent)| self.joint(child, x[child], x[parent]))
            .reduce(f64::min)
            .ok_or(Error::NoEdges)
    }
}

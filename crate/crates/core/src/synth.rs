//! Synthetic naive Bayes streams with heavy and light supports.
//!
//! The class variable is uniform on `{1, 2}`. Given class 1 every child is
//! uniform on `[N]`; given class 2 it is uniform on `[M] \ [N]`. A class-1
//! point therefore has probability `0.5 N^-K` ("heavy") and a class-2 point
//! `0.5 (M - N)^-K` ("light").

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, TreeModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NaiveBayesSpec {
    /// Number of child variables; observations have `K + 1` coordinates.
    #[serde(rename = "K")]
    pub children: usize,
    /// Child cardinality `M`.
    #[serde(rename = "M")]
    pub cardinality: u32,
    /// Size `N` of the heavy child support.
    #[serde(rename = "N")]
    pub heavy_support: u32,
}

impl NaiveBayesSpec {
    /// `K = 4, M = 2^16, N = 8`: every heavy point has probability `2^-13`.
    pub const EASY: NaiveBayesSpec = NaiveBayesSpec { children: 4, cardinality: 1 << 16, heavy_support: 8 };

    /// `K = 32, M = 2^16, N = 64`: every heavy point has probability `2^-193`.
    pub const HARD: NaiveBayesSpec = NaiveBayesSpec { children: 32, cardinality: 1 << 16, heavy_support: 64 };

    pub fn new(children: usize, cardinality: u32, heavy_support: u32) -> Result<Self> {
        let spec = NaiveBayesSpec { children, cardinality, heavy_support };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.children == 0 {
            return Err(Error::InvalidParameter("need at least one child variable".into()));
        }
        if self.heavy_support == 0 || self.heavy_support >= self.cardinality {
            return Err(Error::InvalidParameter(format!(
                "heavy support N = {} must satisfy 1 <= N < M = {}",
                self.heavy_support, self.cardinality
            )));
        }
        Ok(())
    }

    /// Probability of every heavy point, `0.5 N^-K`.
    pub fn heavy_probability(&self) -> f64 {
        0.5 * (self.heavy_support as f64).powi(-(self.children as i32))
    }

    /// Probability of every light point, `0.5 (M - N)^-K`.
    pub fn light_probability(&self) -> f64 {
        0.5 * ((self.cardinality - self.heavy_support) as f64).powi(-(self.children as i32))
    }
}

/// The star tree of a naive Bayes spec: the class variable (cardinality 2) is
/// the root and every child hangs off it.
pub fn tree_of(spec: &NaiveBayesSpec) -> Result<TreeModel> {
    spec.validate()?;
    TreeModel::star(2, spec.cardinality, spec.children)
}

/// Infinite i.i.d. sampler over observations of a spec.
pub struct Sampler {
    spec: NaiveBayesSpec,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(spec: NaiveBayesSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Sampler { spec, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Draws the children of a point with the given class into `out`.
    fn fill(&mut self, class: u32, out: &mut Vec<u32>) {
        let (lo, hi) = match class {
            1 => (1, self.spec.heavy_support),
            _ => (self.spec.heavy_support + 1, self.spec.cardinality),
        };
        out.clear();
        out.push(class);
        out.extend((0..self.spec.children).map(|_| self.rng.random_range(lo..=hi)));
    }

    pub fn draw(&mut self) -> Observation {
        let class = self.rng.random_range(1..=2);
        self.draw_class(class)
    }

    pub fn draw_class(&mut self, class: u32) -> Observation {
        let mut v = Vec::with_capacity(self.spec.children + 1);
        self.fill(class, &mut v);
        Observation::new(v)
    }
}

impl Iterator for Sampler {
    type Item = Observation;

    fn next(&mut self) -> Option<Observation> {
        Some(self.draw())
    }
}

/// `n` i.i.d. draws from the spec.
pub fn sample_stream(spec: &NaiveBayesSpec, n: usize, seed: u64) -> Result<Vec<Observation>> {
    if n == 0 {
        return Err(Error::InvalidParameter("stream length must be at least 1".into()));
    }
    Ok(Sampler::new(*spec, seed)?.take(n).collect())
}

/// A test point with its analytic probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub x: Observation,
    pub true_p: f64,
    pub heavy: bool,
}

fn sample_queries(spec: &NaiveBayesSpec, count: usize, seed: u64, heavy: bool) -> Result<Vec<LabeledQuery>> {
    if count == 0 {
        return Err(Error::InvalidParameter("query count must be at least 1".into()));
    }
    let mut sampler = Sampler::new(*spec, seed)?;
    let (class, true_p) =
        if heavy { (1, spec.heavy_probability()) } else { (2, spec.light_probability()) };
    Ok((0..count).map(|_| LabeledQuery { x: sampler.draw_class(class), true_p, heavy }).collect())
}

/// I.i.d. draws conditioned on class 1, without deduplication.
pub fn sample_heavy_queries(spec: &NaiveBayesSpec, count: usize, seed: u64) -> Result<Vec<LabeledQuery>> {
    sample_queries(spec, count, seed, true)
}

/// I.i.d. draws conditioned on class 2.
pub fn sample_light_queries(spec: &NaiveBayesSpec, count: usize, seed: u64) -> Result<Vec<LabeledQuery>> {
    sample_queries(spec, count, seed, false)
}

/// Formats a probability, as `2^e` when it is an exact power of two so that
/// values like `2^-193` stay readable.
pub fn format_probability(p: f64) -> String {
    if p > 0.0 && p.is_finite() {
        let e = p.log2().round();
        if (e as i32) > -1022 && 2f64.powi(e as i32) == p {
            return format!("2^{}", e as i32);
        }
    }
    format!("{p:e}")
}

pub fn parse_probability(s: &str) -> Result<f64> {
    let bad = |e: String| Error::InvalidParameter(format!("bad probability {s:?}: {e}"));
    match s.strip_prefix("2^") {
        Some(exp) => Ok(2f64.powi(exp.parse::<i32>().map_err(|e| bad(e.to_string()))?)),
        None => s.parse::<f64>().map_err(|e| bad(e.to_string())),
    }
}

/// Writes one observation per line as space-separated integers.
pub fn write_stream<'a>(path: &Path, stream: impl IntoIterator<Item = &'a Observation>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in stream {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl ToString) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.to_string() }
}

/// Calls `f` on every observation in a stream file. Blank lines are skipped.
pub fn for_each_observation(path: &Path, mut f: impl FnMut(Observation) -> Result<()>) -> Result<()> {
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let x: Observation = line.parse().map_err(|e| parse_err(path, i + 1, e))?;
        f(x).map_err(|e| parse_err(path, i + 1, e))?;
    }
    Ok(())
}

pub fn read_stream(path: &Path) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for_each_observation(path, |x| {
        out.push(x);
        Ok(())
    })?;
    Ok(out)
}

/// Writes queries as the observation followed by its probability.
pub fn write_queries(path: &Path, queries: &[LabeledQuery]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for q in queries {
        writeln!(w, "{} {}", q.x, format_probability(q.true_p))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a query file. The `heavy` flag is not stored and comes back `false`.
pub fn read_queries(path: &Path) -> Result<Vec<LabeledQuery>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (values, p) = line.rsplit_once(char::is_whitespace).ok_or_else(|| parse_err(path, i + 1, "missing probability"))?;
        let x: Observation = values.parse().map_err(|e| parse_err(path, i + 1, e))?;
        let true_p = parse_probability(p).map_err(|e| parse_err(path, i + 1, e))?;
        out.push(LabeledQuery { x, true_p, heavy: false });
    }
    Ok(out)
}

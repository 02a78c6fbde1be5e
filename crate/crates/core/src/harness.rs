//! Space-budget sweeps comparing the estimators on a common set of queries.
//!
//! Every `(run, estimator, budget)` cell owns its sketch and derives its hash
//! seed from those coordinates alone, so results do not depend on how cells
//! are scheduled across threads.

use std::collections::BTreeMap;
use std::f64::consts::E;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::model::{ExactEstimator, Observation, TreeModel};
use crate::sketches::{CmSketch, EstimatorKind, PointEstimator, Sketch, SketchConfig};
use crate::synth::{self, LabeledQuery, NaiveBayesSpec, Sampler};

/// `p_true / e <= p_hat <= e p_true`.
pub fn is_precise(p_hat: f64, p_true: f64) -> Result<bool> {
    if p_true <= 0.0 || p_true.is_nan() {
        return Err(Error::ZeroTruth);
    }
    Ok(p_true / E <= p_hat && p_hat <= E * p_true)
}

/// Which error guarantee an envelope is computed for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnvelopeKind {
    /// Single hash, failure probability `delta`: `eps_k = 2K / (f_k delta m)`.
    GmHash { delta: f64 },
    /// Median of replicas; the single-hash bound at `delta = 1/4`.
    GmSketch,
    /// Count-min per factor: `eps_k = e / (f_k m)`.
    GmFactorSketch,
}

/// Multiplicative envelope `(prod_k (1 - eps_k), prod_k (1 + eps_k))` around
/// the exact estimate at `x`, where `f_1 = P̄_1(x_1)` and
/// `f_k = P̄_k(x_k, x_pa(k))`. Lower factors are floored at 0.
pub fn envelope(exact: &ExactEstimator, x: &Observation, bins: u64, kind: EnvelopeKind) -> Result<(f64, f64)> {
    let model = exact.model();
    model.check(x)?;
    if exact.n() == 0 {
        return Err(Error::Empty);
    }
    if bins == 0 {
        return Err(Error::ZeroBins);
    }
    let k = model.len() as f64;
    let scale = match kind {
        EnvelopeKind::GmHash { delta } => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
            }
            2.0 * k / delta
        }
        EnvelopeKind::GmSketch => 2.0 * k / 0.25,
        EnvelopeKind::GmFactorSketch => E,
    };
    let freqs = std::iter::once((0, exact.marginal(0, x[0])))
        .chain(model.edges().map(|(c, p)| (c, exact.joint(c, x[c], x[p]))));
    let (mut lower, mut upper) = (1.0, 1.0);
    for (variable, f) in freqs {
        if f <= 0.0 {
            return Err(Error::UnboundedEnvelope { variable: variable + 1 });
        }
        let eps = scale / (f * bins as f64);
        lower *= (1.0 - eps).max(0.0);
        upper *= 1.0 + eps;
    }
    Ok((lower, upper))
}

/// Where training data and test queries come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    /// Synthetic naive Bayes data; queries are heavy points.
    Spec(NaiveBayesSpec),
    /// A model file plus a stream file (one observation per line). Queries
    /// come from `queries` (observation plus probability per line) or, when
    /// absent, from the first distinct observations of the stream.
    External { model: PathBuf, stream: PathBuf, queries: Option<PathBuf> },
}

/// What an estimate is compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    /// The query's stored probability (analytic for synthetic data).
    #[default]
    Analytic,
    /// The exact factored MLE of the training stream.
    Oracle,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// `2^lo, 2^(lo+1), ..., 2^hi`.
pub fn log2_budgets(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|e| 1u64 << e).collect()
}

fn default_n_train() -> usize {
    1_000_000
}
fn default_n_test() -> usize {
    500_000
}
fn default_depth() -> usize {
    5
}
fn default_budgets() -> Vec<u64> {
    log2_budgets(8, 24)
}
fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}
fn default_runs() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub workload: Workload,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Hash replicas for every estimator except `gmhash`.
    #[serde(default = "default_depth", rename = "d")]
    pub depth: usize,
    /// Per-estimator replica overrides.
    #[serde(default, rename = "d_overrides", skip_serializing_if = "BTreeMap::is_empty")]
    pub depth_overrides: BTreeMap<EstimatorKind, usize>,
    /// Total counters per sketch, strictly increasing.
    #[serde(default = "default_budgets")]
    pub budgets: Vec<u64>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub truth: Truth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl ExperimentConfig {
    /// Full protocol on a synthetic spec: `10^6` training points, `5 * 10^5`
    /// heavy queries, `d = 5`, budgets `2^8..2^24`, 20 runs.
    pub fn synthetic(spec: NaiveBayesSpec) -> Self {
        ExperimentConfig {
            workload: Workload::Spec(spec),
            n_train: default_n_train(),
            n_test: default_n_test(),
            depth: default_depth(),
            depth_overrides: BTreeMap::new(),
            budgets: default_budgets(),
            estimators: default_estimators(),
            runs: default_runs(),
            master_seed: 0,
            truth: Truth::Analytic,
            output: None,
            format: None,
        }
    }

    pub fn easy() -> Self {
        Self::synthetic(NaiveBayesSpec::EASY)
    }

    pub fn hard() -> Self {
        Self::synthetic(NaiveBayesSpec::HARD)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn depth_for(&self, kind: EstimatorKind) -> usize {
        kind.effective_depth(self.depth_overrides.get(&kind).copied().unwrap_or(self.depth))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be positive");
        }
        if self.depth == 0 || self.depth_overrides.values().any(|&d| d == 0) {
            return bad("d must be at least 1");
        }
        if self.budgets.is_empty() || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad("budgets must be non-empty and strictly increasing");
        }
        if self.estimators.is_empty() {
            return bad("no estimators selected");
        }
        if let Workload::Spec(spec) = &self.workload {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Aggregated outcome of one `(estimator, budget)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub estimator: EstimatorKind,
    pub budget_counters: u64,
    /// Bins per table, `None` when the budget cannot hold a single bin.
    pub m: Option<u64>,
    pub d: usize,
    pub run_count: usize,
    pub imprecise_fraction_mean: Option<f64>,
    /// Sample standard deviation over runs (0 for a single run).
    pub imprecise_fraction_std: Option<f64>,
    /// Mean wall-clock seconds per run to build and query the sketch.
    pub seconds: f64,
    #[serde(default)]
    pub imprecise_fractions: Vec<f64>,
}

impl CellResult {
    pub fn supported(&self) -> bool {
        self.m.is_some()
    }

    /// Standard error of the mean over runs.
    pub fn standard_error(&self) -> Option<f64> {
        self.imprecise_fraction_std.map(|s| s / (self.run_count as f64).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn cell(&self, estimator: EstimatorKind, budget: u64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.estimator == estimator && c.budget_counters == budget)
    }

    /// Cells of one estimator in budget order.
    pub fn series(&self, estimator: EstimatorKind) -> Vec<&CellResult> {
        let mut v: Vec<_> = self.cells.iter().filter(|c| c.estimator == estimator).collect();
        v.sort_by_key(|c| c.budget_counters);
        v
    }

    /// Smallest budget from which the mean imprecise fraction stays at or
    /// below `threshold` for every larger budget in the sweep.
    pub fn crossing_budget(&self, estimator: EstimatorKind, threshold: f64) -> Option<u64> {
        let series = self.series(estimator);
        let mut crossing = None;
        for c in series.iter().rev() {
            match c.imprecise_fraction_mean {
                Some(f) if f <= threshold => crossing = Some(c.budget_counters),
                _ => break,
            }
        }
        crossing
    }

    /// Same measurements, ignoring wall-clock time.
    pub fn same_measurements(&self, other: &ExperimentResult) -> bool {
        let strip = |r: &ExperimentResult| {
            r.cells.iter().map(|c| CellResult { seconds: 0.0, ..c.clone() }).collect::<Vec<_>>()
        };
        strip(self) == strip(other)
    }
}

/// Training data and queries for one run.
struct RunData {
    exact: ExactEstimator,
    /// Whole-vector keys, `stride` limbs each, present when CM is evaluated.
    cm_keys: Vec<u32>,
    stride: usize,
    queries: Vec<LabeledQuery>,
}

fn encoder(model: &TreeModel) -> Result<CmSketch> {
    CmSketch::new(model.clone(), SketchConfig::new(1, 1, 0)?)
}

impl RunData {
    fn new(model: &TreeModel) -> Result<Self> {
        let stride = encoder(model)?.hashes()[0].limbs();
        Ok(RunData { exact: ExactEstimator::new(model.clone())?, cm_keys: Vec::new(), stride, queries: Vec::new() })
    }

    fn ingest(&mut self, x: &Observation, cm: Option<&CmSketch>) -> Result<()> {
        self.exact.update(x)?;
        if let Some(cm) = cm {
            let key = cm.encode(x)?;
            let start = self.cm_keys.len();
            self.cm_keys.extend_from_slice(&key);
            self.cm_keys.resize(start + self.stride, 0);
        }
        Ok(())
    }

    /// Queries paired with the probability each estimate is judged against.
    /// Queries whose oracle probability is 0 are dropped.
    fn judged(&self, truth: Truth) -> Result<Vec<(&Observation, f64)>> {
        let mut out = Vec::with_capacity(self.queries.len());
        for q in &self.queries {
            let p = match truth {
                Truth::Analytic => q.true_p,
                Truth::Oracle => self.exact.query(&q.x)?,
            };
            if p > 0.0 {
                out.push((&q.x, p));
            }
        }
        Ok(out)
    }
}

const TAG_STREAM: u64 = 1;
const TAG_QUERIES: u64 = 2;
const TAG_SKETCH: u64 = 3;

fn kind_id(kind: EstimatorKind) -> u64 {
    match kind {
        EstimatorKind::CountMin => 0,
        EstimatorKind::GmHash => 1,
        EstimatorKind::GmSketch => 2,
        EstimatorKind::GmFactorSketch => 3,
    }
}

fn synthetic_run(cfg: &ExperimentConfig, spec: &NaiveBayesSpec, model: &TreeModel, run: usize) -> Result<RunData> {
    let want_cm = cfg.estimators.contains(&EstimatorKind::CountMin);
    let mut data = RunData::new(model)?;
    let cm = if want_cm { Some(encoder(model)?) } else { None };
    if want_cm {
        data.cm_keys.reserve(cfg.n_train * data.stride);
    }
    let mut sampler = Sampler::new(*spec, derive_seed(cfg.master_seed, &[TAG_STREAM, run as u64]))?;
    for _ in 0..cfg.n_train {
        data.ingest(&sampler.draw(), cm.as_ref())?;
    }
    let qseed = derive_seed(cfg.master_seed, &[TAG_QUERIES, run as u64]);
    data.queries = synth::sample_heavy_queries(spec, cfg.n_test, qseed)?;
    Ok(data)
}

fn load_external(cfg: &ExperimentConfig, model_path: &Path, stream: &Path, queries: Option<&Path>) -> Result<(TreeModel, RunData)> {
    let model = TreeModel::load(model_path)?;
    let want_cm = cfg.estimators.contains(&EstimatorKind::CountMin);
    let mut data = RunData::new(&model)?;
    let cm = if want_cm { Some(encoder(&model)?) } else { None };
    let mut seen = std::collections::HashSet::new();
    let mut first = Vec::new();
    let mut taken = 0usize;
    synth::for_each_observation(stream, |x| {
        if taken >= cfg.n_train {
            return Ok(());
        }
        taken += 1;
        data.ingest(&x, cm.as_ref())?;
        if queries.is_none() && first.len() < cfg.n_test && seen.insert(x.clone()) {
            first.push(x);
        }
        Ok(())
    })?;
    if data.exact.n() == 0 {
        return Err(Error::InvalidParameter(format!("stream {} is empty", stream.display())));
    }
    data.queries = match queries {
        Some(path) => {
            let mut q = synth::read_queries(path)?;
            q.truncate(cfg.n_test);
            for query in &q {
                model.check(&query.x)?;
            }
            q
        }
        None => {
            if cfg.truth == Truth::Analytic {
                return Err(Error::InvalidParameter(
                    "analytic truth needs a query file with probabilities; use truth = \"oracle\"".into(),
                ));
            }
            first.into_iter().map(|x| LabeledQuery { x, true_p: f64::NAN, heavy: false }).collect()
        }
    };
    Ok((model, data))
}

struct CellOutcome {
    fraction: Option<f64>,
    seconds: f64,
}

fn run_cell(
    cfg: &ExperimentConfig,
    model: &TreeModel,
    data: &RunData,
    judged: &[(&Observation, f64)],
    run: usize,
    kind: EstimatorKind,
    budget: u64,
) -> Result<CellOutcome> {
    let depth = cfg.depth_for(kind);
    let Some(bins) = kind.bins_for_budget(model, depth, budget) else {
        return Ok(CellOutcome { fraction: None, seconds: 0.0 });
    };
    let start = Instant::now();
    let seed = derive_seed(cfg.master_seed, &[TAG_SKETCH, run as u64, kind_id(kind), budget]);
    let mut sketch = Sketch::new(kind, model.clone(), SketchConfig::new(bins, depth, seed)?)?;
    match &mut sketch {
        Sketch::CountMin(cm) => {
            for key in data.cm_keys.chunks_exact(data.stride) {
                cm.update_encoded(key, 1);
            }
        }
        s => s.absorb(&data.exact)?,
    }
    let mut imprecise = 0usize;
    for &(x, p_true) in judged {
        if !is_precise(sketch.query(x)?, p_true)? {
            imprecise += 1;
        }
    }
    let fraction = if judged.is_empty() { 0.0 } else { imprecise as f64 / judged.len() as f64 };
    Ok(CellOutcome { fraction: Some(fraction), seconds: start.elapsed().as_secs_f64() })
}

/// Runs the sweep. `on_run` is called after each completed run.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut on_run: impl FnMut(usize)) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (model, shared) = match &cfg.workload {
        Workload::Spec(spec) => (synth::tree_of(spec)?, None),
        Workload::External { model, stream, queries } => {
            let (m, d) = load_external(cfg, model, stream, queries.as_deref())?;
            (m, Some(d))
        }
    };
    let cells: Vec<(EstimatorKind, u64)> =
        cfg.estimators.iter().flat_map(|&k| cfg.budgets.iter().map(move |&b| (k, b))).collect();
    let mut outcomes: Vec<Vec<CellOutcome>> = (0..cells.len()).map(|_| Vec::with_capacity(cfg.runs)).collect();

    for run in 0..cfg.runs {
        let owned;
        let data = match (&shared, &cfg.workload) {
            (Some(d), _) => d,
            (None, Workload::Spec(spec)) => {
                owned = synthetic_run(cfg, spec, &model, run)?;
                &owned
            }
            (None, Workload::External { .. }) => unreachable!("external data is loaded up front"),
        };
        let judged = data.judged(cfg.truth)?;
        let results: Vec<Result<CellOutcome>> = cells
            .par_iter()
            .map(|&(kind, budget)| run_cell(cfg, &model, data, &judged, run, kind, budget))
            .collect();
        for (slot, r) in outcomes.iter_mut().zip(results) {
            slot.push(r?);
        }
        on_run(run);
    }

    let cells = cells
        .into_iter()
        .zip(outcomes)
        .map(|((kind, budget), runs)| {
            let depth = cfg.depth_for(kind);
            let m = kind.bins_for_budget(&model, depth, budget);
            let fractions: Vec<f64> = runs.iter().filter_map(|o| o.fraction).collect();
            let (mean, std) = if m.is_some() { mean_std(&fractions) } else { (None, None) };
            CellResult {
                estimator: kind,
                budget_counters: budget,
                m,
                d: depth,
                run_count: cfg.runs,
                imprecise_fraction_mean: mean,
                imprecise_fraction_std: std,
                seconds: runs.iter().map(|o| o.seconds).sum::<f64>() / cfg.runs as f64,
                imprecise_fractions: fractions,
            }
        })
        .collect();
    Ok(ExperimentResult { cells })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(cfg, |_| {})
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (Some(mean), Some(var.sqrt()))
}

#[derive(Serialize)]
struct CsvRow {
    estimator: EstimatorKind,
    budget_counters: u64,
    m: Option<u64>,
    d: usize,
    run_count: usize,
    imprecise_fraction_mean: Option<f64>,
    imprecise_fraction_std: Option<f64>,
    seconds: f64,
}

const CSV_HEADER: [&str; 8] = [
    "estimator",
    "budget_counters",
    "m",
    "d",
    "run_count",
    "imprecise_fraction_mean",
    "imprecise_fraction_std",
    "seconds",
];

/// Writes the result as CSV (one row per cell) or pretty JSON.
pub fn emit(result: &ExperimentResult, format: Format, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    emit_to(result, format, BufWriter::new(file))
}

pub fn emit_to(result: &ExperimentResult, format: Format, mut out: impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(CSV_HEADER)?;
            for c in &result.cells {
                w.serialize(CsvRow {
                    estimator: c.estimator,
                    budget_counters: c.budget_counters,
                    m: c.m,
                    d: c.d,
                    run_count: c.run_count,
                    imprecise_fraction_mean: c.imprecise_fraction_mean,
                    imprecise_fraction_std: c.imprecise_fraction_std,
                    seconds: c.seconds,
                })?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, result)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

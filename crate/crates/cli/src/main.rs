use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gmsketch::harness::{self, ExperimentConfig, ExperimentResult, Format};
use gmsketch::synth::{self, NaiveBayesSpec};
use gmsketch::{EstimatorKind, Observation, PointEstimator, Sketch, SketchConfig, TreeModel};

/// Worker thread count for experiment cells.
const THREADS_VAR: &str = "GMSKETCH_THREADS";

#[derive(Parser)]
#[command(name = "gmsketch", version, about = "Sketches of tree-structured graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep budgets on the easy naive Bayes problem (K=4, M=2^16, N=8).
    SynthEasy(Sweep),
    /// Sweep budgets on the hard naive Bayes problem (K=32, M=2^16, N=64).
    SynthHard(Sweep),
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build a sketch snapshot from a model and a stream file.
    Build {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "gmfactor")]
        estimator: EstimatorKind,
        /// Bins per table.
        #[arg(long, default_value_t = 1024)]
        m: u64,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the probability of one observation from a snapshot.
    Query {
        #[arg(long)]
        snapshot: PathBuf,
        /// Space-separated 1-based values, root first.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Write a synthetic model, training stream and labelled heavy queries.
    Sample {
        #[arg(long, value_enum, default_value = "easy")]
        problem: Problem,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; receives model.json, stream.txt and queries.txt.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Easy,
    Hard,
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of cm, gmhash, gmsketch, gmfactor.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorKind>>,
    /// Log-2 budget range, e.g. `8:24`.
    #[arg(long)]
    budgets: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OutputArgs {
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

fn parse_budget_range(s: &str) -> Result<Vec<u64>> {
    let (lo, hi) = s.split_once(':').context("budget range must look like LO:HI")?;
    let (lo, hi): (u32, u32) = (lo.trim().parse()?, hi.trim().parse()?);
    if lo > hi || hi > 62 {
        bail!("bad budget range {s}");
    }
    Ok(harness::log2_budgets(lo, hi))
}

impl Sweep {
    fn apply(self, mut cfg: ExperimentConfig) -> Result<(ExperimentConfig, OutputArgs)> {
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.n_train {
            cfg.n_train = v;
        }
        if let Some(v) = self.n_test {
            cfg.n_test = v;
        }
        if let Some(v) = self.d {
            cfg.depth = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.estimators {
            cfg.estimators = v;
        }
        if let Some(b) = self.budgets {
            cfg.budgets = parse_budget_range(&b)?;
        }
        Ok((cfg, self.output))
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_VAR}={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn sweep(cfg: ExperimentConfig, output: OutputArgs) -> Result<()> {
    cfg.validate()?;
    let runs = cfg.runs;
    let result = harness::run_experiment_with(&cfg, |r| eprintln!("run {}/{runs} done", r + 1))?;
    let out = output.out.or(cfg.output.clone());
    let format = output.format.map(Format::from).or(cfg.format).unwrap_or_default();
    write_result(&result, format, out)
}

fn write_result(result: &ExperimentResult, format: Format, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            harness::emit(result, format, &path).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => harness::emit_to(result, format, io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthEasy(s) => {
            configure_threads()?;
            let (cfg, out) = s.apply(ExperimentConfig::easy())?;
            sweep(cfg, out)
        }
        Command::SynthHard(s) => {
            configure_threads()?;
            let (cfg, out) = s.apply(ExperimentConfig::hard())?;
            sweep(cfg, out)
        }
        Command::Run { config, output } => {
            configure_threads()?;
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            sweep(cfg, output)
        }
        Command::Build { model, stream, out, estimator, m, d, seed } => {
            let model = TreeModel::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let config = SketchConfig::new(m, estimator.effective_depth(d), seed)?;
            let mut sketch = Sketch::new(estimator, model, config)?;
            synth::for_each_observation(&stream, |x| sketch.update(&x))
                .with_context(|| format!("reading {}", stream.display()))?;
            sketch.save(&out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("{} sketch of {} observations, {} counters -> {}", estimator, sketch.n(), sketch.space(), out.display());
            Ok(())
        }
        Command::Query { snapshot, x } => {
            let sketch = Sketch::load(&snapshot).with_context(|| format!("loading {}", snapshot.display()))?;
            let x: Observation = x.parse()?;
            let p = sketch.query(&x)?;
            writeln!(io::stdout(), "{p:e}")?;
            Ok(())
        }
        Command::Sample { problem, n, queries, seed, out } => {
            let spec = match problem {
                Problem::Easy => NaiveBayesSpec::EASY,
                Problem::Hard => NaiveBayesSpec::HARD,
            };
            std::fs::create_dir_all(&out)?;
            let model = synth::tree_of(&spec)?;
            model.save(&out.join("model.json"))?;
            synth::write_stream(&out.join("stream.txt"), &synth::sample_stream(&spec, n, seed)?)?;
            if queries > 0 {
                let q = synth::sample_heavy_queries(&spec, queries, seed.wrapping_add(1))?;
                synth::write_queries(&out.join("queries.txt"), &q)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

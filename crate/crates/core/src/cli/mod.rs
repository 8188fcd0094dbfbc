//! `aisrec` command line: `generate`, `eval`, `sweep` and `stats`.
//!
//! Experiment settings come from an optional JSON file (`--config`); any flag
//! given on the command line overrides the file.

mod commands;
mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::dataset::{DatasetError, GeneratorParams, ScoreScale};
use crate::evaluation::{EvalError, Metric, PredictorKind};
use crate::predictor::WeightNorm;

pub use commands::{
    cmd_eval, cmd_generate, cmd_stats, cmd_sweep, grid_dir_name, per_user_file, EvalReport, StatsReport,
    SweepPoint, SUMMARY_FILE, SWEEP_FILE, SWEEP_HEADER,
};
pub use config::{DatasetSource, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unknown metric column {0:?}")]
    UnknownMetric(String),
    #[error("per-user files do not cover the same users (e.g. {0})")]
    UnpairedUsers(String),
}

#[derive(Parser, Debug)]
#[command(name = "aisrec", about = "Immune-network collaborative filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic vote file.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the leave-one-vote-out protocol and write CSV summaries.
    Eval(ExperimentArgs),
    /// Evaluate every (k1, k2) grid point and write a tidy CSV.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long = "k1-grid", value_delimiter = ',', required = true)]
        k1_grid: Vec<f64>,
        #[arg(long = "k2-grid", value_delimiter = ',', required = true)]
        k2_grid: Vec<f64>,
    },
    /// Wilcoxon signed-rank test on one column of two per-user CSVs.
    Stats {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "abs_error")]
        metric: String,
    },
}

#[derive(Args, Debug, Default)]
struct GenArgs {
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    movies: Option<usize>,
    #[arg(long)]
    genres: Option<usize>,
    #[arg(long)]
    min_votes_per_user: Option<usize>,
    #[arg(long)]
    max_votes_per_user: Option<usize>,
    #[arg(long)]
    affinity_spread: Option<f64>,
    #[arg(long)]
    noise_spread: Option<f64>,
    /// Generator seed.
    #[arg(long = "gen-seed")]
    gen_seed: Option<u64>,
}

impl GenArgs {
    fn is_empty(&self) -> bool {
        self.users.is_none()
            && self.movies.is_none()
            && self.genres.is_none()
            && self.min_votes_per_user.is_none()
            && self.max_votes_per_user.is_none()
            && self.affinity_spread.is_none()
            && self.noise_spread.is_none()
            && self.gen_seed.is_none()
    }

    fn apply(&self, p: &mut GeneratorParams) {
        set(&mut p.n_users, self.users);
        set(&mut p.n_movies, self.movies);
        set(&mut p.n_genres, self.genres);
        set(&mut p.affinity_spread, self.affinity_spread);
        set(&mut p.noise_spread, self.noise_spread);
        set(&mut p.seed, self.gen_seed);
        let lo = self.min_votes_per_user.unwrap_or(*p.votes_per_user.start());
        let hi = self.max_votes_per_user.unwrap_or(*p.votes_per_user.end());
        p.votes_per_user = lo..=hi;
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PredictorArg {
    Ais,
    #[value(alias = "simple-pearson")]
    Sp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Unit,
    Five,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Vote CSV; without it a synthetic dataset is generated in memory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unit")]
    scale: ScaleArg,
    #[command(flatten)]
    gen: GenArgs,

    #[arg(long, value_enum)]
    predictor: Option<PredictorArg>,
    /// Simple Pearson neighbourhood size.
    #[arg(long)]
    k: Option<usize>,
    /// Simple Pearson reviewer budget.
    #[arg(long)]
    sp_budget: Option<usize>,
    /// Take k and the reviewer budget from an immune run's summary CSV.
    #[arg(long)]
    match_summary: Option<PathBuf>,

    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    #[arg(long)]
    k3: Option<f64>,
    #[arg(long)]
    pool_capacity: Option<usize>,
    #[arg(long)]
    init_concentration: Option<f64>,
    #[arg(long)]
    max_concentration: Option<f64>,
    #[arg(long)]
    min_concentration: Option<f64>,
    #[arg(long)]
    antigen_concentration: Option<f64>,
    #[arg(long)]
    stability_window: Option<usize>,
    #[arg(long)]
    maturation_cap: Option<usize>,

    #[arg(long)]
    overlap_penalty: Option<u32>,
    #[arg(long)]
    no_overlap_default: Option<f64>,
    #[arg(long)]
    zero_variance_default: Option<f64>,

    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    max_reviewers: Option<usize>,
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_votes: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Admit antibodies whether or not they voted on the reserved film.
    #[arg(long)]
    no_target_filter: bool,
    /// Divide by the signed weight sum instead of the absolute sum.
    #[arg(long)]
    literal_denominator: bool,
    /// Write antibody concentration trajectories.
    #[arg(long)]
    trace: bool,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Mean neighbourhood size and reviewers examined from a summary's aggregate row.
fn read_match_summary(path: &Path) -> Result<(usize, usize), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let row: Vec<&str> = lines
        .find(|l| l.starts_with("aggregate,"))
        .ok_or_else(|| CliError::Config(format!("{}: no aggregate row", path.display())))?
        .split(',')
        .collect();
    let get = |m: Metric| -> Result<usize, CliError> {
        let col = format!("{m}_mean");
        header
            .iter()
            .position(|h| *h == col)
            .and_then(|i| row.get(i))
            .and_then(|v| v.parse::<f64>().ok())
            .map(|v| v.round().max(1.0) as usize)
            .ok_or_else(|| CliError::Config(format!("{}: missing {col}", path.display())))
    };
    Ok((get(Metric::NeighborhoodSize)?, get(Metric::ReviewersExamined)?))
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.data {
            let scale = match self.scale {
                ScaleArg::Unit => ScoreScale::UnitGrid,
                ScaleArg::Five => ScoreScale::ZeroToFive,
            };
            c.dataset = DatasetSource::File { path: path.clone(), scale };
        } else if !self.gen.is_empty() {
            let mut params = match &c.dataset {
                DatasetSource::Synthetic(p) => p.clone(),
                DatasetSource::File { .. } => GeneratorParams::default(),
            };
            self.gen.apply(&mut params);
            c.dataset = DatasetSource::Synthetic(params);
        }

        let p = &mut c.predictor;
        let (mut k, mut budget) = match p.kind {
            PredictorKind::SimplePearson { k, reviewer_budget } => (Some(k), reviewer_budget),
            PredictorKind::Ais => (None, None),
        };
        if let Some(path) = &self.match_summary {
            let (mk, mb) = read_match_summary(path)?;
            k = Some(mk);
            budget = Some(mb);
        }
        set(&mut k, self.k.map(Some));
        set(&mut budget, self.sp_budget.map(Some));
        let sp = match self.predictor {
            Some(PredictorArg::Sp) => true,
            Some(PredictorArg::Ais) => false,
            None => matches!(p.kind, PredictorKind::SimplePearson { .. }) || self.match_summary.is_some(),
        };
        p.kind = if sp {
            let k = k.ok_or_else(|| CliError::Config("simple Pearson needs --k or --match-summary".into()))?;
            PredictorKind::SimplePearson { k, reviewer_budget: budget }
        } else {
            PredictorKind::Ais
        };

        let im = &mut p.immune;
        set(&mut im.stimulation, self.k1);
        set(&mut im.suppression, self.k2);
        set(&mut im.death_rate, self.k3);
        set(&mut im.pool_capacity, self.pool_capacity);
        set(&mut im.init_concentration, self.init_concentration);
        set(&mut im.max_concentration, self.max_concentration);
        set(&mut im.min_concentration, self.min_concentration);
        set(&mut im.antigen_concentration, self.antigen_concentration);
        set(&mut im.stability_window, self.stability_window);
        set(&mut im.maturation_cap, self.maturation_cap);
        let sim = &mut p.similarity;
        set(&mut sim.overlap_penalty, self.overlap_penalty);
        set(&mut sim.no_overlap_default, self.no_overlap_default);
        set(&mut sim.zero_variance_default, self.zero_variance_default);
        set(&mut p.min_votes, self.min_votes);
        if self.no_target_filter {
            p.filter_target = false;
        }
        if self.literal_denominator {
            p.weight_norm = WeightNorm::Signed;
        }

        set(&mut c.n_test, self.n_test);
        set(&mut c.max_reviewers, self.max_reviewers);
        set(&mut c.n_runs, self.n_runs);
        set(&mut c.seed, self.seed);
        set(&mut c.out_dir, self.out_dir.clone());
        c.trace |= self.trace;
        c.validate()?;
        Ok(c)
    }
}

fn fmt_mean(v: f64) -> String {
    if v.is_nan() { "n/a".into() } else { format!("{v:.4}") }
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            e.print().map_err(|e| CliError::Io(e.to_string()))?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.to_string().lines().next().unwrap_or_default().to_string())),
    };
    match cli.command {
        Command::Generate { gen, out } => {
            let mut params = GeneratorParams::default();
            gen.apply(&mut params);
            cmd_generate(&params, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Eval(args) => {
            let config = args.resolve()?;
            let report = cmd_eval(&config)?;
            print_aggregate(&report);
        }
        Command::Sweep { exp, k1_grid, k2_grid } => {
            let config = exp.resolve()?;
            let points = cmd_sweep(&config, &k1_grid, &k2_grid)?;
            for p in &points {
                let m = |metric| fmt_mean(p.aggregate.metric(metric).mean);
                println!(
                    "k1={} k2={}  mae={} tau={} neighbours={} reviewers={}",
                    p.stimulation,
                    p.suppression,
                    m(Metric::Mae),
                    m(Metric::KendallTau),
                    m(Metric::NeighborhoodSize),
                    m(Metric::ReviewersExamined)
                );
            }
            println!("wrote {}", config.out_dir.join(SWEEP_FILE).display());
        }
        Command::Stats { a, b, metric } => match cmd_stats(&a, &b, &metric)? {
            StatsReport::Test(r) => println!(
                "W={} n_effective={} p={:.6} {} ({})",
                r.statistic,
                r.n_effective,
                r.p_value,
                if r.significant_at_95 { "significant at 95%" } else { "not significant at 95%" },
                if r.exact { "exact" } else { "normal approximation" }
            ),
            StatsReport::AllZero { n_pairs } => {
                println!("W=0 n_effective=0 p=1 not significant at 95% (all {n_pairs} differences zero)")
            }
        },
    }
    Ok(())
}

fn print_aggregate(report: &EvalReport) {
    let agg = &report.aggregate;
    println!("runs={} fingerprint={}", agg.n_runs, agg.fingerprint);
    for m in Metric::ALL {
        let s = agg.metric(m);
        println!("{:<20} mean={} std={:.4}", m.name(), fmt_mean(s.mean), s.std);
    }
    println!("wrote {}", report.summary_path.display());
}

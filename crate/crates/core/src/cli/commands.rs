use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dataset::{generate_synthetic, write_votes, GeneratorParams, UserId};
use crate::evaluation::{
    aggregate_runs, run_experiment, wilcoxon_signed_rank, write_per_user, write_summary, EvalError,
    Metric, RunAggregate, RunMetrics, WilcoxonResult,
};
use crate::immune::write_trace;

use super::config::ExperimentConfig;
use super::CliError;

/// Writes through a sibling temp file and renames it into place.
pub(crate) fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut file = std::io::BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut file)?;
        file.into_inner().map_err(|e| e.into_error())?.sync_all()
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(e));
    }
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn cmd_generate(params: &GeneratorParams, out: &Path) -> Result<(), CliError> {
    let dataset = generate_synthetic(params)?;
    write_atomic(out, |w| write_votes(&dataset, w))
}

pub const SUMMARY_FILE: &str = "run_summary.csv";

pub fn per_user_file(seed: u64) -> String {
    format!("per_user_seed{seed}.csv")
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub runs: Vec<RunMetrics>,
    pub aggregate: RunAggregate,
    pub summary_path: PathBuf,
    pub per_user_paths: Vec<PathBuf>,
}

/// Runs `n_runs` experiments with seeds `seed, seed + 1, ...` and writes the
/// run summary plus one per-user file per run. Nothing is written unless
/// every run succeeds.
pub fn cmd_eval(config: &ExperimentConfig) -> Result<EvalReport, CliError> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    let mut outputs = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs as u64 {
        let seed = config.seed.wrapping_add(run);
        outputs.push(run_experiment(
            &dataset,
            config.n_test,
            config.max_reviewers,
            &config.predictor,
            seed,
            config.trace,
        )?);
    }
    let runs: Vec<RunMetrics> = outputs.iter().map(|o| o.metrics.clone()).collect();
    let aggregate = aggregate_runs(&runs)?;

    let mut per_user_paths = Vec::new();
    for out in &outputs {
        let path = config.out_dir.join(per_user_file(out.metrics.seed));
        write_atomic(&path, |w| write_per_user(&out.users, w))?;
        per_user_paths.push(path);
        for (user, rows) in &out.traces {
            let name = format!("trace_seed{}_user{user}.csv", out.metrics.seed);
            write_atomic(&config.out_dir.join("traces").join(name), |w| write_trace(rows, w))?;
        }
    }
    let summary_path = config.out_dir.join(SUMMARY_FILE);
    write_atomic(&summary_path, |w| write_summary(&runs, &aggregate, w))?;
    Ok(EvalReport { runs, aggregate, summary_path, per_user_paths })
}

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "k1,k2,metric,mean,std";

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub stimulation: f64,
    pub suppression: f64,
    pub aggregate: RunAggregate,
    pub out_dir: PathBuf,
}

pub fn grid_dir_name(k1: f64, k2: f64) -> String {
    format!("k1_{k1}_k2_{k2}")
}

/// Every (k1, k2) pair runs the same seeds, so grid points are paired.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    stimulation: &[f64],
    suppression: &[f64],
) -> Result<Vec<SweepPoint>, CliError> {
    if stimulation.is_empty() || suppression.is_empty() {
        return Err(CliError::Config("sweep grid must not be empty".into()));
    }
    let mut points = Vec::new();
    for &k1 in stimulation {
        for &k2 in suppression {
            let mut point = config.clone();
            point.predictor.immune.stimulation = k1;
            point.predictor.immune.suppression = k2;
            point.out_dir = config.out_dir.join(grid_dir_name(k1, k2));
            let report = cmd_eval(&point)?;
            points.push(SweepPoint {
                stimulation: k1,
                suppression: k2,
                aggregate: report.aggregate,
                out_dir: point.out_dir,
            });
        }
    }
    write_atomic(&config.out_dir.join(SWEEP_FILE), |w| {
        writeln!(w, "{SWEEP_HEADER}")?;
        for p in &points {
            for m in Metric::ALL {
                let s = p.aggregate.metric(m);
                let mean = if s.mean.is_nan() { String::new() } else { s.mean.to_string() };
                writeln!(w, "{},{},{},{},{}", p.stimulation, p.suppression, m, mean, s.std)?;
            }
        }
        Ok(())
    })?;
    Ok(points)
}

#[derive(Clone, Debug, PartialEq)]
pub enum StatsReport {
    Test(WilcoxonResult),
    /// Every paired difference was zero: p = 1, not significant.
    AllZero { n_pairs: usize },
}

impl StatsReport {
    pub fn significant(&self) -> bool {
        matches!(self, StatsReport::Test(r) if r.significant_at_95)
    }
}

fn read_column(path: &Path, metric: &str) -> Result<BTreeMap<UserId, Option<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let user_col = header
        .iter()
        .position(|h| *h == "user_id")
        .ok_or_else(|| CliError::Config(format!("{}: no user_id column", path.display())))?;
    let col = header
        .iter()
        .position(|h| *h == metric)
        .ok_or_else(|| CliError::UnknownMetric(metric.to_string()))?;
    let mut values = BTreeMap::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = || CliError::Config(format!("{}: malformed row {}", path.display(), i + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(bad());
        }
        let user: UserId = fields[user_col].parse().map_err(|_| bad())?;
        let value = match fields[col] {
            "" => None,
            "true" => Some(1.0),
            "false" => Some(0.0),
            v => Some(v.parse::<f64>().map_err(|_| bad())?),
        };
        values.insert(user, value);
    }
    Ok(values)
}

/// Pairs two per-user files by user id and tests one column.
pub fn cmd_stats(a: &Path, b: &Path, metric: &str) -> Result<StatsReport, CliError> {
    let left = read_column(a, metric)?;
    let right = read_column(b, metric)?;
    if !left.keys().eq(right.keys()) {
        let only: Vec<String> = left
            .keys()
            .filter(|k| !right.contains_key(k))
            .chain(right.keys().filter(|k| !left.contains_key(k)))
            .take(5)
            .map(|k| k.to_string())
            .collect();
        return Err(CliError::UnpairedUsers(only.join(" ")));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = left
        .values()
        .zip(right.values())
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    match wilcoxon_signed_rank(&xs, &ys) {
        Ok(r) => Ok(StatsReport::Test(r)),
        Err(EvalError::AllZeroDifferences) => Ok(StatsReport::AllZero { n_pairs: xs.len() }),
        Err(e) => Err(e.into()),
    }
}

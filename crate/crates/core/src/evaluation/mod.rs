//! Leave-one-vote-out evaluation: per-user metrics, run aggregates, and
//! comparisons between predictor configurations.

pub mod rank;
pub mod wilcoxon;

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{reserve_vote, split_test_users, Dataset, DatasetError, UserId, UserProfile};
use crate::immune::{ImmuneParams, TraceRow};
use crate::predictor::{
    predict, recommend, select_neighbors_ais, select_neighbors_sp, PredictError, WeightNorm,
};
use crate::similarity::SimilarityParams;

pub use rank::{discordant_pairs, kendall_tau, RankedPair};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("rank correlation needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired samples differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("all paired differences are zero (p = 1, not significant)")]
    AllZeroDifferences,
    #[error("runs have different configurations: {0} vs {1}")]
    ConfigMismatch(String, String),
    #[error("profile of user {user_id} has {votes} votes, need at least {needed}")]
    ProfileTooSmall { user_id: UserId, votes: usize, needed: usize },
    #[error("{0}")]
    Dataset(String),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

impl From<DatasetError> for EvalError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::ProfileTooSmall { user_id, votes, needed } => {
                EvalError::ProfileTooSmall { user_id, votes, needed }
            }
            other => EvalError::Dataset(other.to_string()),
        }
    }
}

pub fn mae(errors: &[f64]) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorKind {
    /// Top-k by |r|, scanning at most `reviewer_budget` reviewers when set.
    SimplePearson { k: usize, reviewer_budget: Option<usize> },
    Ais,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    pub immune: ImmuneParams,
    pub similarity: SimilarityParams,
    /// Admit only antibodies that voted on the reserved film.
    pub filter_target: bool,
    pub weight_norm: WeightNorm,
    /// Minimum profile size for a test user.
    pub min_votes: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Ais,
            immune: ImmuneParams::default(),
            similarity: SimilarityParams::default(),
            filter_target: true,
            weight_norm: WeightNorm::Absolute,
            min_votes: 10,
        }
    }
}

impl PredictorConfig {
    /// Simple Pearson with neighbourhood size and reviewer budget taken from
    /// the means of an immune run.
    pub fn matched_simple_pearson(&self, ais: &RunMetrics) -> Self {
        let k = ais.metric(Metric::NeighborhoodSize).mean.round().max(1.0) as usize;
        let budget = ais.metric(Metric::ReviewersExamined).mean.round().max(1.0) as usize;
        Self {
            kind: PredictorKind::SimplePearson { k, reviewer_budget: Some(budget) },
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerUserMetrics {
    pub user_id: UserId,
    pub abs_error: Option<f64>,
    pub n_recommendations: usize,
    pub overlap_size: usize,
    pub kendall_tau: Option<f64>,
    pub reviewers_examined: usize,
    pub neighborhood_size: usize,
    pub fallback_used: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Mae,
    NRecommendations,
    OverlapSize,
    KendallTau,
    ReviewersExamined,
    NeighborhoodSize,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Mae,
        Metric::NRecommendations,
        Metric::OverlapSize,
        Metric::KendallTau,
        Metric::ReviewersExamined,
        Metric::NeighborhoodSize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::NRecommendations => "n_recommendations",
            Metric::OverlapSize => "overlap_size",
            Metric::KendallTau => "kendall_tau",
            Metric::ReviewersExamined => "reviewers_examined",
            Metric::NeighborhoodSize => "neighborhood_size",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PerUserMetrics {
    /// Per-user contribution to a metric; MAE contributes the absolute error.
    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Mae => self.abs_error,
            Metric::NRecommendations => Some(self.n_recommendations as f64),
            Metric::OverlapSize => Some(self.overlap_size as f64),
            Metric::KendallTau => self.kendall_tau,
            Metric::ReviewersExamined => Some(self.reviewers_examined as f64),
            Metric::NeighborhoodSize => Some(self.neighborhood_size as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    /// NaN when `n == 0`.
    pub mean: f64,
    /// Sample standard deviation; 0 when `n < 2`.
    pub std: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: 0.0, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std, n }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub fingerprint: String,
    pub seed: u64,
    pub n_users: usize,
    pub n_no_prediction: usize,
    pub n_missing_tau: usize,
    pub n_fallback: usize,
    summaries: [MetricSummary; 6],
}

impl RunMetrics {
    pub fn from_users(users: &[PerUserMetrics], fingerprint: String, seed: u64) -> Self {
        let summaries = Metric::ALL.map(|m| {
            let values: Vec<f64> = users.iter().filter_map(|u| u.value(m)).collect();
            MetricSummary::from_values(&values)
        });
        Self {
            fingerprint,
            seed,
            n_users: users.len(),
            n_no_prediction: users.iter().filter(|u| u.abs_error.is_none()).count(),
            n_missing_tau: users.iter().filter(|u| u.kendall_tau.is_none()).count(),
            n_fallback: users.iter().filter(|u| u.fallback_used).count(),
            summaries,
        }
    }

    pub fn metric(&self, metric: Metric) -> MetricSummary {
        self.summaries[metric.index()]
    }
}

/// Outcome of evaluating one test user, with its optional concentration trace.
#[derive(Clone, Debug)]
pub struct UserEvaluation {
    pub metrics: PerUserMetrics,
    pub trace: Vec<TraceRow>,
}

/// Reserve a vote, build a neighbourhood from the training profile, predict
/// the reserved vote and rank the neighbourhood's films.
pub fn evaluate_user(
    test: &UserProfile,
    reviewers: &[&UserProfile],
    config: &PredictorConfig,
    seed: u64,
    trace: bool,
) -> Result<UserEvaluation, EvalError> {
    let needed = config.min_votes.max(2);
    if test.len() < needed {
        return Err(EvalError::ProfileTooSmall { user_id: test.user_id(), votes: test.len(), needed });
    }
    let reserved = reserve_vote(test, seed)?;
    let train = &reserved.training;
    let (hood, trace) = match config.kind {
        PredictorKind::SimplePearson { k, reviewer_budget } => {
            let budget = reviewer_budget.unwrap_or(reviewers.len());
            let stream = reviewers.iter().copied().take(budget);
            let hood = select_neighbors_sp(train, stream, k, reserved.movie, &config.similarity)?;
            (hood, Vec::new())
        }
        PredictorKind::Ais => {
            let target = config.filter_target.then_some(reserved.movie);
            let sel = select_neighbors_ais(
                train,
                reviewers.iter().copied(),
                &config.immune,
                &config.similarity,
                target,
                trace,
            )?;
            (sel.neighborhood, sel.trace)
        }
    };

    let prediction = match predict(train, &hood, reserved.movie, config.weight_norm) {
        Ok(p) => Some(p),
        Err(PredictError::NoPrediction(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let recommendations = recommend(train, &hood, config.weight_norm);
    let overlap: Vec<RankedPair> = recommendations
        .iter()
        .filter_map(|rec| {
            test.get(rec.movie).map(|actual| RankedPair { movie: rec.movie, actual, predicted: rec.value })
        })
        .collect();
    let kendall = (overlap.len() >= 2).then(|| kendall_tau(&overlap)).transpose()?;

    Ok(UserEvaluation {
        metrics: PerUserMetrics {
            user_id: test.user_id(),
            abs_error: prediction.map(|p| (reserved.score.value() - p.value).abs()),
            n_recommendations: recommendations.len(),
            overlap_size: overlap.len(),
            kendall_tau: kendall,
            reviewers_examined: hood.reviewers_examined,
            neighborhood_size: hood.len(),
            fallback_used: prediction.is_some_and(|p| p.fallback),
        },
        trace,
    })
}

/// SplitMix64 finaliser over the run seed and user id.
pub fn user_seed(run_seed: u64, user_id: UserId) -> u64 {
    let mut z = run_seed ^ user_id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    predictor: &'a PredictorConfig,
    n_test: usize,
    max_reviewers: usize,
}

/// Short stable hash of everything that shapes a run except its seed.
pub fn config_fingerprint(config: &PredictorConfig, n_test: usize, max_reviewers: usize) -> String {
    let json = serde_json::to_vec(&FingerprintInput { predictor: config, n_test, max_reviewers })
        .expect("config serialises");
    hex::encode(&Sha256::digest(&json)[..8])
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Ordered by user id.
    pub users: Vec<PerUserMetrics>,
    pub traces: Vec<(UserId, Vec<TraceRow>)>,
}

/// One run: split, evaluate every test user against the shared reviewer
/// stream (in parallel), aggregate.
pub fn run_experiment(
    dataset: &Dataset,
    n_test: usize,
    max_reviewers: usize,
    config: &PredictorConfig,
    seed: u64,
    trace: bool,
) -> Result<RunOutput, EvalError> {
    let split = split_test_users(dataset, n_test, max_reviewers, config.min_votes.max(2), seed)?;
    let evaluations: Vec<UserEvaluation> = split
        .test
        .par_iter()
        .map(|t| evaluate_user(t, &split.reviewers, config, user_seed(seed, t.user_id()), trace))
        .collect::<Result<_, _>>()?;
    let mut users = Vec::with_capacity(evaluations.len());
    let mut traces = Vec::new();
    for e in evaluations {
        if trace {
            traces.push((e.metrics.user_id, e.trace));
        }
        users.push(e.metrics);
    }
    users.sort_by_key(|u| u.user_id);
    traces.sort_by_key(|t| t.0);
    let fingerprint = config_fingerprint(config, n_test, max_reviewers);
    Ok(RunOutput { metrics: RunMetrics::from_users(&users, fingerprint, seed), users, traces })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunAggregate {
    pub fingerprint: String,
    pub n_runs: usize,
    /// With a single run the standard deviations are 0 by convention.
    pub single_run: bool,
    summaries: [MetricSummary; 6],
}

impl RunAggregate {
    pub fn metric(&self, metric: Metric) -> MetricSummary {
        self.summaries[metric.index()]
    }
}

/// Unweighted mean and sample standard deviation of the per-run means.
pub fn aggregate_runs(runs: &[RunMetrics]) -> Result<RunAggregate, EvalError> {
    let first = runs.first().ok_or(EvalError::EmptyInput)?;
    if let Some(other) = runs.iter().find(|r| r.fingerprint != first.fingerprint) {
        return Err(EvalError::ConfigMismatch(first.fingerprint.clone(), other.fingerprint.clone()));
    }
    let summaries = Metric::ALL.map(|m| {
        let means: Vec<f64> = runs.iter().map(|r| r.metric(m).mean).filter(|v| !v.is_nan()).collect();
        MetricSummary::from_values(&means)
    });
    Ok(RunAggregate {
        fingerprint: first.fingerprint.clone(),
        n_runs: runs.len(),
        single_run: runs.len() == 1,
        summaries,
    })
}

pub const PER_USER_HEADER: &str = "user_id,abs_error,n_recommendations,overlap_size,kendall_tau,reviewers_examined,neighborhood_size,fallback_used";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_per_user(users: &[PerUserMetrics], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{PER_USER_HEADER}")?;
    for u in users {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            u.user_id,
            opt(u.abs_error),
            u.n_recommendations,
            u.overlap_size,
            opt(u.kendall_tau),
            u.reviewers_examined,
            u.neighborhood_size,
            u.fallback_used
        )?;
    }
    Ok(())
}

/// Column header shared by run rows and the aggregate row.
pub fn summary_header() -> String {
    let mut cols = vec!["run".to_string(), "fingerprint".into(), "seed".into()];
    for m in Metric::ALL {
        cols.push(format!("{m}_mean"));
        cols.push(format!("{m}_std"));
    }
    cols.extend(["n_users", "n_no_prediction", "n_missing_tau", "n_fallback"].map(String::from));
    cols.join(",")
}

fn fmt_stat(v: f64) -> String {
    if v.is_nan() { String::new() } else { v.to_string() }
}

pub fn write_summary(runs: &[RunMetrics], aggregate: &RunAggregate, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{}", summary_header())?;
    for (i, run) in runs.iter().enumerate() {
        let stats: Vec<String> = Metric::ALL
            .iter()
            .flat_map(|&m| [fmt_stat(run.metric(m).mean), fmt_stat(run.metric(m).std)])
            .collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            i,
            run.fingerprint,
            run.seed,
            stats.join(","),
            run.n_users,
            run.n_no_prediction,
            run.n_missing_tau,
            run.n_fallback
        )?;
    }
    let stats: Vec<String> = Metric::ALL
        .iter()
        .flat_map(|&m| [fmt_stat(aggregate.metric(m).mean), fmt_stat(aggregate.metric(m).std)])
        .collect();
    let total = |f: fn(&RunMetrics) -> usize| runs.iter().map(f).sum::<usize>();
    writeln!(
        out,
        "aggregate,{},,{},{},{},{},{}",
        aggregate.fingerprint,
        stats.join(","),
        total(|r| r.n_users),
        total(|r| r.n_no_prediction),
        total(|r| r.n_missing_tau),
        total(|r| r.n_fallback)
    )
}

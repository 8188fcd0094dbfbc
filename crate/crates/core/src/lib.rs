//! Collaborative filtering with neighbourhoods chosen by an idiotypic
//! artificial immune network, a Simple Pearson baseline, and a
//! leave-one-vote-out evaluation harness.
//!
//! The pieces, bottom up:
//!
//! - [`dataset`]: vote grid, profiles, CSV vote files, synthetic generator, splits.
//! - [`similarity`]: overlap-penalised Pearson correlation.
//! - [`immune`]: antibody pool dynamics, selection loop and maturation.
//! - [`predictor`]: neighbourhood selection, prediction, recommendation.
//! - [`evaluation`]: per-user metrics, Kendall tau, Wilcoxon, run aggregation.
//! - [`cli`]: the `aisrec` command line (generate, eval, sweep, stats).

pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod immune;
pub mod predictor;
pub mod similarity;

pub use dataset::{Dataset, GeneratorParams, MovieId, ScoreScale, UserId, UserProfile, VoteScore};
pub use evaluation::{Metric, PerUserMetrics, PredictorConfig, PredictorKind, RunMetrics};
pub use immune::{ImmuneNetwork, ImmuneParams};
pub use predictor::{Neighborhood, Prediction, WeightNorm};
pub use similarity::{Correlation, SimilarityParams};

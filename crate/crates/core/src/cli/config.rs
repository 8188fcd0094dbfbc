use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_synthetic, parse_votes, Dataset, GeneratorParams, ScoreScale};
use crate::evaluation::PredictorConfig;

use super::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    File { path: PathBuf, scale: ScoreScale },
    Synthetic(GeneratorParams),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(GeneratorParams::default())
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset, CliError> {
        match self {
            DatasetSource::File { path, scale } => {
                let file = fs::File::open(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                Ok(parse_votes(std::io::BufReader::new(file), *scale)?)
            }
            DatasetSource::Synthetic(params) => Ok(generate_synthetic(params)?),
        }
    }
}

/// Everything one `eval` (or one sweep grid point) needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub predictor: PredictorConfig,
    pub n_test: usize,
    pub max_reviewers: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Write per-user concentration trajectories (immune predictor only).
    pub trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            predictor: PredictorConfig::default(),
            n_test: 100,
            max_reviewers: 15_000,
            n_runs: 5,
            seed: 1,
            out_dir: PathBuf::from("out"),
            trace: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_runs == 0 {
            return Err(CliError::Config("n_runs must be at least 1".into()));
        }
        let p = &self.predictor;
        p.immune.validate().map_err(|e| CliError::Config(e.to_string()))?;
        p.similarity.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let crate::evaluation::PredictorKind::SimplePearson { k: 0, .. } = p.kind {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if let DatasetSource::Synthetic(g) = &self.dataset {
            g.validate()?;
        }
        Ok(())
    }
}

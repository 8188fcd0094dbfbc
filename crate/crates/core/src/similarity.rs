//! Amended Pearson correlation between two vote profiles.
//!
//! Deviations are taken from each user's mean over *all* of their votes, while
//! the sums run over the co-rated films only. Three amendments apply, in order:
//! no overlap yields `no_overlap_default`, a zero variance product yields
//! `zero_variance_default`, and fewer than `overlap_penalty` co-rated films
//! scale the correlation by `n / overlap_penalty`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{MovieId, UserId, UserProfile, VoteScore};

/// Variance products at or below this are treated as zero.
pub const ZERO_VARIANCE_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("profile of user {0} is empty")]
    EmptyProfile(UserId),
    #[error("invalid similarity parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub no_overlap_default: f64,
    pub zero_variance_default: f64,
    pub overlap_penalty: u32,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self { no_overlap_default: 0.0, zero_variance_default: 0.0, overlap_penalty: 100 }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if self.overlap_penalty == 0 {
            return Err(SimilarityError::InvalidParams("overlap_penalty must be at least 1".into()));
        }
        for (name, v) in [
            ("no_overlap_default", self.no_overlap_default),
            ("zero_variance_default", self.zero_variance_default),
        ] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(SimilarityError::InvalidParams(format!("{name} must lie in [-1, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Which branch of the amended measure produced `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelationKind {
    NoOverlap,
    ZeroVariance,
    Computed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub n_overlap: usize,
    pub kind: CorrelationKind,
}

/// Merge-join over two movie-sorted vote lists.
fn co_rated<'a>(
    u: &'a UserProfile,
    v: &'a UserProfile,
) -> impl Iterator<Item = (MovieId, VoteScore, VoteScore)> + 'a {
    let (a, b) = (u.votes(), v.votes());
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            let (ma, sa) = a[i];
            let (mb, sb) = b[j];
            match ma.cmp(&mb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                    return Some((ma, sa, sb));
                }
            }
        }
        None
    })
}

/// Films rated by both users, ascending.
pub fn overlap(u: &UserProfile, v: &UserProfile) -> Vec<MovieId> {
    co_rated(u, v).map(|(m, _, _)| m).collect()
}

pub fn pearson(
    u: &UserProfile,
    v: &UserProfile,
    params: &SimilarityParams,
) -> Result<Correlation, SimilarityError> {
    for p in [u, v] {
        if p.is_empty() {
            return Err(SimilarityError::EmptyProfile(p.user_id()));
        }
    }
    let (u_mean, v_mean) = (u.mean(), v.mean());
    let (mut n, mut cross, mut su, mut sv) = (0usize, 0.0, 0.0, 0.0);
    for (_, a, b) in co_rated(u, v) {
        let du = a.value() - u_mean;
        let dv = b.value() - v_mean;
        n += 1;
        cross += du * dv;
        su += du * du;
        sv += dv * dv;
    }
    if n == 0 {
        return Ok(Correlation { r: params.no_overlap_default, n_overlap: 0, kind: CorrelationKind::NoOverlap });
    }
    let denom = su * sv;
    if denom <= ZERO_VARIANCE_TOLERANCE {
        return Ok(Correlation {
            r: params.zero_variance_default,
            n_overlap: n,
            kind: CorrelationKind::ZeroVariance,
        });
    }
    let mut r = (cross / denom.sqrt()).clamp(-1.0, 1.0);
    let penalty = params.overlap_penalty as usize;
    if n < penalty {
        r *= n as f64 / penalty as f64;
    }
    Ok(Correlation { r, n_overlap: n, kind: CorrelationKind::Computed })
}

/// Antibody matching function: the absolute correlation.
pub fn match_strength(c: &Correlation) -> f64 {
    c.r.abs()
}

//! Neighbourhood selection (Simple Pearson top-k or immune network) and
//! weighted-deviation vote prediction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{MovieId, UserProfile};
use crate::immune::{
    ImmuneError, ImmuneNetwork, ImmuneParams, MaturationOutcome, SelectionOutcome, TraceRow,
};
use crate::similarity::{pearson, SimilarityError, SimilarityParams};

/// Weight sums whose magnitude falls below this fall back to the user mean.
pub const WEIGHT_UNDERFLOW: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("no neighbour voted on movie {0}")]
    NoPrediction(MovieId),
    #[error("neighbourhood size k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Immune(#[from] ImmuneError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodSource {
    SimplePearson,
    Ais,
}

/// Denominator of the weighted deviation average.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightNorm {
    /// Sum of absolute weights; keeps predictions an affine combination.
    #[default]
    Absolute,
    /// Plain signed sum of weights.
    Signed,
}

#[derive(Clone, Debug)]
pub struct Neighbor<'a> {
    pub profile: &'a UserProfile,
    pub correlation: f64,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Neighborhood<'a> {
    pub members: Vec<Neighbor<'a>>,
    pub source: NeighborhoodSource,
    pub reviewers_examined: usize,
    /// Set for immune neighbourhoods that went through maturation.
    pub maturation: Option<MaturationOutcome>,
}

impl Neighborhood<'_> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub movie: MovieId,
    pub value: f64,
    pub n_contributors: usize,
    pub fallback: bool,
}

/// Keeps the `k` admitted reviewers with the largest |r|; equal |r| keeps the
/// earlier reviewer. Reviewers without a vote on `target_movie` are skipped.
pub fn select_neighbors_sp<'a, I>(
    train: &UserProfile,
    reviewers: I,
    k: usize,
    target_movie: MovieId,
    params: &SimilarityParams,
) -> Result<Neighborhood<'a>, PredictError>
where
    I: IntoIterator<Item = &'a UserProfile>,
{
    if k == 0 {
        return Err(PredictError::InvalidK);
    }
    let mut examined = 0;
    let mut candidates = Vec::new();
    for reviewer in reviewers {
        examined += 1;
        if reviewer.user_id() == train.user_id() || !reviewer.contains(target_movie) {
            continue;
        }
        let c = pearson(train, reviewer, params)?;
        candidates.push((examined, reviewer, c.r));
    }
    candidates.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then(a.0.cmp(&b.0)));
    candidates.truncate(k);
    Ok(Neighborhood {
        members: candidates
            .into_iter()
            .map(|(_, profile, r)| Neighbor { profile, correlation: r, weight: r })
            .collect(),
        source: NeighborhoodSource::SimplePearson,
        reviewers_examined: examined,
        maturation: None,
    })
}

/// Result of an immune selection, with the network's diagnostics.
#[derive(Clone, Debug)]
pub struct AisSelection<'a> {
    pub neighborhood: Neighborhood<'a>,
    pub selection: SelectionOutcome,
    pub trace: Vec<TraceRow>,
}

/// Grows an immune network on `train`, matures it, and weights every
/// surviving antibody by `r * concentration`.
pub fn select_neighbors_ais<'a, I>(
    train: &'a UserProfile,
    reviewers: I,
    immune: &ImmuneParams,
    similarity: &SimilarityParams,
    target_movie: Option<MovieId>,
    trace: bool,
) -> Result<AisSelection<'a>, PredictError>
where
    I: IntoIterator<Item = &'a UserProfile>,
{
    let mut net = ImmuneNetwork::new(train, immune.clone(), similarity.clone())?;
    if trace {
        net.enable_trace();
    }
    let selection =
        net.run_selection(reviewers, |r| target_movie.is_none_or(|movie| r.contains(movie)))?;
    let maturation = if net.is_empty() { None } else { Some(net.mature()?) };
    let members = net
        .pool()
        .iter()
        .map(|ab| Neighbor {
            profile: ab.profile(),
            correlation: ab.correlation(),
            weight: ab.correlation() * ab.concentration(),
        })
        .collect();
    Ok(AisSelection {
        neighborhood: Neighborhood {
            members,
            source: NeighborhoodSource::Ais,
            reviewers_examined: net.reviewers_examined(),
            maturation,
        },
        selection,
        trace: net.trace().to_vec(),
    })
}

#[derive(Default)]
struct Accumulator {
    numerator: f64,
    denominator: f64,
    contributors: usize,
}

impl Accumulator {
    fn add(&mut self, weight: f64, deviation: f64, norm: WeightNorm) {
        self.numerator += weight * deviation;
        self.denominator += match norm {
            WeightNorm::Absolute => weight.abs(),
            WeightNorm::Signed => weight,
        };
        self.contributors += 1;
    }

    fn finish(&self, movie: MovieId, user_mean: f64) -> Prediction {
        let (value, fallback) = if self.denominator.abs() < WEIGHT_UNDERFLOW {
            (user_mean, true)
        } else {
            (user_mean + self.numerator / self.denominator, false)
        };
        Prediction { movie, value: value.clamp(0.0, 1.0), n_contributors: self.contributors, fallback }
    }
}

/// Mean-offset weighted average over the members that voted on `movie`.
pub fn predict(
    train: &UserProfile,
    hood: &Neighborhood<'_>,
    movie: MovieId,
    norm: WeightNorm,
) -> Result<Prediction, PredictError> {
    let mut acc = Accumulator::default();
    for n in &hood.members {
        if let Some(vote) = n.profile.get(movie) {
            acc.add(n.weight, vote.value() - n.profile.mean(), norm);
        }
    }
    if acc.contributors == 0 {
        return Err(PredictError::NoPrediction(movie));
    }
    Ok(acc.finish(movie, train.mean()))
}

/// Predictions for every film any member rated, best first; ties by movie id.
pub fn recommend(train: &UserProfile, hood: &Neighborhood<'_>, norm: WeightNorm) -> Vec<Prediction> {
    let mut per_movie: BTreeMap<MovieId, Accumulator> = BTreeMap::new();
    for n in &hood.members {
        let mean = n.profile.mean();
        for &(movie, vote) in n.profile.votes() {
            per_movie.entry(movie).or_default().add(n.weight, vote.value() - mean, norm);
        }
    }
    let mut ranked: Vec<Prediction> = per_movie
        .into_iter()
        .map(|(movie, acc)| acc.finish(movie, train.mean()))
        .collect();
    ranked.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.movie.cmp(&b.movie)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::UserId;
    use proptest::prelude::*;

    fn profile(id: UserId, votes: &[(MovieId, f64)]) -> UserProfile {
        UserProfile::from_grid(id, votes).unwrap()
    }

    fn hood<'a>(members: Vec<(&'a UserProfile, f64, f64)>) -> Neighborhood<'a> {
        Neighborhood {
            members: members
                .into_iter()
                .map(|(profile, correlation, weight)| Neighbor { profile, correlation, weight })
                .collect(),
            source: NeighborhoodSource::Ais,
            reviewers_examined: 0,
            maturation: None,
        }
    }

    #[test]
    fn weighted_deviation_prediction() {
        // train mean 0.5; neighbour mean 0.6 voting 0.8 on movie 1
        let train = profile(0, &[(5, 0.4), (6, 0.6)]);
        let v = profile(1, &[(1, 0.8), (2, 0.4), (3, 0.6)]);
        assert!((v.mean() - 0.6).abs() < 1e-15);
        let p = predict(&train, &hood(vec![(&v, 0.5, 0.5 * 50.0)]), 1, WeightNorm::Absolute).unwrap();
        assert!((p.value - 0.7).abs() < 1e-12);
        assert_eq!((p.n_contributors, p.fallback), (1, false));
        let p = predict(&train, &hood(vec![(&v, -0.5, -0.5 * 50.0)]), 1, WeightNorm::Absolute).unwrap();
        assert!((p.value - 0.3).abs() < 1e-12);
    }

    #[test]
    fn signed_norm_matches_literal_formula() {
        let train = profile(0, &[(5, 0.4), (6, 0.6)]);
        let v = profile(1, &[(1, 0.8), (2, 0.4), (3, 0.6)]);
        let w = profile(2, &[(1, 0.2), (2, 0.4)]);
        let h = hood(vec![(&v, 0.5, 2.0), (&w, -0.2, -1.0)]);
        let expected: f64 = 0.5 + (2.0 * 0.2 + (-1.0) * (0.2 - 0.3)) / (2.0 - 1.0);
        let p = predict(&train, &h, 1, WeightNorm::Signed).unwrap();
        assert!((p.value - expected.clamp(0.0, 1.0)).abs() < 1e-12);
        let abs = predict(&train, &h, 1, WeightNorm::Absolute).unwrap();
        assert!((abs.value - (0.5 + (0.4 + 0.1) / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn missing_contributors_and_underflow() {
        let train = profile(0, &[(5, 0.4), (6, 0.6)]);
        let v = profile(1, &[(1, 0.8), (2, 0.4)]);
        let h = hood(vec![(&v, 0.0, 0.0)]);
        assert_eq!(predict(&train, &h, 9, WeightNorm::Absolute), Err(PredictError::NoPrediction(9)));
        let p = predict(&train, &h, 1, WeightNorm::Absolute).unwrap();
        assert!(p.fallback);
        assert_eq!(p.value, train.mean());
    }

    #[test]
    fn sp_keeps_best_absolute_correlations() {
        let train = profile(0, &[(1, 0.2), (2, 0.8), (3, 0.4), (4, 1.0), (5, 0.0)]);
        let params = SimilarityParams { overlap_penalty: 1, ..Default::default() };
        let pos = profile(1, &[(1, 0.4), (2, 0.6), (3, 0.6), (4, 0.8), (9, 0.2)]);
        let neg = profile(2, &[(1, 1.0), (2, 0.2), (3, 0.8), (4, 0.0), (5, 1.0), (9, 0.4)]);
        let no_target = profile(3, &[(1, 0.2), (2, 0.8)]);
        let r_pos = pearson(&train, &pos, &params).unwrap().r;
        let r_neg = pearson(&train, &neg, &params).unwrap().r;
        assert!(r_neg < 0.0 && r_neg.abs() > r_pos.abs());

        let h = select_neighbors_sp(&train, [&pos, &no_target, &neg], 1, 9, &params).unwrap();
        assert_eq!(h.members.len(), 1);
        assert_eq!(h.members[0].profile.user_id(), 2);
        assert_eq!(h.members[0].weight, r_neg);
        assert_eq!(h.reviewers_examined, 3);

        let h = select_neighbors_sp(&train, [&no_target], 3, 9, &params).unwrap();
        assert!(h.is_empty());
        assert!(matches!(select_neighbors_sp(&train, [&pos], 0, 9, &params), Err(PredictError::InvalidK)));
    }

    #[test]
    fn sp_ties_keep_stream_order() {
        let train = profile(0, &[(1, 0.2), (2, 0.8)]);
        let params = SimilarityParams::default();
        let a = profile(1, &[(1, 0.2), (2, 0.8), (7, 0.4)]);
        let b = profile(2, &[(1, 0.2), (2, 0.8), (7, 0.4)]);
        let h = select_neighbors_sp(&train, [&b, &a], 1, 7, &params).unwrap();
        assert_eq!(h.members[0].profile.user_id(), 2);
    }

    #[test]
    fn recommend_orders_by_value_then_movie() {
        let train = profile(0, &[(1, 0.4), (2, 0.6)]);
        let v = profile(1, &[(3, 0.8), (4, 0.8), (5, 0.2), (6, 0.4)]);
        let h = hood(vec![(&v, 1.0, 1.0)]);
        let recs = recommend(&train, &h, WeightNorm::Absolute);
        let order: Vec<_> = recs.iter().map(|p| p.movie).collect();
        assert_eq!(order, vec![3, 4, 6, 5]);
        assert!(recommend(&train, &hood(vec![]), WeightNorm::Absolute).is_empty());
    }

    #[test]
    fn ais_neighbourhood_on_empty_stream() {
        let train = profile(0, &[(1, 0.4), (2, 0.6)]);
        let sel = select_neighbors_ais(
            &train,
            std::iter::empty(),
            &ImmuneParams::default(),
            &SimilarityParams::default(),
            Some(1),
            false,
        )
        .unwrap();
        assert!(sel.neighborhood.is_empty());
        assert_eq!(sel.neighborhood.maturation, None);
    }

    #[test]
    fn ais_single_reviewer_saturates() {
        let train = profile(0, &[(1, 0.2), (2, 0.8), (3, 0.4)]);
        let v = profile(1, &[(1, 0.2), (2, 0.8), (3, 0.6), (9, 1.0)]);
        let sim = SimilarityParams { overlap_penalty: 1, ..Default::default() };
        let r = pearson(&train, &v, &sim).unwrap().r;
        let sel = select_neighbors_ais(&train, [&v], &ImmuneParams::default(), &sim, Some(9), false).unwrap();
        let hood = &sel.neighborhood;
        assert_eq!(hood.len(), 1);
        assert_eq!(hood.members[0].correlation, r);
        assert_eq!(hood.members[0].weight, r * 100.0);
        assert!(matches!(hood.maturation, Some(MaturationOutcome::Saturated { .. })));
    }

    fn arb_hood_votes() -> impl Strategy<Value = Vec<(Vec<(u32, u8)>, f64)>> {
        prop::collection::vec(
            (
                prop::collection::btree_map(0u32..15, 0u8..=5, 1..10).prop_map(|m| m.into_iter().collect()),
                -1.0f64..1.0,
            ),
            1..8,
        )
    }

    proptest! {
        #[test]
        fn predictions_bounded_and_scale_invariant(members in arb_hood_votes(), scale in 0.01f64..100.0) {
            let train = profile(1000, &[(0, 0.2), (1, 1.0)]);
            let profiles: Vec<UserProfile> = members
                .iter()
                .enumerate()
                .map(|(i, (votes, _))| {
                    UserProfile::new(i as u64, votes.iter().map(|&(m, s)| (m, crate::dataset::VoteScore::from_step(s).unwrap()))).unwrap()
                })
                .collect();
            let h = hood(profiles.iter().zip(&members).map(|(p, (_, w))| (p, *w, *w)).collect());
            let scaled = hood(profiles.iter().zip(&members).map(|(p, (_, w))| (p, *w, *w * scale)).collect());
            let recs = recommend(&train, &h, WeightNorm::Absolute);
            for rec in &recs {
                prop_assert!((0.0..=1.0).contains(&rec.value));
                let direct = predict(&train, &h, rec.movie, WeightNorm::Absolute).unwrap();
                prop_assert_eq!(direct, *rec);
                let s = predict(&train, &scaled, rec.movie, WeightNorm::Absolute).unwrap();
                if !rec.fallback && !s.fallback {
                    prop_assert!((s.value - rec.value).abs() < 1e-9);
                }
            }
            let mut ids: Vec<_> = recs.iter().map(|p| p.movie).collect();
            ids.sort_unstable();
            ids.dedup();
            let union: std::collections::BTreeSet<_> = profiles.iter().flat_map(|p| p.movies()).collect();
            prop_assert_eq!(ids.len(), union.len());
        }
    }
}

//! Vote data: the six-step score grid, user profiles, the CSV vote format,
//! a synthetic generator with genre-driven preference structure, and the
//! test/reviewer split used by the leave-one-vote-out protocol.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::ops::RangeInclusive;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type UserId = u64;
pub type MovieId = u32;

/// Header row of the vote file format.
pub const VOTE_HEADER: &str = "user_id,movie_id,score";

/// Distance from a grid point within which a parsed unit score is accepted.
const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: score {score} is not on the vote grid")]
    OffGridScore { line: usize, score: String },
    #[error("duplicate vote for user {user_id}, movie {movie_id}")]
    DuplicateVote { user_id: UserId, movie_id: MovieId },
    #[error("duplicate user id {0}")]
    DuplicateUser(UserId),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("not enough eligible users: requested {requested} test users, {eligible} eligible")]
    NotEnoughUsers { requested: usize, eligible: usize },
    #[error("profile of user {user_id} has {votes} votes, need at least {needed}")]
    ProfileTooSmall { user_id: UserId, votes: usize, needed: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A vote on the grid {0, 0.2, 0.4, 0.6, 0.8, 1.0}, stored as its step index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoteScore(u8);

impl VoteScore {
    pub const STEPS: u8 = 5;

    pub fn from_step(step: u8) -> Option<Self> {
        (step <= Self::STEPS).then_some(Self(step))
    }

    /// Exact grid membership (up to parse rounding); `None` when off-grid.
    pub fn from_unit(value: f64) -> Option<Self> {
        if !value.is_finite() || !(-GRID_TOLERANCE..=1.0 + GRID_TOLERANCE).contains(&value) {
            return None;
        }
        let scaled = value * f64::from(Self::STEPS);
        let step = scaled.round();
        ((scaled - step).abs() <= GRID_TOLERANCE * f64::from(Self::STEPS))
            .then_some(Self(step as u8))
    }

    /// Clamp to [0, 1] and snap to the nearest grid value, ties rounding up.
    pub fn snap(value: f64) -> Self {
        let clamped = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
        let step = (clamped * f64::from(Self::STEPS) + 0.5).floor();
        Self((step as u8).min(Self::STEPS))
    }

    pub fn step(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / f64::from(Self::STEPS)
    }
}

impl fmt::Display for VoteScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

/// How scores in a vote file are expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScale {
    /// Scores already on the unit grid.
    #[default]
    UnitGrid,
    /// Integer scores 0 to 5, mapped by score / 5.
    ZeroToFive,
}

/// One user's votes, sorted by movie id. The full-profile mean is cached.
#[derive(Clone, Debug, PartialEq)]
pub struct UserProfile {
    user_id: UserId,
    votes: Vec<(MovieId, VoteScore)>,
    mean: f64,
}

impl UserProfile {
    pub fn new(
        user_id: UserId,
        votes: impl IntoIterator<Item = (MovieId, VoteScore)>,
    ) -> Result<Self, DatasetError> {
        let mut votes: Vec<_> = votes.into_iter().collect();
        votes.sort_unstable_by_key(|&(movie, _)| movie);
        if let Some(w) = votes.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(DatasetError::DuplicateVote { user_id, movie_id: w[0].0 });
        }
        Ok(Self::from_sorted(user_id, votes))
    }

    /// Builds a profile from unit-scale values that must already lie on the grid.
    pub fn from_grid(user_id: UserId, votes: &[(MovieId, f64)]) -> Result<Self, DatasetError> {
        let scored = votes
            .iter()
            .map(|&(movie, value)| {
                VoteScore::from_unit(value)
                    .map(|score| (movie, score))
                    .ok_or_else(|| DatasetError::OffGridScore { line: 0, score: value.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(user_id, scored)
    }

    fn from_sorted(user_id: UserId, votes: Vec<(MovieId, VoteScore)>) -> Self {
        let mean = if votes.is_empty() {
            0.0
        } else {
            votes.iter().map(|(_, s)| s.value()).sum::<f64>() / votes.len() as f64
        };
        Self { user_id, votes, mean }
    }

    pub fn user_id(&self) -> UserId {
        self.user_id
    }

    pub fn votes(&self) -> &[(MovieId, VoteScore)] {
        &self.votes
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// Mean vote over every film in the profile.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn get(&self, movie: MovieId) -> Option<VoteScore> {
        self.votes
            .binary_search_by_key(&movie, |&(m, _)| m)
            .ok()
            .map(|i| self.votes[i].1)
    }

    pub fn contains(&self, movie: MovieId) -> bool {
        self.get(movie).is_some()
    }

    pub fn movies(&self) -> impl Iterator<Item = MovieId> + '_ {
        self.votes.iter().map(|&(m, _)| m)
    }

    /// The profile with one movie's vote removed.
    pub fn without(&self, movie: MovieId) -> Self {
        let votes = self.votes.iter().copied().filter(|&(m, _)| m != movie).collect();
        Self::from_sorted(self.user_id, votes)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    profiles: Vec<UserProfile>,
    movie_ids: BTreeSet<MovieId>,
}

impl Dataset {
    /// Profiles are stored ordered by user id.
    pub fn new(mut profiles: Vec<UserProfile>) -> Result<Self, DatasetError> {
        profiles.sort_by_key(UserProfile::user_id);
        if let Some(w) = profiles.windows(2).find(|w| w[0].user_id == w[1].user_id) {
            return Err(DatasetError::DuplicateUser(w[0].user_id));
        }
        let movie_ids = profiles.iter().flat_map(UserProfile::movies).collect();
        Ok(Self { profiles, movie_ids })
    }

    pub fn profiles(&self) -> &[UserProfile] {
        &self.profiles
    }

    pub fn movie_ids(&self) -> &BTreeSet<MovieId> {
        &self.movie_ids
    }

    pub fn profile(&self, user_id: UserId) -> Option<&UserProfile> {
        self.profiles
            .binary_search_by_key(&user_id, UserProfile::user_id)
            .ok()
            .map(|i| &self.profiles[i])
    }

    pub fn n_votes(&self) -> usize {
        self.profiles.iter().map(UserProfile::len).sum()
    }
}

fn parse_score(field: &str, scale: ScoreScale, line: usize) -> Result<VoteScore, DatasetError> {
    let off_grid = || DatasetError::OffGridScore { line, score: field.to_string() };
    match scale {
        ScoreScale::UnitGrid => {
            let value: f64 = field.parse().map_err(|_| DatasetError::MalformedLine {
                line,
                reason: format!("score {field:?} is not a number"),
            })?;
            VoteScore::from_unit(value).ok_or_else(off_grid)
        }
        ScoreScale::ZeroToFive => {
            let value: i64 = field.parse().map_err(|_| match field.parse::<f64>() {
                Ok(_) => off_grid(),
                Err(_) => DatasetError::MalformedLine {
                    line,
                    reason: format!("score {field:?} is not an integer"),
                },
            })?;
            u8::try_from(value).ok().and_then(VoteScore::from_step).ok_or_else(off_grid)
        }
    }
}

/// Reads a `user_id,movie_id,score` CSV. Blank lines are ignored.
pub fn parse_votes(reader: impl BufRead, scale: ScoreScale) -> Result<Dataset, DatasetError> {
    let mut users: BTreeMap<UserId, BTreeMap<MovieId, VoteScore>> = BTreeMap::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if !saw_header {
            if line.trim() != VOTE_HEADER {
                return Err(DatasetError::MalformedLine {
                    line: line_no,
                    reason: format!("expected header {VOTE_HEADER:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [user, movie, score] = fields[..] else {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        };
        let malformed = |what: &str, v: &str| DatasetError::MalformedLine {
            line: line_no,
            reason: format!("{what} {v:?} is not a nonnegative integer"),
        };
        let user_id: UserId = user.parse().map_err(|_| malformed("user_id", user))?;
        let movie_id: MovieId = movie.parse().map_err(|_| malformed("movie_id", movie))?;
        let score = parse_score(score, scale, line_no)?;
        if users.entry(user_id).or_default().insert(movie_id, score).is_some() {
            return Err(DatasetError::DuplicateVote { user_id, movie_id });
        }
    }
    if !saw_header {
        return Err(DatasetError::MalformedLine { line: 1, reason: "missing header".into() });
    }
    let profiles = users
        .into_iter()
        .map(|(user_id, votes)| UserProfile::from_sorted(user_id, votes.into_iter().collect()))
        .collect();
    Dataset::new(profiles)
}

/// Writes the unit-grid CSV form, rows ordered by (user_id, movie_id).
pub fn write_votes(dataset: &Dataset, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{VOTE_HEADER}")?;
    for profile in dataset.profiles() {
        for (movie, score) in profile.votes() {
            writeln!(out, "{},{},{}", profile.user_id(), movie, score)?;
        }
    }
    Ok(())
}

pub fn votes_to_string(dataset: &Dataset) -> String {
    let mut buf = Vec::new();
    write_votes(dataset, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("vote CSV is ASCII")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n_users: usize,
    pub n_movies: usize,
    pub n_genres: usize,
    pub votes_per_user: RangeInclusive<usize>,
    pub affinity_spread: f64,
    pub noise_spread: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_movies: 500,
            n_genres: 8,
            votes_per_user: 20..=80,
            affinity_spread: 0.4,
            noise_spread: 0.1,
            seed: 1,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::InvalidParams(msg));
        if self.n_genres == 0 {
            return bad("n_genres must be at least 1".into());
        }
        let (lo, hi) = (*self.votes_per_user.start(), *self.votes_per_user.end());
        if lo == 0 || lo > hi || hi > self.n_movies {
            return bad(format!(
                "votes_per_user {lo}..={hi} must lie within 1..={}",
                self.n_movies
            ));
        }
        for (name, v) in [("affinity_spread", self.affinity_spread), ("noise_spread", self.noise_spread)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        Ok(())
    }
}

fn centered(rng: &mut impl Rng, spread: f64) -> f64 {
    if spread > 0.0 {
        rng.gen_range(-spread..=spread)
    } else {
        0.0
    }
}

/// Genre-affinity model: score = snap(0.5 + affinity[genre(movie)] + noise).
/// Users whose affinities share signs end up positively correlated.
pub fn generate_synthetic(params: &GeneratorParams) -> Result<Dataset, DatasetError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let genres: Vec<usize> = (0..params.n_movies)
        .map(|_| rng.gen_range(0..params.n_genres))
        .collect();
    let mut profiles = Vec::with_capacity(params.n_users);
    for user in 0..params.n_users {
        let affinity: Vec<f64> = (0..params.n_genres)
            .map(|_| centered(&mut rng, params.affinity_spread))
            .collect();
        let count = rng.gen_range(params.votes_per_user.clone());
        let mut movies = index::sample(&mut rng, params.n_movies, count).into_vec();
        movies.sort_unstable();
        let votes = movies
            .into_iter()
            .map(|m| {
                let raw = 0.5 + affinity[genres[m]] + centered(&mut rng, params.noise_spread);
                (m as MovieId, VoteScore::snap(raw))
            })
            .collect();
        profiles.push(UserProfile::from_sorted(user as UserId, votes));
    }
    Dataset::new(profiles)
}

/// Test users and the ordered reviewer stream for one run.
#[derive(Clone, Debug)]
pub struct Split<'a> {
    pub test: Vec<&'a UserProfile>,
    pub reviewers: Vec<&'a UserProfile>,
}

/// Draws `n_test` test users among profiles with at least `min_votes` votes;
/// every other profile goes to a seeded permutation truncated to `max_reviewers`.
pub fn split_test_users(
    dataset: &Dataset,
    n_test: usize,
    max_reviewers: usize,
    min_votes: usize,
    seed: u64,
) -> Result<Split<'_>, DatasetError> {
    let profiles = dataset.profiles();
    let eligible: Vec<usize> = (0..profiles.len())
        .filter(|&i| profiles[i].len() >= min_votes)
        .collect();
    if n_test > 0 && n_test + 1 > eligible.len() {
        return Err(DatasetError::NotEnoughUsers { requested: n_test, eligible: eligible.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), n_test)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    chosen.sort_unstable();
    let mut is_test = vec![false; profiles.len()];
    for &i in &chosen {
        is_test[i] = true;
    }
    let mut reviewers: Vec<&UserProfile> = profiles
        .iter()
        .zip(&is_test)
        .filter(|(_, &t)| !t)
        .map(|(p, _)| p)
        .collect();
    reviewers.shuffle(&mut rng);
    reviewers.truncate(max_reviewers);
    Ok(Split { test: chosen.into_iter().map(|i| &profiles[i]).collect(), reviewers })
}

/// A profile with one vote hidden from the predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct ReservedVote {
    pub training: UserProfile,
    pub movie: MovieId,
    pub score: VoteScore,
}

pub fn reserve_vote(profile: &UserProfile, seed: u64) -> Result<ReservedVote, DatasetError> {
    if profile.len() < 2 {
        return Err(DatasetError::ProfileTooSmall {
            user_id: profile.user_id(),
            votes: profile.len(),
            needed: 2,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (movie, score) = profile.votes()[rng.gen_range(0..profile.len())];
    Ok(ReservedVote { training: profile.without(movie), movie, score })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, scale: ScoreScale) -> Result<Dataset, DatasetError> {
        parse_votes(text.as_bytes(), scale)
    }

    #[test]
    fn grid_snapping_rounds_half_up() {
        assert_eq!(VoteScore::snap(0.5).value(), 0.6);
        assert_eq!(VoteScore::snap(0.29).value(), 0.2);
        assert_eq!(VoteScore::snap(0.31).value(), 0.4);
        assert_eq!(VoteScore::snap(-3.0).value(), 0.0);
        assert_eq!(VoteScore::snap(7.0).value(), 1.0);
        assert!(VoteScore::from_unit(0.3).is_none());
        assert_eq!(VoteScore::from_unit(0.6).unwrap().step(), 3);
    }

    #[test]
    fn parses_unit_and_five_point_scores() {
        let d = parse("user_id,movie_id,score\n1,7,0.8\n", ScoreScale::UnitGrid).unwrap();
        assert_eq!(d.profile(1).unwrap().get(7).unwrap().value(), 0.8);
        let d = parse("user_id,movie_id,score\n1,7,4\n", ScoreScale::ZeroToFive).unwrap();
        assert_eq!(d.profile(1).unwrap().get(7).unwrap().value(), 0.8);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = parse("user_id,movie_id,score\n1,7,0.3\n", ScoreScale::UnitGrid).unwrap_err();
        assert!(matches!(err, DatasetError::OffGridScore { line: 2, .. }));
        let err = parse("user_id,movie_id,score\n1,7,6\n", ScoreScale::ZeroToFive).unwrap_err();
        assert!(matches!(err, DatasetError::OffGridScore { line: 2, .. }));
        let err = parse("user_id,movie_id,score\n1,7,3.5\n", ScoreScale::ZeroToFive).unwrap_err();
        assert!(matches!(err, DatasetError::OffGridScore { .. }));
        let err = parse("user_id,movie_id,score\n1,7\n", ScoreScale::UnitGrid).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedLine { line: 2, .. }));
        let err = parse("user_id,movie_id,score\n1,7,0.2\n-1,3,0.2\n", ScoreScale::UnitGrid).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedLine { line: 3, .. }));
        let err = parse("user_id,movie_id,score\n1,7,0.2\n1,7,0.4\n", ScoreScale::UnitGrid).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateVote { user_id: 1, movie_id: 7 }));
        let err = parse("uid,mid,s\n", ScoreScale::UnitGrid).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedLine { line: 1, .. }));
        let err = parse("", ScoreScale::UnitGrid).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn writes_header_and_rows() {
        assert_eq!(votes_to_string(&Dataset::default()), "user_id,movie_id,score\n");
        let p = UserProfile::from_grid(1, &[(7, 0.8)]).unwrap();
        let d = Dataset::new(vec![p]).unwrap();
        assert_eq!(votes_to_string(&d), "user_id,movie_id,score\n1,7,0.8\n");
    }

    #[test]
    fn dataset_rejects_duplicate_users_and_tracks_movies() {
        let a = UserProfile::from_grid(1, &[(7, 0.8), (2, 0.0)]).unwrap();
        let b = UserProfile::from_grid(2, &[(9, 1.0)]).unwrap();
        let d = Dataset::new(vec![b.clone(), a.clone()]).unwrap();
        assert_eq!(d.movie_ids().iter().copied().collect::<Vec<_>>(), vec![2, 7, 9]);
        assert_eq!(d.profiles()[0].user_id(), 1);
        assert!(matches!(Dataset::new(vec![a.clone(), a]), Err(DatasetError::DuplicateUser(1))));
    }

    #[test]
    fn generator_without_randomness_emits_midpoint() {
        let params = GeneratorParams {
            n_users: 20,
            n_movies: 30,
            n_genres: 3,
            votes_per_user: 5..=10,
            affinity_spread: 0.0,
            noise_spread: 0.0,
            seed: 9,
        };
        let d = generate_synthetic(&params).unwrap();
        assert!(d.profiles().iter().flat_map(|p| p.votes()).all(|(_, s)| s.value() == 0.6));
    }

    #[test]
    fn generator_is_deterministic() {
        let params = GeneratorParams { n_users: 50, n_movies: 40, ..Default::default() };
        let params = GeneratorParams { votes_per_user: 3..=20, ..params };
        let a = votes_to_string(&generate_synthetic(&params).unwrap());
        let b = votes_to_string(&generate_synthetic(&params).unwrap());
        assert_eq!(a, b);
        let other = GeneratorParams { seed: params.seed + 1, ..params };
        assert_ne!(a, votes_to_string(&generate_synthetic(&other).unwrap()));
    }

    #[test]
    fn generator_validates() {
        let base = GeneratorParams { n_movies: 10, ..Default::default() };
        for bad in [
            GeneratorParams { votes_per_user: 1..=11, ..base.clone() },
            GeneratorParams { votes_per_user: 0..=5, ..base.clone() },
            GeneratorParams { n_genres: 0, votes_per_user: 1..=5, ..base.clone() },
            GeneratorParams { noise_spread: -0.1, votes_per_user: 1..=5, ..base.clone() },
        ] {
            assert!(matches!(generate_synthetic(&bad), Err(DatasetError::InvalidParams(_))));
        }
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let params = GeneratorParams {
            n_users: 3,
            n_movies: 20,
            votes_per_user: 12..=15,
            ..Default::default()
        };
        let d = generate_synthetic(&params).unwrap();
        let s = split_test_users(&d, 1, 100, 10, 4).unwrap();
        assert_eq!((s.test.len(), s.reviewers.len()), (1, 2));
        assert!(s.reviewers.iter().all(|r| r.user_id() != s.test[0].user_id()));

        let s = split_test_users(&d, 0, 100, 10, 4).unwrap();
        assert!(s.test.is_empty());
        let mut ids: Vec<_> = s.reviewers.iter().map(|p| p.user_id()).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2]);

        assert!(matches!(
            split_test_users(&d, 3, 100, 10, 4),
            Err(DatasetError::NotEnoughUsers { requested: 3, eligible: 3 })
        ));
    }

    #[test]
    fn split_respects_eligibility_and_budget() {
        let params = GeneratorParams {
            n_users: 300,
            n_movies: 100,
            votes_per_user: 2..=30,
            ..Default::default()
        };
        let d = generate_synthetic(&params).unwrap();
        let s = split_test_users(&d, 40, 100, 10, 7).unwrap();
        assert_eq!(s.test.len(), 40);
        assert_eq!(s.reviewers.len(), 100);
        assert!(s.test.iter().all(|p| p.len() >= 10));
        let again = split_test_users(&d, 40, 100, 10, 7).unwrap();
        let ids = |v: &[&UserProfile]| v.iter().map(|p| p.user_id()).collect::<Vec<_>>();
        assert_eq!(ids(&s.test), ids(&again.test));
        assert_eq!(ids(&s.reviewers), ids(&again.reviewers));
    }

    #[test]
    fn reserve_vote_partitions_profile() {
        let p = UserProfile::from_grid(3, &[(1, 0.2), (4, 0.8)]).unwrap();
        let r = reserve_vote(&p, 11).unwrap();
        assert_eq!(r.training.len(), 1);
        assert!(!r.training.contains(r.movie));
        assert_eq!(p.get(r.movie), Some(r.score));
        assert_eq!(reserve_vote(&p, 11).unwrap(), r);

        let single = UserProfile::from_grid(3, &[(1, 0.2)]).unwrap();
        assert!(matches!(reserve_vote(&single, 0), Err(DatasetError::ProfileTooSmall { .. })));
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        prop::collection::btree_map(
            0u64..50,
            prop::collection::btree_map(0u32..200, 0u8..=5, 1..20),
            0..15,
        )
        .prop_map(|users| {
            let profiles = users
                .into_iter()
                .map(|(u, votes)| {
                    UserProfile::new(u, votes.into_iter().map(|(m, s)| (m, VoteScore(s)))).unwrap()
                })
                .collect();
            Dataset::new(profiles).unwrap()
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(d in arb_dataset()) {
            let text = votes_to_string(&d);
            let back = parse(&text, ScoreScale::UnitGrid).unwrap();
            prop_assert_eq!(back, d);
        }

        #[test]
        fn reserve_vote_is_a_partition(
            votes in prop::collection::btree_map(0u32..100, 0u8..=5, 2..30),
            seed in any::<u64>(),
        ) {
            let p = UserProfile::new(1, votes.into_iter().map(|(m, s)| (m, VoteScore(s)))).unwrap();
            let r = reserve_vote(&p, seed).unwrap();
            prop_assert_eq!(r.training.len() + 1, p.len());
            prop_assert!(!r.training.contains(r.movie));
            for (m, s) in r.training.votes() {
                prop_assert_eq!(p.get(*m), Some(*s));
            }
        }
    }
}

//! Idiotypic immune network used to grow a recommendation neighbourhood.
//!
//! The antigen is the active user's profile; each reviewer enters the pool as
//! an antibody whose concentration evolves by a unit-step synchronous update:
//!
//! ```text
//! dx_i = k1 * m_i * x_i * y  -  (k2 / N) * sum_{j != i} m_ij * x_i * x_j  -  k3 * x_i
//! ```
//!
//! where `m_i` is the antibody's match to the antigen, `m_ij` its match to
//! another antibody (both absolute Pearson correlations), `y` the antigen
//! concentration and `N` the current pool size. Concentrations are clamped to
//! `[0, max_concentration]` and antibodies falling below `min_concentration`
//! are removed.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{UserId, UserProfile};
use crate::similarity::{match_strength, pearson, Correlation, SimilarityError, SimilarityParams};

#[derive(Debug, Error, PartialEq)]
pub enum ImmuneError {
    #[error("antibody pool is full")]
    PoolFull,
    #[error("antibody pool is empty")]
    EmptyPool,
    #[error("invalid immune parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImmuneParams {
    /// k1
    pub stimulation: f64,
    /// k2
    pub suppression: f64,
    /// k3
    pub death_rate: f64,
    pub pool_capacity: usize,
    pub init_concentration: f64,
    pub max_concentration: f64,
    /// Antibodies below this after a step are removed.
    pub min_concentration: f64,
    /// y
    pub antigen_concentration: f64,
    /// Consecutive size-constant iterations after which the pool is stable.
    pub stability_window: usize,
    /// Upper bound on maturation iterations.
    pub maturation_cap: usize,
}

impl Default for ImmuneParams {
    fn default() -> Self {
        Self {
            stimulation: 0.2,
            suppression: 0.0,
            death_rate: 0.1,
            pool_capacity: 100,
            init_concentration: 10.0,
            max_concentration: 100.0,
            min_concentration: 0.01,
            antigen_concentration: 10.0,
            stability_window: 10,
            maturation_cap: 10_000,
        }
    }
}

impl ImmuneParams {
    pub fn validate(&self) -> Result<(), ImmuneError> {
        let bad = |msg: &str| Err(ImmuneError::InvalidParams(msg.to_string()));
        let rates = [self.stimulation, self.suppression, self.death_rate, self.antigen_concentration];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return bad("rates and antigen concentration must be finite and nonnegative");
        }
        if !(0.0 < self.init_concentration && self.init_concentration < self.max_concentration) {
            return bad("need 0 < init_concentration < max_concentration");
        }
        if !(0.0 <= self.min_concentration && self.min_concentration < self.init_concentration) {
            return bad("need 0 <= min_concentration < init_concentration");
        }
        if self.pool_capacity == 0 {
            return bad("pool_capacity must be at least 1");
        }
        if self.stability_window == 0 {
            return bad("stability_window must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Antibody<'a> {
    profile: &'a UserProfile,
    serial: u64,
    concentration: f64,
    correlation: Correlation,
    antigen_match: f64,
    /// Match to every pool member, indexed like the pool. The self slot is unused.
    peer_matches: Vec<f64>,
}

impl<'a> Antibody<'a> {
    pub fn profile(&self) -> &'a UserProfile {
        self.profile
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    /// Signed correlation to the antigen.
    pub fn correlation(&self) -> f64 {
        self.correlation.r
    }

    pub fn antigen_match(&self) -> f64 {
        self.antigen_match
    }

    pub fn peer_matches(&self) -> &[f64] {
        &self.peer_matches
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionOutcome {
    Stable,
    ReviewersExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaturationOutcome {
    /// Some antibody reached the maximum concentration.
    Saturated { iterations: usize },
    /// Every antibody was removed before any saturated.
    PoolEmptied { iterations: usize },
    /// The iteration cap was hit first; current concentrations stand.
    CapReached { iterations: usize },
}

impl MaturationOutcome {
    pub fn is_degenerate(self) -> bool {
        !matches!(self, Self::Saturated { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub user_id: UserId,
    pub concentration: f64,
}

pub const TRACE_HEADER: &str = "iteration,antibody_user_id,concentration";

pub fn write_trace(rows: &[TraceRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for row in rows {
        writeln!(out, "{},{},{}", row.iteration, row.user_id, row.concentration)?;
    }
    Ok(())
}

pub struct ImmuneNetwork<'a> {
    antigen: &'a UserProfile,
    params: ImmuneParams,
    similarity: SimilarityParams,
    pool: Vec<Antibody<'a>>,
    stable_iterations: usize,
    reviewers_examined: usize,
    iterations: u64,
    next_serial: u64,
    trace: Option<Vec<TraceRow>>,
}

impl<'a> ImmuneNetwork<'a> {
    pub fn new(
        antigen: &'a UserProfile,
        params: ImmuneParams,
        similarity: SimilarityParams,
    ) -> Result<Self, ImmuneError> {
        params.validate()?;
        similarity.validate()?;
        if antigen.is_empty() {
            return Err(SimilarityError::EmptyProfile(antigen.user_id()).into());
        }
        Ok(Self {
            antigen,
            params,
            similarity,
            pool: Vec::new(),
            stable_iterations: 0,
            reviewers_examined: 0,
            iterations: 0,
            next_serial: 0,
            trace: None,
        })
    }

    /// Records post-step concentrations of every surviving antibody.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn antigen(&self) -> &'a UserProfile {
        self.antigen
    }

    pub fn params(&self) -> &ImmuneParams {
        &self.params
    }

    pub fn pool(&self) -> &[Antibody<'a>] {
        &self.pool
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.pool.len() >= self.params.pool_capacity
    }

    pub fn stable_iterations(&self) -> usize {
        self.stable_iterations
    }

    pub fn is_stable(&self) -> bool {
        self.stable_iterations >= self.params.stability_window
    }

    pub fn reviewers_examined(&self) -> usize {
        self.reviewers_examined
    }

    /// Total iterations performed, maturation included.
    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// Inserts a reviewer at the initial concentration. Returns `false` (and
    /// inserts nothing) for an empty profile or the antigen's own user.
    pub fn add_antibody(&mut self, profile: &'a UserProfile) -> Result<bool, ImmuneError> {
        if self.is_full() {
            return Err(ImmuneError::PoolFull);
        }
        self.reviewers_examined += 1;
        if profile.is_empty() || profile.user_id() == self.antigen.user_id() {
            return Ok(false);
        }
        let correlation = pearson(self.antigen, profile, &self.similarity)?;
        let mut peer_matches = Vec::with_capacity(self.pool.len() + 1);
        for other in &mut self.pool {
            let m = match_strength(&pearson(other.profile, profile, &self.similarity)?);
            other.peer_matches.push(m);
            peer_matches.push(m);
        }
        peer_matches.push(0.0);
        self.pool.push(Antibody {
            profile,
            serial: self.next_serial,
            concentration: self.params.init_concentration,
            antigen_match: match_strength(&correlation),
            correlation,
            peer_matches,
        });
        self.next_serial += 1;
        self.stable_iterations = 0;
        Ok(true)
    }

    /// One synchronous step over a frozen snapshot. Returns the number removed.
    pub fn iterate(&mut self) -> Result<usize, ImmuneError> {
        let n = self.pool.len();
        if n == 0 {
            return Err(ImmuneError::EmptyPool);
        }
        let p = &self.params;
        let snapshot: Vec<f64> = self.pool.iter().map(|a| a.concentration).collect();
        // Peer sums run in insertion order so results do not depend on pool layout.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by_key(|&j| self.pool[j].serial);
        let suppression_scale = p.suppression / n as f64;

        let next: Vec<f64> = (0..n)
            .map(|i| {
                let ab = &self.pool[i];
                let x = snapshot[i];
                let peers: f64 = order
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| ab.peer_matches[j] * snapshot[j])
                    .sum();
                let delta = p.stimulation * ab.antigen_match * x * p.antigen_concentration
                    - suppression_scale * peers * x
                    - p.death_rate * x;
                (x + delta).clamp(0.0, p.max_concentration)
            })
            .collect();

        let keep: Vec<bool> = next.iter().map(|&x| x >= p.min_concentration).collect();
        for (ab, x) in self.pool.iter_mut().zip(&next) {
            ab.concentration = *x;
        }
        let removed = keep.iter().filter(|k| !**k).count();
        if removed > 0 {
            let mut flags = keep.iter();
            self.pool.retain(|_| *flags.next().unwrap());
            for ab in &mut self.pool {
                let mut flags = keep.iter();
                ab.peer_matches.retain(|_| *flags.next().unwrap());
            }
            self.stable_iterations = 0;
        } else {
            self.stable_iterations += 1;
        }
        self.iterations += 1;
        if let Some(trace) = &mut self.trace {
            trace.extend(self.pool.iter().map(|ab| TraceRow {
                iteration: self.iterations,
                user_id: ab.profile.user_id(),
                concentration: ab.concentration,
            }));
        }
        Ok(removed)
    }

    /// Streams reviewers into the pool until it is stable or the stream runs
    /// dry. Only reviewers passing `admit` become antibodies, but every reviewer
    /// drawn counts as examined. The pool iterates only while at capacity.
    pub fn run_selection<I, F>(&mut self, reviewers: I, mut admit: F) -> Result<SelectionOutcome, ImmuneError>
    where
        I: IntoIterator<Item = &'a UserProfile>,
        F: FnMut(&UserProfile) -> bool,
    {
        let mut stream = reviewers.into_iter();
        while !self.is_stable() {
            let Some(reviewer) = stream.by_ref().find(|r| {
                let ok = admit(r);
                if !ok {
                    self.reviewers_examined += 1;
                }
                ok
            }) else {
                return Ok(SelectionOutcome::ReviewersExhausted);
            };
            self.add_antibody(reviewer)?;
            while self.is_full() && !self.is_stable() {
                self.iterate()?;
            }
        }
        Ok(SelectionOutcome::Stable)
    }

    /// Resets every concentration, then iterates until one antibody saturates.
    pub fn mature(&mut self) -> Result<MaturationOutcome, ImmuneError> {
        if self.pool.is_empty() {
            return Err(ImmuneError::EmptyPool);
        }
        for ab in &mut self.pool {
            ab.concentration = self.params.init_concentration;
        }
        let mut iterations = 0;
        loop {
            if self.pool.is_empty() {
                return Ok(MaturationOutcome::PoolEmptied { iterations });
            }
            if self.pool.iter().any(|ab| ab.concentration >= self.params.max_concentration) {
                return Ok(MaturationOutcome::Saturated { iterations });
            }
            if iterations >= self.params.maturation_cap {
                return Ok(MaturationOutcome::CapReached { iterations });
            }
            self.iterate()?;
            iterations += 1;
        }
    }

    /// Reorders the pool; `order[k]` is the current index placed at position `k`.
    /// Dynamics are unaffected.
    pub fn reorder(&mut self, order: &[usize]) {
        assert_eq!(order.len(), self.pool.len(), "order must be a permutation of the pool");
        let mut seen = vec![false; order.len()];
        for &i in order {
            assert!(!std::mem::replace(&mut seen[i], true), "order must be a permutation of the pool");
        }
        let mut pool: Vec<_> = order.iter().map(|&i| self.pool[i].clone()).collect();
        for ab in &mut pool {
            ab.peer_matches = order.iter().map(|&i| ab.peer_matches[i]).collect();
        }
        self.pool = pool;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MovieId;

    fn profile(id: UserId, votes: &[(MovieId, f64)]) -> UserProfile {
        UserProfile::from_grid(id, votes).unwrap()
    }

    /// Antigen plus reviewers with controlled matches: with penalty 1, a copy of
    /// the antigen matches at 1, a disjoint profile at 0.
    fn antigen() -> UserProfile {
        profile(0, &[(1, 0.2), (2, 0.8), (3, 0.4), (4, 1.0)])
    }

    fn unpenalised() -> SimilarityParams {
        SimilarityParams { overlap_penalty: 1, ..Default::default() }
    }

    #[test]
    fn insertion_sets_initial_state() {
        let ag = antigen();
        let copy = profile(1, ag.votes().iter().map(|&(m, s)| (m, s.value())).collect::<Vec<_>>().as_slice());
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        assert!(net.add_antibody(&copy).unwrap());
        assert_eq!(net.len(), 1);
        assert_eq!(net.pool()[0].concentration(), 10.0);
        assert!((net.pool()[0].antigen_match() - 1.0).abs() < 1e-15);
        assert_eq!(net.reviewers_examined(), 1);
    }

    #[test]
    fn peer_matches_are_symmetric() {
        let ag = antigen();
        let a = profile(1, &[(1, 0.2), (2, 0.6), (3, 0.6)]);
        let b = profile(2, &[(2, 1.0), (3, 0.2), (4, 0.4)]);
        let c = profile(3, &[(1, 0.0), (3, 0.8), (4, 0.6)]);
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        for p in [&a, &b, &c] {
            net.add_antibody(p).unwrap();
        }
        for i in 0..3 {
            assert_eq!(net.pool()[i].peer_matches().len(), 3);
            for j in 0..3 {
                assert_eq!(net.pool()[i].peer_matches()[j], net.pool()[j].peer_matches()[i]);
            }
        }
    }

    #[test]
    fn full_pool_rejects_insertion() {
        let ag = antigen();
        let others: Vec<_> = (1..=100).map(|u| profile(u, &[(1, 0.4)])).collect();
        let extra = profile(101, &[(2, 0.4)]);
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), SimilarityParams::default()).unwrap();
        for p in &others {
            assert!(net.add_antibody(p).unwrap());
        }
        assert_eq!(net.add_antibody(&extra), Err(ImmuneError::PoolFull));
    }

    #[test]
    fn skips_antigen_and_empty_profiles() {
        let ag = antigen();
        let empty = UserProfile::new(7, []).unwrap();
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        assert!(!net.add_antibody(&ag).unwrap());
        assert!(!net.add_antibody(&empty).unwrap());
        assert!(net.is_empty());
        assert_eq!(net.reviewers_examined(), 2);
    }

    #[test]
    fn iterate_on_empty_pool_fails() {
        let ag = antigen();
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        assert_eq!(net.iterate(), Err(ImmuneError::EmptyPool));
        assert_eq!(net.mature(), Err(ImmuneError::EmptyPool));
    }

    #[test]
    fn decaying_antibody_is_removed_below_threshold() {
        let ag = antigen();
        let stranger = profile(5, &[(9, 0.4)]);
        let params = ImmuneParams { stimulation: 0.0, death_rate: 0.5, ..Default::default() };
        let mut net = ImmuneNetwork::new(&ag, params, unpenalised()).unwrap();
        net.add_antibody(&stranger).unwrap();
        // 10 * 0.5^t drops below 0.01 at t = 10.
        for step in 1..10 {
            assert_eq!(net.iterate().unwrap(), 0, "step {step}");
        }
        assert_eq!(net.stable_iterations(), 9);
        assert_eq!(net.iterate().unwrap(), 1);
        assert!(net.is_empty());
        assert_eq!(net.stable_iterations(), 0);
    }

    #[test]
    fn maturation_resets_then_saturates() {
        let ag = antigen();
        let copy = profile(1, &[(1, 0.2), (2, 0.8), (3, 0.4), (4, 1.0)]);
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        net.add_antibody(&copy).unwrap();
        for _ in 0..3 {
            net.iterate().unwrap();
        }
        assert_eq!(net.pool()[0].concentration(), 100.0);
        // growth factor 1 + 0.2*1*10 - 0.1 = 2.9: 10 -> 29 -> 84.1 -> 100
        let outcome = net.mature().unwrap();
        assert_eq!(outcome, MaturationOutcome::Saturated { iterations: 3 });
        assert_eq!(net.pool()[0].concentration(), 100.0);
    }

    #[test]
    fn maturation_with_no_stimulation_empties_pool() {
        let ag = antigen();
        let copy = profile(1, &[(1, 0.2), (2, 0.8), (3, 0.4), (4, 1.0)]);
        let params = ImmuneParams { stimulation: 0.0, ..Default::default() };
        let mut net = ImmuneNetwork::new(&ag, params, unpenalised()).unwrap();
        net.add_antibody(&copy).unwrap();
        // 10 * 0.9^t < 0.01 first at t = 66
        let outcome = net.mature().unwrap();
        assert_eq!(outcome, MaturationOutcome::PoolEmptied { iterations: 66 });
        assert!(outcome.is_degenerate());
    }

    #[test]
    fn maturation_cap_bounds_balanced_dynamics() {
        let ag = antigen();
        let copy = profile(1, &[(1, 0.2), (2, 0.8), (3, 0.4), (4, 1.0)]);
        // k1 * m * y == k3: concentration stays at its initial value forever.
        let params = ImmuneParams { stimulation: 0.01, maturation_cap: 50, ..Default::default() };
        let mut net = ImmuneNetwork::new(&ag, params, unpenalised()).unwrap();
        net.add_antibody(&copy).unwrap();
        assert_eq!(net.mature().unwrap(), MaturationOutcome::CapReached { iterations: 50 });
        assert_eq!(net.len(), 1);
    }

    #[test]
    fn empty_stream_leaves_network_untouched() {
        let ag = antigen();
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        let outcome = net.run_selection(std::iter::empty(), |_| true).unwrap();
        assert_eq!(outcome, SelectionOutcome::ReviewersExhausted);
        assert!(net.is_empty());
        assert!(!net.is_stable());
        assert_eq!(net.iterations(), 0);
    }

    #[test]
    fn short_stream_never_iterates() {
        let ag = antigen();
        let reviewers: Vec<_> = (1..=5).map(|u| profile(u, &[(1, 0.2), (2, 0.8)])).collect();
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        let outcome = net.run_selection(&reviewers, |_| true).unwrap();
        assert_eq!(outcome, SelectionOutcome::ReviewersExhausted);
        assert_eq!(net.len(), 5);
        assert_eq!(net.iterations(), 0);
    }

    #[test]
    fn rejected_reviewers_still_count_as_examined() {
        let ag = antigen();
        let reviewers: Vec<_> = (1..=6).map(|u| profile(u, &[(1, 0.2), (2, 0.8)])).collect();
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        net.run_selection(&reviewers, |p| p.user_id() % 2 == 0).unwrap();
        assert_eq!(net.len(), 3);
        assert_eq!(net.reviewers_examined(), 6);
    }

    #[test]
    fn trace_records_each_step() {
        let ag = antigen();
        let a = profile(1, &[(1, 0.2), (2, 0.8)]);
        let b = profile(2, &[(3, 0.2), (4, 0.8)]);
        let mut net = ImmuneNetwork::new(&ag, ImmuneParams::default(), unpenalised()).unwrap();
        net.enable_trace();
        net.add_antibody(&a).unwrap();
        net.add_antibody(&b).unwrap();
        net.iterate().unwrap();
        net.iterate().unwrap();
        assert_eq!(net.trace().len(), 4);
        assert_eq!(net.trace()[2].iteration, 2);
        let mut out = Vec::new();
        write_trace(net.trace(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("iteration,antibody_user_id,concentration\n1,1,"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn params_validation() {
        assert!(ImmuneParams::default().validate().is_ok());
        let bad = [
            ImmuneParams { init_concentration: 100.0, ..Default::default() },
            ImmuneParams { min_concentration: 10.0, ..Default::default() },
            ImmuneParams { pool_capacity: 0, ..Default::default() },
            ImmuneParams { suppression: -0.1, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}

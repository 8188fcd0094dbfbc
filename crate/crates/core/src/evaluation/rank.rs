//! Rank concordance between actual and predicted orderings of a user's films.

use crate::dataset::{MovieId, VoteScore};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedPair {
    pub movie: MovieId,
    pub actual: VoteScore,
    pub predicted: f64,
}

/// For each film in actual order (actual desc, movie asc), its position in the
/// predicted order (predicted desc, movie asc). Positions are 0-based.
pub fn predicted_ranks(pairs: &[RankedPair]) -> Vec<usize> {
    let mut by_predicted: Vec<usize> = (0..pairs.len()).collect();
    by_predicted.sort_by(|&a, &b| {
        pairs[b]
            .predicted
            .total_cmp(&pairs[a].predicted)
            .then(pairs[a].movie.cmp(&pairs[b].movie))
    });
    let mut predicted_pos = vec![0; pairs.len()];
    for (pos, &idx) in by_predicted.iter().enumerate() {
        predicted_pos[idx] = pos;
    }
    let mut by_actual: Vec<usize> = (0..pairs.len()).collect();
    by_actual.sort_by(|&a, &b| {
        pairs[b].actual.cmp(&pairs[a].actual).then(pairs[a].movie.cmp(&pairs[b].movie))
    });
    by_actual.into_iter().map(|idx| predicted_pos[idx]).collect()
}

/// Number of inversions in `ranks`, counted by merge sort.
pub fn count_inversions(ranks: &[usize]) -> u64 {
    fn sort(v: &mut [usize], buf: &mut Vec<usize>) -> u64 {
        let n = v.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut inversions = sort(&mut v[..mid], buf) + sort(&mut v[mid..], buf);
        buf.clear();
        let (mut i, mut j) = (0, mid);
        while i < mid && j < n {
            if v[j] < v[i] {
                inversions += (mid - i) as u64;
                buf.push(v[j]);
                j += 1;
            } else {
                buf.push(v[i]);
                i += 1;
            }
        }
        buf.extend_from_slice(&v[i..mid]);
        buf.extend_from_slice(&v[j..n]);
        v.copy_from_slice(buf);
        inversions
    }
    let mut work = ranks.to_vec();
    sort(&mut work, &mut Vec::with_capacity(ranks.len()))
}

/// Discordant pairs between the actual and predicted orderings.
pub fn discordant_pairs(pairs: &[RankedPair]) -> u64 {
    count_inversions(&predicted_ranks(pairs))
}

/// `1 - 4 * discordant / (n * (n - 1))`; requires at least two films.
pub fn kendall_tau(pairs: &[RankedPair]) -> Result<f64, EvalError> {
    let n = pairs.len();
    if n < 2 {
        return Err(EvalError::TooFewPairs(n));
    }
    let nd = discordant_pairs(pairs) as f64;
    let n = n as f64;
    Ok(1.0 - 4.0 * nd / (n * (n - 1.0)))
}

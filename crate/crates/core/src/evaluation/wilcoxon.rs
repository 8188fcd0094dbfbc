//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped and tied magnitudes share their average rank.
//! Up to [`EXACT_LIMIT`] nonzero differences the null distribution of the
//! positive rank sum is enumerated exactly (ranks are doubled so tied
//! half-ranks stay integral); above it a tie-corrected normal approximation
//! with continuity correction is used.

use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

pub const EXACT_LIMIT: usize = 20;
pub const ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// min(W+, W-)
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub n_effective: usize,
    pub p_value: f64,
    pub exact: bool,
    pub significant_at_95: bool,
}

/// Average ranks (1-based) of `values`, doubled to stay integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share rank (start + 1 + end) / 2
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}

/// Two-sided exact p-value: 2 * P(T <= w) under random signs, capped at 1.
/// `ranks` and `w` are in doubled units.
pub(crate) fn exact_p_value(ranks: &[u64], w: u64) -> f64 {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let below: u64 = counts[..=(w as usize).min(reach)].iter().sum();
    let p = 2.0 * below as f64 / (1u64 << ranks.len()) as f64;
    p.min(1.0)
}

fn normal_p_value(ranks: &[u64], w: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let tie_term: f64 = sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.sf(z)).min(1.0)
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(EvalError::AllZeroDifferences);
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&magnitudes);
    let (mut plus2, mut minus2) = (0u64, 0u64);
    for (d, r) in diffs.iter().zip(&ranks) {
        if *d > 0.0 {
            plus2 += r;
        } else {
            minus2 += r;
        }
    }
    let w2 = plus2.min(minus2);
    let statistic = w2 as f64 / 2.0;
    let exact = diffs.len() <= EXACT_LIMIT;
    let p_value = if exact { exact_p_value(&ranks, w2) } else { normal_p_value(&ranks, statistic) };
    Ok(WilcoxonResult {
        statistic,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        n_effective: diffs.len(),
        p_value,
        exact,
        significant_at_95: p_value < ALPHA,
    })
}

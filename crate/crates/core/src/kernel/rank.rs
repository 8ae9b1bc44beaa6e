//! Wilcoxon rank-sum test, one-sided in the direction "treatment values are
//! stochastically smaller than control values".
//!
//! Ties are ranked with midranks. The exact null distribution is obtained
//! from the conditional permutation distribution of the midrank sum, counted
//! with a subset-sum recursion over doubled midranks (which are integers).

use std::cmp::Ordering;

use super::{ensure_finite, Concordance, PValue};
use crate::error::{Error, Result};
use crate::kernel::normal::norm_cdf;
use crate::scalar::Real;

/// Largest pooled sample size for which [`RankSumMethod::Auto`] enumerates.
pub const EXACT_MAX_POOLED: usize = 20;

/// How the null distribution of the rank sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankSumMethod {
    /// Exact when the pooled size is at most [`EXACT_MAX_POOLED`] and there are
    /// no ties; normal approximation otherwise.
    #[default]
    Auto,
    /// Exact conditional distribution of the midrank sum, ties included.
    Exact,
    /// Normal approximation with tie-corrected variance and continuity correction.
    Asymptotic,
}

/// Outcome of one rank-sum comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSumTest<T = f64> {
    pub p_value: PValue<T>,
    pub concordance: Concordance<T>,
    /// Mann-Whitney count for the treatment arm: `#{treat > control} + ties/2`.
    pub u_treat: T,
}

struct Ranked {
    /// Doubled midranks in the original pooled order (treatment first).
    doubled: Vec<u32>,
    /// Σ (t³ − t) over tie groups.
    tie_sum: f64,
    has_ties: bool,
}

fn rank_pooled<T: Real>(treat: &[T], control: &[T]) -> Ranked {
    let n = treat.len() + control.len();
    let pooled: Vec<T> = treat.iter().chain(control).copied().collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| pooled[a].partial_cmp(&pooled[b]).unwrap_or(Ordering::Equal));

    let mut doubled = vec![0u32; n];
    let mut tie_sum = 0.0;
    let mut has_ties = false;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[idx[j]] == pooled[idx[i]] {
            j += 1;
        }
        // positions i+1 ..= j share midrank (i+1+j)/2
        let d = (i + 1 + j) as u32;
        for &k in &idx[i..j] {
            doubled[k] = d;
        }
        let t = (j - i) as f64;
        if j - i > 1 {
            has_ties = true;
            tie_sum += t * t * t - t;
        }
        i = j;
    }
    Ranked {
        doubled,
        tie_sum,
        has_ties,
    }
}

/// Midranks of the pooled sample `treat ++ control`.
pub fn midranks<T: Real>(treat: &[T], control: &[T]) -> Vec<T> {
    rank_pooled(treat, control)
        .doubled
        .into_iter()
        .map(|d| T::from_count(d as usize) / T::lit(2.0))
        .collect()
}

fn check_samples<T: Real>(treat: &[T], control: &[T]) -> Result<()> {
    if treat.is_empty() || control.is_empty() {
        return Err(Error::Input("rank-sum test requires two nonempty samples".into()));
    }
    ensure_finite(treat, "treatment sample")?;
    ensure_finite(control, "control sample")
}

/// One-sided rank-sum p-value with the default [`RankSumMethod::Auto`] policy.
pub fn rank_sum_pvalue<T: Real>(treat: &[T], control: &[T]) -> Result<PValue<T>> {
    rank_sum_pvalue_with(treat, control, RankSumMethod::Auto)
}

pub fn rank_sum_pvalue_with<T: Real>(
    treat: &[T],
    control: &[T],
    method: RankSumMethod,
) -> Result<PValue<T>> {
    rank_sum_test(treat, control, method).map(|t| t.p_value)
}

/// Exact conditional p-value `P(W ≤ w_obs)` of the midrank sum of `treat`.
pub fn rank_sum_exact_pvalue<T: Real>(treat: &[T], control: &[T]) -> Result<PValue<T>> {
    rank_sum_pvalue_with(treat, control, RankSumMethod::Exact)
}

/// Ranks once and returns both the p-value and the concordance.
pub fn rank_sum_test<T: Real>(
    treat: &[T],
    control: &[T],
    method: RankSumMethod,
) -> Result<RankSumTest<T>> {
    check_samples(treat, control)?;
    let m = treat.len();
    let n = control.len();
    let ranked = rank_pooled(treat, control);
    let w2: u64 = ranked.doubled[..m].iter().map(|&d| d as u64).sum();
    // U = W − m(m+1)/2, in doubled units
    let u2 = w2 - (m * (m + 1)) as u64;
    let mn = (m * n) as f64;
    let u_treat = u2 as f64 / 2.0;

    let exact = match method {
        RankSumMethod::Exact => true,
        RankSumMethod::Asymptotic => false,
        RankSumMethod::Auto => m + n <= EXACT_MAX_POOLED && !ranked.has_ties,
    };
    let p = if exact {
        T::lit(exact_lower_tail(&ranked.doubled, m, w2))
    } else {
        asymptotic_lower_tail::<T>(u_treat, m, n, ranked.tie_sum)
    };
    let theta = T::lit((mn - u_treat) / mn);
    Ok(RankSumTest {
        p_value: PValue::clamped(p)?,
        concordance: Concordance::new(theta, m, n)?,
        u_treat: T::lit(u_treat),
    })
}

/// `P(W₂ ≤ w2_obs)` where `W₂` is the sum of `m` doubled midranks drawn
/// without replacement from `doubled`.
fn exact_lower_tail(doubled: &[u32], m: usize, w2_obs: u64) -> f64 {
    let total: usize = doubled.iter().map(|&d| d as usize).sum();
    // counts[k][s]: number of k-subsets with doubled-rank sum s
    let mut counts = vec![vec![0f64; total + 1]; m + 1];
    counts[0][0] = 1.0;
    for (seen, &d) in doubled.iter().enumerate() {
        let d = d as usize;
        let kmax = m.min(seen + 1);
        for k in (1..=kmax).rev() {
            let (lo, hi) = counts.split_at_mut(k);
            let prev = &lo[k - 1];
            let cur = &mut hi[0];
            for s in (d..=total).rev() {
                let c = prev[s - d];
                if c != 0.0 {
                    cur[s] += c;
                }
            }
        }
    }
    let row = &counts[m];
    let all: f64 = row.iter().sum();
    let below: f64 = row[..=(w2_obs as usize).min(total)].iter().sum();
    below / all
}

/// Normal approximation for `P(U ≤ u_obs)` with the lower-tail continuity
/// correction `u_obs + 1/2`. A degenerate null (every value tied) gives 0.5.
fn asymptotic_lower_tail<T: Real>(u_treat: f64, m: usize, n: usize, tie_sum: f64) -> T {
    let (mf, nf) = (m as f64, n as f64);
    let big_n = mf + nf;
    let mean = mf * nf / 2.0;
    let tie_adj = if big_n > 1.0 {
        tie_sum / (big_n * (big_n - 1.0))
    } else {
        0.0
    };
    let var = mf * nf / 12.0 * ((big_n + 1.0) - tie_adj);
    if !(var > 1e-12) {
        return T::lit(0.5);
    }
    norm_cdf(T::lit((u_treat - mean + 0.5) / var.sqrt()))
}

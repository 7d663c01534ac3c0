//! Mann-Whitney U test and descriptive statistics for result tables.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest per-sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    /// The first sample tends to be smaller.
    Less,
    Greater,
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UMethod {
    Exact,
    NormalApproxTieCorrected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U of the first sample: the number of pairs `(a_i, b_j)` with
    /// `a_i > b_j`, ties counting one half.
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: UMethod,
    pub alternative: Alternative,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("both samples must be non-empty")]
    EmptySample,
    #[error("samples must not contain NaN")]
    NotANumber,
    #[error("exact test supports at most {EXACT_MAX_N} values per sample")]
    TooLargeForExact,
}

/// Chooses the exact null distribution for small samples (ties allowed) and
/// the tie-corrected normal approximation otherwise.
pub fn mann_whitney(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
) -> Result<UTestResult, StatsError> {
    if a.len() <= EXACT_MAX_N && b.len() <= EXACT_MAX_N {
        mann_whitney_exact(a, b, alternative)
    } else {
        mann_whitney_normal(a, b, alternative)
    }
}

/// Pooled sample with mid-ranks, doubled so that they stay integral.
struct Ranked {
    doubled_ranks: Vec<u64>,
    tie_sizes: Vec<usize>,
    n1: usize,
}

fn rank(a: &[f64], b: &[f64]) -> Result<Ranked, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(StatsError::NotANumber);
    }
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut doubled_ranks = vec![0; pooled.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean; doubled: i+j+2
        for &(_, orig) in &pooled[i..=j] {
            doubled_ranks[orig] = (i + j + 2) as u64;
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    Ok(Ranked {
        doubled_ranks,
        tie_sizes,
        n1: a.len(),
    })
}

impl Ranked {
    fn n2(&self) -> usize {
        self.doubled_ranks.len() - self.n1
    }

    /// 2U for a subset whose doubled rank sum is `sum2`.
    fn doubled_u(&self, sum2: u64) -> u64 {
        let n1 = self.n1 as u64;
        sum2 - n1 * (n1 + 1)
    }

    fn observed_doubled_u(&self) -> u64 {
        self.doubled_u(self.doubled_ranks[..self.n1].iter().sum())
    }

    fn has_ties(&self) -> bool {
        self.tie_sizes.iter().any(|&t| t > 1)
    }
}

/// Exact permutation p-value. Tie-free samples use the classical count
/// recurrence; tied samples enumerate every labeling of the pooled mid-ranks.
pub fn mann_whitney_exact(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
) -> Result<UTestResult, StatsError> {
    let ranked = rank(a, b)?;
    let (n1, n2) = (ranked.n1, ranked.n2());
    if n1 > EXACT_MAX_N || n2 > EXACT_MAX_N {
        return Err(StatsError::TooLargeForExact);
    }
    let observed = ranked.observed_doubled_u();
    // (labelings with 2U <= observed, labelings with 2U >= observed, total)
    let (le, ge, total) = if ranked.has_ties() {
        tied_tail_counts(&ranked, observed)
    } else {
        let dist = u_distribution(n1, n2);
        let u = (observed / 2) as usize;
        let le: u64 = dist[..=u].iter().sum();
        let ge: u64 = dist[u..].iter().sum();
        (le, ge, dist.iter().sum())
    };
    let total = total as f64;
    let p_less = le as f64 / total;
    let p_greater = ge as f64 / total;
    let p_value = match alternative {
        Alternative::Less => p_less,
        Alternative::Greater => p_greater,
        Alternative::TwoSided => (2.0 * p_less.min(p_greater)).min(1.0),
    };
    Ok(UTestResult {
        u_statistic: observed as f64 / 2.0,
        p_value,
        method: UMethod::Exact,
        alternative,
    })
}

/// Number of arrangements of `n1` + `n2` distinct values giving each U.
fn u_distribution(n1: usize, n2: usize) -> Vec<u64> {
    // counts[i][j][u]: arrangements of i first-sample and j second-sample values
    let max_u = n1 * n2;
    let mut counts = vec![vec![vec![0u64; max_u + 1]; n2 + 1]; n1 + 1];
    for i in 0..=n1 {
        for j in 0..=n2 {
            if i == 0 || j == 0 {
                counts[i][j][0] = 1;
                continue;
            }
            // the largest value belongs either to the first sample (beating all
            // j second-sample values) or to the second
            for u in 0..=i * j {
                let mut c = counts[i][j - 1][u];
                if u >= j {
                    c += counts[i - 1][j][u - j];
                }
                counts[i][j][u] = c;
            }
        }
    }
    counts.swap_remove(n1).swap_remove(n2)
}

fn tied_tail_counts(ranked: &Ranked, observed: u64) -> (u64, u64, u64) {
    // ways[k][s]: subsets of size k whose doubled rank sum is s
    let n1 = ranked.n1;
    let max_sum: u64 = ranked.doubled_ranks.iter().sum();
    let mut ways = vec![vec![0u64; max_sum as usize + 1]; n1 + 1];
    ways[0][0] = 1;
    for &r in &ranked.doubled_ranks {
        let r = r as usize;
        for k in (1..=n1).rev() {
            for s in (r..=max_sum as usize).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let (mut le, mut ge, mut total) = (0, 0, 0);
    for (sum2, &count) in ways[n1].iter().enumerate() {
        if count == 0 {
            continue;
        }
        let u2 = ranked.doubled_u(sum2 as u64);
        total += count;
        if u2 <= observed {
            le += count;
        }
        if u2 >= observed {
            ge += count;
        }
    }
    (le, ge, total)
}

/// Normal approximation with continuity correction 0.5 and tie-corrected variance.
pub fn mann_whitney_normal(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
) -> Result<UTestResult, StatsError> {
    let ranked = rank(a, b)?;
    let (n1, n2) = (ranked.n1 as f64, ranked.n2() as f64);
    let n = n1 + n2;
    let u = ranked.observed_doubled_u() as f64 / 2.0;
    let mean = n1 * n2 / 2.0;
    let tie_term: f64 = ranked
        .tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = if n > 1.0 {
        n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    } else {
        0.0
    };
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let sd = var.sqrt();
        let std_normal = Normal::standard();
        match alternative {
            Alternative::Less => std_normal.cdf((u - mean + 0.5) / sd),
            Alternative::Greater => std_normal.sf((u - mean - 0.5) / sd),
            Alternative::TwoSided => {
                let dev = (u - mean).abs() - 0.5;
                if dev <= 0.0 {
                    1.0
                } else {
                    (2.0 * std_normal.sf(dev / sd)).min(1.0)
                }
            }
        }
    };
    Ok(UTestResult {
        u_statistic: u,
        p_value: p_value.clamp(0.0, 1.0),
        method: UMethod::NormalApproxTieCorrected,
        alternative,
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Pearson correlation coefficient; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, _) = mean_sd(x);
    let (my, _) = mean_sd(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// The per-run quantities that summary rows aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub fshc: f64,
    pub wall_time_s: f64,
    pub preferred_pct: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub runs: usize,
    pub mean_fshc: f64,
    pub std_fshc: f64,
    pub mean_time_s: f64,
    pub mean_preferred_pct: f64,
}

pub fn descriptive(runs: &[RunStats]) -> TableRow {
    let col = |f: fn(&RunStats) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let (mean_fshc, std_fshc) = mean_sd(&col(|r| r.fshc));
    TableRow {
        runs: runs.len(),
        mean_fshc,
        std_fshc,
        mean_time_s: mean_sd(&col(|r| r.wall_time_s)).0,
        mean_preferred_pct: mean_sd(&col(|r| r.preferred_pct)).0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn fully_separated_triples() {
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.method, UMethod::Exact);
        assert!(close(r.p_value, 0.05));
    }

    #[test]
    fn identical_samples() {
        let a = [3.0, 1.0, 4.0, 1.5];
        let r = mann_whitney(&a, &a, Alternative::TwoSided).unwrap();
        assert_eq!(r.u_statistic, 8.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn tied_extreme_labeling() {
        let r = mann_whitney(&[1.0; 4], &[5.0; 4], Alternative::Less).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.method, UMethod::Exact);
        assert!(close(r.p_value, 1.0 / 70.0));
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (10..30).map(f64::from).collect();
        let r = mann_whitney(&a, &b, Alternative::Less).unwrap();
        assert_eq!(r.method, UMethod::NormalApproxTieCorrected);
        assert!(r.p_value < 0.01);
        let g = mann_whitney(&a, &b, Alternative::Greater).unwrap();
        assert!(g.p_value > 0.99);
    }

    #[test]
    fn all_tied_normal_is_one() {
        let r = mann_whitney_normal(&[2.0; 10], &[2.0; 12], Alternative::Less).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            mann_whitney(&[], &[1.0], Alternative::Less),
            Err(StatsError::EmptySample)
        );
        assert_eq!(
            mann_whitney(&[f64::NAN], &[1.0], Alternative::Less),
            Err(StatsError::NotANumber)
        );
        assert_eq!(
            mann_whitney_exact(&[0.0; 9], &[1.0], Alternative::Less),
            Err(StatsError::TooLargeForExact)
        );
    }

    #[test]
    fn u_distribution_totals_are_binomial() {
        // sum over U equals C(n1 + n2, n1)
        assert_eq!(u_distribution(3, 3).iter().sum::<u64>(), 20);
        assert_eq!(u_distribution(8, 8).iter().sum::<u64>(), 12870);
        assert_eq!(u_distribution(2, 2), vec![1, 1, 2, 1, 1]);
    }

    #[test]
    fn descriptive_rows() {
        let one = descriptive(&[RunStats {
            fshc: 40.0,
            wall_time_s: 1.0,
            preferred_pct: 50.0,
        }]);
        assert_eq!(one.std_fshc, 0.0);
        assert_eq!(one.runs, 1);
        let two = descriptive(&[
            RunStats {
                fshc: 50.0,
                wall_time_s: 1.0,
                preferred_pct: 60.0,
            },
            RunStats {
                fshc: 54.0,
                wall_time_s: 3.0,
                preferred_pct: 70.0,
            },
        ]);
        assert_eq!(two.mean_fshc, 52.0);
        assert_eq!(format!("{:.2}", two.std_fshc), "2.83");
        assert_eq!(two.mean_time_s, 2.0);
        assert_eq!(two.mean_preferred_pct, 65.0);
    }

    #[test]
    fn pearson_basic() {
        assert!(close(
            pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0
        ));
        assert!(close(
            pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0
        ));
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), None);
    }
}

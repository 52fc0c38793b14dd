//! Wilcoxon rank-sum test with midranks for ties.

use super::TaxonFit;
use crate::scalar::Scalar;
use crate::stats::{tail_prob, Distribution};

/// Largest pooled sample size for which the exact null distribution is used
/// (only when there are no ties).
pub const EXACT_MAX_N: usize = 10;

fn midranks<T: Scalar>(pooled: &[T]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].partial_cmp(&pooled[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; pooled.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

/// Number of ways to pick `m` of the ranks `1..=n` with each possible sum.
fn rank_sum_counts(n: usize, m: usize) -> Vec<f64> {
    let max_sum = n * (n + 1) / 2;
    // ways[k][s]: subsets of size k with sum s
    let mut ways = vec![vec![0.0f64; max_sum + 1]; m + 1];
    ways[0][0] = 1.0;
    for r in 1..=n {
        for k in (1..=m.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    ways.swap_remove(m)
}

/// Two-sided rank-sum test of `case` against `control`.
///
/// The estimate is the rank-biserial correlation
/// `2·(mean rank of case − mean rank of control) / n`, in `[−1, 1]`.
pub fn wilcoxon_test<T: Scalar>(control: &[T], case: &[T]) -> TaxonFit<T> {
    let (n0, n1) = (control.len(), case.len());
    if n0 == 0 || n1 == 0 {
        return TaxonFit::not_applicable("empty group");
    }
    let pooled: Vec<T> = control.iter().chain(case).copied().collect();
    if pooled.iter().all(|&v| v == pooled[0]) {
        return TaxonFit::not_applicable("all values identical");
    }
    let n = n0 + n1;
    let (ranks, tie_term) = midranks(&pooled);
    let r0: f64 = ranks[..n0].iter().sum();
    let r1: f64 = ranks[n0..].iter().sum();
    let estimate = 2.0 * (r1 / n1 as f64 - r0 / n0 as f64) / n as f64;

    let p = if n <= EXACT_MAX_N && tie_term == 0.0 {
        let counts = rank_sum_counts(n, n1);
        let total: f64 = counts.iter().sum();
        // rank sums are integers without ties
        let w = r1.round() as usize;
        let lower: f64 = counts[..=w].iter().sum::<f64>() / total;
        let upper: f64 = counts[w..].iter().sum::<f64>() / total;
        (2.0 * lower.min(upper)).min(1.0)
    } else {
        let (nf, n0f, n1f) = (n as f64, n0 as f64, n1 as f64);
        let mean = n1f * (nf + 1.0) / 2.0;
        let var = n0f * n1f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        let diff = r1 - mean;
        let z = (diff - 0.5 * diff.signum()) / var.sqrt();
        // continuity correction never crosses zero
        let z = if diff.abs() <= 0.5 { 0.0 } else { z };
        match tail_prob(Distribution::Normal, z, true) {
            Ok(p) => p,
            Err(_) => return TaxonFit::not_applicable("degenerate rank variance"),
        }
    };
    TaxonFit {
        estimate: T::lit(estimate),
        se: None,
        df: None,
        p: Some(T::lit(p)),
        applicable: true,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::Direction;

    /// Enumerates all assignments of pooled values to the case group.
    fn brute_force_p(control: &[f64], case: &[f64]) -> f64 {
        let pooled: Vec<f64> = control.iter().chain(case).copied().collect();
        let n = pooled.len();
        let m = case.len();
        let rank = |v: f64| pooled.iter().filter(|&&x| x < v).count() as f64 + 1.0;
        let observed: f64 = case.iter().map(|&v| rank(v)).sum();
        let mean = m as f64 * (n as f64 + 1.0) / 2.0;
        let (mut extreme, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != m {
                continue;
            }
            let s: f64 = (0..n)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| rank(pooled[i]))
                .sum();
            total += 1;
            if (s - mean).abs() >= (observed - mean).abs() - 1e-9 {
                extreme += 1;
            }
        }
        extreme as f64 / total as f64
    }

    #[test]
    fn exact_enumeration_example() {
        let fit = wilcoxon_test::<f64>(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert!((fit.p.unwrap() - 0.1).abs() < 1e-12);
        assert!((brute_force_p(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]) - 0.1).abs() < 1e-12);
        assert_eq!(Direction::of(fit.estimate), Direction::Positive);
        assert_eq!(fit.estimate, 1.0);
    }

    #[test]
    fn exact_matches_brute_force() {
        let control = [0.3, 1.7, 2.2, 5.1];
        let case = [0.9, 3.3, 4.0, 6.2, 7.5];
        let fit = wilcoxon_test(&control, &case);
        assert!((fit.p.unwrap() - brute_force_p(&control, &case)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_groups() {
        let fit = wilcoxon_test(&[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!(fit.estimate, 0.0);
        assert_eq!(fit.p, Some(1.0));
    }

    #[test]
    fn constant_data_is_not_applicable() {
        let fit = wilcoxon_test(&[0.0, 0.0, 0.0], &[0.0, 0.0]);
        assert!(!fit.applicable);
        assert_eq!(fit.p, None);
    }

    #[test]
    fn tie_corrected_normal_approximation() {
        // reference values from the textbook tie-corrected formula, by hand
        let control = [0.0, 0.0, 1.0, 2.0, 2.0, 3.0];
        let case = [1.0, 2.0, 3.0, 3.0, 4.0, 5.0];
        let fit = wilcoxon_test(&control, &case);
        // ranks: 0,0→1.5; 1,1→3.5; 2,2,2→6; 3,3,3→9; 4→11; 5→12
        let r1 = 3.5 + 6.0 + 9.0 + 9.0 + 11.0 + 12.0;
        let ties = (8.0 - 2.0) * 2.0 + (27.0 - 3.0) * 2.0;
        let var: f64 = 36.0 / 12.0 * (13.0 - ties / (12.0 * 11.0));
        let z: f64 = (r1 - 39.0 - 0.5) / var.sqrt();
        let p = tail_prob(Distribution::Normal, z, true).unwrap();
        assert!((fit.p.unwrap() - p).abs() < 1e-14);
    }

    #[test]
    fn monotone_transform_invariance() {
        let control = [0.01, 0.0, 0.3, 0.02, 0.0, 0.5, 0.11, 0.07, 0.09, 0.2, 0.0, 0.04];
        let case = [0.4, 0.25, 0.0, 0.6, 0.33, 0.8, 0.01, 0.19, 0.5, 0.0];
        let f = |v: &f64| (v * 3.0 + 1.0).ln() + v.powi(3);
        let a = wilcoxon_test(&control, &case);
        let tc: Vec<f64> = control.iter().map(f).collect();
        let tk: Vec<f64> = case.iter().map(f).collect();
        let b = wilcoxon_test(&tc, &tk);
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.p, b.p);
    }
}

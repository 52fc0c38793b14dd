//! Linear model on log2-transformed normalized abundances.

use super::TaxonFit;
use crate::scalar::Scalar;
use crate::stats::{ols_fit, Matrix};

/// Half the smallest positive value, used as the pseudo-count before logging.
pub fn half_min_positive<T: Scalar>(values: &[T]) -> Option<T> {
    values
        .iter()
        .copied()
        .filter(|&v| v > T::zero())
        .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.min(v))))
        .map(|m| m * T::lit(0.5))
}

/// Fits `log2(value + δ) ~ design` and reports design column `target`.
///
/// With `already_log` the values are used as the response unchanged (for
/// log-ratio transformed inputs).
pub fn lin_log_fit<T: Scalar>(values: &[T], design: &Matrix<T>, target: usize, already_log: bool) -> TaxonFit<T> {
    let response: Vec<T> = if already_log {
        values.to_vec()
    } else {
        let Some(delta) = half_min_positive(values) else {
            return TaxonFit::not_applicable("taxon has no positive values");
        };
        values.iter().map(|&v| (v + delta).log2()).collect()
    };
    let fit = match ols_fit(design, &response) {
        Ok(fit) => fit,
        Err(e) => return TaxonFit::not_applicable(&e.to_string()),
    };
    let Some(k) = fit.position(target) else {
        return TaxonFit::not_applicable("group indicator is collinear with covariates");
    };
    let se = fit.std_errors[k];
    TaxonFit {
        estimate: fit.summary.coefficients[k],
        se: (se > T::zero() && se.is_finite()).then_some(se),
        df: Some(T::from_usize(fit.df).unwrap()),
        p: Some(fit.p_values[k]),
        applicable: true,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(n0: usize, n1: usize) -> Matrix<f64> {
        Matrix::from_fn(n0 + n1, 2, |i, j| if j == 0 || i >= n0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn fourfold_is_two_on_log2_scale() {
        let control = [0.01, 0.02, 0.015, 0.03];
        let values: Vec<f64> = control.iter().copied().chain(control.iter().map(|v| 4.0 * v)).collect();
        // the estimate is the difference of group means of log2(value + δ)
        let fit = lin_log_fit(&values, &design(4, 4), 1, false);
        let delta = 0.005;
        let want: f64 = (0..4)
            .map(|i| (values[i + 4] + delta).log2() - (values[i] + delta).log2())
            .sum::<f64>()
            / 4.0;
        assert!((fit.estimate - want).abs() < 1e-12);
        assert!(fit.estimate > 1.0 && fit.estimate < 2.0);
        assert_eq!(fit.df, Some(6.0));
        // without the pseudo-count the fold is recovered exactly
        let logged: Vec<f64> = values.iter().map(|v| v.log2()).collect();
        let exact = lin_log_fit(&logged, &design(4, 4), 1, true);
        assert!((exact.estimate - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_groups_give_zero() {
        let v = [0.0, 0.1, 0.3, 0.0, 0.1, 0.3];
        let fit = lin_log_fit(&v, &design(3, 3), 1, false);
        assert!(fit.estimate.abs() < 1e-12);
        assert!((fit.p.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_not_applicable() {
        let fit = lin_log_fit(&[0.0; 6], &design(3, 3), 1, false);
        assert!(!fit.applicable);
    }

    #[test]
    fn half_min_positive_ignores_zeros() {
        assert_eq!(half_min_positive(&[0.0, 0.4, 0.2, 0.0]), Some(0.1));
        assert_eq!(half_min_positive::<f64>(&[0.0, 0.0]), None);
    }
}

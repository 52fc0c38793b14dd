//! Ordinary least squares with collinear-column pruning.

use super::dist::{tail_prob, Distribution};
use super::linalg::Matrix;
use super::newton::FitSummary;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Least-squares fit on the non-collinear columns of the design.
#[derive(Debug, Clone)]
pub struct OlsFit<T> {
    /// Indices of design columns retained, in order; all per-coefficient
    /// vectors below are aligned with this list.
    pub kept_columns: Vec<usize>,
    pub dropped_columns: Vec<usize>,
    pub summary: FitSummary<T>,
    pub std_errors: Vec<T>,
    pub t_stats: Vec<T>,
    pub p_values: Vec<T>,
    /// Residual degrees of freedom, `n − rank(X)`.
    pub df: usize,
    pub sigma2: T,
}

impl<T: Scalar> OlsFit<T> {
    /// Position of an original design column among the kept ones.
    pub fn position(&self, column: usize) -> Option<usize> {
        self.kept_columns.iter().position(|&c| c == column)
    }

    pub fn coefficient(&self, column: usize) -> Option<T> {
        self.position(column).map(|k| self.summary.coefficients[k])
    }
}

/// Fits `y ~ X` by least squares.
///
/// Columns that are (numerically) linear combinations of earlier columns are
/// dropped and listed in `dropped_columns`. A zero residual variance yields
/// p = 1 for every coefficient.
pub fn ols_fit<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<OlsFit<T>> {
    let n = x.rows();
    let p = x.cols();
    if y.len() != n {
        return Err(Error::invalid(format!(
            "response has length {}, design has {n} rows",
            y.len()
        )));
    }
    // Modified Gram–Schmidt with one reorthogonalization pass.
    let mut q: Vec<Vec<T>> = Vec::new();
    let mut r_cols: Vec<Vec<T>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let prune_tol = T::lit(1e-10);
    for j in 0..p {
        let col = x.column(j);
        let norm0 = col.iter().map(|&v| v * v).sum::<T>().sqrt();
        let mut v = col;
        let mut r = vec![T::zero(); q.len() + 1];
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let d: T = qk.iter().zip(&v).map(|(&a, &b)| a * b).sum();
                r[k] += d;
                for (vi, &qi) in v.iter_mut().zip(qk) {
                    *vi -= d * qi;
                }
            }
        }
        let norm = v.iter().map(|&a| a * a).sum::<T>().sqrt();
        if norm0 == T::zero() || norm <= prune_tol * norm0 {
            dropped.push(j);
            continue;
        }
        r[q.len()] = norm;
        v.iter_mut().for_each(|a| *a /= norm);
        q.push(v);
        r_cols.push(r);
        kept.push(j);
    }
    let rank = kept.len();
    if rank == 0 {
        return Err(Error::invalid("design matrix has no usable columns"));
    }
    if n <= rank {
        return Err(Error::invalid(format!(
            "need more observations ({n}) than design rank ({rank})"
        )));
    }
    // R is upper triangular: entry (k, c) = r_cols[c][k]
    let rr = |k: usize, c: usize| if k <= c { r_cols[c][k] } else { T::zero() };
    let qty: Vec<T> = q
        .iter()
        .map(|qk| qk.iter().zip(y).map(|(&a, &b)| a * b).sum())
        .collect();
    let mut beta = vec![T::zero(); rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for c in i + 1..rank {
            s -= rr(i, c) * beta[c];
        }
        beta[i] = s / rr(i, i);
    }
    // R⁻¹ by back substitution, then (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ
    let mut rinv = Matrix::zeros(rank, rank);
    for c in 0..rank {
        for i in (0..=c).rev() {
            let mut s = if i == c { T::one() } else { T::zero() };
            for k in i + 1..=c {
                s -= rr(i, k) * rinv[(k, c)];
            }
            rinv[(i, c)] = s / rr(i, i);
        }
    }
    let xtx_inv = rinv.matmul(&rinv.transpose());

    let xk = x.submatrix(&(0..n).collect::<Vec<_>>(), &kept);
    let fitted = xk.matvec(&beta);
    let sse: T = y.iter().zip(&fitted).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let df = n - rank;
    let ybar = y.iter().copied().sum::<T>() / T::from_usize(n).unwrap();
    let scale2 = y.iter().map(|&v| v * v).sum::<T>().max(
        y.iter().map(|&v| (v - ybar) * (v - ybar)).sum::<T>(),
    );
    let degenerate_tol = T::epsilon() * T::lit(1e3);
    let zero_variance = sse <= degenerate_tol * degenerate_tol * scale2;
    let y_constant = y.iter().all(|&v| v == y[0]);
    if y_constant {
        // exact answer: intercept-like fit, all other effects zero
        let ones = kept.iter().position(|&c| (0..n).all(|i| x[(i, c)] == T::one()));
        if let Some(pos) = ones {
            beta.iter_mut().for_each(|b| *b = T::zero());
            beta[pos] = y[0];
        }
    }
    let sigma2 = if zero_variance {
        T::zero()
    } else {
        sse / T::from_usize(df).unwrap()
    };
    let covariance = xtx_inv.scale(sigma2);
    let mut std_errors = Vec::with_capacity(rank);
    let mut t_stats = Vec::with_capacity(rank);
    let mut p_values = Vec::with_capacity(rank);
    for k in 0..rank {
        let se = covariance[(k, k)].max(T::zero()).sqrt();
        std_errors.push(se);
        if zero_variance || se == T::zero() {
            t_stats.push(T::zero());
            p_values.push(T::one());
        } else {
            let t = beta[k] / se;
            let pv = tail_prob(Distribution::StudentT(df as f64), t.to_f64_lossy(), true)?;
            t_stats.push(t);
            p_values.push(T::lit(pv));
        }
    }
    let log_likelihood = if zero_variance {
        T::infinity()
    } else {
        let nn = T::from_usize(n).unwrap();
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        -nn / T::lit(2.0) * ((two_pi * sse / nn).ln() + T::one())
    };
    Ok(OlsFit {
        kept_columns: kept,
        dropped_columns: dropped,
        summary: FitSummary {
            coefficients: beta,
            covariance,
            log_likelihood,
            converged: true,
            iterations: 1,
            gradient_max_norm: T::zero(),
        },
        std_errors,
        t_stats,
        p_values,
        df,
        sigma2,
    })
}

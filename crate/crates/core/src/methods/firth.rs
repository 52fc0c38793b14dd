//! Logistic regression with the Jeffreys-prior (Firth) penalty.
//!
//! The penalized log-likelihood is `ℓ(β) + ½·log det(XᵀWX)`. The penalty
//! always uses the full design, also when some coefficients are held at zero
//! for the likelihood-ratio test. Newton steps use the Fisher information as
//! the curvature.

use super::TaxonFit;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::stats::linalg::{Cholesky, Matrix};
use crate::stats::newton::{Evaluation, Hessian, NewtonOptions, Objective};
use crate::stats::{newton_maximize, tail_prob, Distribution, FitSummary};

pub struct FirthObjective<'a, T> {
    y: &'a [T],
    design: &'a Matrix<T>,
    /// Design columns with free coefficients; the rest are fixed at zero.
    free: Vec<usize>,
}

struct State<T> {
    value: T,
    prob: Vec<T>,
    weight: Vec<T>,
    information: Cholesky<T>,
}

fn log_sigmoid<T: Scalar>(t: T) -> T {
    // ln σ(t) = −ln(1 + e^{−t})
    if t >= T::zero() {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

impl<'a, T: Scalar> FirthObjective<'a, T> {
    pub fn new(y: &'a [T], design: &'a Matrix<T>, free: Vec<usize>) -> Self {
        Self { y, design, free }
    }

    fn full_beta(&self, x: &[T]) -> Vec<T> {
        let mut beta = vec![T::zero(); self.design.cols()];
        for (&c, &b) in self.free.iter().zip(x) {
            beta[c] = b;
        }
        beta
    }

    fn state(&self, x: &[T]) -> Option<State<T>> {
        let beta = self.full_beta(x);
        let eta = self.design.matvec(&beta);
        let p = self.design.cols();
        let mut ll = T::zero();
        let mut prob = Vec::with_capacity(eta.len());
        let mut weight = Vec::with_capacity(eta.len());
        let mut info = Matrix::zeros(p, p);
        for (i, (&e, &y)) in eta.iter().zip(self.y).enumerate() {
            ll += y * log_sigmoid(e) + (T::one() - y) * log_sigmoid(-e);
            let pi = log_sigmoid(e).exp();
            let w = pi * (T::one() - pi);
            prob.push(pi);
            weight.push(w);
            let row = self.design.row(i);
            for a in 0..p {
                for b in 0..=a {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        let information = Cholesky::new(&info).ok()?;
        let value = ll + T::lit(0.5) * information.log_det();
        value.is_finite().then_some(State {
            value,
            prob,
            weight,
            information,
        })
    }

    /// Covariance of all design coefficients, the inverse Fisher information.
    pub fn covariance(&self, x: &[T]) -> Option<Matrix<T>> {
        self.state(x).map(|s| s.information.inverse())
    }
}

impl<T: Scalar> Objective<T> for FirthObjective<'_, T> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn value(&self, x: &[T]) -> Option<T> {
        self.state(x).map(|s| s.value)
    }

    fn evaluate(&self, x: &[T]) -> Option<Evaluation<T>> {
        let s = self.state(x)?;
        let k = self.free.len();
        let half = T::lit(0.5);
        let mut grad = vec![T::zero(); k];
        let mut hess = Matrix::zeros(k, k);
        for i in 0..self.y.len() {
            let row = self.design.row(i);
            let solved = s.information.solve(row);
            let leverage = s.weight[i] * row.iter().zip(&solved).map(|(&a, &b)| a * b).sum::<T>();
            let resid = self.y[i] - s.prob[i] + leverage * (half - s.prob[i]);
            for (a, &ca) in self.free.iter().enumerate() {
                grad[a] += resid * row[ca];
                for (b, &cb) in self.free.iter().enumerate() {
                    hess[(a, b)] -= s.weight[i] * row[ca] * row[cb];
                }
            }
        }
        Some(Evaluation {
            value: s.value,
            gradient: grad,
            hessian: Hessian::Dense(hess),
        })
    }
}

/// Penalized fit of `presence ~ design`, testing design column `target`.
pub fn firth_fit<T: Scalar>(presence: &[T], design: &Matrix<T>, target: usize, opts: NewtonOptions<T>) -> TaxonFit<T> {
    match firth_fit_inner(presence, design, target, opts) {
        Ok(fit) => fit,
        Err(e) => TaxonFit::not_applicable(&e.to_string()),
    }
}

fn firth_fit_inner<T: Scalar>(
    presence: &[T],
    design: &Matrix<T>,
    target: usize,
    opts: NewtonOptions<T>,
) -> Result<TaxonFit<T>> {
    let p = design.cols();
    let full = FirthObjective::new(presence, design, (0..p).collect());
    let full_fit: FitSummary<T> = newton_maximize(&full, &vec![T::zero(); p], opts)?;
    if !full_fit.converged {
        return Ok(TaxonFit::not_applicable("penalized fit did not converge"));
    }
    let estimate = full_fit.coefficients[target];
    let cov = full
        .covariance(&full_fit.coefficients)
        .ok_or_else(|| crate::Error::numerical("singular information at the penalized optimum"))?;
    let se = cov[(target, target)].sqrt();

    let nuisance: Vec<usize> = (0..p).filter(|&c| c != target).collect();
    let init: Vec<T> = nuisance.iter().map(|&c| full_fit.coefficients[c]).collect();
    let null = FirthObjective::new(presence, design, nuisance);
    let null_fit = newton_maximize(&null, &init, opts).ok().filter(|f| f.converged);
    let null_failed = null_fit.is_none();
    let p_value = match null_fit {
        Some(nf) => {
            let stat = (T::lit(2.0) * (full_fit.log_likelihood - nf.log_likelihood)).max(T::zero());
            tail_prob(Distribution::ChiSquare(1.0), stat.to_f64_lossy(), false)?
        }
        None => tail_prob(Distribution::Normal, (estimate / se).to_f64_lossy(), true)?,
    };
    Ok(TaxonFit {
        estimate,
        se: (se > T::zero() && se.is_finite()).then_some(se),
        df: None,
        p: Some(T::lit(p_value)),
        applicable: true,
        note: null_failed.then(|| "null fit failed; Wald p-value".into()),
    })
}

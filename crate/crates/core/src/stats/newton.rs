//! Damped Newton maximization for (penalized) log-likelihoods.

use serde::Serialize;

use super::linalg::{BorderedFactor, BorderedTridiagonal, Lu, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Second-derivative information returned by an [`Objective`].
#[derive(Debug, Clone)]
pub enum Hessian<T> {
    Dense(Matrix<T>),
    /// Intercepts-first cumulative-link structure; see [`BorderedTridiagonal`].
    Bordered(BorderedTridiagonal<T>),
}

impl<T: Scalar> Hessian<T> {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Dense(m) => m.rows(),
            Hessian::Bordered(b) => b.dim(),
        }
    }

    pub fn to_dense(&self) -> Matrix<T> {
        match self {
            Hessian::Dense(m) => m.clone(),
            Hessian::Bordered(b) => b.to_dense(),
        }
    }

    /// Factorizes the negated Hessian (the observed information).
    pub fn information_factor(&self) -> Result<InformationFactor<T>> {
        match self {
            Hessian::Dense(m) => Ok(InformationFactor::Dense(Lu::new(&m.scale(-T::one()))?)),
            Hessian::Bordered(b) => Ok(InformationFactor::Bordered(b.scale(-T::one()).factor()?)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum InformationFactor<T> {
    Dense(Lu<T>),
    Bordered(BorderedFactor<T>),
}

impl<T: Scalar> InformationFactor<T> {
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        match self {
            InformationFactor::Dense(f) => f.solve(rhs),
            InformationFactor::Bordered(f) => f.solve(rhs),
        }
    }

    pub fn inverse(&self) -> Matrix<T> {
        match self {
            InformationFactor::Dense(f) => f.inverse(),
            InformationFactor::Bordered(f) => f.inverse(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub value: T,
    pub gradient: Vec<T>,
    pub hessian: Hessian<T>,
}

/// Function to maximize.
///
/// Both methods return `None` when `x` lies outside the domain (for example
/// unordered intercepts of a cumulative-link model).
pub trait Objective<T: Scalar> {
    fn dim(&self) -> usize;

    fn value(&self, x: &[T]) -> Option<T>;

    fn evaluate(&self, x: &[T]) -> Option<Evaluation<T>>;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    /// Convergence threshold on the gradient max-norm.
    pub tol: T,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iter: 50,
            max_halvings: 40,
        }
    }
}

/// Result of a likelihood fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary<T> {
    pub coefficients: Vec<T>,
    #[serde(skip)]
    pub covariance: Matrix<T>,
    pub log_likelihood: T,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_norm: T,
}

impl<T: Scalar> FitSummary<T> {
    pub fn std_error(&self, j: usize) -> T {
        self.covariance[(j, j)].max(T::zero()).sqrt()
    }
}

fn max_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Maximizes `objective` from `init` with Newton steps, halving each step until
/// the objective does not decrease.
///
/// Hitting `max_iter` (or failing to find an ascent step) yields a summary with
/// `converged == false`. A singular Hessian is an error.
pub fn newton_maximize<T: Scalar, O: Objective<T> + ?Sized>(
    objective: &O,
    init: &[T],
    opts: NewtonOptions<T>,
) -> Result<FitSummary<T>> {
    if init.len() != objective.dim() {
        return Err(Error::invalid(format!(
            "initial vector has length {}, objective expects {}",
            init.len(),
            objective.dim()
        )));
    }
    let mut x = init.to_vec();
    let mut eval = objective
        .evaluate(&x)
        .ok_or_else(|| Error::numerical("objective undefined at the initial point"))?;
    let mut iterations = 0;
    let mut converged = false;
    let mut factor = eval.hessian.information_factor()?;
    loop {
        if max_norm(&eval.gradient) <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let step = factor.solve(&eval.gradient);
        if step.iter().any(|s| !s.is_finite()) {
            return Err(Error::numerical("non-finite Newton step"));
        }
        // Rounding slack so that steps at the optimum are not rejected spuriously.
        let slack = T::epsilon() * T::lit(64.0) * (T::one() + eval.value.abs());
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<T> = x.iter().zip(&step).map(|(&xi, &si)| xi + t * si).collect();
            if let Some(v) = objective.value(&cand) {
                if v.is_finite() && v >= eval.value - slack {
                    accepted = Some(cand);
                    break;
                }
            }
            t /= T::lit(2.0);
        }
        let Some(cand) = accepted else {
            break;
        };
        x = cand;
        eval = objective
            .evaluate(&x)
            .ok_or_else(|| Error::numerical("objective undefined at an accepted iterate"))?;
        factor = eval.hessian.information_factor()?;
        iterations += 1;
    }
    let mut covariance = factor.inverse();
    // symmetrize away rounding noise
    let n = covariance.rows();
    for i in 0..n {
        for j in 0..i {
            let avg = (covariance[(i, j)] + covariance[(j, i)]) / T::lit(2.0);
            covariance[(i, j)] = avg;
            covariance[(j, i)] = avg;
        }
    }
    Ok(FitSummary {
        coefficients: x,
        covariance,
        log_likelihood: eval.value,
        converged,
        iterations,
        gradient_max_norm: max_norm(&eval.gradient),
    })
}

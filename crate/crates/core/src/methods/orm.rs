//! Proportional-odds (cumulative logit) model with one cut point per gap
//! between distinct response values.
//!
//! `P(Y > y_k | x) = σ(θ_k + xᵀβ)` with `θ_0 > θ_1 > … > θ_{K−2}`, so a positive
//! coefficient means larger responses. The group effect is tested with the
//! score statistic at `β_group = 0` using the expected information; its
//! standard error comes from the observed information of the full fit.

use super::TaxonFit;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::stats::linalg::{BorderedTridiagonal, Matrix};
use crate::stats::newton::{Evaluation, Hessian, NewtonOptions, Objective};
use crate::stats::{newton_maximize, tail_prob, Distribution, FitSummary};

fn sigmoid<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// Cumulative-logit log-likelihood over a subset of the design columns.
pub struct OrmObjective<'a, T> {
    categories: &'a [usize],
    n_categories: usize,
    design: &'a Matrix<T>,
    /// Design columns whose coefficients are free; the rest are fixed at zero.
    free: Vec<usize>,
}

impl<'a, T: Scalar> OrmObjective<'a, T> {
    pub fn new(categories: &'a [usize], n_categories: usize, design: &'a Matrix<T>, free: Vec<usize>) -> Self {
        Self {
            categories,
            n_categories,
            design,
            free,
        }
    }

    fn n_cuts(&self) -> usize {
        self.n_categories - 1
    }

    fn linear_predictor(&self, i: usize, beta: &[T]) -> T {
        let row = self.design.row(i);
        self.free.iter().zip(beta).map(|(&c, &b)| row[c] * b).sum()
    }

    /// Probability of observation `i`'s category, plus σ at the bounding cut points.
    fn cell(&self, c: usize, theta: &[T], eta: T) -> Option<(T, Option<T>, Option<T>)> {
        let k = self.n_cuts();
        let u = (c >= 1).then(|| theta[c - 1] + eta);
        let v = (c < k).then(|| theta[c] + eta);
        let su = u.map(sigmoid);
        let sv = v.map(sigmoid);
        let p = match (u, v) {
            (Some(u), Some(v)) => {
                if u + v > T::zero() {
                    sigmoid(-v) - sigmoid(-u)
                } else {
                    su.unwrap() - sv.unwrap()
                }
            }
            (Some(u), None) => sigmoid(u),
            (None, Some(v)) => sigmoid(-v),
            (None, None) => T::one(),
        };
        (p > T::zero() && p.is_finite()).then_some((p, su, sv))
    }
}

impl<T: Scalar> OrmObjective<'_, T> {
    /// Expected (Fisher) information, returned as the negated Hessian so it
    /// shares the bordered factorization.
    pub fn expected_hessian(&self, x: &[T]) -> Option<Hessian<T>> {
        let k = self.n_cuts();
        let p = self.free.len();
        let (theta, beta) = x.split_at(k);
        let mut h = BorderedTridiagonal::zeros(k, p);
        let mut xi = vec![T::zero(); p];
        for i in 0..self.categories.len() {
            let row = self.design.row(i);
            for (slot, &col) in xi.iter_mut().zip(&self.free) {
                *slot = row[col];
            }
            let eta = self.linear_predictor(i, beta);
            for c in 0..self.n_categories {
                let (prob, su, sv) = self.cell(c, theta, eta)?;
                let a = su.map_or(T::zero(), |s| s * (T::one() - s) / prob);
                let b = sv.map_or(T::zero(), |s| -s * (T::one() - s) / prob);
                let ab = a + b;
                if c >= 1 {
                    h.diag[c - 1] -= prob * a * a;
                    for j in 0..p {
                        h.border[(c - 1, j)] -= prob * a * ab * xi[j];
                    }
                }
                if c < k {
                    h.diag[c] -= prob * b * b;
                    for j in 0..p {
                        h.border[(c, j)] -= prob * b * ab * xi[j];
                    }
                }
                if c >= 1 && c < k {
                    h.off[c - 1] -= prob * a * b;
                }
                for j in 0..p {
                    for l in 0..p {
                        h.corner[(j, l)] -= prob * ab * ab * xi[j] * xi[l];
                    }
                }
            }
        }
        Some(Hessian::Bordered(h))
    }
}

impl<T: Scalar> Objective<T> for OrmObjective<'_, T> {
    fn dim(&self) -> usize {
        self.n_cuts() + self.free.len()
    }

    fn value(&self, x: &[T]) -> Option<T> {
        let (theta, beta) = x.split_at(self.n_cuts());
        if theta.windows(2).any(|w| !(w[0] > w[1])) {
            return None;
        }
        let mut ll = T::zero();
        for (i, &c) in self.categories.iter().enumerate() {
            let eta = self.linear_predictor(i, beta);
            let (p, _, _) = self.cell(c, theta, eta)?;
            ll += p.ln();
        }
        Some(ll)
    }

    fn evaluate(&self, x: &[T]) -> Option<Evaluation<T>> {
        let k = self.n_cuts();
        let p = self.free.len();
        let (theta, beta) = x.split_at(k);
        if theta.windows(2).any(|w| !(w[0] > w[1])) {
            return None;
        }
        let two = T::lit(2.0);
        let mut ll = T::zero();
        let mut grad = vec![T::zero(); k + p];
        let mut h = BorderedTridiagonal::zeros(k, p);
        let mut xi = vec![T::zero(); p];
        for (i, &c) in self.categories.iter().enumerate() {
            let row = self.design.row(i);
            for (slot, &col) in xi.iter_mut().zip(&self.free) {
                *slot = row[col];
            }
            let eta = xi.iter().zip(beta).map(|(&a, &b)| a * b).sum();
            let (prob, su, sv) = self.cell(c, theta, eta)?;
            ll += prob.ln();
            let fu = su.map(|s| s * (T::one() - s));
            let fv = sv.map(|s| s * (T::one() - s));
            let a = fu.map_or(T::zero(), |f| f / prob);
            let b = fv.map_or(T::zero(), |f| -f / prob);
            let huu = match (fu, su) {
                (Some(f), Some(s)) => f * (T::one() - two * s) / prob - a * a,
                _ => T::zero(),
            };
            let hvv = match (fv, sv) {
                (Some(f), Some(s)) => -f * (T::one() - two * s) / prob - b * b,
                _ => T::zero(),
            };
            let huv = -a * b;
            if c >= 1 {
                grad[c - 1] += a;
                h.diag[c - 1] += huu;
                for j in 0..p {
                    h.border[(c - 1, j)] += xi[j] * (huu + huv);
                }
            }
            if c < k {
                grad[c] += b;
                h.diag[c] += hvv;
                for j in 0..p {
                    h.border[(c, j)] += xi[j] * (huv + hvv);
                }
            }
            if c >= 1 && c < k {
                h.off[c - 1] += huv;
            }
            let total = huu + two * huv + hvv;
            for j in 0..p {
                grad[k + j] += xi[j] * (a + b);
                for l in 0..p {
                    h.corner[(j, l)] += xi[j] * xi[l] * total;
                }
            }
        }
        Some(Evaluation {
            value: ll,
            gradient: grad,
            hessian: Hessian::Bordered(h),
        })
    }
}

/// Maps responses to 0-based category indices of their sorted distinct values.
pub fn categorize<T: Scalar>(y: &[T]) -> (Vec<usize>, usize) {
    let mut levels: Vec<T> = y.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    levels.dedup();
    let cats = y
        .iter()
        .map(|v| {
            levels
                .binary_search_by(|l| l.partial_cmp(v).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap()
        })
        .collect();
    (cats, levels.len())
}

/// Empirical cut points `logit P(Y > y_k)`: the null MLE without covariates.
fn empirical_cuts<T: Scalar>(categories: &[usize], n_categories: usize) -> Vec<T> {
    let n = categories.len();
    let mut counts = vec![0usize; n_categories];
    for &c in categories {
        counts[c] += 1;
    }
    let mut above = n;
    let mut cuts = Vec::with_capacity(n_categories - 1);
    for &count in &counts[..n_categories - 1] {
        above -= count;
        let p = T::from_usize(above).unwrap() / T::from_usize(n).unwrap();
        cuts.push((p / (T::one() - p)).ln());
    }
    cuts
}

/// Score test, estimate and Wald standard error for design column `target`.
///
/// `design` carries no intercept column; cut points play that role.
/// For a two-valued target column: `Some(±1)` when every response at the
/// higher value is at least every response at the lower value (or at most),
/// with some strict ordering, so that the likelihood has no maximum in that
/// coefficient.
fn separation_sign<T: Scalar>(cats: &[usize], design: &Matrix<T>, target: usize) -> Option<i8> {
    let col = design.column(target);
    let lo = col.iter().copied().fold(T::infinity(), T::min);
    let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
    if col.iter().any(|&v| v != lo && v != hi) || lo == hi {
        return None;
    }
    let range = |at: T| {
        cats.iter()
            .zip(&col)
            .filter(|(_, &v)| v == at)
            .fold((usize::MAX, 0), |(a, b), (&c, _)| (a.min(c), b.max(c)))
    };
    let (lo_min, lo_max) = range(lo);
    let (hi_min, hi_max) = range(hi);
    if lo_max <= hi_min && (lo_min < hi_max) {
        Some(1)
    } else if hi_max <= lo_min && (hi_min < lo_max) {
        Some(-1)
    } else {
        None
    }
}

pub fn orm_fit<T: Scalar>(y: &[T], design: &Matrix<T>, target: usize, opts: NewtonOptions<T>) -> TaxonFit<T> {
    match orm_fit_inner(y, design, target, opts) {
        Ok(fit) => fit,
        Err(e) => TaxonFit::not_applicable(&e.to_string()),
    }
}

fn orm_fit_inner<T: Scalar>(
    y: &[T],
    design: &Matrix<T>,
    target: usize,
    opts: NewtonOptions<T>,
) -> Result<TaxonFit<T>> {
    let (cats, k) = categorize(y);
    if k < 2 {
        return Ok(TaxonFit::not_applicable("response has a single value"));
    }
    let p = design.cols();
    let nuisance: Vec<usize> = (0..p).filter(|&c| c != target).collect();
    let null_obj = OrmObjective::new(&cats, k, design, nuisance.clone());
    let mut init = empirical_cuts::<T>(&cats, k);
    init.extend(std::iter::repeat_n(T::zero(), nuisance.len()));
    let null_fit = newton_maximize(&null_obj, &init, opts)?;
    if !null_fit.converged {
        return Ok(TaxonFit::not_applicable("null model did not converge"));
    }

    // full parameter vector at the constrained optimum: cuts, then design columns in order
    let n_cuts = k - 1;
    let mut at_null = null_fit.coefficients[..n_cuts].to_vec();
    let mut nuis = null_fit.coefficients[n_cuts..].iter();
    for c in 0..p {
        at_null.push(if c == target { T::zero() } else { *nuis.next().unwrap() });
    }
    let full_obj = OrmObjective::new(&cats, k, design, (0..p).collect());
    let eval = full_obj
        .evaluate(&at_null)
        .ok_or_else(|| crate::Error::numerical("ordinal likelihood undefined at the null fit"))?;
    let idx = n_cuts + target;
    let info = full_obj
        .expected_hessian(&at_null)
        .ok_or_else(|| crate::Error::numerical("ordinal information undefined at the null fit"))?
        .information_factor()?;
    let mut e = vec![T::zero(); at_null.len()];
    e[idx] = T::one();
    let inv_col = info.solve(&e);
    let score = eval.gradient[idx];
    let stat = score * score * inv_col[idx];
    let p_value = tail_prob(Distribution::ChiSquare(1.0), stat.max(T::zero()).to_f64_lossy(), false)?;

    if let Some(sign) = separation_sign(&cats, design, target) {
        return Ok(TaxonFit {
            estimate: if sign > 0 { T::infinity() } else { T::neg_infinity() },
            se: None,
            df: None,
            p: Some(T::lit(p_value)),
            applicable: true,
            note: Some("groups completely separated; estimate unbounded".into()),
        });
    }

    let full_fit: FitSummary<T> = newton_maximize(&full_obj, &at_null, opts)?;
    let estimate = full_fit.coefficients[idx];
    let se = full_fit.std_error(idx);
    let se = (full_fit.converged && se > T::zero() && se.is_finite()).then_some(se);
    Ok(TaxonFit {
        estimate,
        se,
        df: None,
        p: Some(T::lit(p_value)),
        applicable: true,
        note: (!full_fit.converged).then(|| "full model did not converge; estimate not at optimum".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::wilcoxon::wilcoxon_test;

    fn group_design(n0: usize, n1: usize) -> Matrix<f64> {
        Matrix::from_fn(n0 + n1, 1, |i, _| if i < n0 { 0.0 } else { 1.0 })
    }

    #[test]
    fn objective_derivatives_match_finite_differences() {
        let y = [0.0, 1.0, 1.0, 2.0, 3.0, 3.0, 0.0, 2.0];
        let x = Matrix::from_fn(8, 2, |i, j| if j == 0 { (i % 2) as f64 } else { (i as f64).sin() });
        let (cats, k) = categorize(&y);
        let obj = OrmObjective::new(&cats, k, &x, vec![0, 1]);
        let point = [1.1, 0.2, -0.9, 0.4, -0.3];
        let ev = obj.evaluate(&point).unwrap();
        let dense = ev.hessian.to_dense();
        let h = 1e-6;
        for j in 0..point.len() {
            let mut up = point;
            let mut dn = point;
            up[j] += h;
            dn[j] -= h;
            let g = (obj.value(&up).unwrap() - obj.value(&dn).unwrap()) / (2.0 * h);
            assert!((g - ev.gradient[j]).abs() < 1e-6, "grad {j}");
            let gu = obj.evaluate(&up).unwrap().gradient;
            let gd = obj.evaluate(&dn).unwrap().gradient;
            for i in 0..point.len() {
                let fd = (gu[i] - gd[i]) / (2.0 * h);
                assert!((fd - dense[(i, j)]).abs() < 1e-5, "hess {i},{j}: {fd} vs {}", dense[(i, j)]);
            }
        }
    }

    #[test]
    fn unordered_cuts_are_outside_domain() {
        let cats = [0, 1, 2];
        let x = Matrix::zeros(3, 0);
        let obj = OrmObjective::<f64>::new(&cats, 3, &x, vec![]);
        assert!(obj.value(&[0.0, 0.5]).is_none());
    }

    #[test]
    fn score_test_tracks_wilcoxon() {
        // n = 50 with ties
        let control: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64).collect();
        let case: Vec<f64> = (0..25).map(|i| ((i * 5) % 13) as f64 + 0.5).collect();
        let y: Vec<f64> = control.iter().chain(&case).copied().collect();
        let fit = orm_fit(&y, &group_design(25, 25), 0, NewtonOptions::default());
        let w = wilcoxon_test(&control, &case);
        assert!(fit.applicable);
        assert!((fit.p.unwrap() - w.p.unwrap()).abs() < 0.02, "{:?} vs {:?}", fit.p, w.p);
        assert!(fit.se.unwrap() > 0.0);
    }

    #[test]
    fn separated_groups_keep_score_p() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let fit = orm_fit(&y, &group_design(3, 3), 0, NewtonOptions::default());
        assert!(fit.applicable);
        // score statistic for untied data equals the rank-sum z² scaled by n/(n−1)
        let z2 = (4.5f64 * 4.5 / 5.25) * 6.0 / 5.0;
        let want = tail_prob(Distribution::ChiSquare(1.0), z2, false).unwrap();
        assert!((fit.p.unwrap() - want).abs() < 1e-8, "{:?} vs {want}", fit.p);
        assert!(fit.estimate > 0.0);
    }

    #[test]
    fn score_statistic_is_scaled_rank_statistic_with_ties() {
        let control = [0.0, 0.0, 1.0, 2.0, 2.0, 3.0, 0.0];
        let case = [1.0, 2.0, 3.0, 3.0, 4.0, 5.0, 0.0, 2.0];
        let y: Vec<f64> = control.iter().chain(&case).copied().collect();
        let fit = orm_fit(&y, &group_design(7, 8), 0, NewtonOptions::default());
        // tie-corrected rank-sum z without continuity correction, from midranks
        let n = y.len() as f64;
        let rank = |v: f64| {
            let below = y.iter().filter(|&&x| x < v).count() as f64;
            let equal = y.iter().filter(|&&x| x == v).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let r1: f64 = case.iter().map(|&v| rank(v)).sum();
        let mean = 8.0 * (n + 1.0) / 2.0;
        let mut ties = 0.0;
        let mut seen = Vec::new();
        for &v in &y {
            if !seen.contains(&v) {
                seen.push(v);
                let t = y.iter().filter(|&&x| x == v).count() as f64;
                ties += t * t * t - t;
            }
        }
        let var = 7.0 * 8.0 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
        let z2 = (r1 - mean).powi(2) / var * n / (n - 1.0);
        let want = tail_prob(Distribution::ChiSquare(1.0), z2, false).unwrap();
        assert!((fit.p.unwrap() - want).abs() < 1e-9, "{:?} vs {want}", fit.p);
    }

    #[test]
    fn increasing_transform_and_label_swap() {
        let y: Vec<f64> = vec![0.0, 0.1, 0.0, 0.3, 0.2, 0.05, 0.4, 0.0, 0.25, 0.6, 0.1, 0.35];
        let x = group_design(6, 6);
        let a = orm_fit(&y, &x, 0, NewtonOptions::default());
        let ty: Vec<f64> = y.iter().map(|v| (v + 1.0f64).ln() * 7.0 + v.powi(3)).collect();
        let b = orm_fit(&ty, &x, 0, NewtonOptions::default());
        assert!((a.estimate - b.estimate).abs() < 1e-10);
        assert!((a.p.unwrap() - b.p.unwrap()).abs() < 1e-12);
        let swapped = Matrix::from_fn(12, 1, |i, _| 1.0 - x[(i, 0)]);
        let c = orm_fit(&y, &swapped, 0, NewtonOptions::default());
        assert!((a.estimate + c.estimate).abs() < 1e-8);
        assert!((a.p.unwrap() - c.p.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn constant_response_not_applicable() {
        let fit = orm_fit(&[1.0; 6], &group_design(3, 3), 0, NewtonOptions::default());
        assert!(!fit.applicable);
    }

    #[test]
    fn covariate_adjusted_fit_runs() {
        let n = 40;
        let x = Matrix::from_fn(n, 2, |i, j| if j == 0 { (i % 2) as f64 } else { ((i * 37) % 17) as f64 / 17.0 - 0.5 });
        let y: Vec<f64> = (0..n)
            .map(|i| ((i * 13) % 7) as f64 + 2.0 * x[(i, 0)] + 3.0 * x[(i, 1)])
            .collect();
        let fit = orm_fit(&y, &x, 0, NewtonOptions::default());
        assert!(fit.applicable && fit.se.is_some());
        assert!(fit.estimate > 0.0);
    }
}

//! Per-taxon differential abundance methods and the per-dataset runner.

pub mod firth;
pub mod linlog;
pub mod orm;
pub mod wilcoxon;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, ExternalResultSet, Group};
use crate::error::{Error, Result};
use crate::normalize::{normalized_abundances, Normalization};
use crate::scalar::Scalar;
use crate::stats::{bh_adjust, Matrix, NewtonOptions};

pub use firth::firth_fit;
pub use linlog::lin_log_fit;
pub use orm::orm_fit;
pub use wilcoxon::wilcoxon_test;

/// Sign of an estimate; positive means more abundant in the case group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
    Zero,
}

impl Direction {
    pub fn of<T: Scalar>(estimate: T) -> Self {
        if estimate > T::zero() {
            Direction::Positive
        } else if estimate < T::zero() {
            Direction::Negative
        } else {
            Direction::Zero
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
            Direction::Zero => "zero",
        }
    }
}

/// Raw output of fitting one taxon, before multiple-testing adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxonFit<T> {
    pub estimate: T,
    pub se: Option<T>,
    pub df: Option<T>,
    pub p: Option<T>,
    pub applicable: bool,
    pub note: Option<String>,
}

impl<T: Scalar> TaxonFit<T> {
    pub fn not_applicable(reason: &str) -> Self {
        Self {
            estimate: T::zero(),
            se: None,
            df: None,
            p: None,
            applicable: false,
            note: Some(reason.to_string()),
        }
    }
}

/// Inference for one taxon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaaResult<T = f64> {
    pub taxon_id: String,
    pub estimate: T,
    pub se: Option<T>,
    pub df: Option<T>,
    pub p: Option<T>,
    pub q: Option<T>,
    pub direction: Direction,
    pub applicable: bool,
    /// `q < alpha`.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaaResultSet<T = f64> {
    pub method: String,
    /// Missing for imported third-party results.
    pub normalization: Option<Normalization>,
    pub alpha: f64,
    pub results: Vec<DaaResult<T>>,
}

impl<T: Scalar> DaaResultSet<T> {
    pub fn get(&self, taxon_id: &str) -> Option<&DaaResult<T>> {
        self.results.iter().find(|r| r.taxon_id == taxon_id)
    }

    pub fn significant(&self) -> impl Iterator<Item = &DaaResult<T>> {
        self.results.iter().filter(|r| r.significant)
    }

    /// True when every applicable row has a standard error.
    pub fn has_standard_errors(&self) -> bool {
        self.results.iter().filter(|r| r.applicable).all(|r| r.se.is_some())
    }

    /// Re-derives significance at another level without refitting.
    pub fn at_alpha(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.alpha = alpha;
        for r in &mut out.results {
            r.significant = r.q.is_some_and(|q| q.to_f64_lossy() < alpha);
        }
        out
    }
}

impl DaaResultSet<f64> {
    /// Adopts third-party results; missing q-values are filled by BH over
    /// the rows that report a p-value.
    pub fn from_external(ext: &ExternalResultSet, alpha: f64) -> Self {
        let q = if ext.rows.iter().all(|r| r.p.is_none() || r.q.is_some()) {
            ext.rows.iter().map(|r| r.q).collect()
        } else {
            bh_adjust(&ext.rows.iter().map(|r| r.p).collect::<Vec<_>>())
        };
        let results = ext
            .rows
            .iter()
            .zip(q)
            .map(|(r, q)| DaaResult {
                taxon_id: r.taxon_id.clone(),
                estimate: r.estimate,
                se: r.se,
                df: r.df,
                p: r.p,
                q,
                direction: Direction::of(r.estimate),
                applicable: r.p.is_some(),
                significant: q.is_some_and(|q| q < alpha),
            })
            .collect();
        Self {
            method: ext.method_name.clone(),
            normalization: None,
            alpha,
            results,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Wilcoxon,
    Orm,
    LinLogTss,
    LogrFirth,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [
        MethodKind::Wilcoxon,
        MethodKind::Orm,
        MethodKind::LinLogTss,
        MethodKind::LogrFirth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Wilcoxon => "wilcoxon",
            MethodKind::Orm => "orm",
            MethodKind::LinLogTss => "lin_log_tss",
            MethodKind::LogrFirth => "logr_firth",
        }
    }

    pub fn accepts_covariates(self) -> bool {
        self != MethodKind::Wilcoxon
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wilcoxon" | "wilcox" => Ok(MethodKind::Wilcoxon),
            "orm" => Ok(MethodKind::Orm),
            "lin_log_tss" | "lin_log" | "linlog" => Ok(MethodKind::LinLogTss),
            "logr_firth" | "logr" => Ok(MethodKind::LogrFirth),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected wilcoxon, orm, lin_log_tss or logr_firth)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodOptions {
    /// Pseudo-count for the CLR transform.
    pub clr_pseudo: f64,
    /// Gradient tolerance for likelihood fits.
    pub tol: f64,
    pub max_iter: usize,
    /// For Wilcoxon runs, take estimates and standard errors for interval
    /// comparisons from the ordinal model.
    pub pair_orm_ci: bool,
}

impl Default for MethodOptions {
    fn default() -> Self {
        Self {
            clr_pseudo: 0.5,
            tol: 1e-8,
            max_iter: 50,
            pair_orm_ci: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: MethodKind,
    pub normalization: Normalization,
    pub options: MethodOptions,
}

impl MethodSpec {
    pub fn new(method: MethodKind) -> Self {
        Self {
            method,
            normalization: Normalization::Tss,
            options: MethodOptions::default(),
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    /// Label used in reports, e.g. `orm` or `lin_log_tss/clr`.
    pub fn label(&self) -> String {
        if self.normalization == Normalization::Tss {
            self.method.name().to_string()
        } else {
            format!("{}/{}", self.method, self.normalization)
        }
    }

    fn newton<T: Scalar>(&self) -> NewtonOptions<T> {
        NewtonOptions {
            tol: T::lit(self.options.tol),
            max_iter: self.options.max_iter,
            ..NewtonOptions::default()
        }
    }
}

/// Design matrix with the group indicator (case = 1) followed by the
/// dataset's covariates; with `intercept` a leading column of ones is added.
/// Returns the matrix and the index of the group column.
pub fn design_matrix<T: Scalar>(ds: &Dataset, intercept: bool) -> Result<(Matrix<T>, usize)> {
    let offset = usize::from(intercept);
    let covs = ds.covariates();
    for c in covs {
        if let Some(j) = c.values.iter().position(|v| v.is_none()) {
            return Err(Error::invalid(format!(
                "covariate '{}' is missing for sample '{}'; prepare covariates first",
                c.name,
                ds.table().sample_ids()[j]
            )));
        }
    }
    let groups = ds.groups();
    let x = Matrix::from_fn(ds.n_samples(), offset + 1 + covs.len(), |i, j| {
        if intercept && j == 0 {
            T::one()
        } else if j == offset {
            T::lit(groups[i].indicator())
        } else {
            T::lit(covs[j - offset - 1].values[i].unwrap())
        }
    });
    Ok((x, offset))
}

/// Inputs shared by all taxa of one dataset for one method.
struct Prepared<T> {
    values: Vec<T>,
    n: usize,
    design: Matrix<T>,
    target: usize,
    control: Vec<usize>,
    case: Vec<usize>,
}

impl<T: Scalar> Prepared<T> {
    fn new(ds: &Dataset, spec: &MethodSpec) -> Result<Self> {
        if !spec.method.accepts_covariates() && !ds.covariates().is_empty() {
            return Err(Error::invalid(format!(
                "{} does not accept covariates ({} present)",
                spec.method,
                ds.covariates().len()
            )));
        }
        let n = ds.n_samples();
        let values = match spec.method {
            MethodKind::LogrFirth => ds
                .table()
                .presence()
                .row_major()
                .iter()
                .map(|&c| T::from_count(c))
                .collect(),
            _ => normalized_abundances::<T>(ds, spec.normalization, T::lit(spec.options.clr_pseudo))?.values,
        };
        let (design, target) = design_matrix(ds, spec.method != MethodKind::Orm)?;
        let (mut control, mut case) = (Vec::new(), Vec::new());
        for (j, g) in ds.groups().iter().enumerate() {
            match g {
                Group::Control => control.push(j),
                Group::Case => case.push(j),
            }
        }
        Ok(Self {
            values,
            n,
            design,
            target,
            control,
            case,
        })
    }

    fn row(&self, taxon: usize) -> &[T] {
        &self.values[taxon * self.n..(taxon + 1) * self.n]
    }

    fn fit(&self, taxon: usize, spec: &MethodSpec) -> TaxonFit<T> {
        let y = self.row(taxon);
        match spec.method {
            MethodKind::Wilcoxon => {
                let control: Vec<T> = self.control.iter().map(|&j| y[j]).collect();
                let case: Vec<T> = self.case.iter().map(|&j| y[j]).collect();
                wilcoxon_test(&control, &case)
            }
            MethodKind::Orm => orm_fit(y, &self.design, self.target, spec.newton()),
            MethodKind::LinLogTss => lin_log_fit(y, &self.design, self.target, spec.normalization == Normalization::Clr),
            MethodKind::LogrFirth => {
                let all_present = y.iter().all(|&v| v > T::zero());
                if all_present {
                    TaxonFit::not_applicable("taxon present in every sample")
                } else {
                    firth_fit(y, &self.design, self.target, spec.newton())
                }
            }
        }
    }
}

/// Fits the selected taxa without multiple-testing adjustment; `q` is left
/// missing and nothing is marked significant.
pub fn fit_taxa<T: Scalar>(ds: &Dataset, spec: &MethodSpec, taxa: &[usize]) -> Result<Vec<DaaResult<T>>> {
    let prepared = Prepared::<T>::new(ds, spec)?;
    let ids = ds.table().taxon_ids();
    Ok(taxa
        .par_iter()
        .map(|&i| {
            let fit = prepared.fit(i, spec);
            if let Some(note) = &fit.note {
                log::debug!("{} taxon {}: {}", spec.method, ids[i], note);
            }
            let estimate = fit.estimate;
            DaaResult {
                taxon_id: ids[i].clone(),
                estimate,
                se: fit.se,
                df: fit.df,
                p: fit.p,
                q: None,
                direction: Direction::of(estimate),
                applicable: fit.applicable,
                significant: false,
            }
        })
        .collect())
}

/// Normalizes, fits every taxon and adjusts p-values over the applicable
/// taxa; a taxon is significant when `q < alpha`.
pub fn run_method<T: Scalar>(ds: &Dataset, spec: &MethodSpec, alpha: f64) -> Result<DaaResultSet<T>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let all: Vec<usize> = (0..ds.n_taxa()).collect();
    let mut results = if all.is_empty() {
        Vec::new()
    } else {
        fit_taxa::<T>(ds, spec, &all)?
    };
    let q = bh_adjust(&results.iter().map(|r| r.p).collect::<Vec<_>>());
    for (r, q) in results.iter_mut().zip(q) {
        r.q = q;
        r.significant = q.is_some_and(|q| q.to_f64_lossy() < alpha);
    }
    Ok(DaaResultSet {
        method: spec.label(),
        normalization: Some(spec.normalization),
        alpha,
        results,
    })
}

/// Formats a number so that parsing it back gives the same `f64`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || (1e-4..1e15).contains(&v.abs()) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), format_number)
}

/// Tab-separated table with columns
/// `taxon_id, estimate, se, df, p, q, direction, applicable`.
pub fn results_to_tsv<T: Scalar>(set: &DaaResultSet<T>) -> String {
    let mut out = String::from("taxon_id\testimate\tse\tdf\tp\tq\tdirection\tapplicable\n");
    for r in &set.results {
        let f = |v: Option<T>| format_opt(v.map(|x| x.to_f64_lossy()));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.taxon_id,
            format_number(r.estimate.to_f64_lossy()),
            f(r.se),
            f(r.df),
            f(r.p),
            f(r.q),
            r.direction.as_str(),
            r.applicable
        ));
    }
    out
}

//! Normalization: total-sum scaling, centered log-ratio, cumulative-sum
//! scaling, trimmed mean of M-values and geometric mean of pairwise ratios.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Tss,
    Clr,
    Css,
    Tmm,
    Gmpr,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tss" => Ok(Self::Tss),
            "clr" => Ok(Self::Clr),
            "css" => Ok(Self::Css),
            "tmm" => Ok(Self::Tmm),
            "gmpr" => Ok(Self::Gmpr),
            other => Err(Error::invalid(format!("unknown normalization '{other}'"))),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Tss => "tss",
            Self::Clr => "clr",
            Self::Css => "css",
            Self::Tmm => "tmm",
            Self::Gmpr => "gmpr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorMethod {
    Tss,
    Css,
    Tmm,
    Gmpr,
}

/// Per-sample positive scaling factors.
#[derive(Debug, Clone, PartialEq)]
pub struct NormFactors<T> {
    pub method: FactorMethod,
    pub factors: Vec<T>,
}

impl<T: Scalar> NormFactors<T> {
    /// Divisors that turn counts into normalized abundances.
    ///
    /// TMM factors are relative to library size, so the effective size is
    /// `library size × factor`; the other methods already are sizes.
    pub fn effective_sizes(&self, ds: &Dataset) -> Vec<T> {
        match self.method {
            FactorMethod::Tmm => ds
                .table()
                .library_sizes()
                .into_iter()
                .zip(&self.factors)
                .map(|(n, &f)| T::from_count(n) * f)
                .collect(),
            _ => self.factors.clone(),
        }
    }
}

/// Taxa × samples real matrix derived from a count table.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedTable<T> {
    pub taxon_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    /// Row-major, taxa × samples.
    pub values: Vec<T>,
}

impl<T: Scalar> TransformedTable<T> {
    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn row(&self, taxon: usize) -> &[T] {
        let n = self.n_samples();
        &self.values[taxon * n..(taxon + 1) * n]
    }

    pub fn get(&self, taxon: usize, sample: usize) -> T {
        self.values[taxon * self.n_samples() + sample]
    }

    pub fn column_sums(&self) -> Vec<T> {
        let n = self.n_samples();
        let mut s = vec![T::zero(); n];
        for row in self.values.chunks(n.max(1)) {
            for (a, &b) in s.iter_mut().zip(row) {
                *a += b;
            }
        }
        s
    }

    fn from_fn(ds: &Dataset, f: impl Fn(usize, usize) -> T) -> Self {
        let t = ds.table();
        let mut values = Vec::with_capacity(t.n_taxa() * t.n_samples());
        for i in 0..t.n_taxa() {
            for j in 0..t.n_samples() {
                values.push(f(i, j));
            }
        }
        Self {
            taxon_ids: t.taxon_ids().to_vec(),
            sample_ids: t.sample_ids().to_vec(),
            values,
        }
    }
}

fn library_sizes<T: Scalar>(ds: &Dataset) -> Result<Vec<T>> {
    let sizes = ds.table().library_sizes();
    if let Some(j) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!(
            "sample '{}' has zero library size",
            ds.table().sample_ids()[j]
        )));
    }
    Ok(sizes.into_iter().map(T::from_count).collect())
}

/// Relative abundances: counts divided by library size.
pub fn tss<T: Scalar>(ds: &Dataset) -> Result<TransformedTable<T>> {
    let sizes = library_sizes::<T>(ds)?;
    Ok(TransformedTable::from_fn(ds, |i, j| {
        T::from_count(ds.table().count(i, j)) / sizes[j]
    }))
}

pub fn tss_factors<T: Scalar>(ds: &Dataset) -> Result<NormFactors<T>> {
    Ok(NormFactors {
        method: FactorMethod::Tss,
        factors: library_sizes(ds)?,
    })
}

/// Centered log-ratio with a pseudo-count added to every count.
pub fn clr<T: Scalar>(ds: &Dataset, pseudo: T) -> Result<TransformedTable<T>> {
    if !(pseudo > T::zero()) {
        return Err(Error::invalid("CLR pseudo-count must be positive"));
    }
    let t = ds.table();
    let k = T::from_usize(t.n_taxa().max(1)).unwrap();
    let centers: Vec<T> = (0..t.n_samples())
        .map(|j| {
            (0..t.n_taxa())
                .map(|i| (T::from_count(t.count(i, j)) + pseudo).ln())
                .sum::<T>()
                / k
        })
        .collect();
    Ok(TransformedTable::from_fn(ds, |i, j| {
        (T::from_count(t.count(i, j)) + pseudo).ln() - centers[j]
    }))
}

/// Lower empirical (type 1) quantile of sorted data: the ⌈p·m⌉-th smallest.
fn lower_quantile(sorted: &[u64], p: f64) -> u64 {
    let m = sorted.len();
    let k = ((p * m as f64).ceil() as usize).clamp(1, m);
    sorted[k - 1]
}

/// Cumulative-sum scaling: each sample is scaled by the sum of its counts up
/// to the `p` quantile of its nonzero counts, then multiplied by `scale`.
pub fn css<T: Scalar>(ds: &Dataset, p: f64, scale: T) -> Result<(NormFactors<T>, TransformedTable<T>)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("CSS quantile {p} outside [0, 1]")));
    }
    let t = ds.table();
    let mut factors = Vec::with_capacity(t.n_samples());
    for j in 0..t.n_samples() {
        let col = t.column(j);
        let mut nz: Vec<u64> = col.iter().copied().filter(|&c| c > 0).collect();
        if nz.is_empty() {
            return Err(Error::invalid(format!(
                "sample '{}' has no nonzero counts",
                t.sample_ids()[j]
            )));
        }
        nz.sort_unstable();
        let q = lower_quantile(&nz, p);
        let s: u64 = col.iter().filter(|&&c| c <= q).sum();
        factors.push(T::from_count(s));
    }
    let table = TransformedTable::from_fn(ds, |i, j| {
        T::from_count(t.count(i, j)) / factors[j] * scale
    });
    Ok((
        NormFactors {
            method: FactorMethod::Css,
            factors,
        },
        table,
    ))
}

/// Type-7 (linear interpolation) quantile of unsorted data.
fn quantile7(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tmm_factor(
    obs: &[u64],
    reference: &[u64],
    lib_obs: f64,
    lib_ref: f64,
    logratio_trim: f64,
    abs_trim: f64,
) -> Option<f64> {
    let mut m = Vec::new();
    let mut a = Vec::new();
    let mut w = Vec::new();
    for (&co, &cr) in obs.iter().zip(reference) {
        if co == 0 || cr == 0 {
            continue;
        }
        let (co, cr) = (co as f64, cr as f64);
        let (po, pr) = (co / lib_obs, cr / lib_ref);
        m.push((po / pr).log2());
        a.push(0.5 * (po * pr).log2());
        w.push(1.0 / (1.0 / co - 1.0 / lib_obs + 1.0 / cr - 1.0 / lib_ref));
    }
    if m.is_empty() {
        return None;
    }
    if m.iter().all(|x| x.abs() < 1e-6) {
        return Some(1.0);
    }
    let n = m.len() as f64;
    let lo_m = (n * logratio_trim).floor() + 1.0;
    let hi_m = n + 1.0 - lo_m;
    let lo_a = (n * abs_trim).floor() + 1.0;
    let hi_a = n + 1.0 - lo_a;
    let rm = average_ranks(&m);
    let ra = average_ranks(&a);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..m.len() {
        if rm[k] >= lo_m && rm[k] <= hi_m && ra[k] >= lo_a && ra[k] <= hi_a && w[k].is_finite() {
            num += m[k] * w[k];
            den += w[k];
        }
    }
    if den > 0.0 {
        Some(2f64.powf(num / den))
    } else {
        Some(1.0)
    }
}

/// Trimmed mean of M-values against the sample whose upper-quartile relative
/// abundance is closest to the mean upper quartile. Factors are rescaled to a
/// geometric mean of one.
pub fn tmm<T: Scalar>(ds: &Dataset, logratio_trim: f64, abs_trim: f64) -> Result<NormFactors<T>> {
    let t = ds.table();
    let n = t.n_samples();
    if n < 2 {
        return Err(Error::invalid("TMM needs at least two samples"));
    }
    let libs: Vec<f64> = library_sizes::<f64>(ds)?;
    let cols: Vec<Vec<u64>> = (0..n).map(|j| t.column(j)).collect();
    let uq: Vec<f64> = cols
        .iter()
        .zip(&libs)
        .map(|(c, &l)| quantile7(&c.iter().map(|&x| x as f64 / l).collect::<Vec<_>>(), 0.75))
        .collect();
    let mean_uq = uq.iter().sum::<f64>() / n as f64;
    let reference = (0..n)
        .min_by(|&a, &b| (uq[a] - mean_uq).abs().total_cmp(&(uq[b] - mean_uq).abs()))
        .unwrap();
    let raw: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            if j == reference {
                return 1.0;
            }
            tmm_factor(&cols[j], &cols[reference], libs[j], libs[reference], logratio_trim, abs_trim)
                .unwrap_or_else(|| {
                    warn!(
                        "TMM: sample '{}' shares no nonzero taxa with the reference; factor set to 1",
                        t.sample_ids()[j]
                    );
                    1.0
                })
        })
        .collect();
    let log_mean = raw.iter().map(|f| f.ln()).sum::<f64>() / n as f64;
    let factors = raw.iter().map(|f| T::lit((f.ln() - log_mean).exp())).collect();
    Ok(NormFactors {
        method: FactorMethod::Tmm,
        factors,
    })
}

fn median_f64(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

/// Geometric mean of pairwise ratios. The ratio between samples j and k is the
/// median of `c_ij / c_ik` over taxa nonzero in both; pairs sharing fewer than
/// `min_shared` such taxa are skipped.
pub fn gmpr<T: Scalar>(ds: &Dataset, min_shared: usize) -> Result<NormFactors<T>> {
    let t = ds.table();
    let n = t.n_samples();
    let cols: Vec<Vec<u64>> = (0..n).map(|j| t.column(j)).collect();
    let min_shared = min_shared.max(1);
    let factors: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut log_sum = 0.0;
            let mut partners = 0usize;
            for k in 0..n {
                if k == j {
                    continue;
                }
                let mut ratios: Vec<f64> = cols[j]
                    .iter()
                    .zip(&cols[k])
                    .filter(|(&a, &b)| a > 0 && b > 0)
                    .map(|(&a, &b)| a as f64 / b as f64)
                    .collect();
                if ratios.len() < min_shared {
                    continue;
                }
                log_sum += median_f64(&mut ratios).ln();
                partners += 1;
            }
            (partners > 0).then(|| (log_sum / partners as f64).exp())
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for (j, f) in factors.into_iter().enumerate() {
        match f {
            Some(f) => out.push(T::lit(f)),
            None => {
                return Err(Error::invalid(format!(
                    "GMPR: sample '{}' shares fewer than {min_shared} nonzero taxa with every other sample",
                    t.sample_ids()[j]
                )))
            }
        }
    }
    Ok(NormFactors {
        method: FactorMethod::Gmpr,
        factors: out,
    })
}

/// Divides each sample's counts by its factor.
pub fn apply_size_factors<T: Scalar>(ds: &Dataset, nf: &NormFactors<T>) -> Result<TransformedTable<T>> {
    if nf.factors.len() != ds.n_samples() {
        return Err(Error::invalid(format!(
            "{} size factors for {} samples",
            nf.factors.len(),
            ds.n_samples()
        )));
    }
    Ok(TransformedTable::from_fn(ds, |i, j| {
        T::from_count(ds.table().count(i, j)) / nf.factors[j]
    }))
}

/// Normalized abundances under the given strategy (CLR uses `clr_pseudo`).
pub fn normalized_abundances<T: Scalar>(
    ds: &Dataset,
    method: Normalization,
    clr_pseudo: T,
) -> Result<TransformedTable<T>> {
    match method {
        Normalization::Tss => tss(ds),
        Normalization::Clr => clr(ds, clr_pseudo),
        Normalization::Css => css(ds, 0.5, T::lit(1000.0)).map(|(_, t)| t),
        Normalization::Tmm => {
            let nf = tmm::<T>(ds, 0.30, 0.05)?;
            let sizes = nf.effective_sizes(ds);
            apply_size_factors(
                ds,
                &NormFactors {
                    method: FactorMethod::Tmm,
                    factors: sizes,
                },
            )
        }
        Normalization::Gmpr => apply_size_factors(ds, &gmpr::<T>(ds, 1)?),
    }
}

//! Jaccard distances between significance sets and classical MDS.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::linalg::symmetric_eigen;
use crate::stats::Matrix;

/// `1 − |A∩B| / |A∪B|`, defined as 0 when both sets are empty.
pub fn jaccard_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mds {
    /// One row of `k` coordinates per item.
    pub coordinates: Vec<Vec<f64>>,
    /// All eigenvalues of the double-centred matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Share of the positive eigenvalue mass per reported coordinate.
    pub variance_explained: Vec<f64>,
}

/// Classical (Torgerson) scaling of a symmetric distance matrix into `k`
/// dimensions. Negative eigenvalues, and those at rounding level relative to
/// the largest, are treated as zero.
pub fn classical_mds(d: &Matrix<f64>, k: usize) -> Result<Mds> {
    let n = d.rows();
    if d.cols() != n {
        return Err(Error::invalid("distance matrix must be square"));
    }
    if k == 0 || k >= n.max(1) {
        return Err(Error::invalid(format!(
            "{k}-dimensional scaling needs at least {} items, got {n}",
            k + 1
        )));
    }
    let sq = Matrix::from_fn(n, n, |i, j| d[(i, j)] * d[(i, j)]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = Matrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let (mut values, vectors) = symmetric_eigen(&b)?;
    // eigenvalues at rounding level are zero (flat configurations)
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in &mut values {
        if v.abs() <= 1e-12 * top {
            *v = 0.0;
        }
    }
    let positive: f64 = values.iter().filter(|&&v| v > 0.0).sum();
    let mut coordinates = vec![vec![0.0; k]; n];
    let mut variance_explained = Vec::with_capacity(k);
    for c in 0..k {
        let lambda = values[c].max(0.0);
        let mut v = vectors.column(c);
        // fix the sign so output does not depend on the solver's choice
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() + 1e-12 { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..n {
            // adding 0.0 turns -0.0 into 0.0
            coordinates[i][c] = v[i] * lambda.sqrt() + 0.0;
        }
        variance_explained.push(if positive > 0.0 { lambda / positive } else { 0.0 });
    }
    Ok(Mds {
        coordinates,
        eigenvalues: values,
        variance_explained,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdsResult {
    pub methods: Vec<String>,
    pub distances: Vec<Vec<f64>>,
    pub mds: Mds,
}

/// Embeds methods by the Jaccard distances between their sets of
/// significant `(dataset, taxon)` pairs.
pub fn jaccard_mds(sets: &[(String, BTreeSet<(String, String)>)], k: usize) -> Result<MdsResult> {
    let n = sets.len();
    let d = Matrix::from_fn(n, n, |i, j| jaccard_distance(&sets[i].1, &sets[j].1));
    let mds = classical_mds(&d, k)?;
    Ok(MdsResult {
        methods: sets.iter().map(|(m, _)| m.clone()).collect(),
        distances: (0..n).map(|i| d.row(i).to_vec()).collect(),
        mds,
    })
}

//! Small dense linear algebra: LU and Cholesky solves, a bordered-tridiagonal
//! solver for ordinal-model Hessians, and a Jacobi symmetric eigensolver.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Selects the given rows and columns (in order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::numerical("LU of a non-square matrix"));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let tiny = scale * T::epsilon() * T::from_usize(n.max(1)).unwrap();
        for k in 0..n {
            let (piv, best) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(best > tiny) {
                return Err(Error::numerical("singular matrix"));
            }
            if piv != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                x[i] = x[i] - l * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                x[i] = x[i] - u * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.lu.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Cholesky factor `L` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return Err(Error::numerical("matrix is not positive definite"));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn log_det(&self) -> T {
        self.l.diagonal().into_iter().map(|d| d.ln()).sum::<T>() * T::lit(2.0)
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] = y[i] - self.l[(i, k)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] = y[i] - self.l[(k, i)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.l.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Symmetric matrix `[[A, B], [Bᵀ, C]]` with `A` tridiagonal (k × k), `B` dense
/// (k × p) and `C` dense (p × p).
///
/// This is the shape of the (negated) Hessian of a cumulative-link model whose
/// intercepts come first: each observation touches at most two adjacent cut
/// points.
#[derive(Debug, Clone)]
pub struct BorderedTridiagonal<T> {
    pub diag: Vec<T>,
    /// `off[i]` couples intercepts `i` and `i + 1`.
    pub off: Vec<T>,
    pub border: Matrix<T>,
    pub corner: Matrix<T>,
}

impl<T: Scalar> BorderedTridiagonal<T> {
    pub fn zeros(k: usize, p: usize) -> Self {
        Self {
            diag: vec![T::zero(); k],
            off: vec![T::zero(); k.saturating_sub(1)],
            border: Matrix::zeros(k, p),
            corner: Matrix::zeros(p, p),
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len() + self.corner.rows()
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let k = self.diag.len();
        let p = self.corner.rows();
        let mut m = Matrix::zeros(k + p, k + p);
        for i in 0..k {
            m[(i, i)] = self.diag[i];
            if i + 1 < k {
                m[(i, i + 1)] = self.off[i];
                m[(i + 1, i)] = self.off[i];
            }
            for j in 0..p {
                m[(i, k + j)] = self.border[(i, j)];
                m[(k + j, i)] = self.border[(i, j)];
            }
        }
        for a in 0..p {
            for b in 0..p {
                m[(k + a, k + b)] = self.corner[(a, b)];
            }
        }
        m
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            diag: self.diag.iter().map(|&x| x * s).collect(),
            off: self.off.iter().map(|&x| x * s).collect(),
            border: self.border.scale(s),
            corner: self.corner.scale(s),
        }
    }

    /// Factorizes the tridiagonal block and the Schur complement.
    pub fn factor(&self) -> Result<BorderedFactor<T>> {
        let k = self.diag.len();
        let p = self.corner.rows();
        // LDLᵀ of the tridiagonal block
        let mut d = vec![T::zero(); k];
        let mut l = vec![T::zero(); k.saturating_sub(1)];
        let scale = self
            .diag
            .iter()
            .chain(self.corner.diagonal().iter())
            .fold(T::zero(), |m, x| m.max(x.abs()));
        let tiny = scale * T::epsilon() * T::lit(16.0);
        for i in 0..k {
            let mut di = self.diag[i];
            if i > 0 {
                di -= l[i - 1] * l[i - 1] * d[i - 1];
            }
            if !(di.abs() > tiny) || !di.is_finite() {
                return Err(Error::numerical("singular tridiagonal block"));
            }
            d[i] = di;
            if i + 1 < k {
                l[i] = self.off[i] / di;
            }
        }
        let tri = TriFactor { d, l };
        // A⁻¹ B, one column at a time
        let mut ainv_b = Matrix::zeros(k, p);
        for j in 0..p {
            let col = tri.solve(&self.border.column(j));
            for i in 0..k {
                ainv_b[(i, j)] = col[i];
            }
        }
        let mut schur = self.corner.clone();
        for a in 0..p {
            for b in 0..p {
                let mut s = T::zero();
                for i in 0..k {
                    s += self.border[(i, a)] * ainv_b[(i, b)];
                }
                schur[(a, b)] -= s;
            }
        }
        let schur = if p > 0 { Some(Lu::new(&schur)?) } else { None };
        Ok(BorderedFactor {
            tri,
            border: self.border.clone(),
            ainv_b,
            schur,
        })
    }
}

#[derive(Debug, Clone)]
struct TriFactor<T> {
    d: Vec<T>,
    l: Vec<T>,
}

impl<T: Scalar> TriFactor<T> {
    fn solve(&self, b: &[T]) -> Vec<T> {
        let k = self.d.len();
        let mut y = b.to_vec();
        for i in 1..k {
            y[i] = y[i] - self.l[i - 1] * y[i - 1];
        }
        for i in 0..k {
            y[i] /= self.d[i];
        }
        for i in (0..k.saturating_sub(1)).rev() {
            y[i] = y[i] - self.l[i] * y[i + 1];
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct BorderedFactor<T> {
    tri: TriFactor<T>,
    border: Matrix<T>,
    ainv_b: Matrix<T>,
    schur: Option<Lu<T>>,
}

impl<T: Scalar> BorderedFactor<T> {
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let k = self.tri.d.len();
        let p = self.border.cols();
        let (r1, r2) = rhs.split_at(k);
        let y1 = self.tri.solve(r1);
        let mut x = y1.clone();
        if let Some(schur) = &self.schur {
            let mut r = r2.to_vec();
            for (j, rj) in r.iter_mut().enumerate().take(p) {
                let mut s = T::zero();
                for i in 0..k {
                    s += self.border[(i, j)] * y1[i];
                }
                *rj -= s;
            }
            let x2 = schur.solve(&r);
            for i in 0..k {
                let mut s = T::zero();
                for j in 0..p {
                    s += self.ainv_b[(i, j)] * x2[j];
                }
                x[i] -= s;
            }
            x.extend(x2);
        }
        x
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.tri.d.len() + self.border.cols();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of the returned matrix.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::numerical("eigen-decomposition of a non-square matrix"));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off.sqrt() <= T::epsilon() * T::lit(1e-3) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(j, j)]
            .partial_cmp(&m[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

//! Dense and tridiagonal linear algebra shared by every module.
//!
//! Everything here is deliberately small: symmetric eigendecompositions with a
//! deterministic ordering and sign convention, a pivoted tridiagonal LU (the
//! linear finite elements on a 1D mesh never produce anything wider), and a
//! pairwise accumulator for order-stable sums of many matrices.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// A square tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// Sub-diagonal, `lower[i] = A[i+1, i]`.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// Super-diagonal, `upper[i] = A[i, i+1]`.
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self { lower: vec![0.0; off], diag: vec![0.0; n], upper: vec![0.0; off] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        t.diag.iter_mut().for_each(|v| *v = 1.0);
        t
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.lower[j]
        } else if j == i + 1 {
            self.upper[i]
        } else {
            0.0
        }
    }

    pub fn add_entry(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            self.diag[i] += v;
        } else if i == j + 1 {
            self.lower[j] += v;
        } else if j == i + 1 {
            self.upper[i] += v;
        } else {
            panic!("entry ({i}, {j}) is outside the tridiagonal band");
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Tridiagonal, b: f64) -> Tridiagonal {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        Tridiagonal {
            lower: mix(&self.lower, &other.lower),
            diag: mix(&self.diag, &other.diag),
            upper: mix(&self.upper, &other.upper),
        }
    }

    /// Replaces row `i` by the `i`-th unit row scaled by `value`.
    pub fn set_unit_row(&mut self, i: usize, value: f64) {
        self.diag[i] = value;
        if i > 0 {
            self.lower[i - 1] = 0.0;
        }
        if i + 1 < self.dim() {
            self.upper[i] = 0.0;
        }
    }

    /// `self * diag(scale)`.
    pub fn scale_columns(&self, scale: &[f64]) -> Tridiagonal {
        let n = self.dim();
        let mut out = self.clone();
        for i in 0..n {
            out.diag[i] *= scale[i];
        }
        for i in 0..n.saturating_sub(1) {
            out.lower[i] *= scale[i];
            out.upper[i] *= scale[i + 1];
        }
        out
    }

    pub fn transpose(&self) -> Tridiagonal {
        Tridiagonal { lower: self.upper.clone(), diag: self.diag.clone(), upper: self.lower.clone() }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.mul_slice(x.as_slice(), y.as_mut_slice());
        y
    }

    fn mul_slice(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `self * b` for a dense `b` with any number of columns.
    pub fn mul_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.dim(), "tridiagonal product: row mismatch");
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let src = b.column(j);
            let mut dst = out.column_mut(j);
            self.mul_slice(src.as_slice(), dst.as_mut_slice());
        }
        out
    }

    /// `b * self` for a dense `b`.
    pub fn right_mul_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.transpose().mul_mat(&b.transpose()).transpose()
    }

    /// Quadratic form `x^T A y`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = self.diag[i] * y[i];
            if i > 0 {
                row += self.lower[i - 1] * y[i - 1];
            }
            if i + 1 < n {
                row += self.upper[i] * y[i + 1];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Partial-pivoting LU factorization (the LAPACK `gttrf` scheme).
    pub fn factor(&self) -> Result<TridiagonalLu> {
        TridiagonalLu::new(self)
    }
}

/// LU factors of a tridiagonal matrix with row interchanges; `U` has two
/// super-diagonals after pivoting.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    ipiv: Vec<usize>,
}

impl TridiagonalLu {
    fn new(a: &Tridiagonal) -> Result<Self> {
        let n = a.dim();
        let mut dl = a.lower.clone();
        let mut d = a.diag.clone();
        let mut du = a.upper.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut ipiv: Vec<usize> = (0..n).collect();
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                ipiv[i] = i + 1;
            }
        }
        let scale = a.diag.iter().chain(&a.lower).chain(&a.upper).fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(i) = d.iter().position(|v| v.abs() <= f64::EPSILON * scale * 1e-3 || !v.is_finite()) {
            return Err(Error::Singular(format!("zero pivot at row {i} of a {n}x{n} tridiagonal matrix")));
        }
        Ok(Self { dl, d, du, du2, ipiv })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n.saturating_sub(1) {
            let ip = self.ipiv[i];
            let temp = b[2 * i + 1 - ip] - self.dl[i] * b[ip];
            b[i] = b[ip];
            b[i + 1] = temp;
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        b[0] /= self.d[0];
        if n > 1 {
            b[1] = (b[1] - self.du[0] * b[0]) / self.d[1];
        }
        for i in 2..n {
            b[i] = (b[i] - self.du[i - 1] * b[i - 1] - self.du2[i - 2] * b[i - 2]) / self.d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let ip = self.ipiv[i];
            let temp = b[i] - self.dl[i] * b[i + 1];
            b[i] = b[ip];
            b[ip] = temp;
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// Solves `A X = B` for a block of right-hand sides.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut rows = b.transpose();
        self.solve_rows(&mut rows, false);
        rows.transpose()
    }

    /// Solves `A^T X = B` for a block of right-hand sides.
    pub fn solve_transpose_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut rows = b.transpose();
        self.solve_rows(&mut rows, true);
        rows.transpose()
    }

    /// Row-oriented sweep on `B^T` (column `i` of `rows` is row `i` of `B`),
    /// so every elimination step is a contiguous vector update.
    fn solve_rows(&self, rows: &mut DMatrix<f64>, transpose: bool) {
        let n = self.dim();
        let m = rows.nrows();
        if m == 0 {
            return;
        }
        let data = rows.as_mut_slice();
        let inv: Vec<f64> = self.d.iter().map(|v| 1.0 / v).collect();
        // y[i] = (y[i] - a * y[j] - b * y[k]) * s, with j, k distinct from i
        let update = |data: &mut [f64], i: usize, terms: &[(usize, f64)], s: f64| {
            for &(j, coef) in terms {
                let (dst, src) = if j > i {
                    let (lo, hi) = data.split_at_mut(j * m);
                    (&mut lo[i * m..(i + 1) * m], &hi[..m])
                } else {
                    let (lo, hi) = data.split_at_mut(i * m);
                    (&mut hi[..m], &lo[j * m..(j + 1) * m])
                };
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= coef * s;
                }
            }
            if s != 1.0 {
                data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v *= s);
            }
        };
        let swap = |data: &mut [f64], i: usize| {
            let (lo, hi) = data.split_at_mut((i + 1) * m);
            lo[i * m..].swap_with_slice(&mut hi[..m]);
        };
        if !transpose {
            for i in 0..n.saturating_sub(1) {
                if self.ipiv[i] != i {
                    swap(data, i);
                }
                update(data, i + 1, &[(i, self.dl[i])], 1.0);
            }
            update(data, n - 1, &[], inv[n - 1]);
            if n > 1 {
                update(data, n - 2, &[(n - 1, self.du[n - 2])], inv[n - 2]);
            }
            for i in (0..n.saturating_sub(2)).rev() {
                update(data, i, &[(i + 1, self.du[i]), (i + 2, self.du2[i])], inv[i]);
            }
        } else {
            update(data, 0, &[], inv[0]);
            if n > 1 {
                update(data, 1, &[(0, self.du[0])], inv[1]);
            }
            for i in 2..n {
                update(data, i, &[(i - 1, self.du[i - 1]), (i - 2, self.du2[i - 2])], inv[i]);
            }
            for i in (0..n.saturating_sub(1)).rev() {
                update(data, i, &[(i + 1, self.dl[i])], 1.0);
                if self.ipiv[i] != i {
                    swap(data, i);
                }
            }
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
///
/// Ties keep the ascending order of the solver's original index, and every
/// eigenvector is flipped so that its largest-magnitude entry is positive.
pub fn symmetric_eigen_desc(mat: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::dims(format!("eigendecomposition of a {}x{} matrix", mat.nrows(), mat.ncols())));
    }
    let sym = symmetrize(mat);
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNonConvergence("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::EigenNonConvergence(format!("{} iterations exceeded", EIGEN_MAX_ITER)))?;
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(&order);
    for mut col in vectors.column_iter_mut() {
        if sign_of_largest(col.as_slice()) < 0.0 {
            col.neg_mut();
        }
    }
    Ok((values, vectors))
}

/// Sign of the entry with the largest magnitude (first one on ties).
pub fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Flips columns in place so the largest-magnitude entry of each is positive.
pub fn canonicalize_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        if sign_of_largest(col.as_slice()) < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root and inverse square root of an SPD matrix.
pub fn spd_sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = symmetric_eigen_desc(m)?;
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::Singular("matrix is not positive definite".into()));
    }
    let sqrt = &vecs * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * vecs.transpose();
    let inv_sqrt = &vecs * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt())) * vecs.transpose();
    Ok((symmetrize(&sqrt), symmetrize(&inv_sqrt)))
}

/// Largest generalized eigenvalue of `a v = t b v` restricted to the range of
/// the positive semidefinite `b`. Returns 0 when `b` vanishes.
pub fn max_generalized_eigenvalue_on_range(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> Result<f64> {
    let (bvals, bvecs) = symmetric_eigen_desc(b)?;
    let top = bvals.iter().cloned().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return Ok(0.0);
    }
    let keep: Vec<usize> = (0..bvals.len()).filter(|&i| bvals[i] > rel_tol * top).collect();
    let basis = bvecs.select_columns(&keep);
    let scale =
        DMatrix::from_diagonal(&DVector::from_iterator(keep.len(), keep.iter().map(|&i| 1.0 / bvals[i].sqrt())));
    let t = &basis * scale;
    let reduced = t.transpose() * a * &t;
    let (vals, _) = symmetric_eigen_desc(&reduced)?;
    Ok(vals[0])
}

/// Least-squares slope of `log(y)` against `log(x)`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("log-log regression needs at least two paired points"));
    }
    if x.iter().chain(y).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::invalid("log-log regression needs strictly positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// Pairwise (cascade) summation: the running error grows like `log n`
/// instead of `n`, and the result only depends on the push order.
#[derive(Debug, Clone)]
pub struct PairwiseSum<T> {
    stack: Vec<(u32, T)>,
    count: usize,
}

impl<T> Default for PairwiseSum<T> {
    fn default() -> Self {
        Self { stack: Vec::new(), count: 0 }
    }
}

impl<T> PairwiseSum<T>
where
    T: for<'a> AddAssign<&'a T>,
{
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, item: T) {
        self.count += 1;
        let mut level = 0u32;
        let mut acc = item;
        while let Some((top_level, _)) = self.stack.last() {
            if *top_level != level {
                break;
            }
            let (_, mut top) = self.stack.pop().expect("non-empty stack");
            top += &acc;
            acc = top;
            level += 1;
        }
        self.stack.push((level, acc));
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn finish(mut self) -> Option<T> {
        let (_, mut acc) = self.stack.pop()?;
        while let Some((_, mut next)) = self.stack.pop() {
            next += &acc;
            acc = next;
        }
        Some(acc)
    }
}

/// Pairwise sum of plain scalars.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Frobenius inner product of two equally shaped matrices.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `sum_j a[:, j]^T m a[:, j]` for a tridiagonal weight `m`, i.e. `tr(a^T m a)`.
pub fn weighted_frobenius_sq(m: &Tridiagonal, a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| m.inner(c.as_slice(), c.as_slice())).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tridiagonal(n: usize, seed: u64) -> Tridiagonal {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.diag[i] = next();
        }
        for i in 0..n - 1 {
            t.lower[i] = next() * 3.0;
            t.upper[i] = next();
        }
        t
    }

    #[test]
    fn pivoted_lu_matches_dense_solve() {
        for seed in 0..5 {
            let t = random_tridiagonal(17, seed);
            let dense = t.to_dense();
            let lu = t.factor().unwrap();
            let b = DMatrix::from_fn(17, 3, |i, j| (i as f64 + 1.0).sin() + j as f64);
            let x = lu.solve_mat(&b);
            assert!((&dense * &x - &b).amax() < 1e-9);
            let xt = lu.solve_transpose_mat(&b);
            assert!((dense.transpose() * &xt - &b).amax() < 1e-9);
        }
    }

    #[test]
    fn singular_tridiagonal_is_rejected() {
        let mut t = Tridiagonal::identity(4);
        t.diag[2] = 0.0;
        assert!(matches!(t.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn products_match_dense() {
        let t = random_tridiagonal(9, 3);
        let b = DMatrix::from_fn(9, 4, |i, j| (i * 3 + j) as f64 * 0.1);
        assert!((t.mul_mat(&b) - t.to_dense() * &b).amax() < 1e-14);
        let c = DMatrix::from_fn(4, 9, |i, j| (i + 2 * j) as f64 * 0.1);
        assert!((t.right_mul_mat(&c) - &c * t.to_dense()).amax() < 1e-14);
        let s = t.scale_columns(&[2.0; 9]);
        assert!((s.to_dense() - t.to_dense() * 2.0).amax() < 1e-14);
    }

    #[test]
    fn eigen_sorted_descending_with_sign_convention() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let (vals, vecs) = symmetric_eigen_desc(&a).unwrap();
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        for j in 0..3 {
            let col = vecs.column(j);
            assert!((&a * col - col * vals[j]).amax() < 1e-12);
            assert!(sign_of_largest(col.as_slice()) > 0.0);
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_sum() {
        let mut acc = PairwiseSum::new();
        let mut naive = DMatrix::<f64>::zeros(2, 2);
        for k in 0..37 {
            let m = DMatrix::from_element(2, 2, k as f64);
            naive += &m;
            acc.push(m);
        }
        assert_eq!(acc.len(), 37);
        assert_eq!(acc.finish().unwrap(), naive);
        assert_eq!(pairwise_sum(&(1..=100).map(f64::from).collect::<Vec<_>>()), 5050.0);
    }

    #[test]
    fn loglog_slope_recovers_power_law() {
        let x = [80.0, 160.0, 320.0, 640.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.0)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_eigenvalue_on_singular_range() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        assert!((max_generalized_eigenvalue_on_range(&a, &b, 1e-12).unwrap() - 3.0).abs() < 1e-12);
    }
}

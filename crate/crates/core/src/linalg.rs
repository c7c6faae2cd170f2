//! Small dense linear algebra.
//!
//! Problem sizes here are tiny (the reference scenarios are scalar), so
//! everything is a row-major `Vec<f64>` and no attempt is made at blocking
//! or sparse storage. Covariances live in [`SymmetricPsd`], which can only
//! be built through [`Matrix::symmetrize`] and therefore always carries the
//! symmetry and PSD guarantees.

use std::fmt;

use crate::error::{Error, Result};

/// Relative tolerance for the PSD check: `lambda_min >= -PSD_TOLERANCE * trace`.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Innovation covariances whose reciprocal condition estimate falls below
/// this are rejected by [`solve_spd`].
pub const RCOND_LIMIT: f64 = 1e-14;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{}", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadShape {
                rows,
                cols,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "from_row_major",
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended
    /// for literals in code and tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: n_rows,
            cols: n_cols,
            data,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn multiply(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "multiply",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out.check_finite("multiply")?;
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch {
                op: "mul_vec",
                lhs: self.shape(),
                rhs: (v.len(), 1),
            });
        }
        let out: Vec<f64> = self
            .data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: "mul_vec" });
        }
        Ok(out)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        let out = Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        };
        out.check_finite(op)?;
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn trace(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op: "trace",
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok((0..self.rows).map(|i| self.data[i * self.cols + i]).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `(P + P^T) / 2` followed by the PSD check.
    pub fn symmetrize(&self) -> Result<SymmetricPsd> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op: "symmetrize",
                rows: self.rows,
                cols: self.cols,
            });
        }
        self.check_finite("symmetrize")?;
        let n = self.rows;
        let mut sym = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                sym.data[i * n + j] = avg;
                sym.data[j * n + i] = avg;
            }
        }
        check_psd(&sym)?;
        Ok(SymmetricPsd(sym))
    }

    fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }
}

fn psd_tolerance(m: &Matrix) -> f64 {
    let tr: f64 = (0..m.rows).map(|i| m.get(i, i)).sum();
    PSD_TOLERANCE * tr.abs()
}

fn check_psd(sym: &Matrix) -> Result<()> {
    let tolerance = psd_tolerance(sym);
    // Cheap exits before paying for an eigen-decomposition.
    if sym.rows == 1 {
        let v = sym.data[0];
        return if v >= -tolerance {
            Ok(())
        } else {
            Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: v,
                tolerance,
            })
        };
    }
    let min_eigenvalue = smallest_eigenvalue(sym);
    if min_eigenvalue >= -tolerance {
        Ok(())
    } else {
        Err(Error::NotPositiveSemidefinite {
            min_eigenvalue,
            tolerance,
        })
    }
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn smallest_eigenvalue(sym: &Matrix) -> f64 {
    let n = sym.rows;
    if n == 0 {
        return 0.0;
    }
    let mut a = sym.data.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let scale: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
}

/// A symmetric, positive semidefinite matrix (within [`PSD_TOLERANCE`]).
#[derive(Clone, PartialEq)]
pub struct SymmetricPsd(Matrix);

impl fmt::Debug for SymmetricPsd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl SymmetricPsd {
    pub fn new(m: Matrix) -> Result<Self> {
        m.symmetrize()
    }

    pub fn zeros(n: usize) -> Self {
        SymmetricPsd(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymmetricPsd(Matrix::identity(n))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Matrix::scalar(value).symmetrize()
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.0.rows).map(|i| self.0.get(i, i)).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    /// Lower-triangular factor with `L L^T = P`; singular directions get
    /// zero columns.
    pub fn cholesky(&self) -> Result<Matrix> {
        cholesky(&self.0)
    }
}

impl AsRef<Matrix> for SymmetricPsd {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// Cholesky factorization of a PSD matrix. Semidefinite inputs are handled
/// by zeroing the columns whose pivot vanishes; indefinite inputs beyond
/// the PSD tolerance are rejected with the smallest eigenvalue.
pub fn cholesky(p: &Matrix) -> Result<Matrix> {
    if !p.is_square() {
        return Err(Error::NotSquare {
            op: "cholesky",
            rows: p.rows,
            cols: p.cols,
        });
    }
    let n = p.rows;
    let tolerance = psd_tolerance(p);
    let max_diag = (0..n).map(|i| p.get(i, i).abs()).fold(0.0, f64::max);
    let zero_pivot = (n as f64) * f64::EPSILON * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = p.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d < -tolerance.max(zero_pivot) {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: smallest_eigenvalue(&p.symmetrize_unchecked()),
                tolerance,
            });
        }
        if d <= zero_pivot {
            // Zero column; the remaining entries of this column must be
            // negligible for a PSD input.
            continue;
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = p.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

impl Matrix {
    fn symmetrize_unchecked(&self) -> Matrix {
        let n = self.rows;
        let mut sym = self.clone();
        for i in 0..n {
            for j in 0..n {
                sym.data[i * n + j] = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
            }
        }
        sym
    }
}

/// Solves `S X = B` for symmetric positive definite `S`.
///
/// Rejects `S` when the reciprocal condition estimate taken from the
/// Cholesky diagonal, `(min L_ii / max L_ii)^2`, is below [`RCOND_LIMIT`].
pub fn solve_spd(s: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !s.is_square() {
        return Err(Error::NotSquare {
            op: "solve_spd",
            rows: s.rows,
            cols: s.cols,
        });
    }
    if s.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "solve_spd",
            lhs: s.shape(),
            rhs: b.shape(),
        });
    }
    let n = s.rows;
    let l = cholesky(s).map_err(|e| match e {
        Error::NotPositiveSemidefinite { .. } => Error::SingularInnovation { rcond: 0.0 },
        other => other,
    })?;
    let (min_d, max_d) = (0..n)
        .map(|i| l.get(i, i))
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        });
    let rcond = if max_d > 0.0 {
        (min_d / max_d).powi(2)
    } else {
        0.0
    };
    if rcond.is_nan() || rcond < RCOND_LIMIT {
        return Err(Error::SingularInnovation { rcond });
    }
    let mut x = b.clone();
    for c in 0..b.cols {
        // forward: L z = b
        for i in 0..n {
            let mut v = x.get(i, c);
            for k in 0..i {
                v -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, v / l.get(i, i));
        }
        // backward: L^T x = z
        for i in (0..n).rev() {
            let mut v = x.get(i, c);
            for k in (i + 1)..n {
                v -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, v / l.get(i, i));
        }
    }
    x.check_finite("solve_spd")?;
    Ok(x)
}

/// `x^T x`
pub fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triple_loop(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn multiply_identity_and_scalar() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(Matrix::identity(2).multiply(&x).unwrap(), x);
        let a = Matrix::scalar(0.98);
        let p = a.multiply(&a).unwrap();
        assert!((p.get(0, 0) - 0.9604).abs() < 1e-15);
    }

    #[test]
    fn multiply_matches_triple_loop() {
        let a = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.25, 3.0, -1.0]]);
        let b = Matrix::column(&[2.0, 0.5, -4.0]);
        let got = a.multiply(&b).unwrap();
        assert_eq!(got.shape(), (2, 1));
        assert_eq!(got, triple_loop(&a, &b));
        assert_eq!(got.as_slice(), &[-1.0, 6.0]);
    }

    #[test]
    fn multiply_rejects_bad_shapes() {
        let a = Matrix::zeros(2, 3);
        let err = a.multiply(&Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                lhs: (2, 3),
                rhs: (2, 3),
                ..
            }
        ));
    }

    #[test]
    fn trace_cases() {
        assert_eq!(Matrix::identity(2).trace().unwrap(), 2.0);
        assert_eq!(Matrix::scalar(0.1).trace().unwrap(), 0.1);
        assert_eq!(Matrix::diagonal(&[0.3, 0.7]).trace().unwrap(), 1.0);
        assert!(matches!(
            Matrix::zeros(2, 3).trace(),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn cholesky_cases() {
        assert_eq!(cholesky(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let l = cholesky(&Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]])).unwrap();
        assert_eq!(l.get(0, 0), 2.0);
        assert_eq!(l.get(0, 1), 0.0);
        assert_eq!(l.get(1, 0), 1.0);
        assert!((l.get(1, 1) - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(cholesky(&Matrix::scalar(0.0)).unwrap(), Matrix::scalar(0.0));
    }

    #[test]
    fn cholesky_singular_reconstructs() {
        let p = Matrix::from_rows(&[[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 2.0]]);
        let l = cholesky(&p).unwrap();
        let rec = l.multiply(&l.transpose()).unwrap();
        assert!(rec.sub(&p).unwrap().frobenius_norm() <= 1e-10 * p.frobenius_norm());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let p = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        match cholesky(&p) {
            Err(Error::NotPositiveSemidefinite { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn symmetrize_cases() {
        let s = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]);
        assert_eq!(s.symmetrize().unwrap().as_matrix(), &s);
        let a = Matrix::from_rows(&[[1.0, 0.1], [0.3, 1.0]]);
        let sym = a.symmetrize().unwrap();
        assert!((sym.get(0, 1) - 0.2).abs() < 1e-15);
        assert_eq!(sym.get(0, 1), sym.get(1, 0));
        let noisy = Matrix::from_rows(&[[1.0, 1e-13], [-1e-13, 1.0]]);
        let sym = noisy.symmetrize().unwrap();
        assert_eq!(sym.get(0, 1), sym.get(1, 0));
        assert!(smallest_eigenvalue(sym.as_matrix()) > 0.0);
    }

    #[test]
    fn symmetrize_rejects_indefinite() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]);
        assert!(matches!(
            a.symmetrize(),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn solve_spd_scalar_and_singular() {
        let x = solve_spd(&Matrix::scalar(2.0), &Matrix::scalar(1.0)).unwrap();
        assert!((x.get(0, 0) - 0.5).abs() < 1e-15);
        let s = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(
            solve_spd(&s, &Matrix::identity(2)),
            Err(Error::SingularInnovation { .. })
        ));
    }

    #[test]
    fn jacobi_smallest_eigenvalue() {
        let m = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        assert!((smallest_eigenvalue(&m) - 1.0).abs() < 1e-12);
    }

    fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-2.0f64..2.0, rows * cols)
            .prop_map(move |d| Matrix::from_row_major(rows, cols, d).unwrap())
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    proptest! {
        #[test]
        fn multiply_is_associative(
            a in matrix_strategy(3, 4),
            b in matrix_strategy(4, 2),
            c in matrix_strategy(2, 3),
        ) {
            let left = a.multiply(&b).unwrap().multiply(&c).unwrap();
            let right = a.multiply(&b.multiply(&c).unwrap()).unwrap();
            if left.frobenius_norm() > 1e-6 {
                prop_assert!(rel_err(&left, &right) <= 1e-12);
            }
        }

        #[test]
        fn trace_is_cyclic(a in matrix_strategy(3, 5), b in matrix_strategy(5, 3)) {
            let ab = a.multiply(&b).unwrap().trace().unwrap();
            let ba = b.multiply(&a).unwrap().trace().unwrap();
            let scale = a.frobenius_norm() * b.frobenius_norm();
            prop_assert!((ab - ba).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn cholesky_reconstructs_gram(g in matrix_strategy(4, 4)) {
            let p = g.multiply(&g.transpose()).unwrap();
            let l = cholesky(&p).unwrap();
            let rec = l.multiply(&l.transpose()).unwrap();
            prop_assert!(rec.sub(&p).unwrap().frobenius_norm() <= 1e-10 * p.frobenius_norm().max(1e-300));
        }

        #[test]
        fn symmetrize_is_idempotent(g in matrix_strategy(3, 3), skew in matrix_strategy(3, 3)) {
            let p = g.multiply(&g.transpose()).unwrap()
                .add(&skew.scale(1e-9)).unwrap()
                .add(&Matrix::identity(3)).unwrap();
            let once = p.symmetrize().unwrap();
            let twice = once.as_matrix().symmetrize().unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}

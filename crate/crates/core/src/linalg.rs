//! Small dense linear algebra.
//!
//! Matrices here are confusion matrices (Q×Q with Q in the tens), the
//! `Γ^p` accumulators (Q×d) and weight matrices (d×Q). Storage is
//! row-major `f64`, no sparse formats.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Pivot magnitude below which a matrix is declared singular.
pub const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    /// Builds a vector, rejecting empty or non-finite input.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidShape("vector must have positive dimension".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { data: vec![0.0; dim] }
    }

    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(dot(&self.data, &self.data))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Serialized as a list of rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>"))]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a `rows × cols` matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(format!("{rows}x{cols} has an empty side")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, found: bad.as_ref().len() });
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<DenseVector> {
        check_dim(self.cols, v.len())?;
        let out = (0..self.rows).map(|r| dot(self.row(r), v)).collect();
        Ok(DenseVector::from_vec_unchecked(out))
    }

    /// Largest absolute entrywise difference; `+Inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| f64::max(acc, libm::fabs(a - b)))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Self::new(data)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.data
    }
}

impl TryFrom<Vec<Vec<f64>>> for DenseMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<DenseMatrix> for Vec<Vec<f64>> {
    fn from(m: DenseMatrix) -> Self {
        m.data.chunks(m.cols).map(|r| r.to_vec()).collect()
    }
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(m: &DenseMatrix) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.rows, found: m.cols });
    }
    let n = m.rows;
    let mut a = m.clone();
    let mut inv = DenseMatrix::identity(n);

    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[(r, col)]))
            .fold((col, 0.0_f64), |best, (r, v)| {
                if libm::fabs(v) > libm::fabs(best.1) {
                    (r, v)
                } else {
                    best
                }
            });
        if libm::fabs(pivot) < PIVOT_EPS {
            return Err(Error::SingularMatrix { column: col, pivot: libm::fabs(pivot) });
        }
        if pivot_row != col {
            swap_rows(&mut a, col, pivot_row);
            swap_rows(&mut inv, col, pivot_row);
        }

        let scale = 1.0 / pivot;
        a.row_mut(col).iter_mut().for_each(|v| *v *= scale);
        inv.row_mut(col).iter_mut().for_each(|v| *v *= scale);

        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for c in 0..n {
                let a_pc = a[(col, c)];
                a[(r, c)] -= factor * a_pc;
                let i_pc = inv[(col, c)];
                inv[(r, c)] -= factor * i_pc;
            }
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut DenseMatrix, a: usize, b: usize) {
    let cols = m.cols;
    for c in 0..cols {
        m.data.swap(a * cols + c, b * cols + c);
    }
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim(a.cols, b.rows)?;
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let a_ik = a[(i, k)];
            if a_ik == 0.0 {
                continue;
            }
            let b_row = b.row(k);
            for (o, b_kj) in out.row_mut(i).iter_mut().zip(b_row) {
                *o += a_ik * b_kj;
            }
        }
    }
    Ok(out)
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    libm::sqrt(m.data.iter().map(|v| v * v).sum())
}

/// `‖M‖_F · ‖M⁻¹‖_F`, or `+Inf` when `M` is not invertible.
pub fn condition_estimate(m: &DenseMatrix) -> f64 {
    match invert(m) {
        Ok(inv) => frobenius_norm(m) * frobenius_norm(&inv),
        Err(_) => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn invert_identity() {
        assert_eq!(invert(&DenseMatrix::identity(3)).unwrap(), DenseMatrix::identity(3));
    }

    #[test]
    fn invert_two_by_two_against_adjugate() {
        let inv = invert(&m(&[&[0.9, 0.2], &[0.1, 0.8]])).unwrap();
        let expected = m(&[&[8.0 / 7.0, -2.0 / 7.0], &[-1.0 / 7.0, 9.0 / 7.0]]);
        assert!(inv.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn invert_rank_deficient() {
        let err = invert(&m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::SingularMatrix { column: 1, .. }));
    }

    #[test]
    fn invert_needs_pivoting() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(invert(&a).unwrap(), a);
    }

    #[test]
    fn invert_rejects_non_square() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(invert(&a), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matmul_cases() {
        let b = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&DenseMatrix::identity(2), &b).unwrap(), b);
        let p = matmul(&m(&[&[1.0, 0.0], &[0.0, 0.0]]), &m(&[&[5.0, 6.0], &[7.0, 8.0]])).unwrap();
        assert_eq!(p, m(&[&[5.0, 6.0], &[0.0, 0.0]]));
        let err = matmul(&DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 2)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(frobenius_norm(&DenseMatrix::zeros(2, 2)), 0.0);
        assert!((frobenius_norm(&DenseMatrix::identity(3)) - libm::sqrt(3.0)).abs() < 1e-15);
        assert_eq!(frobenius_norm(&m(&[&[3.0, 4.0], &[0.0, 0.0]])), 5.0);
    }

    #[test]
    fn condition_cases() {
        assert!((condition_estimate(&DenseMatrix::identity(2)) - 2.0).abs() < 1e-12);
        assert_eq!(condition_estimate(&m(&[&[1.0, 1.0], &[1.0, 1.0]])), f64::INFINITY);
        assert!(condition_estimate(&DenseMatrix::diag(&[1.0, 1e-6])) >= 1e6);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(DenseMatrix::new(2, 2, vec![0.0; 3]), Err(Error::InvalidShape(_))));
        assert!(matches!(DenseMatrix::new(1, 2, vec![0.0, f64::NAN]), Err(Error::NonFinite(1))));
        assert!(DenseMatrix::new(0, 2, vec![]).is_err());
        assert!(matches!(DenseVector::new(vec![f64::INFINITY]), Err(Error::NonFinite(0))));
    }

    fn well_conditioned(n: usize) -> impl Strategy<Value = DenseMatrix> {
        proptest::collection::vec(-1.0..1.0f64, n * n).prop_map(move |mut v| {
            // diagonal dominance keeps the condition number small
            for i in 0..n {
                v[i * n + i] += n as f64 + 1.0;
            }
            DenseMatrix::new(n, n, v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn double_inverse_recovers(a in (1usize..=20).prop_flat_map(well_conditioned)) {
            let back = invert(&invert(&a).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&a) <= 1e-8);
            let prod = matmul(&a, &invert(&a).unwrap()).unwrap();
            prop_assert!(prod.max_abs_diff(&DenseMatrix::identity(a.rows())) <= 1e-9);
        }

        #[test]
        fn matmul_associative(
            a in proptest::collection::vec(-2.0..2.0f64, 12),
            b in proptest::collection::vec(-2.0..2.0f64, 12),
            c in proptest::collection::vec(-2.0..2.0f64, 6),
        ) {
            let a = DenseMatrix::new(3, 4, a).unwrap();
            let b = DenseMatrix::new(4, 3, b).unwrap();
            let c = DenseMatrix::new(3, 2, c).unwrap();
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) <= 1e-10);
        }

        #[test]
        fn frobenius_nonnegative(v in proptest::collection::vec(-5.0..5.0f64, 6)) {
            let all_zero = v.iter().all(|x| *x == 0.0);
            let f = frobenius_norm(&DenseMatrix::new(2, 3, v).unwrap());
            prop_assert!(f >= 0.0);
            prop_assert_eq!(f == 0.0, all_zero);
        }
    }
}

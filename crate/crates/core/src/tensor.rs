//! Dense row-major matrices and vectors of `f64`.
//!
//! No views or strides: every operation returns a fresh owned value.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// A real vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    /// The `i`-th standard basis vector of length `len`.
    pub fn basis(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[i] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_len(self.len(), other.len(), "dot")?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm2(&self) -> f64 {
        norm2(self)
    }

    pub fn norm_squared(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_len(self.len(), other.len(), "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        check_len(self.len(), other.len(), "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, s: f64) -> Vector {
        self.map(|a| a * s)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Vector) -> Result<()> {
        check_len(self.len(), other.len(), "axpy")?;
        axpy(&mut self.data, s, &other.data);
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector::new(self.data.iter().map(|&a| f(a)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector::new(data)
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Vector::new(data.to_vec())
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// A row-major real matrix.
///
/// `cols` is always at least 1. `rows` may be 0 only for an empty sample
/// table (e.g. an IDX file whose header count is 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::Shape("matrix needs at least one column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(cols > 0, "matrix needs at least one column");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Shape("no rows given".into()));
        };
        let cols = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vector]) -> Result<Self> {
        let t = Matrix::from_rows(
            &columns
                .iter()
                .map(|c| c.as_slice().to_vec())
                .collect::<Vec<_>>(),
        )?;
        Ok(t.transpose())
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vector(&self, i: usize) -> Vector {
        Vector::from(self.row(i))
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::new((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn set_column(&mut self, j: usize, v: &[f64]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    /// Copies the listed rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        transpose(self)
    }

    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        matmul(self, b)
    }

    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        matvec(self, x)
    }

    /// `self · bᵀ`.
    pub fn matmul_nt(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.cols {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by the transpose of {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        matmul(self, &b.transpose())
    }

    /// `selfᵀ · b`.
    pub fn matmul_tn(&self, b: &Matrix) -> Result<Matrix> {
        if self.rows != b.rows {
            return Err(Error::Shape(format!(
                "cannot multiply the transpose of {}x{} by {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = b.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a != 0.0 {
                    axpy(out.row_mut(i), a, b_row);
                }
            }
        }
        Ok(out)
    }

    /// `xᵀ · self`, i.e. `selfᵀ x`.
    pub fn tr_matvec(&self, x: &Vector) -> Result<Vector> {
        check_len(self.rows, x.len(), "transposed matvec")?;
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(&mut out, xi, self.row(i));
            }
        }
        Ok(Vector::new(out))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    // i-k-j order: the inner loop is a contiguous axpy over a row of `b`.
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik != 0.0 {
                axpy(out_row, aik, b.row(k));
            }
        }
    }
    Ok(out)
}

pub fn matvec(a: &Matrix, x: &Vector) -> Result<Vector> {
    check_len(a.cols, x.len(), "matvec")?;
    Ok(Vector::new(
        (0..a.rows).map(|i| dot(a.row(i), x.as_slice())).collect(),
    ))
}

pub fn transpose(a: &Matrix) -> Matrix {
    let mut data = vec![0.0; a.data.len()];
    for i in 0..a.rows {
        for j in 0..a.cols {
            data[j * a.rows + i] = a.data[i * a.cols + j];
        }
    }
    Matrix {
        rows: a.cols,
        cols: a.rows,
        data,
    }
}

/// Euclidean norm.
pub fn norm2(x: &Vector) -> f64 {
    // Scaled accumulation so huge or tiny entries neither overflow nor underflow.
    let scale = x.max_abs();
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = x.iter().map(|a| (a / scale) * (a / scale)).sum();
    scale * s.sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the loop pipeline.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

fn check_len(expected: usize, found: usize, what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::Shape(format!(
            "{what}: expected length {expected}, found {found}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]);
        assert_eq!(matmul(&Matrix::identity(3), &a).unwrap(), a);
        let b = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(
            matmul(&Matrix::zeros(2, 2), &b).unwrap(),
            Matrix::zeros(2, 2)
        );
        let c = matmul(&b, &m(&[&[1.0], &[1.0]])).unwrap();
        assert_eq!(c, m(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn matmul_shape_error() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
        assert!(matches!(
            matvec(&a, &Vector::zeros(2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn matvec_examples() {
        let x = Vector::new(vec![1.5, -2.0]);
        assert_eq!(matvec(&Matrix::identity(2), &x).unwrap(), x);
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matvec(&a, &Vector::zeros(2)).unwrap(), Vector::zeros(2));
        let y = matvec(&m(&[&[1.0, 0.0, 1.0]]), &Vector::new(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.as_slice(), &[4.0]);
    }

    #[test]
    fn transpose_examples() {
        let s = m(&[&[1.0, 2.0], &[2.0, 5.0]]);
        assert_eq!(transpose(&s), s);
        let row = m(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(transpose(&row).shape(), (3, 1));
        assert_eq!(
            transpose(&m(&[&[1.0, 2.0], &[3.0, 4.0]])),
            m(&[&[1.0, 3.0], &[2.0, 4.0]])
        );
    }

    #[test]
    fn norm2_examples() {
        assert_eq!(norm2(&Vector::zeros(3)), 0.0);
        assert_eq!(norm2(&Vector::basis(4, 2)), 1.0);
        assert_eq!(norm2(&Vector::new(vec![3.0, 4.0])), 5.0);
        assert!((norm2(&Vector::new(vec![3e200, 4e200])) - 5e200).abs() <= 1e-15 * 5e200);
    }

    #[test]
    fn nt_and_tn_products_match_explicit_transposes() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.0);
        let b = Matrix::from_fn(2, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        assert_eq!(
            a.matmul_nt(&b).unwrap(),
            matmul(&a, &b.transpose()).unwrap()
        );
        let c = Matrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        assert_eq!(
            a.matmul_tn(&c).unwrap(),
            matmul(&a.transpose(), &c).unwrap()
        );
        let x = Vector::new(vec![1.0, -1.0, 2.0]);
        assert_eq!(
            a.tr_matvec(&x).unwrap(),
            matvec(&a.transpose(), &x).unwrap()
        );
    }

    #[test]
    fn empty_sample_table_allowed_but_zero_columns_rejected() {
        assert_eq!(Matrix::new(0, 784, vec![]).unwrap().rows(), 0);
        assert!(Matrix::new(1, 0, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
    }

    fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-10.0..10.0f64, rows * cols)
            .prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(
            (a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(p, q, r, s)| {
                (matrix_strategy(p, q), matrix_strategy(q, r), matrix_strategy(r, s))
            })
        ) {
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = a.frobenius_norm() * b.frobenius_norm() * c.frobenius_norm();
            prop_assert!(left.sub(&right).unwrap().frobenius_norm() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn product_norm_is_bounded_by_frobenius(
            (a, x) in (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
                (matrix_strategy(r, c), prop::collection::vec(-10.0..10.0f64, c))
            })
        ) {
            let x = Vector::new(x);
            let y = matvec(&a, &x).unwrap();
            prop_assert!(norm2(&y) <= a.frobenius_norm() * norm2(&x) * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn double_transpose_is_bit_identical(a in (1usize..9, 1usize..9).prop_flat_map(|(r, c)| matrix_strategy(r, c))) {
            let back = transpose(&transpose(&a));
            prop_assert_eq!(back.shape(), a.shape());
            prop_assert!(back.as_slice().iter().zip(a.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

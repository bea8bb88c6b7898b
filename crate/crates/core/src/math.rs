//! Dense vectors and matrices in 64-bit floats.
//!
//! Every reduction sums left to right over the inner index. Two engines that
//! evaluate the same formula over the same operand sequence therefore produce
//! bitwise-equal results, which the equivalence checks rely on.

use std::ops::{Index, IndexMut};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector {
            data: vec![value; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    /// Standard basis vector `e_index` of length `len`.
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = Vector::zeros(len);
        v.data[index] = 1.0;
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

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector {
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Vector, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Vector> {
        check_len(op, self.len(), other.len())?;
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Vector {
        self.map(|x| x * factor)
    }

    /// `self += other` in place.
    pub fn add_assign(&mut self, other: &Vector) -> Result<()> {
        check_len("add_assign", self.len(), other.len())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += factor * other` in place.
    pub fn axpy(&mut self, factor: f64, other: &Vector) -> Result<()> {
        check_len("axpy", self.len(), other.len())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_len("dot", self.len(), other.len())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc + a * b))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc + x)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &x) in self.data.iter().enumerate() {
            match best {
                Some((_, b)) if x <= b => {}
                _ => best = Some((i, x)),
            }
        }
        best.map(|(i, _)| i)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
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

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("from_row_major", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_len("from_rows", cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::from_vec((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same_shape("add_assign", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn axpy(&mut self, factor: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape("axpy", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_same_shape(&self, op: &'static str, other: &Matrix) -> Result<()> {
        check_len(op, self.rows, other.rows)?;
        check_len(op, self.cols, other.cols)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

fn check_len(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dims(op, expected, got))
    }
}

/// `out[i] = Σ_j m[i,j]·v[j]`, summed left to right over `j`.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    check_len("matvec", m.cols, v.len())?;
    let out = (0..m.rows)
        .map(|i| {
            m.row(i)
                .iter()
                .zip(v.iter())
                .fold(0.0, |acc, (a, b)| acc + a * b)
        })
        .collect();
    Ok(Vector::from_vec(out))
}

/// `out[j] = Σ_i m[i,j]·v[i]`, summed left to right over `i`.
pub fn matvec_transposed(m: &Matrix, v: &Vector) -> Result<Vector> {
    check_len("matvec_transposed", m.rows, v.len())?;
    let mut out = vec![0.0; m.cols];
    for (i, &vi) in v.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(m.row(i)) {
            *o += a * vi;
        }
    }
    Ok(Vector::from_vec(out))
}

/// `out[i,j] = u[i]·v[j]`.
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    let mut data = Vec::with_capacity(u.len() * v.len());
    for &a in u.iter() {
        data.extend(v.iter().map(|&b| a * b));
    }
    Matrix {
        rows: u.len(),
        cols: v.len(),
        data,
    }
}

/// `Σ_{τ=0}^{t} λ^{t−τ}` by direct summation, smallest power first.
pub fn geometric_weight_sum(lambda: f64, t: usize) -> f64 {
    (0..=t).fold(0.0, |acc, tau| acc + lambda.powi((t - tau) as i32))
}

/// Seeded random stream. Identical seeds give identical streams.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.random_range(lo..hi)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }

    /// Uniform integer on `lo..=hi`.
    pub fn int_range(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    pub fn uniform_vector(&mut self, len: usize, lo: f64, hi: f64) -> Vector {
        Vector::from_vec((0..len).map(|_| self.uniform(lo, hi)).collect())
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| self.uniform(lo, hi)).collect(),
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Rng;

    #[test]
    fn matvec_identity_and_zero() {
        let v = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(matvec(&Matrix::identity(2), &v).unwrap(), v);
        let z = matvec(&Matrix::zeros(3, 2), &v).unwrap();
        assert_eq!(z, Vector::zeros(3));
    }

    #[test]
    fn matvec_hand_values() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = matvec(&m, &Vector::filled(2, 1.0)).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_mismatch() {
        let m = Matrix::zeros(2, 3);
        let err = matvec(&m, &Vector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 2, .. }));
    }

    #[test]
    fn outer_products() {
        let m = outer(&Vector::from_vec(vec![1.0, 0.0]), &Vector::from_vec(vec![2.0, 3.0]));
        assert_eq!(m, Matrix::from_rows(&[vec![2.0, 3.0], vec![0.0, 0.0]]).unwrap());
        let z = outer(&Vector::zeros(3), &Vector::from_vec(vec![1.0, 5.0]));
        assert_eq!(z, Matrix::zeros(3, 2));
        let one = outer(&Vector::filled(1, 1.0), &Vector::filled(1, 1.0));
        assert_eq!(one.as_slice(), &[1.0]);
    }

    #[test]
    fn geometric_sums() {
        assert_eq!(geometric_weight_sum(1.0, 5), 6.0);
        assert_eq!(geometric_weight_sum(0.5, 2), 1.75);
        assert_eq!(geometric_weight_sum(0.5, 0), 1.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(Vector::from_vec(vec![1.0, 3.0, 3.0]).argmax(), Some(1));
        assert_eq!(Vector::zeros(4).argmax(), Some(0));
        assert_eq!(Vector::zeros(0).argmax(), None);
    }

    #[test]
    fn rng_reproducible() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        let ma = a.uniform_matrix(4, 5, -1.0, 1.0);
        let mb = b.uniform_matrix(4, 5, -1.0, 1.0);
        assert_eq!(ma, mb);
        assert_ne!(Rng::new(43).uniform_matrix(4, 5, -1.0, 1.0), ma);
    }

    #[test]
    fn transposed_matches_explicit_transpose() {
        let mut rng = Rng::new(5);
        let m = rng.uniform_matrix(3, 4, -1.0, 1.0);
        let v = rng.uniform_vector(3, -1.0, 1.0);
        let mut t = Matrix::zeros(4, 3);
        for i in 0..3 {
            for j in 0..4 {
                t[(j, i)] = m[(i, j)];
            }
        }
        let a = matvec_transposed(&m, &v).unwrap();
        let b = matvec(&t, &v).unwrap();
        for j in 0..4 {
            assert!((a[j] - b[j]).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn matvec_basis_picks_column(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8) {
            let mut rng = Rng::new(seed);
            let m = rng.uniform_matrix(rows, cols, -2.0, 2.0);
            for j in 0..cols {
                let out = matvec(&m, &Vector::basis(cols, j)).unwrap();
                prop_assert_eq!(out, m.column(j));
            }
        }

        #[test]
        fn matvec_deterministic(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let m = rng.uniform_matrix(6, 9, -1.0, 1.0);
            let v = rng.uniform_vector(9, -1.0, 1.0);
            let a = matvec(&m, &v).unwrap();
            let b = matvec(&m, &v).unwrap();
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

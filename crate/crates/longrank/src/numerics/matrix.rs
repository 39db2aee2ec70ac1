//! Dense row-major matrix.

use rand::Rng;

use super::counter;
use super::real::Real;
use crate::error::{Error, Result};

/// Dense row-major matrix of `rows * cols` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        counter::add_alloc_entries((rows * cols) as u64);
        Matrix {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "from_vec",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        counter::add_alloc_entries(data.len() as u64);
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension {
                    op: "from_rows",
                    lhs: (r, c),
                    rhs: (1, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    /// Single-row matrix wrapping a vector.
    pub fn row_vector(data: Vec<T>) -> Self {
        counter::add_alloc_entries(data.len() as u64);
        Matrix {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::ONE;
        }
        m
    }

    /// Uniform(-a, a) initialization.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, a: f64, rng: &mut R) -> Self {
        counter::add_alloc_entries((rows * cols) as u64);
        let data = (0..rows * cols)
            .map(|_| T::from_f64(rng.random_range(-a..a)))
            .collect();
        Matrix { rows, cols, data }
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Standard product `self * other`.
    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let arow = self.row(i);
            let crow = out.row_mut(i);
            for (kk, &aik) in arow.iter().enumerate() {
                let brow = &other.data[kk * n..(kk + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c += aik * b;
                }
            }
        }
        counter::add_macs((m * n * k) as u64);
        Ok(out)
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_transpose_b(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.cols {
            return Err(Error::Dimension {
                op: "matmul_transpose_b",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let arow = self.row(i);
            let crow = out.row_mut(i);
            for j in 0..n {
                let brow = other.row(j);
                let mut acc = T::ZERO;
                for (&a, &b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                crow[j] = acc;
            }
        }
        counter::add_macs((m * n * k) as u64);
        Ok(out)
    }

    /// `self^T * other` without materializing the transpose.
    pub fn matmul_transpose_a(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.rows != other.rows {
            return Err(Error::Dimension {
                op: "matmul_transpose_a",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(m, n);
        for r in 0..k {
            let arow = self.row(r);
            let brow = other.row(r);
            for (i, &a) in arow.iter().enumerate() {
                let crow = &mut out.data[i * n..(i + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c += a * b;
                }
            }
        }
        counter::add_macs((m * n * k) as u64);
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self += other * s`.
    pub fn add_scaled(&mut self, other: &Matrix<T>, s: T) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op: "add_scaled",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
        counter::add_flops(self.data.len() as u64 * 2);
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op: "add_assign",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        counter::add_flops(self.data.len() as u64);
        Ok(())
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op: "hadamard",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = self.clone();
        for (a, &b) in out.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
        counter::add_flops(self.data.len() as u64);
        Ok(out)
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
        counter::add_flops(self.data.len() as u64);
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|a| *a = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry difference, in f64.
    pub fn max_abs_diff(&self, other: &Matrix<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.to_f64() * v.to_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Lossy dtype conversion.
    pub fn cast<U: Real>(&self) -> Matrix<U> {
        counter::add_alloc_entries(self.data.len() as u64);
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let i2: Matrix<f64> = Matrix::identity(2);
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = i2.matmul(&a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_hand_case() {
        let a: Matrix<f64> = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let out = a.matmul(&b).unwrap();
        assert_eq!(out.shape(), (1, 1));
        assert_eq!(out.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_shape_error_carries_both_shapes() {
        let a: Matrix<f64> = Matrix::zeros(2, 3);
        let b: Matrix<f64> = Matrix::zeros(4, 5);
        match a.matmul(&b) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, (2, 3));
                assert_eq!(rhs, (4, 5));
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        use rand::SeedableRng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let a: Matrix<f64> = Matrix::uniform(5, 7, 1.0, &mut rng);
        let b: Matrix<f64> = Matrix::uniform(7, 3, 1.0, &mut rng);
        let fast = a.matmul(&b).unwrap();
        // Independent element-wise triple loop.
        let mut slow = Matrix::zeros(5, 3);
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..7 {
                    acc += a.get(i, k) * b.get(k, j);
                }
                slow.set(i, j, acc);
            }
        }
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn transpose_variants_agree() {
        use rand::SeedableRng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let a: Matrix<f64> = Matrix::uniform(4, 6, 1.0, &mut rng);
        let b: Matrix<f64> = Matrix::uniform(5, 6, 1.0, &mut rng);
        let direct = a.matmul(&b.transpose()).unwrap();
        let fused = a.matmul_transpose_b(&b).unwrap();
        assert!(direct.max_abs_diff(&fused) < 1e-12);

        let c: Matrix<f64> = Matrix::uniform(4, 5, 1.0, &mut rng);
        let direct = a.transpose().matmul(&c).unwrap();
        let fused = a.matmul_transpose_a(&c).unwrap();
        assert!(direct.max_abs_diff(&fused) < 1e-12);
    }

    #[test]
    fn matmul_counts_macs() {
        counter::reset();
        let a: Matrix<f64> = Matrix::zeros(5, 7);
        let b: Matrix<f64> = Matrix::zeros(7, 3);
        let _ = a.matmul(&b).unwrap();
        assert_eq!(counter::flops(), 2 * 5 * 7 * 3);
    }
}

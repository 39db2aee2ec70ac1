//! Named parameter with an explicit gradient accumulation sink.

use super::matrix::Matrix;
use super::real::Real;
use crate::error::Result;

/// A learnable tensor paired with its gradient buffer of identical shape.
#[derive(Debug, Clone)]
pub struct ParamWithGrad<T: Real> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
}

impl<T: Real> ParamWithGrad<T> {
    pub fn new(name: impl Into<String>, value: Matrix<T>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        ParamWithGrad {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::ZERO);
    }

    /// Additive accumulation; shapes must match.
    pub fn accumulate(&mut self, contribution: &Matrix<T>) -> Result<()> {
        self.grad.add_assign(contribution)
    }

    pub fn accumulate_scaled(&mut self, contribution: &Matrix<T>, s: T) -> Result<()> {
        self.grad.add_scaled(contribution, s)
    }

    /// Embedding tables get a smaller learning rate than dense weights.
    pub fn is_embedding(&self) -> bool {
        self.name.starts_with("emb.")
    }
}

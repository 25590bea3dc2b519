use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, Parameters};

/// Affine layer `y = Wx + b` with no activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseParams {
            w: Matrix::zeros(out_dim, in_dim),
            b: vec![0.0; out_dim],
        }
    }

    /// `w` uniform in ±1/√in_dim, zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        DenseParams {
            w: Matrix::uniform(out_dim, in_dim, bound, rng),
            b: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.b.len(), self.w.rows(), "dense bias shape");
        let mut y = self.b.clone();
        self.w.matvec_acc(x, &mut y);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut DenseParams) -> Vec<f64> {
        grads.w.outer_acc(dy, x);
        crate::vecops::axpy(1.0, dy, &mut grads.b);
        let mut dx = vec![0.0; self.in_dim()];
        self.w.matvec_t_acc(dy, &mut dx);
        dx
    }
}

impl Parameters for DenseParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice(), &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), &mut self.b]
    }
}

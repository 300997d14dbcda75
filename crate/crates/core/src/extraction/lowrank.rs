use nalgebra::DMatrix;

use super::{ExtractionError, Result};

pub type Matrix = DMatrix<f64>;

/// Trainable low-rank factors of a weight update: `ΔW = A·B` with
/// `A: d_out × r` and `B: r × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankAdapter {
    a: Matrix,
    b: Matrix,
}

impl LowRankAdapter {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let r = a.ncols();
        if r == 0 {
            return Err(ExtractionError::Dimension("rank must be positive".into()));
        }
        if b.nrows() != r {
            return Err(ExtractionError::Dimension(format!(
                "A is {}x{} but B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if r > a.nrows().min(b.ncols()) {
            return Err(ExtractionError::Dimension(format!(
                "rank {r} exceeds min(d_out, d_in) = {}",
                a.nrows().min(b.ncols())
            )));
        }
        Ok(LowRankAdapter { a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    /// `d_out × d_in` shape of the update.
    pub fn shape(&self) -> (usize, usize) {
        (self.a.nrows(), self.b.ncols())
    }

    pub fn parameter_count(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn delta(&self) -> Matrix {
        &self.a * &self.b
    }

    /// `W + ΔW` for a base weight of matching shape.
    pub fn apply(&self, base: &Matrix) -> Result<Matrix> {
        if base.shape() != self.shape() {
            return Err(ExtractionError::Dimension(format!(
                "base weight is {:?}, adapter produces {:?}",
                base.shape(),
                self.shape()
            )));
        }
        Ok(base + self.delta())
    }
}

pub fn low_rank_delta(adapter: &LowRankAdapter) -> Matrix {
    adapter.delta()
}

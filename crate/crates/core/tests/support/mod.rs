//! Shared oracles for integration tests.

#![allow(dead_code)]

pub mod dd;

use dd::Dd;

/// Row-major matrix of double-doubles.
#[derive(Clone, Debug)]
pub struct DdMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Dd>,
}

impl DdMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DdMat { rows, cols, data: vec![Dd::ZERO; rows * cols] }
    }

    pub fn from_f64(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = DdMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = Dd::from(f(i, j));
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> Dd {
        self.data[i * self.cols + j]
    }

    fn set(&mut self, i: usize, j: usize, v: Dd) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, other: &DdMat) -> DdMat {
        assert_eq!(self.cols, other.rows);
        let mut out = DdMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Dd::ZERO;
                for k in 0..self.cols {
                    acc = acc + self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn transpose(&self) -> DdMat {
        let mut out = DdMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn add(&self, other: &DdMat) -> DdMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DdMat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect() }
    }

    pub fn scale(&self, s: Dd) -> DdMat {
        DdMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| *a * s).collect() }
    }

    /// Softmax of each row, written out directly as `exp(x) / Σ exp(x)`.
    pub fn softmax_rows(&self) -> DdMat {
        let mut out = self.clone();
        for i in 0..self.rows {
            let exps: Vec<Dd> = (0..self.cols).map(|j| self.get(i, j).exp()).collect();
            let total = exps.iter().fold(Dd::ZERO, |a, b| a + *b);
            for (j, e) in exps.into_iter().enumerate() {
                out.set(i, j, e / total);
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> DdMat {
        DdMat { rows: 1, cols: self.cols, data: self.data[i * self.cols..(i + 1) * self.cols].to_vec() }
    }
}

pub struct DdHead {
    pub w_q: DdMat,
    pub w_k: DdMat,
    pub w_v: DdMat,
}

/// `softmax(Q Kᵀ / √d_k) V`
pub fn dd_attention(q: &DdMat, k: &DdMat, v: &DdMat) -> DdMat {
    let scale = Dd::ONE / Dd::from(q.cols as f64).sqrt();
    q.mul(&k.transpose()).scale(scale).softmax_rows().mul(v)
}

/// `Σ_h Attention(X W_Q, X W_K, X W_V) + P`
pub fn dd_encode(x: &DdMat, heads: &[DdHead], positional: &DdMat) -> DdMat {
    heads.iter().fold(positional.clone(), |acc, h| {
        acc.add(&dd_attention(&x.mul(&h.w_q), &x.mul(&h.w_k), &x.mul(&h.w_v)))
    })
}

/// Next-token distribution from the last row of the summed
/// cross-attention, projected to the vocabulary.
pub fn dd_decode_step(z: &DdMat, prefix: &DdMat, heads: &[DdHead], vocab: &DdMat) -> Vec<Dd> {
    let mut summed = DdMat::zeros(prefix.rows, heads[0].w_v.cols);
    for h in heads {
        summed = summed.add(&dd_attention(&prefix.mul(&h.w_q), &z.mul(&h.w_k), &z.mul(&h.w_v)));
    }
    summed.row(prefix.rows - 1).mul(vocab).softmax_rows().data
}

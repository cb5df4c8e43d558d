//! Precomputed linear kernels and a one-vs-rest kernel ridge classifier.

use nalgebra::{DMatrix, DVector};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major `rows x cols` matrix of inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

const ROW_BLOCK: usize = 16;

impl KernelMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} kernel needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// `K[i][j] = <a_i, b_j>`, accumulated in `f64` in a fixed order.
pub fn gram<A, B>(a: &[A], b: &[B]) -> Result<KernelMatrix>
where
    A: AsRef<[f32]> + Sync,
    B: AsRef<[f32]> + Sync,
{
    let mut dims = a.iter().map(|v| v.as_ref().len()).chain(b.iter().map(|v| v.as_ref().len()));
    if let Some(d) = dims.next() {
        if let Some(bad) = dims.find(|&l| l != d) {
            return Err(Error::Shape(format!(
                "descriptor dimensions differ: {d} vs {bad}"
            )));
        }
    }
    let cols = b.len();
    let mut data = vec![0.0f64; a.len() * cols];
    let fill = |(blk, out): (usize, &mut [f64])| {
        for (r, row) in out.chunks_mut(cols.max(1)).enumerate() {
            let x = a[blk * ROW_BLOCK + r].as_ref();
            for (o, y) in row.iter_mut().zip(b) {
                *o = x.iter().zip(y.as_ref()).map(|(&p, &q)| p as f64 * q as f64).sum();
            }
        }
    };
    if cols > 0 {
        #[cfg(feature = "parallel")]
        data.par_chunks_mut(ROW_BLOCK * cols).enumerate().for_each(fill);
        #[cfg(not(feature = "parallel"))]
        data.chunks_mut(ROW_BLOCK * cols).enumerate().for_each(fill);
    }
    KernelMatrix::from_vec(a.len(), cols, data)
}

/// One-vs-rest kernel ridge regression on a precomputed training kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidge {
    num_classes: usize,
    // train x classes, column c holds the dual weights for class c
    alpha: DMatrix<f64>,
}

impl KernelRidge {
    /// Solves `(K + lambda I) alpha = Y` with `Y[i][c] = +1` if `labels[i] == c`, else `-1`.
    pub fn train(kernel: &KernelMatrix, labels: &[usize], lambda: f64) -> Result<Self> {
        let n = kernel.rows();
        if kernel.cols() != n {
            return Err(Error::Shape(format!(
                "training kernel must be square, got {n}x{}",
                kernel.cols()
            )));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} training items", labels.len())));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Argument(format!("ridge lambda must be positive, got {lambda}")));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let distinct = {
            let mut l = labels.to_vec();
            l.sort_unstable();
            l.dedup();
            l.len()
        };
        if distinct < 2 {
            return Err(Error::Argument("labels must cover at least two classes".into()));
        }
        let mut system = kernel.to_dmatrix();
        for i in 0..n {
            system[(i, i)] += lambda;
        }
        let targets = DMatrix::from_fn(n, num_classes, |i, c| if labels[i] == c { 1.0 } else { -1.0 });
        let alpha = match system.clone().cholesky() {
            Some(ch) => ch.solve(&targets),
            None => system
                .lu()
                .solve(&targets)
                .ok_or_else(|| Error::Argument("kernel system is singular".into()))?,
        };
        Ok(Self { num_classes, alpha })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Decision values for each test row of `test_train` (`test x train`).
    pub fn decision_values(&self, test_train: &KernelMatrix) -> Result<Vec<Vec<f64>>> {
        if test_train.cols() != self.alpha.nrows() {
            return Err(Error::Shape(format!(
                "test kernel has {} columns, model was trained on {} items",
                test_train.cols(),
                self.alpha.nrows()
            )));
        }
        Ok((0..test_train.rows())
            .map(|i| {
                let row = DVector::from_row_slice(test_train.row(i));
                (0..self.num_classes)
                    .map(|c| row.dot(&self.alpha.column(c)))
                    .collect()
            })
            .collect())
    }

    /// Class with the largest decision value, lowest index on ties.
    pub fn predict(&self, test_train: &KernelMatrix) -> Result<Vec<usize>> {
        Ok(self
            .decision_values(test_train)?
            .into_iter()
            .map(|scores| {
                scores
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &s)| if s > best.1 { (c, s) } else { best })
                    .0
            })
            .collect())
    }
}

/// Fraction of positions where `predicted == truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

//! Dense row-major feature matrix shared by the model fitters.

use crate::error::{Error, Result};

/// Row-major `n_rows x n_cols` matrix of `f64`; `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_cols: usize) -> Result<Self> {
        if n_cols == 0 {
            if !data.is_empty() {
                return Err(Error::InvalidInput("zero-width matrix with data".into()));
            }
        } else if data.len() % n_cols != 0 {
            return Err(Error::InvalidInput(format!(
                "buffer of {} values is not a multiple of width {n_cols}",
                data.len()
            )));
        }
        Ok(Self { data, n_cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::WidthMismatch {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.data.len() / self.n_cols
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            data,
            n_cols: self.n_cols,
        }
    }

    /// Copy with column `j` set to `v` in every row.
    pub fn with_column_value(&self, j: usize, v: f64) -> Matrix {
        let mut m = self.clone();
        for i in 0..m.n_rows() {
            m.set(i, j, v);
        }
        m
    }

    pub fn map_column(&mut self, j: usize, f: impl Fn(f64) -> f64) {
        for i in 0..self.n_rows() {
            let v = self.get(i, j);
            self.set(i, j, f(v));
        }
    }
}

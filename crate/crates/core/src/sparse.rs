//! Compressed sparse row storage for transition blocks.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from per-row `(column, value)` lists. Duplicate columns are
    /// summed and exact zeros dropped.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut builder = CsrBuilder::new(ncols);
        for row in rows {
            for (c, v) in row {
                builder.push(c, v);
            }
            builder.finish_row();
        }
        builder.build()
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        Self::from_rows(
            ncols,
            rows.iter()
                .map(|r| r.iter().copied().enumerate().collect())
                .collect(),
        )
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        let cols = &self.indices[span.clone()];
        match cols.binary_search(&(j as u32)) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `xᵀ A`
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (c, v) in self.row(i) {
                out[c] += xi * v;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] = v;
            }
        }
        out
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(c, v)| (i, c, v)))
    }
}

/// Row-at-a-time CSR assembly. Columns within a row may arrive in any order.
pub struct CsrBuilder {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    pending: Vec<(usize, f64)>,
}

impl CsrBuilder {
    pub fn new(ncols: usize) -> Self {
        assert!(ncols <= u32::MAX as usize, "column count exceeds u32 index range");
        Self {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            pending: Vec::new(),
        }
    }

    pub fn push(&mut self, col: usize, value: f64) {
        assert!(col < self.ncols, "column {col} out of range {}", self.ncols);
        self.pending.push((col, value));
    }

    pub fn finish_row(&mut self) {
        self.pending.sort_unstable_by_key(|&(c, _)| c);
        let mut iter = self.pending.drain(..).peekable();
        while let Some((c, mut v)) = iter.next() {
            while let Some(&(c2, v2)) = iter.peek() {
                if c2 != c {
                    break;
                }
                v += v2;
                iter.next();
            }
            if v != 0.0 {
                self.indices.push(c as u32);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn build(self) -> CsrMatrix {
        CsrMatrix {
            nrows: self.indptr.len() - 1,
            ncols: self.ncols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_merges_duplicates_and_sorts() {
        let m = CsrMatrix::from_rows(3, vec![vec![(2, 0.5), (0, 0.25), (2, 0.25)], vec![], vec![(1, 0.0)]]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 2), 0.75);
        assert_eq!(m.get(0, 0), 0.25);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.row_sums(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn products_match_dense() {
        let dense = vec![vec![1.0, 2.0], vec![0.0, 3.0], vec![4.0, 0.0]];
        let m = CsrMatrix::from_dense(&dense);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.0, 3.0, 4.0]);
        assert_eq!(m.vec_mul(&[1.0, 1.0, 1.0]), vec![5.0, 5.0]);
        assert_eq!(m.to_dense(), dense);
    }
}

//! Compressed sparse row matrices and the kernels the rest of the crate is
//! built on: row normalization, sparse x dense products and boolean
//! sparse x sparse composition.
//!
//! Matrices are always kept in canonical form: column indices strictly
//! increasing within each row, so no duplicate entries exist. A matrix
//! without a value array is a boolean (pattern) matrix whose stored entries
//! are all implicitly `1.0`.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows handled per parallel task in the row-blocked kernels.
const ROW_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Option<Vec<f64>>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, checking the canonical-form
    /// invariants.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Option<Vec<f64>>,
    ) -> Result<Self> {
        let m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        if let Some(problem) = m.check_canonical() {
            return Err(Error::InvalidInput(problem));
        }
        Ok(m)
    }

    /// Describes the first canonical-form violation, if any.
    pub fn check_canonical(&self) -> Option<String> {
        if self.row_offsets.len() != self.n_rows + 1 {
            return Some(format!(
                "row_offsets has length {}, expected {}",
                self.row_offsets.len(),
                self.n_rows + 1
            ));
        }
        if self.row_offsets[0] != 0 {
            return Some("row_offsets must start at 0".into());
        }
        if *self.row_offsets.last().unwrap() != self.col_indices.len() {
            return Some("last row offset must equal nnz".into());
        }
        if let Some(v) = &self.values {
            if v.len() != self.col_indices.len() {
                return Some("values length differs from nnz".into());
            }
        }
        for r in 0..self.n_rows {
            let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
            if lo > hi || hi > self.col_indices.len() {
                return Some(format!("row_offsets decreasing at row {r}"));
            }
            let row = &self.col_indices[lo..hi];
            for (k, &c) in row.iter().enumerate() {
                if c >= self.n_cols {
                    return Some(format!("row {r}: column {c} out of range {}", self.n_cols));
                }
                if k > 0 && row[k - 1] >= c {
                    return Some(format!("row {r}: columns not strictly increasing"));
                }
            }
        }
        None
    }

    /// Boolean matrix from an edge list. Duplicates collapse.
    pub fn from_edges<I>(n_rows: usize, n_cols: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_rows];
        for (r, c) in edges {
            if r >= n_rows || c >= n_cols {
                return Err(Error::DimensionMismatch {
                    op: "from_edges",
                    detail: format!("edge ({r}, {c}) outside {n_rows}x{n_cols}"),
                });
            }
            rows[r].push(c);
        }
        Ok(Self::from_row_lists(n_cols, rows))
    }

    /// Weighted matrix from triplets; duplicate coordinates are summed.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for (r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::DimensionMismatch {
                    op: "from_triplets",
                    detail: format!("entry ({r}, {c}) outside {n_rows}x{n_cols}"),
                });
            }
            rows[r].push((c, v));
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if col_indices.len() > *row_offsets.last().unwrap() && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values: Some(values),
        })
    }

    fn from_row_lists(n_cols: usize, rows: Vec<Vec<usize>>) -> Self {
        let n_rows = rows.len();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        row_offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            col_indices.extend_from_slice(&row);
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values: None,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: None,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    pub fn is_boolean(&self) -> bool {
        self.values.is_none()
    }

    /// Column indices of row `r`.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[r]..self.row_offsets[r + 1]]
    }

    pub fn row_values(&self, r: usize) -> Option<&[f64]> {
        self.values
            .as_ref()
            .map(|v| &v[self.row_offsets[r]..self.row_offsets[r + 1]])
    }

    pub fn degree(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r < self.n_rows && self.row(r).binary_search(&c).is_ok()
    }

    /// Stored value at `(r, c)`, `0.0` when absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self.row(r).binary_search(&c) {
            Ok(k) => self.row_values(r).map_or(1.0, |v| v[k]),
            Err(_) => 0.0,
        }
    }

    /// Iterates stored `(row, col)` coordinates in row-major order.
    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c)))
    }

    /// Drops the value array, keeping the sparsity pattern.
    pub fn to_boolean(&self) -> Self {
        Self {
            values: None,
            ..self.clone()
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = self.values.as_ref().map(|_| vec![0.0; self.nnz()]);
        for r in 0..self.n_rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k];
                let dst = next[c];
                next[c] += 1;
                col_indices[dst] = r;
                if let (Some(out), Some(src)) = (values.as_mut(), self.values.as_ref()) {
                    out[dst] = src[k];
                }
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Pattern union of two equally shaped matrices (boolean result).
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                op: "union",
                detail: format!(
                    "{}x{} vs {}x{}",
                    self.n_rows, self.n_cols, other.n_rows, other.n_cols
                ),
            });
        }
        let rows = (0..self.n_rows)
            .map(|r| merge_sorted(self.row(r), other.row(r)))
            .collect();
        Ok(Self::from_row_lists(self.n_cols, rows))
    }

    /// Pattern difference `self \ other` (boolean result).
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                op: "difference",
                detail: format!(
                    "{}x{} vs {}x{}",
                    self.n_rows, self.n_cols, other.n_rows, other.n_cols
                ),
            });
        }
        let rows = (0..self.n_rows)
            .map(|r| {
                let drop = other.row(r);
                self.row(r)
                    .iter()
                    .copied()
                    .filter(|c| drop.binary_search(c).is_err())
                    .collect()
            })
            .collect();
        Ok(Self::from_row_lists(self.n_cols, rows))
    }

    /// Removes diagonal entries, keeping values if present.
    pub fn without_diagonal(&self) -> Self {
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = self.values.as_ref().map(|_| Vec::with_capacity(self.nnz()));
        row_offsets.push(0);
        for r in 0..self.n_rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                if self.col_indices[k] != r {
                    col_indices.push(self.col_indices[k]);
                    if let (Some(out), Some(src)) = (values.as_mut(), self.values.as_ref()) {
                        out.push(src[k]);
                    }
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Pattern union with the transpose; requires a square matrix.
    pub fn symmetrized(&self) -> Result<Self> {
        if self.n_rows != self.n_cols {
            return Err(Error::DimensionMismatch {
                op: "symmetrized",
                detail: format!("matrix is {}x{}", self.n_rows, self.n_cols),
            });
        }
        self.union(&self.transpose())
    }

    /// True when the sparsity pattern equals its transpose.
    pub fn is_pattern_symmetric(&self) -> bool {
        self.n_rows == self.n_cols
            && self.iter_entries().all(|(r, c)| self.contains(c, r))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for r in 0..self.n_rows {
            let vals = self.row_values(r);
            for (k, &c) in self.row(r).iter().enumerate() {
                out[[r, c]] = vals.map_or(1.0, |v| v[k]);
            }
        }
        out
    }

    /// `D^{-1} A`: every non-empty row rescaled to sum to one. Empty rows stay
    /// empty, which is the zero-degree convention used throughout the crate.
    pub fn row_normalize(&self) -> Self {
        let mut values = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            match self.row_values(r) {
                Some(v) => {
                    let s: f64 = v.iter().sum();
                    if s > 0.0 {
                        values.extend(v.iter().map(|x| x / s));
                    } else {
                        values.extend(std::iter::repeat_n(0.0, v.len()));
                    }
                }
                None => {
                    let d = self.degree(r);
                    values.extend(std::iter::repeat_n(1.0 / d as f64, d));
                }
            }
        }
        Self {
            values: Some(values),
            ..self.clone()
        }
    }

    /// Sparse x dense product. Rows are processed in parallel; each output
    /// row is accumulated in stored column order, so results do not depend
    /// on the thread count.
    pub fn spmm(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n_cols {
            return Err(Error::DimensionMismatch {
                op: "spmm",
                detail: format!(
                    "sparse is {}x{}, dense has {} rows",
                    self.n_rows,
                    self.n_cols,
                    x.nrows()
                ),
            });
        }
        let d = x.ncols();
        let mut out = Array2::<f64>::zeros((self.n_rows, d));
        if d == 0 {
            return Ok(out);
        }
        let slice = out.as_slice_mut().expect("fresh array is contiguous");
        slice
            .par_chunks_mut(d * ROW_BLOCK)
            .enumerate()
            .for_each(|(block, chunk)| {
                for (local, out_row) in chunk.chunks_mut(d).enumerate() {
                    let r = block * ROW_BLOCK + local;
                    let vals = self.row_values(r);
                    for (k, &c) in self.row(r).iter().enumerate() {
                        let w = vals.map_or(1.0, |v| v[k]);
                        let src = x.row(c);
                        for (o, s) in out_row.iter_mut().zip(src.iter()) {
                            *o += w * s;
                        }
                    }
                }
            });
        Ok(out)
    }

    /// Boolean product: entry `(i, j)` is present iff some `k` has both
    /// `a[i, k]` and `b[k, j]`. Values, if any, are ignored.
    pub fn bool_spgemm(&self, b: &Self) -> Result<Self> {
        if self.n_cols != b.n_rows {
            return Err(Error::DimensionMismatch {
                op: "bool_spgemm",
                detail: format!(
                    "{}x{} times {}x{}",
                    self.n_rows, self.n_cols, b.n_rows, b.n_cols
                ),
            });
        }
        let n_cols = b.n_cols;
        let blocks: Vec<Vec<Vec<usize>>> = (0..self.n_rows.div_ceil(ROW_BLOCK))
            .into_par_iter()
            .map(|block| {
                let lo = block * ROW_BLOCK;
                let hi = (lo + ROW_BLOCK).min(self.n_rows);
                let mut marker = vec![usize::MAX; n_cols];
                (lo..hi)
                    .map(|r| {
                        let mut row = Vec::new();
                        for &k in self.row(r) {
                            for &c in b.row(k) {
                                if marker[c] != r {
                                    marker[c] = r;
                                    row.push(c);
                                }
                            }
                        }
                        row.sort_unstable();
                        row
                    })
                    .collect()
            })
            .collect();
        let rows = blocks.into_iter().flatten().collect();
        Ok(Self::from_row_lists(n_cols, rows))
    }
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

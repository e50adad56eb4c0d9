//! Compressed-row sparse matrices.

use std::io::Write;

use crate::error::{FdlmError, Result};

/// `(row, col, value)`
pub type Triplet = (usize, usize, f64);

/// Sparse matrix in compressed-row layout. Column indices are sorted within
/// each row and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix summing duplicate entries.
    ///
    /// Duplicates are summed in input order, so the result only depends on
    /// the order of `triplets`.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[Triplet]) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= n_rows || c >= n_cols) {
            return Err(FdlmError::invalid(format!(
                "entry ({r}, {c}) outside a {n_rows}x{n_cols} matrix"
            )));
        }
        // stable counting sort by row
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut by_row = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            by_row[next[r]] = (c, v);
            next[r] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for r in 0..n_rows {
            let row = &mut by_row[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                col_indices.push(c);
                values.push(s);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(FdlmError::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
                context: "matrix-vector product",
            });
        }
        Ok((0..self.n_rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect())
    }

    /// `yᵀ A x`
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        let ax = self.mul_vec(x)?;
        if y.len() != self.n_rows {
            return Err(FdlmError::DimensionMismatch {
                expected: self.n_rows,
                got: y.len(),
                context: "bilinear form",
            });
        }
        Ok(y.iter().zip(&ax).map(|(a, b)| a * b).sum())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let t: Vec<Triplet> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        SparseMatrix::from_triplets(self.n_cols, self.n_rows, &t).expect("indices in range")
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let t = self.transpose();
        diff_entries(self, &t).fold(0.0, |m, (_, _, d)| m.max(d.abs()))
    }

    /// Sum of each column's absolute values.
    pub fn column_abs_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_cols];
        for (&c, &v) in self.col_indices.iter().zip(&self.values) {
            s[c] += v.abs();
        }
        s
    }

    /// Matrix 1-norm (largest absolute column sum).
    pub fn norm_1(&self) -> f64 {
        self.column_abs_sums().into_iter().fold(0.0, f64::max)
    }

    /// Coordinate text dump: one `row col value` line per stored entry, 17
    /// significant digits.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:.16e}")?;
        }
        Ok(())
    }

    /// Copy into a faer column-major sparse matrix.
    pub fn to_faer(&self) -> Result<faer::sparse::SparseColMat<usize, f64>> {
        let t: Vec<faer::sparse::Triplet<usize, usize, f64>> = self
            .triplets()
            .map(|(r, c, v)| faer::sparse::Triplet::new(r, c, v))
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &t)
            .map_err(|e| FdlmError::invalid(format!("sparse conversion failed: {e:?}")))
    }
}

/// Entries of `a − b` over the union of both patterns.
fn diff_entries<'a>(a: &'a SparseMatrix, b: &'a SparseMatrix) -> impl Iterator<Item = Triplet> + 'a {
    (0..a.n_rows).flat_map(move |r| {
        let (mut ia, mut ib) = (a.row_offsets[r], b.row_offsets[r]);
        let (ea, eb) = (a.row_offsets[r + 1], b.row_offsets[r + 1]);
        let mut out = Vec::new();
        while ia < ea || ib < eb {
            let ca = if ia < ea { a.col_indices[ia] } else { usize::MAX };
            let cb = if ib < eb { b.col_indices[ib] } else { usize::MAX };
            if ca == cb {
                out.push((r, ca, a.values[ia] - b.values[ib]));
                ia += 1;
                ib += 1;
            } else if ca < cb {
                out.push((r, ca, a.values[ia]));
                ia += 1;
            } else {
                out.push((r, cb, -b.values[ib]));
                ib += 1;
            }
        }
        out
    })
}

/// `‖A − B‖₁`: largest column sum of `|a_ij − b_ij|`.
pub fn matrix_1norm_diff(a: &SparseMatrix, b: &SparseMatrix) -> Result<f64> {
    if a.n_rows != b.n_rows || a.n_cols != b.n_cols {
        return Err(FdlmError::DimensionMismatch {
            expected: a.n_rows * a.n_cols,
            got: b.n_rows * b.n_cols,
            context: "matrix_1norm_diff operands",
        });
    }
    let mut sums = vec![0.0; a.n_cols];
    for (_, c, d) in diff_entries(a, b) {
        sums[c] += d.abs();
    }
    Ok(sums.into_iter().fold(0.0, f64::max))
}

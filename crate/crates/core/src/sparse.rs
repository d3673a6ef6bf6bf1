//! Compressed-row sparse matrices with a triplet-based builder.
//!
//! Duplicate triplets are summed in a deterministic order, so assembling the
//! same cells in the same chunk order yields bitwise-identical operators.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Triplet accumulator used during finite-element assembly.
#[derive(Debug, Clone)]
pub struct CooBuilder<T: Real> {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> CooBuilder<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, other: CooBuilder<T>) {
        debug_assert_eq!(self.nrows, other.nrows);
        debug_assert_eq!(self.ncols, other.ncols);
        self.entries.extend(other.entries);
    }

    /// Eliminates Dirichlet rows and columns symmetrically.
    ///
    /// For each constrained dof `i` with value `g_i`: row `i` becomes the
    /// identity with `rhs[i] = g_i`, and column contributions `A[r][i] * g_i`
    /// move to the right-hand side.
    pub fn apply_dirichlet(&mut self, rhs: &mut [T], constraints: &[(usize, T)]) {
        let mut constrained = vec![false; self.nrows.max(self.ncols)];
        let mut value = vec![T::zero(); self.nrows.max(self.ncols)];
        for &(i, g) in constraints {
            constrained[i] = true;
            value[i] = g;
        }
        self.entries.retain_mut(|(r, c, v)| {
            if constrained[*r] {
                false
            } else if constrained[*c] {
                rhs[*r] = rhs[*r] - *v * value[*c];
                false
            } else {
                true
            }
        });
        for &(i, g) in constraints {
            self.entries.push((i, i, T::one()));
            rhs[i] = g;
        }
    }

    /// Sorts by (row, col) and merges duplicates by summation.
    pub fn build(mut self) -> CsrMatrix<T> {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut cur_row = 0usize;
        for (r, c, v) in self.entries {
            while cur_row < r {
                cur_row += 1;
                row_ptr[cur_row] = col_idx.len();
            }
            if col_idx.len() > row_ptr[cur_row] && *col_idx.last().unwrap() == c {
                let last = vals.last_mut().unwrap();
                *last = *last + v;
            } else {
                col_idx.push(c);
                vals.push(v);
            }
        }
        while cur_row < self.nrows {
            cur_row += 1;
            row_ptr[cur_row] = col_idx.len();
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            vals,
            symmetric: false,
        }
    }
}

/// Sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T: Real> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<T>,
    symmetric: bool,
}

impl<T: Real> CsrMatrix<T> {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![T::one(); n],
            symmetric: true,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric_flag(&self) -> bool {
        self.symmetric
    }

    pub fn set_symmetric_flag(&mut self, flag: bool) {
        self.symmetric = flag;
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc = acc + self.vals[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn matvec_alloc(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.nrows];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] = self.vals[k];
                }
            }
        }
        d
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.col_idx[k] == c {
                return self.vals[k];
            }
        }
        T::zero()
    }

    /// Sum over one row.
    pub fn row_sum(&self, r: usize) -> T {
        self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
            .iter()
            .fold(T::zero(), |a, &v| a + v)
    }

    /// Sum of all entries, equal to `1^T A 1`.
    pub fn total_sum(&self) -> T {
        self.vals.iter().fold(T::zero(), |a, &v| a + v)
    }

    pub fn trace(&self) -> T {
        (0..self.nrows).fold(T::zero(), |a, r| a + self.get(r, r))
    }

    /// Entry-wise transpose-equality check (exact).
    pub fn is_symmetric_exact(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                if self.get(c, r) != self.vals[k] {
                    return false;
                }
            }
        }
        true
    }

    /// Copies the entries back into a triplet builder.
    pub fn to_coo(&self) -> CooBuilder<T> {
        let mut coo = CooBuilder::new(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                coo.push(r, *c, *v);
            }
        }
        coo
    }

    /// Adds `alpha * other` into this matrix, returning a new matrix.
    pub fn add_scaled(&self, alpha: T, other: &CsrMatrix<T>) -> Result<CsrMatrix<T>> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::invalid("matrix shape mismatch"));
        }
        let mut coo = CooBuilder::new(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                coo.push(r, *c, *v);
            }
            let (cols, vals) = other.row(r);
            for (c, v) in cols.iter().zip(vals) {
                coo.push(r, *c, alpha * *v);
            }
        }
        Ok(coo.build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_merges_duplicates() {
        let mut coo = CooBuilder::<f64>::new(3, 3);
        coo.push(0, 0, 1.0);
        coo.push(0, 0, 2.0);
        coo.push(2, 1, 5.0);
        coo.push(1, 2, -1.0);
        let m = coo.build();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(2, 1), 5.0);
        assert_eq!(m.get(1, 2), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn matvec_matches_dense() {
        let mut coo = CooBuilder::<f64>::new(2, 2);
        coo.push(0, 0, 2.0);
        coo.push(0, 1, -1.0);
        coo.push(1, 1, 4.0);
        let m = coo.build();
        let y = m.matvec_alloc(&[1.0, 2.0]);
        assert_eq!(y, vec![0.0, 8.0]);
    }

    #[test]
    fn dirichlet_elimination_keeps_symmetry() {
        // 3x3 symmetric: constrain dof 0 to g = 2.
        let mut coo = CooBuilder::<f64>::new(3, 3);
        for (r, c, v) in [
            (0, 0, 2.0),
            (0, 1, -1.0),
            (1, 0, -1.0),
            (1, 1, 2.0),
            (1, 2, -1.0),
            (2, 1, -1.0),
            (2, 2, 2.0),
        ] {
            coo.push(r, c, v);
        }
        let mut rhs = vec![0.0, 0.0, 0.0];
        coo.apply_dirichlet(&mut rhs, &[(0, 2.0)]);
        let m = coo.build();
        assert!(m.is_symmetric_exact());
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(rhs, vec![2.0, 2.0, 0.0]);
    }

    #[test]
    fn empty_rows_are_handled() {
        let mut coo = CooBuilder::<f64>::new(4, 4);
        coo.push(3, 3, 1.0);
        let m = coo.build();
        assert_eq!(m.get(3, 3), 1.0);
        assert_eq!(m.row(1).0.len(), 0);
    }
}

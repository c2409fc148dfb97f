//! Compressed sparse column matrices and permutations.
//!
//! Everything downstream (factorizations, preconditioners, the solver)
//! works on [`SparseMatrix`]. Symmetric matrices store the lower
//! triangle only and are tagged [`Symmetry::SymmetricLower`]; operators
//! on such matrices always apply the full symmetric matrix.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("invalid scalar: {0}")]
    InvalidScalar(String),
}

/// Storage symmetry tag. `SymmetricLower` matrices are square and keep
/// entries with `row >= col` only; the implied upper triangle is the
/// mirror image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    SymmetricLower,
}

/// Sparse matrix in compressed sparse column form.
///
/// Row indices within each column are strictly increasing; duplicate
/// triplets are summed at construction; explicit zeros are kept (an
/// entry whose value is `0.0` still occupies a slot, so structural and
/// numerical nonzero counts can differ).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    symmetry: Symmetry,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed. For `SymmetricLower` every triplet must satisfy
    /// `row >= col` and the matrix must be square.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
        symmetry: Symmetry,
    ) -> Result<Self, SparseError> {
        if symmetry == Symmetry::SymmetricLower && nrows != ncols {
            return Err(SparseError::InvalidStructure(format!(
                "symmetric matrix must be square, got {nrows}x{ncols}"
            )));
        }
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(SparseError::IndexOutOfRange(format!(
                    "entry ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            if symmetry == Symmetry::SymmetricLower && i < j {
                return Err(SparseError::InvalidStructure(format!(
                    "upper-triangle entry ({i}, {j}) in symmetric-lower matrix"
                )));
            }
            if !v.is_finite() {
                return Err(SparseError::InvalidScalar(format!(
                    "non-finite value at ({i}, {j})"
                )));
            }
            by_col[j].push((i, v));
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for col in &mut by_col {
            col.sort_by_key(|&(i, _)| i);
            let mut k = 0;
            while k < col.len() {
                let row = col[k].0;
                let mut v = col[k].1;
                let mut k2 = k + 1;
                while k2 < col.len() && col[k2].0 == row {
                    v += col[k2].1;
                    k2 += 1;
                }
                row_idx.push(row);
                values.push(v);
                k = k2;
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self { nrows, ncols, col_ptr, row_idx, values, symmetry })
    }

    /// Identity matrix stored as a general matrix.
    pub fn identity(n: usize) -> Self {
        let trip: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &trip, Symmetry::General).expect("identity triplets are valid")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Number of stored entries (explicit zeros included).
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored entries of column `j` as `(row, value)` pairs.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        self.row_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// Value at `(i, j)` honoring symmetry; zero where nothing is stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = match self.symmetry {
            Symmetry::General => (i, j),
            Symmetry::SymmetricLower => {
                if i >= j {
                    (i, j)
                } else {
                    (j, i)
                }
            }
        };
        let lo = self.col_ptr[c];
        let hi = self.col_ptr[c + 1];
        match self.row_idx[lo..hi].binary_search(&r) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Matrix-vector product `A*x`, or `A^T*x` with `transpose`. A
    /// symmetric-lower matrix applies the full symmetric operator
    /// either way.
    pub fn spmv(&self, x: &[f64], transpose: bool) -> Result<Vec<f64>, SparseError> {
        match self.symmetry {
            Symmetry::SymmetricLower => {
                if x.len() != self.ncols {
                    return Err(SparseError::DimensionMismatch(format!(
                        "spmv: vector length {} vs matrix {}x{}",
                        x.len(),
                        self.nrows,
                        self.ncols
                    )));
                }
                let mut y = vec![0.0; self.nrows];
                for j in 0..self.ncols {
                    for (i, v) in self.col(j) {
                        y[i] += v * x[j];
                        if i != j {
                            y[j] += v * x[i];
                        }
                    }
                }
                Ok(y)
            }
            Symmetry::General => {
                let (need, out) = if transpose {
                    (self.nrows, self.ncols)
                } else {
                    (self.ncols, self.nrows)
                };
                if x.len() != need {
                    return Err(SparseError::DimensionMismatch(format!(
                        "spmv: vector length {} vs matrix {}x{} (transpose={})",
                        x.len(),
                        self.nrows,
                        self.ncols,
                        transpose
                    )));
                }
                let mut y = vec![0.0; out];
                if transpose {
                    for j in 0..self.ncols {
                        let mut acc = 0.0;
                        for (i, v) in self.col(j) {
                            acc += v * x[i];
                        }
                        y[j] = acc;
                    }
                } else {
                    for j in 0..self.ncols {
                        let xj = x[j];
                        if xj != 0.0 {
                            for (i, v) in self.col(j) {
                                y[i] += v * xj;
                            }
                        }
                    }
                }
                Ok(y)
            }
        }
    }

    /// Submatrix with the given columns in the given order. Only general
    /// matrices: slicing columns of a symmetric-lower matrix would lose
    /// its implied upper part.
    pub fn extract_columns(&self, cols: &[usize]) -> Result<SparseMatrix, SparseError> {
        if self.symmetry != Symmetry::General {
            return Err(SparseError::InvalidStructure(
                "extract_columns requires a general matrix".into(),
            ));
        }
        let mut col_ptr = Vec::with_capacity(cols.len() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for &j in cols {
            if j >= self.ncols {
                return Err(SparseError::IndexOutOfRange(format!(
                    "column {j} outside 0..{}",
                    self.ncols
                )));
            }
            for (i, v) in self.col(j) {
                row_idx.push(i);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: cols.len(),
            col_ptr,
            row_idx,
            values,
            symmetry: Symmetry::General,
        })
    }

    /// Submatrix keeping `rows` (renumbered in the given order) and
    /// `cols`. General matrices only.
    pub fn extract_submatrix(
        &self,
        rows: &[usize],
        cols: &[usize],
    ) -> Result<SparseMatrix, SparseError> {
        if self.symmetry != Symmetry::General {
            return Err(SparseError::InvalidStructure(
                "extract_submatrix requires a general matrix".into(),
            ));
        }
        let mut row_map = vec![usize::MAX; self.nrows];
        for (new, &old) in rows.iter().enumerate() {
            if old >= self.nrows {
                return Err(SparseError::IndexOutOfRange(format!(
                    "row {old} outside 0..{}",
                    self.nrows
                )));
            }
            row_map[old] = new;
        }
        let mut trip = Vec::new();
        for (newj, &j) in cols.iter().enumerate() {
            if j >= self.ncols {
                return Err(SparseError::IndexOutOfRange(format!(
                    "column {j} outside 0..{}",
                    self.ncols
                )));
            }
            for (i, v) in self.col(j) {
                if row_map[i] != usize::MAX {
                    trip.push((row_map[i], newj, v));
                }
            }
        }
        SparseMatrix::from_triplets(rows.len(), cols.len(), &trip, Symmetry::General)
    }

    /// Transpose of a general matrix.
    pub fn transpose(&self) -> Result<SparseMatrix, SparseError> {
        if self.symmetry != Symmetry::General {
            return Err(SparseError::InvalidStructure(
                "transpose requires a general matrix".into(),
            ));
        }
        let mut trip = Vec::with_capacity(self.nnz());
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                trip.push((j, i, v));
            }
        }
        SparseMatrix::from_triplets(self.ncols, self.nrows, &trip, Symmetry::General)
    }

    /// Returns a copy with column `j` scaled by `s[j]`.
    pub fn scale_columns(&self, s: &[f64]) -> Result<SparseMatrix, SparseError> {
        if self.symmetry != Symmetry::General {
            return Err(SparseError::InvalidStructure(
                "scale_columns requires a general matrix".into(),
            ));
        }
        if s.len() != self.ncols {
            return Err(SparseError::DimensionMismatch(format!(
                "scale_columns: {} factors for {} columns",
                s.len(),
                self.ncols
            )));
        }
        let mut out = self.clone();
        for j in 0..self.ncols {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out.values[k] *= s[j];
            }
        }
        Ok(out)
    }

    /// Dense copy; symmetric-lower matrices are mirrored.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                d[(i, j)] += v;
                if self.symmetry == Symmetry::SymmetricLower && i != j {
                    d[(j, i)] += v;
                }
            }
        }
        d
    }

    /// Per-column and per-row stored-entry counts (explicit zeros count).
    pub fn nnz_profile(&self) -> (Vec<usize>, Vec<usize>) {
        let mut per_col = vec![0usize; self.ncols];
        let mut per_row = vec![0usize; self.nrows];
        for j in 0..self.ncols {
            per_col[j] = self.col_ptr[j + 1] - self.col_ptr[j];
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                per_row[self.row_idx[k]] += 1;
            }
        }
        (per_col, per_row)
    }
}

/// Computes `A * Diag(g) * A^T + delta * I` as a symmetric-lower matrix.
/// Requires `delta > 0` and `g > 0` elementwise, which makes the result
/// positive definite whenever it is assembled at all.
pub fn normal_matrix(a: &SparseMatrix, g: &[f64], delta: f64) -> Result<SparseMatrix, SparseError> {
    if a.symmetry() != Symmetry::General {
        return Err(SparseError::InvalidStructure(
            "normal_matrix requires a general matrix".into(),
        ));
    }
    if g.len() != a.ncols() {
        return Err(SparseError::DimensionMismatch(format!(
            "normal_matrix: {} scaling entries for {} columns",
            g.len(),
            a.ncols()
        )));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(SparseError::InvalidScalar(format!("delta must be positive, got {delta}")));
    }
    if let Some(bad) = g.iter().find(|&&gj| !(gj > 0.0) || !gj.is_finite()) {
        return Err(SparseError::InvalidScalar(format!(
            "scaling entries must be positive, got {bad}"
        )));
    }
    let m = a.nrows();
    // Row view of A so column k of the product can be accumulated as
    // sum_j g_j a_kj A(:,j), keeping only rows >= k.
    let at = a.transpose()?;
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut work = vec![0.0f64; m];
    let mut mark = vec![usize::MAX; m];
    let mut pattern: Vec<usize> = Vec::new();
    for k in 0..m {
        pattern.clear();
        for (j, akj) in at.col(k) {
            let w = g[j] * akj;
            for (i, aij) in a.col(j) {
                if i < k {
                    continue;
                }
                if mark[i] != k {
                    mark[i] = k;
                    work[i] = 0.0;
                    pattern.push(i);
                }
                work[i] += w * aij;
            }
        }
        if mark[k] != k {
            mark[k] = k;
            work[k] = 0.0;
            pattern.push(k);
        }
        work[k] += delta;
        for &i in &pattern {
            trip.push((i, k, work[i]));
        }
    }
    SparseMatrix::from_triplets(m, m, &trip, Symmetry::SymmetricLower)
}

/// A permutation of `0..len`. `forward[new] = old`: applying the
/// permutation to a vector puts old entry `forward[k]` at slot `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
}

impl Permutation {
    pub fn new(forward: Vec<usize>) -> Result<Self, SparseError> {
        let n = forward.len();
        let mut seen = vec![false; n];
        for &p in &forward {
            if p >= n || seen[p] {
                return Err(SparseError::InvalidStructure(
                    "permutation is not a bijection".into(),
                ));
            }
            seen[p] = true;
        }
        Ok(Self { forward })
    }

    pub fn identity(n: usize) -> Self {
        Self { forward: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    /// `inverse()[old] = new`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0usize; self.forward.len()];
        for (new, &old) in self.forward.iter().enumerate() {
            inv[old] = new;
        }
        inv
    }

    /// Permuted copy of `x`: `out[new] = x[forward[new]]`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.forward.len() {
            return Err(SparseError::DimensionMismatch(format!(
                "permutation of length {} applied to vector of length {}",
                self.forward.len(),
                x.len()
            )));
        }
        Ok(self.forward.iter().map(|&old| x[old]).collect())
    }

    /// Inverse action: `out[forward[new]] = x[new]`.
    pub fn apply_inverse(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.forward.len() {
            return Err(SparseError::DimensionMismatch(format!(
                "permutation of length {} applied to vector of length {}",
                self.forward.len(),
                x.len()
            )));
        }
        let mut out = vec![0.0; x.len()];
        for (new, &old) in self.forward.iter().enumerate() {
            out[old] = x[new];
        }
        Ok(out)
    }
}

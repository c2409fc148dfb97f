//! Sparse symmetric factorizations.
//!
//! Two factorizations cover everything the preconditioners need:
//!
//! * [`cholesky`]: `P S P^T = L L^T` for positive definite `S`,
//!   up-looking over the elimination tree.
//! * [`ldlt`]: `P K P^T = L D L^T` for symmetric indefinite `K` with
//!   unit lower `L` and block-diagonal `D` (1x1 and optional 2x2
//!   blocks). Pivots smaller than a threshold are either replaced by a
//!   2x2 block or delayed to the end of the elimination order.
//!
//! Orderings come from [`analyze_order`], a greedy minimum-degree pass;
//! there is no persistent symbolic analysis, each call reorders from
//! scratch.

use crate::sparse::{Permutation, SparseError, SparseMatrix, Symmetry};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("factorization input invalid: {0}")]
    BadInput(String),
    #[error("matrix is not positive definite (failed at pivot for original index {0})")]
    NotPositiveDefinite(usize),
    #[error("pivot breakdown: no acceptable pivot among the remaining columns")]
    PivotBreakdown,
    #[error("operation requires a strictly diagonal D but 2x2 blocks are present")]
    HasTwoByTwoBlocks,
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Greedy minimum-degree ordering on the pattern of a symmetric-lower
/// matrix. Ties go to the smaller index, so the result is deterministic.
pub fn analyze_order(s: &SparseMatrix) -> Result<Permutation, FactorError> {
    if s.symmetry() != Symmetry::SymmetricLower {
        return Err(FactorError::BadInput(
            "analyze_order expects a symmetric-lower matrix".into(),
        ));
    }
    let n = s.nrows();
    let mut adj: Vec<BTreeMap<usize, ()>> = vec![BTreeMap::new(); n];
    for j in 0..n {
        for (i, _) in s.col(j) {
            if i != j {
                adj[i].insert(j, ());
                adj[j].insert(i, ());
            }
        }
    }
    let mut eliminated = vec![false; n];
    let mut forward = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = usize::MAX;
        let mut best_deg = usize::MAX;
        for v in 0..n {
            if !eliminated[v] {
                let deg = adj[v].len();
                if deg < best_deg {
                    best_deg = deg;
                    best = v;
                }
            }
        }
        let v = best;
        eliminated[v] = true;
        forward.push(v);
        let neighbors: Vec<usize> = adj[v].keys().copied().collect();
        for &a in &neighbors {
            adj[a].remove(&v);
        }
        // Eliminating v turns its neighborhood into a clique.
        for (ia, &a) in neighbors.iter().enumerate() {
            for &b in &neighbors[ia + 1..] {
                adj[a].insert(b, ());
                adj[b].insert(a, ());
            }
        }
        adj[v].clear();
    }
    Ok(Permutation::new(forward)?)
}

/// Cholesky factor of `P S P^T` with its permutation.
#[derive(Debug, Clone)]
pub struct CholFactor {
    /// Lower-triangular factor; within each column the diagonal entry
    /// comes first.
    l: SparseMatrix,
    perm: Permutation,
    nnz_l: usize,
}

impl CholFactor {
    pub fn l(&self) -> &SparseMatrix {
        &self.l
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }

    pub fn nnz_l(&self) -> usize {
        self.nnz_l
    }

    /// Solves `S x = b` where `S` is the matrix that was factorized.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, FactorError> {
        let n = self.perm.len();
        if b.len() != n {
            return Err(FactorError::BadInput(format!(
                "solve: rhs length {} vs dimension {n}",
                b.len()
            )));
        }
        let mut x = self.perm.apply(b)?;
        lower_solve(&self.l, &mut x, false);
        lower_solve(&self.l, &mut x, true);
        Ok(self.perm.apply_inverse(&x)?)
    }
}

/// Solves `L y = x` in place, or `L^T y = x` with `transpose`. `L` is
/// lower triangular CSC with the diagonal first in each column;
/// `unit` diagonals are handled by the caller storing 1.0 there.
fn lower_solve(l: &SparseMatrix, x: &mut [f64], transpose: bool) {
    let n = l.ncols();
    let cp = l.col_ptr();
    let ri = l.row_idx();
    let vx = l.values();
    if !transpose {
        for j in 0..n {
            let lo = cp[j];
            let hi = cp[j + 1];
            let xj = x[j] / vx[lo];
            x[j] = xj;
            for p in lo + 1..hi {
                x[ri[p]] -= vx[p] * xj;
            }
        }
    } else {
        for j in (0..n).rev() {
            let lo = cp[j];
            let hi = cp[j + 1];
            let mut acc = x[j];
            for p in lo + 1..hi {
                acc -= vx[p] * x[ri[p]];
            }
            x[j] = acc / vx[lo];
        }
    }
}

/// Up-looking sparse Cholesky of a symmetric-lower positive definite
/// matrix under the given ordering. Fails with the original index of
/// the offending pivot if a nonpositive diagonal turns up.
pub fn cholesky(s: &SparseMatrix, order: &Permutation) -> Result<CholFactor, FactorError> {
    if s.symmetry() != Symmetry::SymmetricLower {
        return Err(FactorError::BadInput("cholesky expects a symmetric-lower matrix".into()));
    }
    let n = s.nrows();
    if order.len() != n {
        return Err(FactorError::BadInput(format!(
            "ordering length {} vs dimension {n}",
            order.len()
        )));
    }
    // Upper-triangle CSC of C = P S P^T: column k lists row indices
    // i <= k, which is exactly the row pattern ereach needs.
    let pinv = order.inverse();
    let mut trip = Vec::with_capacity(s.nnz());
    for j in 0..n {
        for (i, v) in s.col(j) {
            let a = pinv[i];
            let b = pinv[j];
            let (r, c) = if a <= b { (a, b) } else { (b, a) };
            trip.push((r, c, v));
        }
    }
    let c_up = SparseMatrix::from_triplets(n, n, &trip, Symmetry::General)?;

    let parent = etree_upper(&c_up);

    // Symbolic pass: column counts via ereach.
    let mut counts = vec![1usize; n];
    {
        let mut w = vec![usize::MAX; n];
        let mut stack = vec![0usize; n];
        let mut path = vec![0usize; n];
        for k in 0..n {
            let top = ereach(&c_up, k, &parent, &mut w, &mut stack, &mut path);
            for &j in &stack[top..n] {
                counts[j] += 1;
            }
        }
    }
    let mut lp = vec![0usize; n + 1];
    for j in 0..n {
        lp[j + 1] = lp[j] + counts[j];
    }
    let nnz_l = lp[n];
    let mut li = vec![0usize; nnz_l];
    let mut lx = vec![0.0f64; nnz_l];
    let mut next = lp.clone();

    // Numeric pass: row k of L solves L(0:k-1,0:k-1) y = C(0:k-1,k).
    let mut w = vec![usize::MAX; n];
    let mut stack = vec![0usize; n];
    let mut path = vec![0usize; n];
    let mut x = vec![0.0f64; n];
    for k in 0..n {
        let top = ereach(&c_up, k, &parent, &mut w, &mut stack, &mut path);
        x[k] = 0.0;
        for (i, v) in c_up.col(k) {
            if i <= k {
                x[i] = v;
            }
        }
        let mut d = x[k];
        x[k] = 0.0;
        for &j in &stack[top..n] {
            let ljj = lx[lp[j]];
            let lkj = x[j] / ljj;
            x[j] = 0.0;
            for p in lp[j] + 1..next[j] {
                x[li[p]] -= lx[p] * lkj;
            }
            d -= lkj * lkj;
            li[next[j]] = k;
            lx[next[j]] = lkj;
            next[j] += 1;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(FactorError::NotPositiveDefinite(order.forward()[k]));
        }
        li[next[k]] = k;
        lx[next[k]] = d.sqrt();
        next[k] += 1;
    }

    let mut ltrip = Vec::with_capacity(nnz_l);
    for j in 0..n {
        for p in lp[j]..lp[j + 1] {
            ltrip.push((li[p], j, lx[p]));
        }
    }
    let l = SparseMatrix::from_triplets(n, n, &ltrip, Symmetry::General)?;
    Ok(CholFactor { l, perm: order.clone(), nnz_l })
}

/// Elimination tree of `C` given as its upper triangle in CSC.
fn etree_upper(c_up: &SparseMatrix) -> Vec<usize> {
    let n = c_up.ncols();
    let none = usize::MAX;
    let mut parent = vec![none; n];
    let mut ancestor = vec![none; n];
    for k in 0..n {
        for (i, _) in c_up.col(k) {
            let mut j = i;
            while j != none && j < k {
                let nxt = ancestor[j];
                ancestor[j] = k;
                if nxt == none {
                    parent[j] = k;
                }
                j = nxt;
            }
        }
    }
    parent
}

/// Row pattern of row `k` of `L` in topological order; returns `top`
/// such that `stack[top..n]` holds the pattern (diagonal excluded).
fn ereach(
    c_up: &SparseMatrix,
    k: usize,
    parent: &[usize],
    w: &mut [usize],
    stack: &mut [usize],
    path: &mut [usize],
) -> usize {
    let n = c_up.ncols();
    let mut top = n;
    w[k] = k;
    for (i0, _) in c_up.col(k) {
        if i0 >= k {
            continue;
        }
        let mut i = i0;
        let mut len = 0;
        while w[i] != k {
            path[len] = i;
            len += 1;
            w[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = path[len];
        }
    }
    top
}

/// Block-diagonal `D` of an LDL^T factorization: `diag[q]` holds the
/// diagonal, `sub[q]` the coupling between positions `q` and `q+1`
/// (zero for 1x1 pivots; a nonzero marks a 2x2 block starting at `q`).
#[derive(Debug, Clone)]
pub struct BlockDiag {
    diag: Vec<f64>,
    sub: Vec<f64>,
}

impl BlockDiag {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    /// Counts of (negative, positive) eigenvalues over all blocks.
    pub fn inertia(&self) -> (usize, usize) {
        let mut neg = 0;
        let mut pos = 0;
        let n = self.diag.len();
        let mut q = 0;
        while q < n {
            if q + 1 < n && self.sub[q] != 0.0 {
                let det = self.diag[q] * self.diag[q + 1] - self.sub[q] * self.sub[q];
                if det < 0.0 {
                    neg += 1;
                    pos += 1;
                } else if self.diag[q] + self.diag[q + 1] > 0.0 {
                    pos += 2;
                } else {
                    neg += 2;
                }
                q += 2;
            } else {
                if self.diag[q] > 0.0 {
                    pos += 1;
                } else if self.diag[q] < 0.0 {
                    neg += 1;
                }
                q += 1;
            }
        }
        (neg, pos)
    }

    fn solve(&self, x: &mut [f64], absolute: bool) {
        let n = self.diag.len();
        let mut q = 0;
        while q < n {
            if q + 1 < n && self.sub[q] != 0.0 {
                let (a, b, c) = (self.diag[q], self.sub[q], self.diag[q + 1]);
                let det = a * c - b * b;
                let (r0, r1) = (x[q], x[q + 1]);
                if absolute {
                    // |E| = V|Lam|V^T via the block's own eigensystem.
                    let (lam1, lam2, v) = sym2x2_eigen(a, b, c);
                    let t0 = v[0] * r0 + v[1] * r1;
                    let t1 = v[2] * r0 + v[3] * r1;
                    let s0 = t0 / lam1.abs();
                    let s1 = t1 / lam2.abs();
                    x[q] = v[0] * s0 + v[2] * s1;
                    x[q + 1] = v[1] * s0 + v[3] * s1;
                } else {
                    x[q] = (c * r0 - b * r1) / det;
                    x[q + 1] = (a * r1 - b * r0) / det;
                }
                q += 2;
            } else {
                let d = if absolute { self.diag[q].abs() } else { self.diag[q] };
                x[q] /= d;
                q += 1;
            }
        }
    }
}

/// Eigen-decomposition of `[[a, b], [b, c]]`; returns eigenvalues and
/// the orthonormal eigenvector matrix `V = [v1 | v2]` column-major.
fn sym2x2_eigen(a: f64, b: f64, c: f64) -> (f64, f64, [f64; 4]) {
    let tr = a + c;
    let disc = ((a - c) * 0.5).hypot(b);
    let lam1 = tr * 0.5 + disc;
    let lam2 = tr * 0.5 - disc;
    // Eigenvector for lam1: (b, lam1 - a) unless degenerate.
    let (mut v1x, mut v1y) = (b, lam1 - a);
    if v1x.abs() + v1y.abs() < f64::EPSILON * (a.abs() + b.abs() + c.abs()) {
        v1x = 1.0;
        v1y = 0.0;
    }
    let norm = v1x.hypot(v1y);
    v1x /= norm;
    v1y /= norm;
    (lam1, lam2, [v1x, v1y, -v1y, v1x])
}

/// LDL^T factorization of `P K P^T` with unit lower `L`, block-diagonal
/// `D` and the permutation actually used (delays and 2x2 pivots modify
/// the initial fill-reducing order).
#[derive(Debug, Clone)]
pub struct LdlFactor {
    l: SparseMatrix,
    d: BlockDiag,
    perm: Permutation,
    pivot_thr: f64,
    used_2x2: bool,
    nnz_l: usize,
}

impl LdlFactor {
    pub fn l(&self) -> &SparseMatrix {
        &self.l
    }

    pub fn d(&self) -> &BlockDiag {
        &self.d
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }

    pub fn pivot_thr(&self) -> f64 {
        self.pivot_thr
    }

    pub fn used_2x2(&self) -> bool {
        self.used_2x2
    }

    pub fn nnz_l(&self) -> usize {
        self.nnz_l
    }

    /// `L^{-1} P v`.
    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>, FactorError> {
        if v.len() != self.perm.len() {
            return Err(FactorError::BadInput(format!(
                "forward: length {} vs dimension {}",
                v.len(),
                self.perm.len()
            )));
        }
        let mut x = self.perm.apply(v)?;
        lower_solve(&self.l, &mut x, false);
        Ok(x)
    }

    /// `P^T L^{-T} v`.
    pub fn backward(&self, v: &[f64]) -> Result<Vec<f64>, FactorError> {
        if v.len() != self.perm.len() {
            return Err(FactorError::BadInput(format!(
                "backward: length {} vs dimension {}",
                v.len(),
                self.perm.len()
            )));
        }
        let mut x = v.to_vec();
        lower_solve(&self.l, &mut x, true);
        Ok(self.perm.apply_inverse(&x)?)
    }

    /// Solves `K x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, FactorError> {
        let mut x = self.forward(b)?;
        self.d.solve(&mut x, false);
        self.backward(&x)
    }

    /// Solves `(L |D| L^T) x = P b` pulled back to the original
    /// ordering: the positive definite companion of the factorization.
    pub fn solve_abs(&self, b: &[f64]) -> Result<Vec<f64>, FactorError> {
        let mut x = self.forward(b)?;
        self.d.solve(&mut x, true);
        self.backward(&x)
    }

    /// `|D|^{-1/2} v` in factor ordering; requires strictly diagonal D.
    pub fn d_abs_invsqrt(&self, v: &mut [f64]) -> Result<(), FactorError> {
        if self.used_2x2 {
            return Err(FactorError::HasTwoByTwoBlocks);
        }
        for (x, d) in v.iter_mut().zip(self.d.diag.iter()) {
            *x /= d.abs().sqrt();
        }
        Ok(())
    }
}

/// Sparse LDL^T with threshold pivoting. Pivot policy per step on the
/// current candidate in the fill-reducing order:
///
/// 1. accept the diagonal pivot when `|d| >= pivot_thr`;
/// 2. otherwise, when `allow_2x2`, pair with the largest off-diagonal
///    neighbor as a 2x2 block if that block is invertible enough;
/// 3. otherwise push the candidate behind the remaining order and retry
///    after everything else; only when no remaining candidate admits a
///    pivot does the factorization fail.
pub fn ldlt(k: &SparseMatrix, pivot_thr: f64, allow_2x2: bool) -> Result<LdlFactor, FactorError> {
    let order = analyze_order(k)?;
    ldlt_with_order(k, pivot_thr, allow_2x2, &order)
}

/// [`ldlt`] with a caller-chosen initial elimination order. The pivot
/// policy may still deviate from it by delaying unstable candidates.
pub fn ldlt_with_order(
    k: &SparseMatrix,
    pivot_thr: f64,
    allow_2x2: bool,
    order: &Permutation,
) -> Result<LdlFactor, FactorError> {
    if k.symmetry() != Symmetry::SymmetricLower {
        return Err(FactorError::BadInput("ldlt expects a symmetric-lower matrix".into()));
    }
    if !(pivot_thr >= 0.0) {
        return Err(FactorError::BadInput(format!("pivot_thr must be nonnegative, got {pivot_thr}")));
    }
    let n = k.nrows();
    if order.len() != n {
        return Err(FactorError::BadInput(format!(
            "order length {} against {n} rows",
            order.len()
        )));
    }

    // Working Schur complement, full symmetric storage per column.
    let mut w: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for j in 0..n {
        for (i, v) in k.col(j) {
            w[j].insert(i, v);
            if i != j {
                w[i].insert(j, v);
            }
        }
    }

    let mut active = vec![true; n];
    let mut queue: std::collections::VecDeque<usize> = order.forward().iter().copied().collect();
    let mut delayed: Vec<usize> = Vec::new();
    let mut in_delay_phase = false;
    let mut progress_since_rescan = true;

    // Elimination record: sequence of nodes with per-position D data and
    // the L column entries in node indices (mapped to positions later).
    let mut seq: Vec<usize> = Vec::with_capacity(n);
    let mut dvals: Vec<f64> = Vec::with_capacity(n);
    let mut subs: Vec<f64> = Vec::with_capacity(n);
    let mut lcols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut used_2x2 = false;
    let mut remaining = n;

    while remaining > 0 {
        let cand = match queue.pop_front() {
            Some(c) => c,
            None => {
                if delayed.is_empty() {
                    break;
                }
                if in_delay_phase && !progress_since_rescan {
                    return Err(FactorError::PivotBreakdown);
                }
                in_delay_phase = true;
                progress_since_rescan = false;
                queue.extend(delayed.drain(..));
                continue;
            }
        };
        if !active[cand] {
            continue;
        }
        let d = w[cand].get(&cand).copied().unwrap_or(0.0);
        if d.abs() >= pivot_thr && d != 0.0 {
            eliminate_1x1(&mut w, &mut active, cand, d, &mut seq, &mut dvals, &mut subs, &mut lcols);
            remaining -= 1;
            progress_since_rescan = true;
            continue;
        }
        if allow_2x2 {
            // Largest active off-diagonal in the candidate's column.
            let partner = w[cand]
                .iter()
                .filter(|&(&i, _)| i != cand && active[i])
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(&i, &v)| (i, v));
            if let Some((p, b)) = partner {
                let dp = w[p].get(&p).copied().unwrap_or(0.0);
                let det = d * dp - b * b;
                if det.abs() >= pivot_thr * pivot_thr && det != 0.0 {
                    eliminate_2x2(
                        &mut w, &mut active, cand, p, d, b, dp, &mut seq, &mut dvals, &mut subs,
                        &mut lcols,
                    );
                    used_2x2 = true;
                    remaining -= 2;
                    progress_since_rescan = true;
                    continue;
                }
            }
        }
        delayed.push(cand);
    }
    if remaining > 0 {
        return Err(FactorError::PivotBreakdown);
    }

    // Map node indices to final elimination positions.
    let mut pos = vec![0usize; n];
    for (q, &v) in seq.iter().enumerate() {
        pos[v] = q;
    }
    let mut ltrip: Vec<(usize, usize, f64)> = Vec::new();
    for (q, col) in lcols.iter().enumerate() {
        ltrip.push((q, q, 1.0));
        for &(node, val) in col {
            ltrip.push((pos[node], q, val));
        }
    }
    let l = SparseMatrix::from_triplets(n, n, &ltrip, Symmetry::General)?;
    let nnz_l = l.nnz();
    let perm = Permutation::new(seq)?;
    Ok(LdlFactor {
        l,
        d: BlockDiag { diag: dvals, sub: subs },
        perm,
        pivot_thr,
        used_2x2,
        nnz_l,
    })
}

#[allow(clippy::too_many_arguments)]
fn eliminate_1x1(
    w: &mut [BTreeMap<usize, f64>],
    active: &mut [bool],
    k: usize,
    d: f64,
    seq: &mut Vec<usize>,
    dvals: &mut Vec<f64>,
    subs: &mut Vec<f64>,
    lcols: &mut Vec<Vec<(usize, f64)>>,
) {
    active[k] = false;
    let col: Vec<(usize, f64)> = w[k]
        .iter()
        .filter(|&(&i, _)| active[i])
        .map(|(&i, &v)| (i, v))
        .collect();
    let lcol: Vec<(usize, f64)> = col.iter().map(|&(i, u)| (i, u / d)).collect();
    for (a, &(i, li)) in lcol.iter().enumerate() {
        for (b, &(j, _)) in lcol.iter().enumerate() {
            if b > a {
                break;
            }
            let upd = li * col[b].1;
            *w[j].entry(i).or_insert(0.0) -= upd;
            if i != j {
                *w[i].entry(j).or_insert(0.0) -= upd;
            }
        }
    }
    for &(i, _) in &col {
        w[i].remove(&k);
    }
    w[k].clear();
    seq.push(k);
    dvals.push(d);
    subs.push(0.0);
    lcols.push(lcol);
}

#[allow(clippy::too_many_arguments)]
fn eliminate_2x2(
    w: &mut [BTreeMap<usize, f64>],
    active: &mut [bool],
    k: usize,
    p: usize,
    e11: f64,
    e21: f64,
    e22: f64,
    seq: &mut Vec<usize>,
    dvals: &mut Vec<f64>,
    subs: &mut Vec<f64>,
    lcols: &mut Vec<Vec<(usize, f64)>>,
) {
    active[k] = false;
    active[p] = false;
    let det = e11 * e22 - e21 * e21;
    // Union of the two columns restricted to active nodes.
    let mut nodes: Vec<usize> = w[k]
        .keys()
        .chain(w[p].keys())
        .copied()
        .filter(|&i| active[i])
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    // Row (u, v) against E^{-1} gives the two L entries per node.
    let rows: Vec<(usize, f64, f64, f64, f64)> = nodes
        .iter()
        .map(|&i| {
            let u = w[k].get(&i).copied().unwrap_or(0.0);
            let v = w[p].get(&i).copied().unwrap_or(0.0);
            let l1 = (u * e22 - v * e21) / det;
            let l2 = (v * e11 - u * e21) / det;
            (i, u, v, l1, l2)
        })
        .collect();
    for (a, &(i, _, _, l1i, l2i)) in rows.iter().enumerate() {
        for &(j, uj, vj, _, _) in rows.iter().take(a + 1) {
            let upd = l1i * uj + l2i * vj;
            *w[j].entry(i).or_insert(0.0) -= upd;
            if i != j {
                *w[i].entry(j).or_insert(0.0) -= upd;
            }
        }
    }
    for &(i, _, _, _, _) in &rows {
        w[i].remove(&k);
        w[i].remove(&p);
    }
    w[k].clear();
    w[p].clear();
    seq.push(k);
    seq.push(p);
    dvals.push(e11);
    dvals.push(e22);
    subs.push(e21);
    subs.push(0.0);
    lcols.push(rows.iter().map(|&(i, _, _, l1, _)| (i, l1)).collect());
    lcols.push(rows.iter().map(|&(i, _, _, _, l2)| (i, l2)).collect());
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn sym_lower(n: usize, trip: &[(usize, usize, f64)]) -> SparseMatrix {
        SparseMatrix::from_triplets(n, n, trip, Symmetry::SymmetricLower).unwrap()
    }

    /// Dense reconstruction residual max|P S P^T - L L^T|.
    fn chol_residual(s: &SparseMatrix, f: &CholFactor) -> f64 {
        let n = s.nrows();
        let sd = s.to_dense();
        let fwd = f.perm().forward();
        let mut perm_s = nalgebra::DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                perm_s[(a, b)] = sd[(fwd[a], fwd[b])];
            }
        }
        let ld = f.l().to_dense();
        let rec = &ld * ld.transpose();
        (perm_s - rec).abs().max()
    }

    fn ldl_residual(s: &SparseMatrix, f: &LdlFactor) -> f64 {
        let n = s.nrows();
        let sd = s.to_dense();
        let fwd = f.perm().forward();
        let mut perm_s = nalgebra::DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                perm_s[(a, b)] = sd[(fwd[a], fwd[b])];
            }
        }
        let ld = f.l().to_dense();
        let mut dd = nalgebra::DMatrix::zeros(n, n);
        for q in 0..n {
            dd[(q, q)] = f.d().diag()[q];
            if f.d().sub()[q] != 0.0 {
                dd[(q + 1, q)] = f.d().sub()[q];
                dd[(q, q + 1)] = f.d().sub()[q];
            }
        }
        let rec = &ld * dd * ld.transpose();
        (perm_s - rec).abs().max()
    }

    #[test]
    fn cholesky_two_by_two_example() {
        // [[4, 2], [2, 3]] with identity order: L = [[2, 0], [1, sqrt(2)]].
        let s = sym_lower(2, &[(0, 0, 4.0), (1, 0, 2.0), (1, 1, 3.0)]);
        let f = cholesky(&s, &Permutation::identity(2)).unwrap();
        let l = f.l().to_dense();
        assert_abs_diff_eq!(l[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 2.0f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn cholesky_detects_indefinite() {
        let s = sym_lower(2, &[(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)]);
        match cholesky(&s, &Permutation::identity(2)) {
            Err(FactorError::NotPositiveDefinite(k)) => assert_eq!(k, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let s = sym_lower(
            3,
            &[(0, 0, 4.0), (1, 0, 1.0), (1, 1, 3.0), (2, 1, -1.0), (2, 2, 5.0)],
        );
        let order = analyze_order(&s).unwrap();
        let f = cholesky(&s, &order).unwrap();
        let b = vec![1.0, -2.0, 0.5];
        let x = f.solve(&b).unwrap();
        let back = s.spmv(&x, false).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn min_degree_keeps_tridiagonal_fill_free() {
        let n = 12;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 4.0));
            if i + 1 < n {
                trip.push((i + 1, i, -1.0));
            }
        }
        let s = sym_lower(n, &trip);
        let order = analyze_order(&s).unwrap();
        let f = cholesky(&s, &order).unwrap();
        assert!(f.nnz_l() <= 2 * n - 1, "tridiagonal fill: {}", f.nnz_l());
    }

    #[test]
    fn min_degree_orders_arrow_hub_last() {
        // Arrow: dense column 0 plus diagonal. Natural order fills in
        // completely; minimum degree leaves the factor as sparse as the
        // matrix itself.
        for n in [10usize, 17, 25] {
            let mut trip = vec![(0usize, 0usize, 10.0)];
            for i in 1..n {
                trip.push((i, i, 2.0 + i as f64));
                trip.push((i, 0, 1.0));
            }
            let s = sym_lower(n, &trip);
            let f_id = cholesky(&s, &Permutation::identity(n)).unwrap();
            let f_md = cholesky(&s, &analyze_order(&s).unwrap()).unwrap();
            assert!(f_md.nnz_l() <= f_id.nnz_l());
            assert_eq!(f_md.nnz_l(), 2 * n - 1);
        }
    }

    #[test]
    fn ldlt_quasi_definite_hand_example() {
        // [[-1, 1], [1, 1]]: L = [[1, 0], [-1, 1]], D = diag(-1, 2)
        // when node 0 is eliminated first.
        let k = sym_lower(2, &[(0, 0, -1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let f = ldlt(&k, 1e-10, false).unwrap();
        assert!(!f.used_2x2());
        let fwd = f.perm().forward();
        assert_eq!(fwd, &[0, 1]);
        let l = f.l().to_dense();
        assert_abs_diff_eq!(l[(1, 0)], -1.0, epsilon = 1e-15);
        assert_eq!(f.d().diag(), &[-1.0, 2.0]);
        assert_eq!(f.d().inertia(), (1, 1));
    }

    #[test]
    fn ldlt_solve_matches_dense() {
        let k = sym_lower(
            4,
            &[
                (0, 0, -2.0),
                (1, 1, -3.0),
                (2, 0, 1.0),
                (2, 1, 0.5),
                (2, 2, 1.0),
                (3, 1, 1.0),
                (3, 3, 2.0),
            ],
        );
        let f = ldlt(&k, 1e-10, false).unwrap();
        assert!(ldl_residual(&k, &f) < 1e-12);
        let b = vec![1.0, 0.0, -1.0, 2.0];
        let x = f.solve(&b).unwrap();
        let back = k.spmv(&x, false).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn ldlt_delays_small_pivot() {
        // Diagonal (eps, 1) coupled off-diagonally: the tiny pivot gets
        // delayed, picks up mass from the elimination of node 1, and
        // succeeds second.
        let k = sym_lower(2, &[(0, 0, 1e-14), (1, 0, 1.0), (1, 1, 1.0)]);
        let f = ldlt(&k, 1e-8, false).unwrap();
        assert_eq!(f.perm().forward(), &[1, 0]);
        assert!(ldl_residual(&k, &f) < 1e-12);
        assert_eq!(f.d().inertia(), (1, 1));
    }

    #[test]
    fn ldlt_two_by_two_rescues_zero_diagonal() {
        // [[0, 1], [1, 0]] has no usable 1x1 pivot at all.
        let k = sym_lower(2, &[(0, 0, 0.0), (1, 0, 1.0), (1, 1, 0.0)]);
        assert!(matches!(ldlt(&k, 1e-8, false), Err(FactorError::PivotBreakdown)));
        let f = ldlt(&k, 1e-8, true).unwrap();
        assert!(f.used_2x2());
        assert!(ldl_residual(&k, &f) < 1e-12);
        assert_eq!(f.d().inertia(), (1, 1));
        let x = f.solve(&[3.0, -2.0]).unwrap();
        assert_abs_diff_eq!(x[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ldlt_quasi_definite_inertia() {
        // Saddle layout: 3 negative then 2 positive diagonal blocks with
        // coupling; allow_2x2 = false must keep D diagonal and report
        // inertia (3, 2).
        let trip = vec![
            (0, 0, -1.5),
            (1, 1, -2.0),
            (2, 2, -1.0),
            (3, 3, 0.5),
            (4, 4, 0.25),
            (3, 0, 1.0),
            (3, 1, -1.0),
            (4, 1, 2.0),
            (4, 2, 1.0),
        ];
        let k = sym_lower(5, &trip);
        let f = ldlt(&k, 1e-10, false).unwrap();
        assert!(!f.used_2x2());
        assert_eq!(f.d().inertia(), (3, 2));
        assert!(ldl_residual(&k, &f) < 1e-12);
    }

    #[test]
    fn solve_abs_is_spd_companion() {
        let k = sym_lower(2, &[(0, 0, -1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let f = ldlt(&k, 1e-10, false).unwrap();
        // L|D|L^T = [[1, -1], [-1, 3]]; its inverse maps (1, 0) to
        // (3/2, 1/2).
        let x = f.solve_abs(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn random_spd_reconstruction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = 5 + (trial % 10);
            // B B^T + I with sparse random B keeps things comfortably SPD.
            let mut trip = Vec::new();
            for j in 0..n {
                for i in 0..n {
                    if rng.gen_bool(0.3) {
                        trip.push((i, j, rng.gen_range(-1.0..1.0)));
                    }
                }
            }
            let b = SparseMatrix::from_triplets(n, n, &trip, Symmetry::General).unwrap();
            let bd = b.to_dense();
            let sd = &bd * bd.transpose() + nalgebra::DMatrix::identity(n, n);
            let mut strip = Vec::new();
            for j in 0..n {
                for i in j..n {
                    if sd[(i, j)] != 0.0 {
                        strip.push((i, j, sd[(i, j)]));
                    }
                }
            }
            let s = sym_lower(n, &strip);
            let order = analyze_order(&s).unwrap();
            let f = cholesky(&s, &order).unwrap();
            assert!(chol_residual(&s, &f) < 1e-10, "trial {trial}");
        }
    }

    #[test]
    fn random_quasi_definite_reconstruction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 4 + (trial % 5);
            let m = 3 + (trial % 4);
            let mut trip = Vec::new();
            for i in 0..n {
                trip.push((i, i, -(0.5 + rng.gen_range(0.0..2.0))));
            }
            for i in 0..m {
                trip.push((n + i, n + i, 0.5 + rng.gen_range(0.0..2.0)));
            }
            for i in 0..m {
                for j in 0..n {
                    if rng.gen_bool(0.4) {
                        trip.push((n + i, j, rng.gen_range(-2.0..2.0)));
                    }
                }
            }
            let k = sym_lower(n + m, &trip);
            let f = ldlt(&k, 1e-12, false).unwrap();
            assert!(!f.used_2x2());
            assert_eq!(f.d().inertia(), (n, m), "trial {trial}");
            assert!(ldl_residual(&k, &f) < 1e-8, "trial {trial}: {}", ldl_residual(&k, &f));
        }
    }
}

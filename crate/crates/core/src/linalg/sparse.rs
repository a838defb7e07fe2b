use nalgebra::DMatrix;

use super::ordering::nested_dissection;
use crate::error::{Error, Result};

/// Compressed sparse rows with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 || col_idx.len() != values.len() {
            return Err(Error::Contract("inconsistent CSR array lengths".into()));
        }
        if row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::Contract("CSR row pointers do not span the entries".into()));
        }
        for r in 0..nrows {
            let (s, e) = (row_ptr[r], row_ptr[r + 1]);
            if s > e {
                return Err(Error::Contract("CSR row pointers decrease".into()));
            }
            let cols = &col_idx[s..e];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return Err(Error::Contract(format!(
                    "row {r} has unsorted, duplicate or out-of-range columns"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Build from `(row, col, value)` triplets; duplicates are rejected.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, c, _) in &t {
            if r >= nrows || c >= ncols {
                return Err(Error::Contract(format!("entry ({r}, {c}) out of range")));
            }
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = t.iter().map(|e| e.1).collect();
        let values = t.iter().map(|e| e.2).collect();
        Self::new(nrows, ncols, row_ptr, col_idx, values)
    }

    /// Full symmetric storage from a diagonal and strictly-upper entries `(i, j, v)`, `i < j`.
    pub fn symmetric(diag: &[f64], upper: &[(usize, usize, f64)]) -> Result<Self> {
        let n = diag.len();
        let mut t = Vec::with_capacity(n + 2 * upper.len());
        for (i, &d) in diag.iter().enumerate() {
            t.push((i, i, d));
        }
        for &(i, j, v) in upper {
            if i >= j {
                return Err(Error::Contract(format!("entry ({i}, {j}) is not strictly upper")));
            }
            t.push((i, j, v));
            t.push((j, i, v));
        }
        Self::from_triplets(n, n, t)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    /// Stored value at `(r, c)`, zero outside the pattern.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::Dimension {
                expected: self.ncols,
                got: x.len(),
            });
        }
        Ok((0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }
}

/// Sparse `P A P^T = L L^T` with a recorded fill-reducing permutation.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    iperm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    log_det: f64,
}

impl SparseCholesky {
    /// Up-looking factorization driven by the elimination tree.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension {
                expected: n,
                got: a.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::Precondition("matrix of order 0".into()));
        }
        let perm = nested_dissection(n, a.row_ptr(), a.col_idx());
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // upper triangle of C = P A P^T, column by column
        let mut cu_ptr = Vec::with_capacity(n + 1);
        let mut cu_idx = Vec::new();
        let mut cu_val = Vec::new();
        cu_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for k in 0..n {
            let (cols, vals) = a.row(perm[k]);
            scratch.clear();
            for (&c, &v) in cols.iter().zip(vals) {
                let i = iperm[c];
                if i <= k {
                    scratch.push((i, v));
                }
            }
            scratch.sort_unstable_by_key(|e| e.0);
            for &(i, v) in &scratch {
                cu_idx.push(i);
                cu_val.push(v);
            }
            cu_ptr.push(cu_idx.len());
        }

        let parent = etree(n, &cu_ptr, &cu_idx);

        let mut mark = vec![false; n];
        let mut stack = vec![0usize; n];
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(k, &cu_ptr, &cu_idx, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0f64; nnz];
        let mut next: Vec<usize> = col_ptr[..n].to_vec();
        let mut x = vec![0.0f64; n];

        for k in 0..n {
            let top = ereach(k, &cu_ptr, &cu_idx, &parent, &mut stack, &mut mark);
            for p in cu_ptr[k]..cu_ptr[k + 1] {
                x[cu_idx[p]] = cu_val[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: perm[k] });
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }
        let log_det = 2.0 * (0..n).map(|j| values[col_ptr[j]].ln()).sum::<f64>();
        Ok(Self {
            n,
            perm,
            iperm,
            col_ptr,
            row_idx,
            values,
            log_det,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            Err(Error::Dimension {
                expected: self.n,
                got: len,
            })
        } else {
            Ok(())
        }
    }

    fn forward(&self, y: &mut [f64]) {
        for j in 0..self.n {
            let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let v = y[j] / self.values[s];
            y[j] = v;
            if v != 0.0 {
                for p in s + 1..e {
                    y[self.row_idx[p]] -= self.values[p] * v;
                }
            }
        }
    }

    fn backward(&self, y: &mut [f64]) {
        for j in (0..self.n).rev() {
            let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let mut acc = y[j];
            for p in s + 1..e {
                acc -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = acc / self.values[s];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check(b.len())?;
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }

    pub fn quad_form(&self, z: &[f64]) -> Result<f64> {
        self.check(z.len())?;
        let mut y: Vec<f64> = self.perm.iter().map(|&o| z[o]).collect();
        self.forward(&mut y);
        Ok(y.iter().map(|v| v * v).sum())
    }

    /// `L L^T` mapped back to the original ordering (testing aid).
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                l[(self.row_idx[p], j)] = self.values[p];
            }
        }
        let c = &l * l.transpose();
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                a[(self.perm[i], self.perm[j])] = c[(i, j)];
            }
        }
        a
    }

    fn locate(&self, col: usize, row: usize) -> Option<usize> {
        let (s, e) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[s..e].binary_search(&row).ok().map(|k| s + k)
    }

    /// Entries of `A^{-1}` on the pattern of the factor (Takahashi recurrences).
    ///
    /// Column `j` needs `Z_ik` for all `i, k` below `j` in the pattern of `L`;
    /// they are gathered by scanning the already finished columns `k` with a
    /// dense row marker, so no per-entry search is needed.
    pub fn selected_inverse(&self) -> SelectedInverse<'_> {
        const NONE: usize = usize::MAX;
        let mut z = vec![0.0f64; self.values.len()];
        let mut slot = vec![NONE; self.n];
        let mut lcol = vec![0.0f64; self.n];
        let mut acc: Vec<f64> = Vec::new();
        for j in (0..self.n).rev() {
            let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let ljj = self.values[s];
            let rows = &self.row_idx[s + 1..e];
            for (t, &r) in rows.iter().enumerate() {
                slot[r] = t;
                lcol[r] = self.values[s + 1 + t];
            }
            acc.clear();
            acc.resize(rows.len(), 0.0);
            for (t, &k) in rows.iter().enumerate() {
                let lkj = lcol[k];
                let (ks, ke) = (self.col_ptr[k], self.col_ptr[k + 1]);
                acc[t] += lkj * z[ks];
                for p in ks + 1..ke {
                    let r = self.row_idx[p];
                    let u = slot[r];
                    if u != NONE {
                        let zrk = z[p];
                        acc[u] += lkj * zrk;
                        acc[t] += lcol[r] * zrk;
                    }
                }
            }
            let mut diag = 1.0 / (ljj * ljj);
            for (t, &r) in rows.iter().enumerate() {
                let v = -acc[t] / ljj;
                z[s + 1 + t] = v;
                diag -= lcol[r] * v / ljj;
                slot[r] = NONE;
            }
            z[s] = diag;
        }
        SelectedInverse { factor: self, z }
    }
}

/// Inverse entries restricted to the symbolic pattern of a sparse factor.
pub struct SelectedInverse<'a> {
    factor: &'a SparseCholesky,
    z: Vec<f64>,
}

impl SelectedInverse<'_> {
    /// `[A^{-1}]_{ij}` in the original ordering, when `(i, j)` lies in the factor pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (self.factor.iperm[i], self.factor.iperm[j]);
        let (c, r) = if a < b { (a, b) } else { (b, a) };
        self.factor.locate(c, r).map(|p| self.z[p])
    }
}

/// Elimination tree of the matrix whose upper triangle is given by columns.
fn etree(n: usize, cu_ptr: &[usize], cu_idx: &[usize]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in cu_ptr[k]..cu_ptr[k + 1] {
            let mut i = cu_idx[p];
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L`, returned as `stack[top..]` in topological order.
fn ereach(
    k: usize,
    cu_ptr: &[usize],
    cu_idx: &[usize],
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [bool],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = true;
    for p in cu_ptr[k]..cu_ptr[k + 1] {
        let mut i = cu_idx[p];
        if i > k {
            continue;
        }
        let mut len = 0;
        while !mark[i] {
            stack[len] = i;
            len += 1;
            mark[i] = true;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    for &i in &stack[top..] {
        mark[i] = false;
    }
    mark[k] = false;
    top
}

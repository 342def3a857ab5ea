//! Sparse LDLᵀ factorization of symmetric matrices.
//!
//! Up-looking elimination-tree algorithm on a reverse Cuthill-McKee ordering.
//! No pivoting: the factorization succeeds on SPD matrices and on indefinite
//! matrices whose leading minors stay away from zero.

use std::collections::VecDeque;

use super::CsrMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Relative pivot size below which the factorization is declared broken.
const PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    shift: f64,
}

impl LdlFactor {
    /// Factors `a` (square, symmetric; only entries with `col <= row` in the
    /// permuted order are read, so both triangles must be stored).
    pub fn new(a: &CsrMatrix, block: &'static str) -> Result<Self> {
        Self::with_shift(a, 0.0, block)
    }

    /// Factors `a + shift·I`.
    pub fn with_shift(a: &CsrMatrix, shift: f64, block: &'static str) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "LDLᵀ needs a square matrix");
        let n = a.nrows();
        let perm = rcm_ordering(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        // Lower triangle of the permuted matrix, row k = column k of the upper.
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for old_i in 0..n {
            let i = inv[old_i];
            let (cols, vals) = a.row(old_i);
            for (&old_j, &v) in cols.iter().zip(vals) {
                let j = inv[old_j];
                if j <= i {
                    rows[i].push((j, v));
                }
            }
        }
        for (k, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if shift != 0.0 {
                match row.last_mut() {
                    Some(last) if last.0 == k => last.1 += shift,
                    _ => row.push((k, shift)),
                }
            }
        }

        // Symbolic: elimination tree and column counts.
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &(i0, _) in &rows[k] {
                let mut i = i0;
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        // Numeric.
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut count = vec![0usize; n];
        let diag_scale = rows
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.last().filter(|e| e.0 == k).map(|e| e.1.abs()))
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        flag.iter_mut().for_each(|f| *f = NONE);
        for k in 0..n {
            y[k] = 0.0;
            let mut top = n;
            flag[k] = k;
            for &(i0, v) in &rows[k] {
                y[i0] += v;
                let mut len = 0;
                let mut i = i0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let p2 = lp[i] + count[i];
                for p in lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[p2] = k;
                lx[p2] = l_ki;
                count[i] += 1;
            }
            if !(d[k].abs() > PIVOT_TOL * diag_scale) {
                let dmin = d[..=k].iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                return Err(Error::Factorization {
                    block,
                    pivot: perm[k],
                    condition: dmin / diag_scale,
                });
            }
        }

        Ok(LdlFactor {
            n,
            perm,
            lp,
            li,
            lx,
            d,
            shift,
        })
    }

    /// Factors `a`; on breakdown retries once with the diagonal shift
    /// `1e-8 · trace(a) / n`.
    pub fn new_with_fallback_shift(a: &CsrMatrix, block: &'static str) -> Result<Self> {
        match Self::new(a, block) {
            Ok(f) => Ok(f),
            Err(Error::Factorization { .. }) => {
                let n = a.nrows().max(1);
                let trace: f64 = a.diagonal().iter().sum();
                Self::with_shift(a, 1e-8 * trace.abs() / n as f64, block)
            }
            Err(e) => Err(e),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    /// Number of negative pivots (matrix inertia).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    /// Smallest over largest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        let (lo, hi) = self
            .d
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..self.n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..self.n).rev() {
            let mut xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                xj -= self.lx[p] * x[self.li[p]];
            }
            x[j] = xj;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj = |i: usize| a.row(i).0.iter().copied().filter(move |&j| j != i);
    let degree: Vec<usize> = (0..n).map(|i| adj(i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, seen: &mut Vec<bool>| -> (Vec<usize>, usize) {
        // Returns visit order and the last node of the deepest level.
        let mut queue = VecDeque::new();
        let mut out = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            out.push(u);
            let mut nbrs: Vec<usize> = adj(u).filter(|&v| !seen[v]).collect();
            nbrs.sort_by_key(|&v| (degree[v], v));
            for v in nbrs {
                seen[v] = true;
                queue.push_back(v);
            }
        }
        let last = *out.last().unwrap();
        (out, last)
    };

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start: one extra sweep from the far end.
        let mut scratch = visited.clone();
        let (_, far) = bfs_levels(seed, &mut scratch);
        let (component, _) = bfs_levels(far, &mut visited);
        order.extend(component);
    }
    order.reverse();
    order
}

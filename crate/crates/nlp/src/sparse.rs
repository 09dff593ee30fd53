//! Sparse symmetric LDLᵀ factorization without pivoting, elimination-tree
//! style as in QDLDL. The fill-reducing permutation and symbolic structure are
//! computed once and reused by numeric refactorizations.
//!
//! The matrix must be quasi-definite, possibly after regularization. The
//! number of positive pivots is reported for inertia checks.

use std::collections::BTreeSet;

use crate::NlpError;

const NONE: usize = usize::MAX;

/// Lower-triangular sparsity pattern of a symmetric matrix, assembled once and
/// then filled with values by slot index.
#[derive(Debug, Clone)]
pub struct SymmetricPattern {
    n: usize,
    /// (row, col) with row >= col, in the order entries were registered.
    entries: Vec<(usize, usize)>,
}

impl SymmetricPattern {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Registers an entry and returns its slot. Entries above the diagonal are
    /// mirrored to the lower triangle. Duplicates are allowed and summed.
    pub fn push(&mut self, row: usize, col: usize) -> usize {
        assert!(row < self.n && col < self.n, "entry out of range");
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        self.entries.push((r, c));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    /// y = A x for the symmetric matrix whose lower triangle holds `values`.
    pub fn mul_vec(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (&(r, c), &v) in self.entries.iter().zip(values) {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
    }
}

/// Minimum-degree ordering on the adjacency graph of the pattern.
///
/// Ties break toward the smaller index so the ordering is deterministic.
pub fn minimum_degree_ordering(pattern: &SymmetricPattern) -> Vec<usize> {
    let n = pattern.n;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(r, c) in &pattern.entries {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let dense_cut = ((10.0 * (n as f64).sqrt()) as usize).max(16);
    let dense: Vec<usize> = (0..n).filter(|&i| adj[i].len() > dense_cut).collect();
    let mut eliminated = vec![false; n];
    for &v in &dense {
        eliminated[v] = true;
        for u in std::mem::take(&mut adj[v]) {
            adj[u].remove(&v);
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n)
        .filter(|&i| !eliminated[i])
        .map(|i| (adj[i].len(), i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&(deg, v)) = queue.iter().next() {
        queue.remove(&(deg, v));
        eliminated[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for &u in &nbrs {
            let old = adj[u].len();
            adj[u].remove(&v);
            for &w in &nbrs {
                if w != u {
                    adj[u].insert(w);
                }
            }
            let new = adj[u].len();
            if new != old && !eliminated[u] {
                queue.remove(&(old, u));
                queue.insert((new, u));
            }
        }
        adj[v].clear();
    }
    order.extend(dense);
    order
}

/// Symbolic + numeric LDLᵀ factorization of a fixed-pattern symmetric matrix.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    /// perm[k] = original index placed at position k.
    perm: Vec<usize>,
    /// Upper-triangular CSC of the permuted matrix.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// For each pattern slot, the position in the permuted CSC values.
    slot_to_csc: Vec<usize>,
    etree: Vec<usize>,
    lnz: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    ax: Vec<f64>,
}

impl LdlFactor {
    /// Builds the ordering and symbolic factorization for `pattern`. Every
    /// diagonal entry must be present in the pattern.
    pub fn analyze(pattern: &SymmetricPattern) -> Self {
        let n = pattern.n;
        let perm = minimum_degree_ordering(pattern);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }

        // Permuted upper-triangular coordinates; col = max, row = min.
        let coords: Vec<(usize, usize)> = pattern
            .entries
            .iter()
            .map(|&(r, c)| {
                let (pr, pc) = (iperm[r], iperm[c]);
                if pr <= pc {
                    (pc, pr)
                } else {
                    (pr, pc)
                }
            })
            .collect();
        let mut uniq: Vec<(usize, usize)> = coords.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let mut ap = vec![0usize; n + 1];
        for &(col, _) in &uniq {
            ap[col + 1] += 1;
        }
        for j in 0..n {
            ap[j + 1] += ap[j];
        }
        let ai: Vec<usize> = uniq.iter().map(|&(_, row)| row).collect();
        let slot_to_csc = coords
            .iter()
            .map(|key| uniq.binary_search(key).expect("coordinate present"))
            .collect();
        for j in 0..n {
            let has_diag = ai[ap[j]..ap[j + 1]].contains(&j);
            assert!(has_diag, "pattern is missing a diagonal entry");
        }

        // Elimination tree and column counts.
        let mut work = vec![0usize; n];
        let mut lnz = vec![0usize; n];
        let mut etree = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let nnz = ai.len();
        Self {
            n,
            perm,
            ap,
            ai,
            slot_to_csc,
            etree,
            lnz,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            ax: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of nonzeros in the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization. Returns the number of positive pivots.
    pub fn factor(&mut self, values: &[f64]) -> Result<usize, NlpError> {
        assert_eq!(values.len(), self.slot_to_csc.len());
        let n = self.n;
        self.ax.iter_mut().for_each(|v| *v = 0.0);
        for (slot, &v) in values.iter().enumerate() {
            self.ax[self.slot_to_csc[slot]] += v;
        }
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut positive = 0;
        debug_assert_eq!(self.lnz.iter().sum::<usize>(), self.lp[n]);

        for k in 0..n {
            self.d[k] = 0.0;
            let mut nnz_y = 0;
            for p in self.ap[k]..self.ap[k + 1] {
                let bidx = self.ai[p];
                if bidx == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y_vals[bidx] = self.ax[p];
                if !y_used[bidx] {
                    y_used[bidx] = true;
                    elim[0] = bidx;
                    let mut nnz_e = 1;
                    let mut next = self.etree[bidx];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[nnz_e] = next;
                        nnz_e += 1;
                        next = self.etree[next];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        y_idx[nnz_y] = elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }
            for idx in (0..nnz_y).rev() {
                let c = y_idx[idx];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..tmp {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                self.lx[tmp] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            let dk = self.d[k];
            if dk == 0.0 || !dk.is_finite() {
                return Err(NlpError::SingularMatrix);
            }
            if dk > 0.0 {
                positive += 1;
            }
            self.dinv[k] = 1.0 / dk;
        }
        Ok(positive)
    }

    /// Solves A x = b in place using the most recent numeric factorization.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_from(pattern: &SymmetricPattern, values: &[f64]) -> Vec<Vec<f64>> {
        let n = pattern.dim();
        let mut a = vec![vec![0.0; n]; n];
        for (&(r, c), &v) in pattern.entries().iter().zip(values) {
            a[r][c] += v;
            if r != c {
                a[c][r] += v;
            }
        }
        a
    }

    #[test]
    fn solves_quasi_definite_kkt() {
        // [[4, 1, 1], [1, 3, 0], [1, 0, -1e-2]]
        let mut p = SymmetricPattern::new(3);
        let s: Vec<usize> = vec![p.push(0, 0), p.push(1, 1), p.push(2, 2), p.push(1, 0), p.push(2, 0)];
        let mut vals = vec![0.0; p.len()];
        vals[s[0]] = 4.0;
        vals[s[1]] = 3.0;
        vals[s[2]] = -1e-2;
        vals[s[3]] = 1.0;
        vals[s[4]] = 1.0;
        let mut f = LdlFactor::analyze(&p);
        let pos = f.factor(&vals).unwrap();
        assert_eq!(pos, 2);
        let b = vec![1.0, 2.0, 3.0];
        let mut x = b.clone();
        f.solve_in_place(&mut x);
        let a = dense_from(&p, &vals);
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicates_are_summed_and_zero_pivot_detected() {
        let mut p = SymmetricPattern::new(2);
        let a = p.push(0, 0);
        let b = p.push(0, 0);
        let c = p.push(1, 1);
        let mut f = LdlFactor::analyze(&p);
        let mut vals = vec![0.0; 3];
        vals[a] = 1.0;
        vals[b] = 1.0;
        vals[c] = 0.0;
        assert!(matches!(f.factor(&vals), Err(NlpError::SingularMatrix)));
        vals[c] = 5.0;
        assert_eq!(f.factor(&vals).unwrap(), 2);
        let mut x = vec![2.0, 5.0];
        f.solve_in_place(&mut x);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tridiagonal_with_arrow_matches_dense_residual() {
        let n = 40;
        let mut p = SymmetricPattern::new(n);
        let mut vals = Vec::new();
        for i in 0..n {
            p.push(i, i);
            vals.push(if i == n - 1 { -3.0 } else { 4.0 + i as f64 * 0.1 });
        }
        for i in 1..n - 1 {
            p.push(i, i - 1);
            vals.push(-1.0);
        }
        for i in 0..n - 1 {
            p.push(n - 1, i);
            vals.push(0.3);
        }
        let mut f = LdlFactor::analyze(&p);
        let pos = f.factor(&vals).unwrap();
        assert_eq!(pos, n - 1);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        f.solve_in_place(&mut x);
        let mut r = vec![0.0; n];
        p.mul_vec(&vals, &x, &mut r);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10, "row {i}");
        }
    }
}

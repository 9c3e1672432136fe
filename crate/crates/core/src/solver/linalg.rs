//! Sparse symmetric LDL^T factorization for the interior-point KKT systems.
//!
//! Up-looking factorization over an elimination tree (the classic LDL
//! algorithm). The KKT matrices are symmetric quasi-definite after
//! regularization, so the factorization exists for any symmetric ordering;
//! the caller supplies a bandwidth-reducing permutation and per-index
//! expected pivot signs so the factorization doubles as an inertia check.

/// Compressed sparse column pattern of the upper triangle (row <= col),
/// rows sorted within each column, diagonal entry present in every column.
#[derive(Clone, Debug)]
pub struct SparseSym {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSym {
    /// Build the pattern from (row, col) pairs of the upper triangle.
    /// Duplicates collapse; missing diagonal entries are inserted.
    pub fn from_pairs(n: usize, pairs: &mut Vec<(usize, usize)>) -> Self {
        for d in 0..n {
            pairs.push((d, d));
        }
        pairs.sort_unstable_by_key(|&(r, c)| (c, r));
        pairs.dedup();
        let mut col_ptr = vec![0usize; n + 1];
        for &(_, c) in pairs.iter() {
            col_ptr[c + 1] += 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let row_idx: Vec<usize> = pairs.iter().map(|&(r, _)| r).collect();
        let values = vec![0.0; row_idx.len()];
        SparseSym { n, col_ptr, row_idx, values }
    }

    pub fn zero_values(&mut self) {
        self.values.fill(0.0);
    }

    /// Add `v` at (i, j); either triangle accepted. Panics if the slot is not
    /// in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let lo = self.col_ptr[c];
        let hi = self.col_ptr[c + 1];
        match self.row_idx[lo..hi].binary_search(&r) {
            Ok(pos) => self.values[lo + pos] += v,
            Err(_) => panic!("entry ({i},{j}) outside KKT pattern"),
        }
    }
}

/// Symbolic analysis: elimination tree and column counts.
#[derive(Clone, Debug)]
pub struct LdlSymbolic {
    n: usize,
    parent: Vec<isize>,
    l_col_ptr: Vec<usize>,
}

impl LdlSymbolic {
    pub fn analyze(a: &SparseSym) -> Self {
        let n = a.n;
        let mut parent = vec![-1isize; n];
        let mut flag = vec![usize::MAX; n];
        let mut l_nz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let mut i = a.row_idx[p];
                while i < k && flag[i] != k {
                    if parent[i] == -1 {
                        parent[i] = k as isize;
                    }
                    l_nz[i] += 1;
                    flag[i] = k;
                    i = parent[i] as usize;
                }
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_col_ptr[k + 1] = l_col_ptr[k] + l_nz[k];
        }
        LdlSymbolic { n, parent, l_col_ptr }
    }

    pub fn l_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }
}

/// Numeric LDL^T factor.
pub struct LdlFactor {
    n: usize,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    pub d: Vec<f64>,
    // scratch
    y: Vec<f64>,
    pattern: Vec<usize>,
    flag: Vec<usize>,
    l_next: Vec<usize>,
}

pub enum FactorError {
    /// Pivot magnitude fell below the breakdown tolerance at this index.
    Breakdown(usize),
}

impl LdlFactor {
    pub fn new(sym: &LdlSymbolic) -> Self {
        LdlFactor {
            n: sym.n,
            l_col_ptr: sym.l_col_ptr.clone(),
            l_row_idx: vec![0; sym.l_nnz()],
            l_values: vec![0.0; sym.l_nnz()],
            d: vec![0.0; sym.n],
            y: vec![0.0; sym.n],
            pattern: vec![0; sym.n],
            flag: vec![usize::MAX; sym.n],
            l_next: vec![0; sym.n],
        }
    }

    /// Factorize `a`, aborting when any |pivot| drops below `breakdown_tol`.
    pub fn factorize(
        &mut self,
        a: &SparseSym,
        sym: &LdlSymbolic,
        breakdown_tol: f64,
    ) -> Result<(), FactorError> {
        let n = self.n;
        for k in 0..n {
            self.l_next[k] = self.l_col_ptr[k];
            self.flag[k] = usize::MAX;
            self.y[k] = 0.0;
        }
        for k in 0..n {
            // Scatter column k of A (upper triangle) and collect the pattern
            // of row k of L in topological order.
            let mut top = n;
            self.flag[k] = k;
            self.y[k] = 0.0;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let i0 = a.row_idx[p];
                self.y[i0] += a.values[p];
                let mut len = 0;
                let mut i = i0;
                while i < k && self.flag[i] != k {
                    self.pattern[len] = i;
                    len += 1;
                    self.flag[i] = k;
                    i = if sym.parent[i] >= 0 { sym.parent[i] as usize } else { k };
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    self.pattern[top] = self.pattern[len];
                }
            }
            let mut dk = self.y[k];
            self.y[k] = 0.0;
            for t in top..n {
                let i = self.pattern[t];
                let yi = self.y[i];
                self.y[i] = 0.0;
                let p2 = self.l_next[i];
                for p in self.l_col_ptr[i]..p2 {
                    self.y[self.l_row_idx[p]] -= self.l_values[p] * yi;
                }
                let l_ki = yi / self.d[i];
                dk -= l_ki * yi;
                self.l_row_idx[p2] = k;
                self.l_values[p2] = l_ki;
                self.l_next[i] = p2 + 1;
            }
            if dk.abs() < breakdown_tol || !dk.is_finite() {
                return Err(FactorError::Breakdown(k));
            }
            self.d[k] = dk;
        }
        Ok(())
    }

    /// Signature of D: (positives, negatives).
    pub fn inertia(&self) -> (usize, usize) {
        let pos = self.d.iter().filter(|&&v| v > 0.0).count();
        (pos, self.n - pos)
    }

    /// Solve `L D L^T x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let bi = b[i];
            if bi != 0.0 {
                for p in self.l_col_ptr[i]..self.l_col_ptr[i + 1] {
                    b[self.l_row_idx[p]] -= self.l_values[p] * bi;
                }
            }
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut bi = b[i];
            for p in self.l_col_ptr[i]..self.l_col_ptr[i + 1] {
                bi -= self.l_values[p] * b[self.l_row_idx[p]];
            }
            b[i] = bi;
        }
    }
}

/// Multiply the symmetric matrix by a vector (for iterative refinement).
pub fn sym_matvec(a: &SparseSym, x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for c in 0..a.n {
        for p in a.col_ptr[c]..a.col_ptr[c + 1] {
            let r = a.row_idx[p];
            let v = a.values[p];
            out[r] += v * x[c];
            if r != c {
                out[c] += v * x[r];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_to_sparse(m: &[&[f64]]) -> SparseSym {
        let n = m.len();
        let mut pairs = Vec::new();
        for c in 0..n {
            for r in 0..=c {
                if m[r][c] != 0.0 {
                    pairs.push((r, c));
                }
            }
        }
        let mut a = SparseSym::from_pairs(n, &mut pairs);
        for c in 0..n {
            for r in 0..=c {
                if m[r][c] != 0.0 {
                    a.add(r, c, m[r][c]);
                }
            }
        }
        a
    }

    #[test]
    fn factor_and_solve_spd() {
        let m: &[&[f64]] = &[
            &[4.0, 1.0, 0.0, 0.5],
            &[1.0, 3.0, 0.2, 0.0],
            &[0.0, 0.2, 2.0, 0.3],
            &[0.5, 0.0, 0.3, 5.0],
        ];
        let a = dense_to_sparse(m);
        let sym = LdlSymbolic::analyze(&a);
        let mut f = LdlFactor::new(&sym);
        f.factorize(&a, &sym, 1e-14).unwrap_or_else(|_| panic!("breakdown"));
        assert_eq!(f.inertia(), (4, 0));

        let xs = [1.0, -2.0, 0.5, 3.0];
        let mut b = vec![0.0; 4];
        sym_matvec(&a, &xs, &mut b);
        f.solve(&mut b);
        for i in 0..4 {
            assert_relative_eq!(b[i], xs[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn indefinite_saddle_inertia() {
        // [[I2, A^T], [A, -d]] with A = [1, 1]: inertia (2, 1).
        let m: &[&[f64]] = &[&[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0], &[1.0, 1.0, -1e-8]];
        let a = dense_to_sparse(m);
        let sym = LdlSymbolic::analyze(&a);
        let mut f = LdlFactor::new(&sym);
        f.factorize(&a, &sym, 1e-30).unwrap_or_else(|_| panic!("breakdown"));
        assert_eq!(f.inertia(), (2, 1));

        let xs = [0.3, -0.7, 2.0];
        let mut b = vec![0.0; 3];
        sym_matvec(&a, &xs, &mut b);
        f.solve(&mut b);
        for i in 0..3 {
            assert_relative_eq!(b[i], xs[i], max_relative = 1e-9, epsilon = 1e-9);
        }
    }
}

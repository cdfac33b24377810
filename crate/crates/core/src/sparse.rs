//! Sparse symmetric matrices with a fixed pattern, an up-looking LDL^T
//! factorization, and a Jacobi-preconditioned conjugate-gradient fallback.
//!
//! The Newton systems here are small enough (thousands of DoF) that a
//! natural-order simplicial factorization is entirely adequate.

const NONE: usize = usize::MAX;

/// Symmetric sparse matrix in CSR layout storing both triangles.
///
/// Column indices are sorted within each row and the diagonal is always
/// present, so the upper triangle of column `j` can be read off as the
/// prefix of row `j`.
#[derive(Debug, Clone)]
pub struct SymCsr {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymCsr {
    /// Builds a zero matrix whose pattern is the symmetric closure of
    /// `pairs` plus the full diagonal.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in pairs {
            debug_assert!(i < n && j < n);
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (i, neighbors) in adj.iter_mut().enumerate() {
            neighbors.push(i);
            neighbors.sort_unstable();
            neighbors.dedup();
            col_idx.extend_from_slice(neighbors);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        SymCsr {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Storage slot of entry `(i, j)`, if it is in the pattern.
    #[inline]
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` at `(i, j)`; the entry must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .index_of(i, j)
            .expect("entry outside the assembled sparsity pattern");
        self.values[p] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.index_of(i, i).map_or(0.0, |p| self.values[p]))
            .collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = acc;
        }
    }

    /// Iterates the upper triangle of column `j` as `(row, value)` with
    /// `row <= j`, rows ascending.
    #[inline]
    fn upper_column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let start = self.row_ptr[j];
        let end = self.row_ptr[j + 1];
        self.col_idx[start..end]
            .iter()
            .zip(&self.values[start..end])
            .take_while(move |(&i, _)| i <= j)
            .map(|(&i, &v)| (i, v))
    }

    /// Maximum absolute diagonal entry; used to scale regularization shifts.
    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n)
            .filter_map(|i| self.index_of(i, i))
            .map(|p| self.values[p].abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    /// Column at which a non-positive pivot appeared.
    pub column: usize,
}

/// Symbolic structure of the LDL^T factorization (elimination tree and
/// column counts), reusable across refactorizations of the same pattern.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    parent: Vec<usize>,
    col_ptr: Vec<usize>,
}

impl LdlSymbolic {
    pub fn analyze(a: &SymCsr) -> Self {
        let n = a.n();
        let mut parent = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for k in 0..n {
            flag[k] = k;
            for (i, _) in a.upper_column(k) {
                let mut i = i;
                while i < k && flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut acc = 0usize;
        col_ptr.push(0);
        for &c in &lnz {
            acc += c;
            col_ptr.push(acc);
        }
        LdlSymbolic { parent, col_ptr }
    }
}

/// Numeric LDL^T factors: `A + shift*I = L D L^T` with unit lower `L`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    /// Factorizes `A + shift*I`, requiring strictly positive pivots.
    pub fn factor(
        a: &SymCsr,
        symbolic: &LdlSymbolic,
        shift: f64,
    ) -> Result<Self, NotPositiveDefinite> {
        let n = a.n();
        let nnz = symbolic.col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut next = symbolic.col_ptr[..n].to_vec();
        let mut flag = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut order = vec![0usize; n];

        for k in 0..n {
            flag[k] = k;
            let mut top = n;
            for (i, aik) in a.upper_column(k) {
                if i == k {
                    y[k] += aik;
                    continue;
                }
                y[i] += aik;
                let mut len = 0;
                let mut ii = i;
                while flag[ii] != k {
                    stack[len] = ii;
                    len += 1;
                    flag[ii] = k;
                    ii = symbolic.parent[ii];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    order[top] = stack[len];
                }
            }
            d[k] = y[k] + shift;
            y[k] = 0.0;
            for s in top..n {
                let i = order[s];
                let yi = y[i];
                y[i] = 0.0;
                let l_ki = yi / d[i];
                for p in symbolic.col_ptr[i]..next[i] {
                    y[row_idx[p]] -= lx[p] * yi;
                }
                row_idx[next[i]] = k;
                lx[next[i]] = l_ki;
                next[i] += 1;
                d[k] -= l_ki * yi;
            }
            if !(d[k] > 0.0) || !d[k].is_finite() {
                return Err(NotPositiveDefinite { column: k });
            }
        }

        Ok(LdlFactor {
            n,
            col_ptr: symbolic.col_ptr.clone(),
            row_idx,
            lx,
            d,
        })
    }

    /// Solves `(A + shift*I) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let bi = b[i];
            for p in self.col_ptr[i]..self.col_ptr[i + 1] {
                b[self.row_idx[p]] -= self.lx[p] * bi;
            }
        }
        for i in 0..self.n {
            b[i] /= self.d[i];
        }
        for i in (0..self.n).rev() {
            let mut acc = b[i];
            for p in self.col_ptr[i]..self.col_ptr[i + 1] {
                acc -= self.lx[p] * b[self.row_idx[p]];
            }
            b[i] = acc;
        }
    }
}

/// Jacobi-preconditioned conjugate gradients on an implicit operator.
///
/// Returns `(iterations, converged)`; the solution is accumulated in `x`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    diag: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (usize, bool) {
    let n = b.len();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > f64::MIN_POSITIVE { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];

    for it in 0..max_iter {
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= rel_tol * b_norm {
            return (it, true);
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            return (it, false);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (max_iter, r_norm <= rel_tol * b_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Random sparse SPD matrix as (dense mirror, sparse) pair.
    fn random_spd(n: usize, seed: u64) -> (DMatrix<f64>, SymCsr) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.25 {
                    let v = rng.random_range(-1.0..1.0);
                    dense[(i, j)] = v;
                    dense[(j, i)] = v;
                    pairs.push((i, j));
                }
            }
        }
        // Diagonal dominance makes it SPD.
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| dense[(i, j)].abs()).sum();
            dense[(i, i)] = row_sum + 1.0 + rng.random::<f64>();
        }
        let mut sparse = SymCsr::from_pairs(n, pairs.iter().copied());
        for i in 0..n {
            for j in 0..n {
                if dense[(i, j)] != 0.0 {
                    sparse.add(i, j, dense[(i, j)]);
                }
            }
        }
        (dense, sparse)
    }

    #[test]
    fn ldl_matches_dense_solve() {
        for seed in 0..5 {
            let n = 40;
            let (dense, sparse) = random_spd(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

            let symbolic = LdlSymbolic::analyze(&sparse);
            let factor = LdlFactor::factor(&sparse, &symbolic, 0.0).unwrap();
            let mut x = b.clone();
            factor.solve_in_place(&mut x);

            let expected = dense
                .clone()
                .cholesky()
                .unwrap()
                .solve(&nalgebra::DVector::from_column_slice(&b));
            for i in 0..n {
                assert!(
                    (x[i] - expected[i]).abs() <= 1e-9 * expected.norm().max(1.0),
                    "mismatch at {i}: {} vs {}",
                    x[i],
                    expected[i]
                );
            }
        }
    }

    #[test]
    fn ldl_detects_indefinite() {
        let mut a = SymCsr::from_pairs(2, [(0, 1)]);
        a.add(0, 0, 1.0);
        a.add(1, 1, -2.0);
        let symbolic = LdlSymbolic::analyze(&a);
        assert!(LdlFactor::factor(&a, &symbolic, 0.0).is_err());
        // A large enough shift fixes it.
        assert!(LdlFactor::factor(&a, &symbolic, 3.0).is_ok());
    }

    #[test]
    fn matvec_matches_dense() {
        let (dense, sparse) = random_spd(25, 7);
        let x: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; 25];
        sparse.matvec(&x, &mut y);
        let expected = &dense * nalgebra::DVector::from_column_slice(&x);
        for i in 0..25 {
            assert!((y[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let (_, sparse) = random_spd(60, 3);
        let b: Vec<f64> = (0..60).map(|i| ((i * i) as f64 * 0.01).cos()).collect();
        let mut x = vec![0.0; 60];
        let diag = sparse.diagonal();
        let (_, converged) = pcg(
            |v, out| sparse.matvec(v, out),
            &b,
            &mut x,
            &diag,
            1e-12,
            1000,
        );
        assert!(converged);
        let mut residual = vec![0.0; 60];
        sparse.matvec(&x, &mut residual);
        for i in 0..60 {
            assert!((residual[i] - b[i]).abs() < 1e-8);
        }
    }
}

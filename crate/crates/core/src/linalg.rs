//! Sparse storage for the coupled system and the direct linear solver.
//!
//! The Jacobian couples the six unknowns of an element (three pressure then
//! three saturation nodal values) with those of its face neighbours, so its
//! sparsity is a fixed pattern of dense 6x6 blocks known from the mesh.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Col;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// Unknowns per element.
pub const BLOCK: usize = 6;

/// Compressed-column structure shared by all matrices on the same mesh.
#[derive(Debug)]
pub struct BlockPattern {
    /// Per element, itself and its face neighbours in increasing order.
    neighbors: Vec<Vec<usize>>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl BlockPattern {
    pub fn from_mesh<T: Real>(mesh: &TriMesh<T>) -> Self {
        let ne = mesh.num_elements();
        let neighbors: Vec<Vec<usize>> = (0..ne)
            .map(|e| {
                let mut nb: Vec<usize> = (0..3).filter_map(|k| mesh.neighbor(e, k)).collect();
                nb.push(e);
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect();
        let mut col_ptr = Vec::with_capacity(ne * BLOCK + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for nb in &neighbors {
            for _ in 0..BLOCK {
                for &r in nb {
                    row_idx.extend(r * BLOCK..(r + 1) * BLOCK);
                }
                col_ptr.push(row_idx.len());
            }
        }
        Self {
            neighbors,
            col_ptr,
            row_idx,
        }
    }

    pub fn dim(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// Storage index of entry `(BLOCK * re + i, BLOCK * ce + j)`.
    #[inline]
    fn position(&self, re: usize, ce: usize, i: usize, j: usize) -> usize {
        let slot = self.neighbors[ce]
            .iter()
            .position(|&r| r == re)
            .unwrap_or_else(|| panic!("elements {re} and {ce} are not coupled"));
        self.col_ptr[ce * BLOCK + j] + slot * BLOCK + i
    }
}

/// Square sparse matrix on a [`BlockPattern`].
#[derive(Clone, Debug)]
pub struct BlockMatrix<T> {
    pattern: Arc<BlockPattern>,
    values: Vec<T>,
}

impl<T: Real> BlockMatrix<T> {
    pub fn zeros(pattern: Arc<BlockPattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<BlockPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    /// Adds a dense block coupling row element `re` to column element `ce`.
    pub fn add_block(&mut self, re: usize, ce: usize, block: &[[T; BLOCK]; BLOCK]) {
        let p = &self.pattern;
        let slot = p.neighbors[ce]
            .iter()
            .position(|&r| r == re)
            .unwrap_or_else(|| panic!("elements {re} and {ce} are not coupled"));
        for (j, _) in block[0].iter().enumerate() {
            let base = p.col_ptr[ce * BLOCK + j] + slot * BLOCK;
            for (i, row) in block.iter().enumerate() {
                self.values[base + i] += row[j];
            }
        }
    }

    /// Entry `(i, j)`; zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (re, ce) = (i / BLOCK, j / BLOCK);
        if !self.pattern.neighbors[ce].contains(&re) {
            return T::zero();
        }
        self.values[self.pattern.position(re, ce, i % BLOCK, j % BLOCK)]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim()];
        for (j, &xj) in x.iter().enumerate() {
            let (a, b) = (self.pattern.col_ptr[j], self.pattern.col_ptr[j + 1]);
            for k in a..b {
                y[self.pattern.row_idx[k]] += self.values[k] * xj;
            }
        }
        y
    }

    /// `|A| |x|` entrywise: the size of the terms summed in each row of `A x`.
    pub fn abs_mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim()];
        for (j, &xj) in x.iter().enumerate() {
            let (a, b) = (self.pattern.col_ptr[j], self.pattern.col_ptr[j + 1]);
            for k in a..b {
                y[self.pattern.row_idx[k]] += (self.values[k] * xj).abs();
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for j in 0..n {
            for k in self.pattern.col_ptr[j]..self.pattern.col_ptr[j + 1] {
                d[self.pattern.row_idx[k]][j] = self.values[k].as_f64();
            }
        }
        d
    }

    pub fn to_csc(&self) -> CscMatrix {
        CscMatrix {
            n: self.dim(),
            col_ptr: self.pattern.col_ptr.clone(),
            row_idx: self.pattern.row_idx.clone(),
            values: self.values.iter().map(|v| v.as_f64()).collect(),
        }
    }
}

/// General square compressed-column matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Keeps the nonzero entries of a dense row-major matrix.
    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..n {
            for (i, row) in a.iter().enumerate() {
                if row[j] != 0.0 {
                    row_idx.push(i);
                    values.push(row[j]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (j, &xj) in x.iter().enumerate() {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
        y
    }

    pub fn abs_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (j, &xj) in x.iter().enumerate() {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += (self.values[k] * xj).abs();
            }
        }
        y
    }
}

/// Newton update `delta` with `J delta = -r`.
pub fn linear_solve(j: &CscMatrix, r: &[f64]) -> Result<Vec<f64>> {
    let mut lu = SparseLu::new();
    lu.solve_csc(j, r)
}

/// Sparse LU that keeps the symbolic factorization between solves with the
/// same structure.
#[derive(Default)]
pub struct SparseLu {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    /// Newton update `delta` with `J delta = -r`.
    pub fn solve<T: Real>(&mut self, jac: &BlockMatrix<T>, r: &[T]) -> Result<Vec<T>> {
        let csc = jac.to_csc();
        let r64: Vec<f64> = r.iter().map(|v| v.as_f64()).collect();
        Ok(self.solve_csc(&csc, &r64)?.into_iter().map(T::lit).collect())
    }

    pub fn solve_csc(&mut self, a: &CscMatrix, r: &[f64]) -> Result<Vec<f64>> {
        let n = a.n;
        if r.len() != n || a.col_ptr.len() != n + 1 {
            return Err(Error::LinearSolve(format!(
                "dimension mismatch: matrix {n}, right-hand side {}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) || a.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite input".into()));
        }
        let reuse = matches!(&self.symbolic, Some((cp, ri, _)) if *cp == a.col_ptr && *ri == a.row_idx);
        if !reuse {
            let sym = SymbolicSparseColMatRef::new_checked(n, n, &a.col_ptr, None, &a.row_idx);
            let slu =
                SymbolicLu::try_new(sym).map_err(|e| Error::LinearSolve(format!("symbolic factorization: {e:?}")))?;
            self.symbolic = Some((a.col_ptr.clone(), a.row_idx.clone(), slu));
        }
        let (cp, ri, slu) = self.symbolic.as_ref().expect("symbolic factorization present");
        let sym = SymbolicSparseColMatRef::new_checked(n, n, cp, None, ri);
        let mat = SparseColMatRef::new(sym, &a.values);
        let lu = Lu::try_new_with_symbolic(slu.clone(), mat)
            .map_err(|e| Error::LinearSolve(format!("numeric factorization: {e:?}")))?;
        let rhs = Col::<f64>::from_fn(n, |i| -r[i]);
        let mut x: Vec<f64> = {
            let sol = lu.solve(&rhs);
            (0..n).map(|i| sol[i]).collect()
        };
        // normwise backward error: the residual against the size of the
        // terms it is computed from, meaningful even when r is at round-off
        let backward = |x: &[f64]| -> (Vec<f64>, f64) {
            let res: Vec<f64> = a.mul_vec(x).iter().zip(r).map(|(p, q)| p + q).collect();
            let scale = norm2(&a.abs_mul_vec(x)) + norm2(r);
            let e = norm2(&res) / scale.max(f64::MIN_POSITIVE);
            (res, e)
        };
        // iterative refinement absorbs pivoting round-off
        for _ in 0..2 {
            let (res, e) = backward(&x);
            if !(e > 1e-14) {
                break;
            }
            let corr = lu.solve(&Col::<f64>::from_fn(n, |i| -res[i]));
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += corr[i];
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("singular matrix (non-finite solution)".into()));
        }
        let (_, e) = backward(&x);
        if e > 1e-10 {
            return Err(Error::LinearSolve(format!(
                "numerically singular matrix (backward error {e:e})"
            )));
        }
        Ok(x)
    }
}

pub fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Dense LU with partial pivoting; reference solver for tests and tiny systems.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .expect("nonempty pivot range");
        if a[p][k] == 0.0 || !a[p][k].is_finite() {
            return Err(Error::LinearSolve(format!("zero pivot in column {k}")));
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * b[j]).sum();
        b[k] = (b[k] - s) / a[k][k];
    }
    Ok(b)
}

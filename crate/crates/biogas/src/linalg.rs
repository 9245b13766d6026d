//! Sparse matrices in CSR form and the two iterative solvers used by the
//! physics steps: conjugate gradients for the SPD systems (heat, mass
//! solves) and BiCGStab for the nonsymmetric SUPG and stabilized Darcy
//! systems. Both support symmetric diagonal (Jacobi) scaling.
//!
//! Dirichlet constraints are imposed by symmetric row/column elimination
//! with lifting, which keeps SPD systems SPD.

/// Builder accumulating (row, col, value) triplets; duplicates are summed
/// on finalization.
pub struct TripletMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl TripletMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletMatrix {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row as u32, col as u32, value));
        }
    }

    pub fn finalize(mut self) -> SparseMatrix {
        // Stable sort: duplicate (row, col) contributions are summed in
        // insertion order, so structurally transposed assemblies agree
        // bit for bit.
        self.entries
            .sort_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
        let mut row_counts = vec![0usize; self.nrows];
        let mut cols: Vec<u32> = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(u32, u32)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_counts[r as usize] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        for i in 0..self.nrows {
            row_ptr[i + 1] = row_ptr[i] + row_counts[i];
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            cols,
            vals,
            symmetry: Symmetry::General,
        }
    }
}

/// Symmetry metadata attached to an assembled matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    /// Symmetric but not positive (semi)definite.
    Symmetric,
    /// Symmetric positive (semi)definite; safe for CG.
    SymmetricPositive,
}

/// Compressed-row sparse matrix; immutable after finalization.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    symmetry: Symmetry,
}

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: matrix is {nrows}x{ncols}, vector has length {len}")]
    Dimension {
        nrows: usize,
        ncols: usize,
        len: usize,
    },
    #[error("matrix row {row} has a zero diagonal entry")]
    ZeroDiagonal { row: usize },
    #[error("solver breakdown: {0}")]
    Breakdown(String),
    #[error("matrix entry ({row},{col}) is not finite")]
    NonFinite { row: usize, col: usize },
}

impl SparseMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn identity(n: usize) -> SparseMatrix {
        let mut b = TripletMatrix::new(n, n);
        for i in 0..n {
            b.add(i, i, 1.0);
        }
        let mut m = b.finalize();
        m.symmetry = Symmetry::SymmetricPositive;
        m
    }

    /// Attaches symmetry metadata; callers assemble structurally symmetric
    /// forms and record what they built.
    pub fn with_symmetry(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = symmetry;
        self
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn check_finite(&self) -> Result<(), LinalgError> {
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if !self.vals[k].is_finite() {
                    return Err(LinalgError::NonFinite {
                        row: r,
                        col: self.cols[k] as usize,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k] as usize, self.vals[k]))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows];
        for r in 0..self.nrows.min(self.ncols) {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[k] as usize == r {
                    d[r] = self.vals[k];
                }
            }
        }
        d
    }

    /// Entrywise linear combination of matrices sharing one sparsity
    /// pattern layout (same assembly loop); patterns are merged, so it is
    /// valid for any operands.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> SparseMatrix {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut b = TripletMatrix::new(nrows, ncols);
        for &(coeff, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            if coeff == 0.0 {
                continue;
            }
            for r in 0..nrows {
                for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                    b.add(r, m.cols[k] as usize, coeff * m.vals[k]);
                }
            }
        }
        b.finalize()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletMatrix::new(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                b.add(self.cols[k] as usize, r, self.vals[k]);
            }
        }
        b.finalize()
    }

    /// Imposes `x[dof] = value` constraints by symmetric elimination with
    /// lifting: the right-hand side absorbs the constrained columns, the
    /// rows and columns are zeroed and the diagonal is set to 1.
    pub fn apply_dirichlet(&mut self, rhs: &mut [f64], constraints: &[(usize, f64)]) {
        let mut is_constrained = vec![false; self.nrows];
        let mut value = vec![0.0; self.nrows];
        for &(dof, v) in constraints {
            is_constrained[dof] = true;
            value[dof] = v;
        }
        for r in 0..self.nrows {
            if is_constrained[r] {
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    let c = self.cols[k] as usize;
                    self.vals[k] = if c == r { 1.0 } else { 0.0 };
                }
                rhs[r] = value[r];
            } else {
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    let c = self.cols[k] as usize;
                    if is_constrained[c] {
                        rhs[r] -= self.vals[k] * value[c];
                        self.vals[k] = 0.0;
                    }
                }
            }
        }
    }
}

/// Outcome of an iterative solve. `converged` implies the final residual
/// satisfied the requested relative tolerance.
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Diagonal (Jacobi) scaling D^{-1/2} A D^{-1/2}; preserves symmetry and
/// the solution after back-substitution. Errors when a diagonal entry
/// vanishes.
#[derive(Debug)]
pub struct JacobiScaling {
    inv_sqrt: Vec<f64>,
}

pub fn jacobi_precondition(a: &SparseMatrix) -> Result<JacobiScaling, LinalgError> {
    let diag = a.diagonal();
    let mut inv_sqrt = Vec::with_capacity(diag.len());
    for (row, &d) in diag.iter().enumerate() {
        if d == 0.0 || !d.is_finite() {
            return Err(LinalgError::ZeroDiagonal { row });
        }
        inv_sqrt.push(1.0 / d.abs().sqrt());
    }
    Ok(JacobiScaling { inv_sqrt })
}

impl JacobiScaling {
    pub fn scale_factor(&self, i: usize) -> f64 {
        self.inv_sqrt[i] * self.inv_sqrt[i]
    }

    fn scaled_system(&self, a: &SparseMatrix, b: &[f64]) -> (SparseMatrix, Vec<f64>) {
        let mut sa = a.clone();
        for r in 0..sa.nrows {
            for k in sa.row_ptr[r]..sa.row_ptr[r + 1] {
                let c = sa.cols[k] as usize;
                sa.vals[k] *= self.inv_sqrt[r] * self.inv_sqrt[c];
            }
        }
        let sb: Vec<f64> = b
            .iter()
            .zip(&self.inv_sqrt)
            .map(|(&bi, &s)| bi * s)
            .collect();
        (sa, sb)
    }

    fn unscale_solution(&self, y: &mut [f64]) {
        for (yi, &s) in y.iter_mut().zip(&self.inv_sqrt) {
            *yi *= s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(a: &SparseMatrix, b: &[f64]) -> Result<(), LinalgError> {
    if a.nrows != a.ncols || b.len() != a.nrows {
        return Err(LinalgError::Dimension {
            nrows: a.nrows,
            ncols: a.ncols,
            len: b.len(),
        });
    }
    Ok(())
}

/// Conjugate gradients for symmetric positive definite systems. The
/// reported residual is recomputed as ||b - Ax|| on exit.
pub fn cg_solve(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport), LinalgError> {
    check_dims(a, b)?;
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() <= tol * bnorm {
            break;
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(LinalgError::Breakdown(format!(
                "CG: p'Ap = {pap:.3e}; matrix is not positive definite"
            )));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        iterations += 1;
    }
    let mut residual = a.matvec_alloc(&x);
    for i in 0..n {
        residual[i] = b[i] - residual[i];
    }
    let res = norm(&residual);
    Ok((
        x,
        SolveReport {
            iterations,
            residual: res,
            converged: res <= tol * bnorm,
        },
    ))
}

/// CG with symmetric Jacobi scaling. Convergence is certified on the
/// unscaled residual; correction passes on the scaled system absorb the
/// norm distortion introduced by the scaling.
pub fn cg_solve_jacobi(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport), LinalgError> {
    scaled_correction_solve(a, b, tol, max_iter, cg_solve)
}

/// BiCGStab for general square systems. Convergence is judged on the
/// true residual; when the recursively updated residual drifts, the
/// method restarts from the current iterate.
pub fn bicgstab_solve(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport), LinalgError> {
    check_dims(a, b)?;
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let target = tol * bnorm;
    let mut x = vec![0.0; n];
    let mut total_iterations = 0;
    for _restart in 0..4 {
        let mut r = a.matvec_alloc(&x);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        if norm(&r) <= target || total_iterations >= max_iter {
            break;
        }
        let inner = bicgstab_cycle(
            a,
            &mut x,
            &mut r,
            target,
            max_iter - total_iterations,
        );
        match inner {
            Ok(iters) => total_iterations += iters,
            Err(e) => {
                // A breakdown with no usable progress is a hard error;
                // otherwise fall through to the true-residual check.
                let mut rr = a.matvec_alloc(&x);
                for i in 0..n {
                    rr[i] = b[i] - rr[i];
                }
                if norm(&rr) <= target {
                    break;
                }
                return Err(e);
            }
        }
    }
    let mut residual = a.matvec_alloc(&x);
    for i in 0..n {
        residual[i] = b[i] - residual[i];
    }
    let true_res = norm(&residual);
    Ok((
        x,
        SolveReport {
            iterations: total_iterations,
            residual: true_res,
            converged: true_res <= target,
        },
    ))
}

/// One BiCGStab cycle updating `x` in place; `r` holds the current true
/// residual on entry. Returns the iteration count of the cycle.
fn bicgstab_cycle(
    a: &SparseMatrix,
    x: &mut [f64],
    r: &mut [f64],
    target: f64,
    max_iter: usize,
) -> Result<usize, LinalgError> {
    let n = r.len();
    let rhat = r.to_vec();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut iterations = 0;
    while iterations < max_iter && norm(r) > target {
        let rho_new = dot(&rhat, r);
        if rho_new.abs() < f64::MIN_POSITIVE * 1e10 {
            return Err(LinalgError::Breakdown(format!(
                "BiCGStab: rho = {rho_new:.3e} at iteration {iterations}"
            )));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        a.matvec(&p, &mut v);
        let rhat_v = dot(&rhat, &v);
        if rhat_v == 0.0 || !rhat_v.is_finite() {
            return Err(LinalgError::Breakdown(format!(
                "BiCGStab: (rhat, Ap) = {rhat_v:.3e} at iteration {iterations}"
            )));
        }
        alpha = rho_new / rhat_v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            r.copy_from_slice(&s);
            iterations += 1;
            break;
        }
        a.matvec(&s, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            return Err(LinalgError::Breakdown(format!(
                "BiCGStab: ||As|| = 0 at iteration {iterations}"
            )));
        }
        omega = dot(&t, &s) / tt;
        if omega == 0.0 {
            return Err(LinalgError::Breakdown(format!(
                "BiCGStab: omega = 0 at iteration {iterations}"
            )));
        }
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        iterations += 1;
    }
    Ok(iterations)
}

/// BiCGStab with symmetric Jacobi scaling; see [`cg_solve_jacobi`] for
/// the convergence contract.
pub fn bicgstab_solve_jacobi(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport), LinalgError> {
    scaled_correction_solve(a, b, tol, max_iter, bicgstab_solve)
}

fn scaled_correction_solve<S>(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    solver: S,
) -> Result<(Vec<f64>, SolveReport), LinalgError>
where
    S: Fn(&SparseMatrix, &[f64], f64, usize) -> Result<(Vec<f64>, SolveReport), LinalgError>,
{
    check_dims(a, b)?;
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let scaling = jacobi_precondition(a)?;
    let (sa, _) = scaling.scaled_system(a, b);
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = b.to_vec();
    let mut res_norm = bnorm;
    for _pass in 0..4 {
        if res_norm <= tol * bnorm || iterations >= max_iter {
            break;
        }
        // Correction system in scaled variables: (S A S) dy = S r.
        let rs: Vec<f64> = residual
            .iter()
            .enumerate()
            .map(|(i, &v)| v * scaling.inv_sqrt[i])
            .collect();
        let inner_tol = (tol * 0.05).max(1e-15);
        let (mut dy, rep) = solver(&sa, &rs, inner_tol, max_iter - iterations)?;
        scaling.unscale_solution(&mut dy);
        for i in 0..n {
            x[i] += dy[i];
        }
        iterations += rep.iterations.max(1);
        residual = a.matvec_alloc(&x);
        for i in 0..n {
            residual[i] = b[i] - residual[i];
        }
        res_norm = norm(&residual);
        if rep.iterations == 0 {
            break;
        }
    }
    Ok((
        x,
        SolveReport {
            iterations,
            residual: res_norm,
            converged: res_norm <= tol * bnorm,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn from_dense(d: &[&[f64]]) -> SparseMatrix {
        let mut b = TripletMatrix::new(d.len(), d[0].len());
        for (i, row) in d.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                b.add(i, j, v);
            }
        }
        b.finalize()
    }

    /// Dense Gaussian elimination with partial pivoting; the independent
    /// oracle for the iterative solvers.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            m.swap(col, pivot);
            rhs.swap(col, pivot);
            let d = m[col][col];
            assert!(d.abs() > 1e-14, "singular oracle system");
            for row in (col + 1)..n {
                let f = m[row][col] / d;
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = rhs[row];
            for k in (row + 1)..n {
                acc -= m[row][k] * x[k];
            }
            x[row] = acc / m[row][row];
        }
        x
    }

    #[test]
    fn cg_identity_converges_in_one_iteration() {
        let a = SparseMatrix::identity(5);
        let b = vec![3.0, -1.0, 0.5, 2.0, 9.0];
        let (x, report) = cg_solve(&a, &b, 1e-12, 100).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_two_by_two_matches_cramer() {
        let a = from_dense(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let (x, report) = cg_solve(&a, &[1.0, 2.0], 1e-14, 100).unwrap();
        assert!(report.converged);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn cg_zero_row_breaks_down_or_stalls() {
        let a = from_dense(&[&[1.0, 0.0], &[0.0, 0.0]]);
        match cg_solve(&a, &[1.0, 1.0], 1e-12, 50) {
            Err(LinalgError::Breakdown(_)) => {}
            Ok((_, report)) => assert!(!report.converged),
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn bicgstab_diagonal() {
        let a = from_dense(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let (x, report) = bicgstab_solve(&a, &[2.0, 3.0], 1e-12, 100).unwrap();
        assert!(report.converged);
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bicgstab_upwind_bidiagonal_matches_forward_substitution() {
        // 1D upwinded advection: lower-bidiagonal, solvable by forward
        // substitution, which serves as the oracle.
        let n = 20;
        let mut b = TripletMatrix::new(n, n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
        }
        let a = b.finalize();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 1.5).collect();
        let mut oracle = vec![0.0; n];
        for i in 0..n {
            let prev = if i > 0 { -1.0 * oracle[i - 1] } else { 0.0 };
            oracle[i] = (rhs[i] - prev) / 2.0;
        }
        let (x, report) = bicgstab_solve(&a, &rhs, 1e-13, 500).unwrap();
        assert!(report.converged);
        for (xi, oi) in x.iter().zip(&oracle) {
            assert!((xi - oi).abs() < 1e-9, "{xi} vs {oi}");
        }
    }

    #[test]
    fn bicgstab_zero_matrix_breaks_down() {
        let a = from_dense(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            bicgstab_solve(&a, &[1.0, 1.0], 1e-12, 10),
            Err(LinalgError::Breakdown(_))
        ));
    }

    #[test]
    fn jacobi_scaling_of_pure_diagonal() {
        let a = from_dense(&[&[4.0]]);
        let s = jacobi_precondition(&a).unwrap();
        assert!((s.scale_factor(0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn jacobi_zero_diagonal_names_row() {
        let a = from_dense(&[&[1.0, 2.0], &[3.0, 0.0]]);
        match jacobi_precondition(&a) {
            Err(LinalgError::ZeroDiagonal { row }) => assert_eq!(row, 1),
            other => panic!("expected zero-diagonal error, got {other:?}"),
        }
    }

    fn random_spd(n: usize, seed: u64) -> (Vec<Vec<f64>>, SparseMatrix) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        // A = G'G + n I is SPD.
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += g[k][i] * g[k][j];
                }
                dense[i][j] = acc + if i == j { n as f64 } else { 0.0 };
            }
        }
        let rows: Vec<&[f64]> = dense.iter().map(|r| r.as_slice()).collect();
        let sparse = from_dense(&rows);
        (dense, sparse)
    }

    #[test]
    fn preconditioned_cg_agrees_with_plain_cg() {
        let (_, a) = random_spd(5, 7);
        let b = vec![1.0, -2.0, 0.3, 4.0, -1.1];
        let (x_plain, r1) = cg_solve(&a, &b, 1e-14, 200).unwrap();
        let (x_prec, r2) = cg_solve_jacobi(&a, &b, 1e-14, 200).unwrap();
        assert!(r1.converged && r2.converged);
        for (p, q) in x_plain.iter().zip(&x_prec) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_matches_dense_elimination_up_to_n50() {
        for (n, seed) in [(10usize, 1u64), (30, 2), (50, 3)] {
            let (dense, a) = random_spd(n, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let oracle = dense_solve(&dense, &b);
            let (x, report) = cg_solve(&a, &b, 1e-13, 10 * n).unwrap();
            assert!(report.converged);
            let scale = oracle.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            for (xi, oi) in x.iter().zip(&oracle) {
                assert!((xi - oi).abs() <= 1e-9 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn report_residual_matches_independent_recomputation() {
        let (_, a) = random_spd(12, 9);
        let b: Vec<f64> = (0..12).map(|i| (i as f64).cos()).collect();
        let (x, report) = cg_solve(&a, &b, 1e-10, 500).unwrap();
        let mut r = a.matvec_alloc(&x);
        for i in 0..12 {
            r[i] = b[i] - r[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((rnorm - report.residual).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_elimination_keeps_solution() {
        // Solve a 3x3 SPD system with x[1] pinned; compare against the
        // dense solve of the reduced system.
        let dense = vec![
            vec![4.0, -1.0, 0.0],
            vec![-1.0, 4.0, -1.0],
            vec![0.0, -1.0, 4.0],
        ];
        let rows: Vec<&[f64]> = dense.iter().map(|r| r.as_slice()).collect();
        let mut a = from_dense(&rows);
        let mut b = vec![1.0, 2.0, 3.0];
        a.apply_dirichlet(&mut b, &[(1, 0.5)]);
        let (x, report) = cg_solve(&a, &b, 1e-14, 100).unwrap();
        assert!(report.converged);
        assert!((x[1] - 0.5).abs() < 1e-14);
        // Reduced system: 4 x0 = 1 + 0.5, 4 x2 = 3 + 0.5.
        assert!((x[0] - 1.5 / 4.0).abs() < 1e-12);
        assert!((x[2] - 3.5 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let mut b = TripletMatrix::new(2, 2);
        b.add(0, 0, 1.0);
        b.add(0, 0, 2.5);
        b.add(1, 0, 1.0);
        let a = b.finalize();
        assert_eq!(a.nnz(), 2);
        let y = a.matvec_alloc(&[1.0, 1.0]);
        assert_eq!(y, vec![3.5, 1.0]);
    }
}

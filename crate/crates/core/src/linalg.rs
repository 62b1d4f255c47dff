//! Sparse symmetric matrices on a shared pattern, sparse Cholesky through faer, and the
//! shift-and-invert iteration for the smallest generalized eigenvalue.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath;

/// Compressed-column pattern with sorted row indices, shared by several matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
}

impl Pattern {
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Position of entry `(row, col)` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (s, e) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[s..e].binary_search(&row).ok().map(|k| s + k)
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }
}

/// Symmetric sparse matrix stored with both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    pub values: Vec<f64>,
}

impl SymSparse {
    pub fn zeros(p: &Pattern) -> Self {
        Self { values: vec![0.0; p.nnz()] }
    }

    /// `y = A x`, one column dot product per entry of `y` (valid by symmetry).
    pub fn matvec(&self, p: &Pattern, x: &[f64]) -> Vec<f64> {
        (0..p.n)
            .into_par_iter()
            .map(|j| {
                let (s, e) = (p.col_ptr[j], p.col_ptr[j + 1]);
                let mut acc = 0.0;
                for k in s..e {
                    acc += self.values[k] * x[p.row_idx[k]];
                }
                acc
            })
            .collect()
    }

    pub fn quad(&self, p: &Pattern, x: &[f64]) -> f64 {
        vecmath::dot(&self.matvec(p, x), x)
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SymSparse, b: f64) -> SymSparse {
        SymSparse { values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect() }
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self, p: &Pattern) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for j in 0..p.n {
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                let i = p.row_idx[k];
                let t = p.position(j, i).map_or(self.values[k].abs(), |q| (self.values[k] - self.values[q]).abs());
                worst = worst.max(t);
            }
        }
        worst / scale
    }

    pub fn row_sums(&self, p: &Pattern) -> Vec<f64> {
        self.matvec(p, &vec![1.0; p.n])
    }

    pub fn diagonal_from(p: &Pattern, diag: &[f64]) -> SymSparse {
        let mut m = SymSparse::zeros(p);
        for (j, d) in diag.iter().enumerate() {
            if let Some(k) = p.position(j, j) {
                m.values[k] = *d;
            }
        }
        m
    }
}

/// Symbolic Cholesky analysis reused for every matrix on the same pattern.
pub struct CholeskySolver {
    pattern: Pattern,
    symbolic: SymbolicLlt<usize>,
}

/// A numeric factorization `LLᵀ`.
pub struct Factor {
    llt: Llt<usize, f64>,
}

impl CholeskySolver {
    pub fn new(pattern: &Pattern) -> Result<Self> {
        let symbolic = SymbolicLlt::try_new(pattern.symbolic(), Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Self { pattern: pattern.clone(), symbolic })
    }

    /// `Ok(None)` when the matrix is not numerically positive definite.
    pub fn factor(&self, a: &SymSparse) -> Result<Option<Factor>> {
        let sym = self.pattern.symbolic();
        let mat = SparseColMatRef::new(sym, &a.values);
        match Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower) {
            Ok(llt) => Ok(Some(Factor { llt })),
            Err(faer::sparse::linalg::LltError::Numeric(_)) => Ok(None),
            Err(e) => Err(Error::LinearAlgebra(format!("{e:?}"))),
        }
    }
}

impl Factor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        let n = x.len();
        self.llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Bound on `‖Ax - λMx‖ / (‖Ax‖ + |λ|‖Mx‖)` at convergence.
    pub tol: f64,
    pub max_iter: usize,
    /// Cap on consecutive failed factorizations while searching for a valid shift.
    pub max_shift_retries: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, max_shift_retries: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `‖Ax - λMx‖ / ‖Mx‖`.
    pub residual: f64,
    pub converged: bool,
    /// Largest shift for which `A - σM` factored: a certified lower bound on the eigenvalue.
    pub lower_bound: f64,
    pub factorizations: usize,
}

fn m_normalize(m: &SymSparse, p: &Pattern, x: &mut [f64]) -> f64 {
    let nrm = m.quad(p, x).sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    nrm
}

/// Smallest eigenvalue of `A x = λ M x` (A symmetric, M symmetric positive definite).
///
/// Shifts σ are only accepted when `A - σM` admits a Cholesky factorization, which
/// certifies `σ < λ₁`. Inverse iteration runs with the accepted shift, and the shift is
/// moved toward the Rayleigh quotient as it converges.
pub fn smallest_eigenpair(a: &SymSparse, m: &SymSparse, p: &Pattern, opts: &EigenOptions) -> Result<EigenPair> {
    if p.n == 0 {
        return Err(Error::LinearAlgebra("empty system".into()));
    }
    let solver = CholeskySolver::new(p)?;
    let mut factorizations = 0;
    let mut x = vec![1.0; p.n];
    m_normalize(m, p, &mut x);
    let mut rho = a.quad(p, &x);

    // Find an initial admissible shift below λ₁.
    let mut sigma = rho.min(0.0) - 1.0;
    let mut step = 1.0f64.max(rho.abs());
    let mut retries = 0;
    let mut factor = loop {
        factorizations += 1;
        match solver.factor(&a.combine(1.0, m, -sigma))? {
            Some(f) => break f,
            None => {
                retries += 1;
                if retries > opts.max_shift_retries {
                    return Err(Error::ShiftRetryExceeded(retries));
                }
                sigma -= step;
                step *= 8.0;
            }
        }
    };
    let mut lower = sigma;

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_rho = f64::INFINITY;
    let mut last_residual = f64::INFINITY;
    let mut best_residual = f64::INFINITY;
    let mut stagnant = 0;
    let mut shift_frozen = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mx = m.matvec(p, &x);
        let mut y = factor.solve(&mx);
        if m_normalize(m, p, &mut y) == 0.0 {
            return Err(Error::LinearAlgebra("inverse iteration collapsed".into()));
        }
        x = y;
        let ax = a.matvec(p, &x);
        let mx = m.matvec(p, &x);
        rho = vecmath::dot(&ax, &x);
        let r: Vec<f64> = ax.iter().zip(&mx).map(|(u, v)| u - rho * v).collect();
        // Scaled by both terms so rows living at very different length scales do not set a
        // roundoff floor above the tolerance.
        let rn = vecmath::norm(&r);
        let scale = vecmath::norm(&ax) + rho.abs() * vecmath::norm(&mx);
        let scaled = rn / scale.max(f64::MIN_POSITIVE);
        residual = rn / vecmath::norm(&mx).max(f64::MIN_POSITIVE);
        let size = rho.abs().max(1.0);
        // ρ ≥ λ₁ ≥ lower, so a narrow bracket settles the value; a quotient that no longer
        // moves at roundoff level is as converged as this arithmetic allows.
        // Residuals that stop shrinking while ρ is steady mark the roundoff floor of
        // K - cP, whose terms nearly cancel close to the critical constant.
        if scaled > 0.5 * best_residual && (last_rho - rho).abs() <= 1e-6 * size {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        best_residual = best_residual.min(scaled);
        if scaled <= opts.tol || rho - lower <= opts.tol * size || stagnant >= 3 {
            converged = true;
            break;
        }
        // Move the shift toward ρ only when the iteration is contracting slowly and the
        // quotient has settled enough to be trusted.
        let gap = rho - lower;
        let settled = (last_rho - rho).abs() < 0.1 * gap;
        let slow = scaled > 0.2 * last_residual;
        last_rho = rho;
        last_residual = scaled;
        if settled && slow && !shift_frozen && gap > 1e-6 * size {
            let mut trial = rho - 0.05 * gap;
            let mut moved = false;
            for _ in 0..3 {
                factorizations += 1;
                if let Some(f) = solver.factor(&a.combine(1.0, m, -trial))? {
                    factor = f;
                    lower = trial;
                    moved = true;
                    break;
                }
                trial = lower + 0.5 * (trial - lower);
            }
            // Factorizations failing this close to ρ are roundoff: keep the last good shift.
            shift_frozen = !moved;
        }
    }
    Ok(EigenPair { value: rho, vector: x, iterations, residual, converged, lower_bound: lower, factorizations })
}

//! Dense feasibility solver for the data-based stabilization LMI
//!
//! ```text
//! [ γ² Ξ₀Λ − I   Ξ₁Λ ]
//! [ (Ξ₁Λ)ᵀ       Ξ₀Λ ]  ⪰ 0,   Ξ₀Λ = (Ξ₀Λ)ᵀ.
//! ```
//!
//! The symmetry equalities are eliminated by writing `Λ = Σ yᵢ Eᵢ` over an
//! orthonormal basis of the kernel of `Λ ↦ Ξ₀Λ − (Ξ₀Λ)ᵀ`. Dropping the
//! constant `−I` leaves the homogeneous block `H(y)`; the LMI is feasible
//! exactly when `λ_min(H(y)) > 0` for some `y` (a positive `H` can be scaled
//! past the `−I`). The solver maximizes `λ_min(H(y))` over `‖y‖ ≤ 1` with a
//! log-det barrier and damped Newton steps, then rescales the maximizer so
//! that the original block has minimum eigenvalue about one.
//!
//! An `Infeasible` verdict means no feasible point was found; it is not a
//! certificate of infeasibility.

use nalgebra::{DMatrix, DVector};

use crate::operators::{ensure_finite, kernel_basis, min_sym_eigenvalue, pseudo_inverse, spectral_norm, symmetrize};
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_FEAS_MARGIN: f64 = 1e-8;
pub const DEFAULT_SYM_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Kernel tolerance for the symmetry map, relative to its largest singular value.
const NULLSPACE_TOL: f64 = 1e-10;
/// Minimum homogeneous margin (in normalized units) treated as positive.
const HOMOGENEOUS_EPS: f64 = 1e-12;
/// Target duality-gap bound of the barrier path.
const GAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub xi0: DMatrix<f64>,
    pub xi1: DMatrix<f64>,
    pub gamma: f64,
    /// Accepted solutions satisfy `min_eig ≥ −feas_margin`.
    pub feas_margin: f64,
    /// Accepted solutions satisfy `‖Ξ₀Λ − (Ξ₀Λ)ᵀ‖_F ≤ sym_tol`.
    pub sym_tol: f64,
}

impl LmiProblem {
    pub fn new(xi0: DMatrix<f64>, xi1: DMatrix<f64>, gamma: f64) -> Result<Self> {
        if xi0.shape() != xi1.shape() {
            return Err(Error::DimensionMismatch(format!(
                "Xi0 is {}x{}, Xi1 is {}x{}",
                xi0.nrows(),
                xi0.ncols(),
                xi1.nrows(),
                xi1.ncols()
            )));
        }
        if xi0.is_empty() {
            return Err(Error::Empty("LMI data matrices are empty".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParams(format!("gamma must lie in (0,1), got {gamma}")));
        }
        ensure_finite(&xi0, "Xi0")?;
        ensure_finite(&xi1, "Xi1")?;
        Ok(Self { xi0, xi1, gamma, feas_margin: DEFAULT_FEAS_MARGIN, sym_tol: DEFAULT_SYM_TOL })
    }

    pub fn with_tolerances(mut self, feas_margin: f64, sym_tol: f64) -> Result<Self> {
        if !(feas_margin > 0.0 && sym_tol > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        self.feas_margin = feas_margin;
        self.sym_tol = sym_tol;
        Ok(self)
    }

    /// State dimension (rows of `Ξ₀`).
    pub fn n(&self) -> usize {
        self.xi0.nrows()
    }

    /// Sample count (columns of `Ξ₀`).
    pub fn samples(&self) -> usize {
        self.xi0.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution {
    /// `N × n`.
    pub lambda: DMatrix<f64>,
    pub min_eig: f64,
    pub sym_residual: f64,
    pub iterations: usize,
}

impl LmiSolution {
    /// `Λ (Ξ₀Λ)⁻¹`, a right inverse of `Ξ₀`.
    pub fn right_inverse(&self, xi0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = symmetrize(&(xi0 * &self.lambda));
        let chol =
            p.cholesky().ok_or_else(|| Error::NumericalBreakdown("Xi0 Lambda is not positive definite".into()))?;
        // Λ P⁻¹ = (P⁻¹ Λᵀ)ᵀ
        Ok(chol.solve(&self.lambda.transpose()).transpose())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LmiOutcome {
    Feasible(LmiSolution),
    /// No feasible point found; `best_margin` is the best minimum eigenvalue
    /// of the block reached along the final search direction.
    Infeasible {
        best_margin: f64,
        iterations: usize,
    },
}

impl LmiOutcome {
    pub fn solution(&self) -> Option<&LmiSolution> {
        match self {
            LmiOutcome::Feasible(s) => Some(s),
            LmiOutcome::Infeasible { .. } => None,
        }
    }

    pub fn margin(&self) -> f64 {
        match self {
            LmiOutcome::Feasible(s) => s.min_eig,
            LmiOutcome::Infeasible { best_margin, .. } => *best_margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEvaluation {
    /// Smallest eigenvalue of the symmetrized block matrix.
    pub min_eig: f64,
    /// `‖Ξ₀Λ − (Ξ₀Λ)ᵀ‖_F` before symmetrization.
    pub sym_residual: f64,
}

/// `[γ²Ξ₀Λ − I, Ξ₁Λ; (Ξ₁Λ)ᵀ, Ξ₀Λ]`, unsymmetrized.
pub fn block_matrix(xi0: &DMatrix<f64>, xi1: &DMatrix<f64>, gamma: f64, lambda: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if xi0.shape() != xi1.shape() || lambda.shape() != (xi0.ncols(), xi0.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "Xi0 {}x{}, Xi1 {}x{}, Lambda {}x{}",
            xi0.nrows(),
            xi0.ncols(),
            xi1.nrows(),
            xi1.ncols(),
            lambda.nrows(),
            lambda.ncols()
        )));
    }
    let n = xi0.nrows();
    let p = xi0 * lambda;
    let q = xi1 * lambda;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&p * (gamma * gamma) - DMatrix::<f64>::identity(n, n)));
    m.view_mut((0, n), (n, n)).copy_from(&q);
    m.view_mut((n, 0), (n, n)).copy_from(&q.transpose());
    m.view_mut((n, n), (n, n)).copy_from(&p);
    Ok(m)
}

/// Minimum eigenvalue of the symmetrized block and the raw symmetry residual.
/// Never rejects a `Λ`; asymmetric inputs are reported, not refused.
pub fn evaluate_block(
    xi0: &DMatrix<f64>,
    xi1: &DMatrix<f64>,
    gamma: f64,
    lambda: &DMatrix<f64>,
) -> Result<BlockEvaluation> {
    let m = block_matrix(xi0, xi1, gamma, lambda)?;
    let p = xi0 * lambda;
    Ok(BlockEvaluation { min_eig: min_sym_eigenvalue(&m), sym_residual: (&p - p.transpose()).norm() })
}

/// Matrix of the linear map `vec(Λ) ↦ (Ξ₀Λ − (Ξ₀Λ)ᵀ)_{a<b}`, with `vec`
/// column-major (`Λ[i,j]` at `j·N + i`).
fn asymmetry_operator(xi0: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, len) = xi0.shape();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut l = DMatrix::zeros(pairs.len(), n * len);
    for (row, &(a, b)) in pairs.iter().enumerate() {
        for i in 0..len {
            l[(row, b * len + i)] += xi0[(a, i)];
            l[(row, a * len + i)] -= xi0[(b, i)];
        }
    }
    l
}

/// Homogeneous block `[γ²X₀Λ, X₁Λ; (X₁Λ)ᵀ, X₀Λ]`, symmetrized.
fn homogeneous_block(x0: &DMatrix<f64>, x1: &DMatrix<f64>, gamma: f64, lambda: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x0.nrows();
    let p = symmetrize(&(x0 * lambda));
    let q = x1 * lambda;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&p * (gamma * gamma)));
    m.view_mut((0, n), (n, n)).copy_from(&q);
    m.view_mut((n, 0), (n, n)).copy_from(&q.transpose());
    m.view_mut((n, n), (n, n)).copy_from(&p);
    m
}

/// Barrier objective `−τ t − log det(H(y) − tI) − log(1 − ‖y‖²)`, or `None`
/// outside the domain.
struct Barrier<'a> {
    basis: &'a [DMatrix<f64>],
    dim: usize,
}

impl Barrier<'_> {
    fn slack(&self, y: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let mut s = DMatrix::from_diagonal_element(self.dim, self.dim, -t);
        for (yi, h) in y.iter().zip(self.basis) {
            s += h * *yi;
        }
        s
    }

    fn value(&self, y: &DVector<f64>, t: f64, weight: f64) -> Option<f64> {
        let q = 1.0 - y.norm_squared();
        if q <= 0.0 {
            return None;
        }
        let chol = self.slack(y, t).cholesky()?;
        let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let v = -weight * t - logdet - q.ln();
        v.is_finite().then_some(v)
    }

    /// Gradient and Hessian in `(y, t)`.
    fn derivatives(&self, y: &DVector<f64>, t: f64, weight: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let d = self.basis.len();
        let q = 1.0 - y.norm_squared();
        let s_inv = self.slack(y, t).cholesky()?.inverse();
        // W_a = S⁻¹ D_a with D_a = H_a for a < d and D_d = −I.
        let mut w: Vec<DMatrix<f64>> = self.basis.iter().map(|h| &s_inv * h).collect();
        w.push(-&s_inv);
        let mut grad = DVector::zeros(d + 1);
        let mut hess = DMatrix::zeros(d + 1, d + 1);
        for a in 0..=d {
            grad[a] = -w[a].trace();
            for b in a..=d {
                // tr(W_a W_b)
                let v = w[a].component_mul(&w[b].transpose()).sum();
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        grad[d] -= weight;
        for i in 0..d {
            grad[i] += 2.0 * y[i] / q;
            for j in 0..d {
                hess[(i, j)] += 4.0 * y[i] * y[j] / (q * q);
            }
            hess[(i, i)] += 2.0 / q;
        }
        Some((grad, hess))
    }
}

fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let h = hess + DMatrix::from_diagonal_element(hess.nrows(), hess.ncols(), reg);
        if let Some(chol) = h.cholesky() {
            let step = -chol.solve(grad);
            if step.iter().all(|x| x.is_finite()) {
                return Some(step);
            }
        }
        reg = if reg == 0.0 { scale * 1e-14 } else { reg * 100.0 };
    }
    None
}

/// Removes the rounding asymmetry of `Ξ₀Λ` with the correction
/// `−½ Ξ₀⁺ (Ξ₀Λ − (Ξ₀Λ)ᵀ)`, kept only while it helps.
fn symmetry_polish(xi0: &DMatrix<f64>, mut lambda: DMatrix<f64>) -> DMatrix<f64> {
    let pinv = pseudo_inverse(xi0, NULLSPACE_TOL);
    let asym = |l: &DMatrix<f64>| {
        let s = xi0 * l;
        &s - s.transpose()
    };
    let mut d = asym(&lambda);
    for _ in 0..3 {
        let candidate = &lambda - &pinv * &d * 0.5;
        let d_new = asym(&candidate);
        if d_new.norm() >= d.norm() {
            break;
        }
        lambda = candidate;
        d = d_new;
    }
    lambda
}

/// Maximizes `λ_min(Σ yᵢ Hᵢ)` over `‖y‖ ≤ 1`. Returns the maximizer and the
/// Newton iteration count.
fn maximize_min_eigenvalue(
    basis: &[DMatrix<f64>],
    dim: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(DVector<f64>, usize)> {
    let d = basis.len();
    let barrier = Barrier { basis, dim };
    let mut r = rng::stream(seed, 0);
    let mut y = rng::gaussian_matrix(&mut r, d, 1).column(0).into_owned();
    let norm = y.norm();
    if norm > 0.0 {
        y *= 0.5 / norm;
    }
    let mut t = min_sym_eigenvalue(&barrier.slack(&y, 0.0)) - 1.0;
    let mut weight = 1.0;
    let mut iterations = 0;
    let barrier_count = (dim + 1) as f64;

    'outer: loop {
        loop {
            if iterations >= max_iters {
                break 'outer;
            }
            let (grad, hess) = barrier
                .derivatives(&y, t, weight)
                .ok_or_else(|| Error::NumericalBreakdown("barrier left its domain".into()))?;
            if grad.iter().chain(hess.iter()).any(|x| !x.is_finite()) {
                return Err(Error::NumericalBreakdown("non-finite barrier derivatives".into()));
            }
            let Some(step) = newton_direction(&grad, &hess) else {
                break;
            };
            iterations += 1;
            let decrement = -grad.dot(&step);
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            let f0 = barrier
                .value(&y, t, weight)
                .ok_or_else(|| Error::NumericalBreakdown("barrier left its domain".into()))?;
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-12 {
                let y_new = &y + step.rows(0, d) * alpha;
                let t_new = t + step[d] * alpha;
                if let Some(f1) = barrier.value(&y_new, t_new, weight) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        y = y_new;
                        t = t_new;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if barrier_count / weight < GAP_TOL {
            break;
        }
        weight *= 8.0;
    }
    Ok((y, iterations))
}

/// Searches for `Λ` satisfying the LMI; see the module docs for the method.
/// `seed` fixes the starting point of the barrier path.
pub fn solve_feasibility(p: &LmiProblem, max_iters: usize, seed: u64) -> Result<LmiOutcome> {
    let (n, len) = p.xi0.shape();
    let scale = spectral_norm(&p.xi0).max(spectral_norm(&p.xi1));
    if spectral_norm(&p.xi0) == 0.0 {
        // Ξ₀Λ = 0 leaves −I in the (1,1) block.
        return Ok(LmiOutcome::Infeasible { best_margin: -1.0, iterations: 0 });
    }
    let x0 = &p.xi0 / scale;
    let x1 = &p.xi1 / scale;

    let null = kernel_basis(&asymmetry_operator(&x0), NULLSPACE_TOL);
    if null.ncols() == 0 {
        return Ok(LmiOutcome::Infeasible { best_margin: -1.0, iterations: 0 });
    }
    let lambdas: Vec<DMatrix<f64>> =
        null.column_iter().map(|c| DMatrix::from_column_slice(len, n, c.as_slice())).collect();
    let basis: Vec<DMatrix<f64>> = lambdas.iter().map(|l| homogeneous_block(&x0, &x1, p.gamma, l)).collect();

    let (y, iterations) = maximize_min_eigenvalue(&basis, 2 * n, max_iters, seed)?;
    let mut direction = DMatrix::zeros(len, n);
    for (yi, l) in y.iter().zip(&lambdas) {
        direction += l * *yi;
    }
    let h_margin = min_sym_eigenvalue(&homogeneous_block(&x0, &x1, p.gamma, &direction));
    if !h_margin.is_finite() {
        return Err(Error::NumericalBreakdown("non-finite homogeneous margin".into()));
    }

    if h_margin > HOMOGENEOUS_EPS {
        // c·H − diag(I, 0) ⪰ (c·h − 1) I, so c = 2/h puts the margin near 1.
        let lambda = symmetry_polish(&p.xi0, direction * (2.0 / h_margin / scale));
        let eval = evaluate_block(&p.xi0, &p.xi1, p.gamma, &lambda)?;
        if !eval.min_eig.is_finite() {
            return Err(Error::NumericalBreakdown("non-finite block eigenvalue".into()));
        }
        if eval.min_eig >= -p.feas_margin && eval.sym_residual <= p.sym_tol {
            let gram = symmetrize(&(&p.xi0 * &lambda));
            if min_sym_eigenvalue(&gram) <= 0.0 {
                return Err(Error::NumericalBreakdown("accepted solution has Xi0 Lambda not positive definite".into()));
            }
            return Ok(LmiOutcome::Feasible(LmiSolution {
                lambda,
                min_eig: eval.min_eig,
                sym_residual: eval.sym_residual,
                iterations,
            }));
        }
        return Ok(LmiOutcome::Infeasible { best_margin: eval.min_eig.min(0.0), iterations });
    }

    // Best margin along the ray c ↦ c·Λ̂: the block is concave in c.
    let hnorm = spectral_norm(&homogeneous_block(&x0, &x1, p.gamma, &direction)).max(1e-300);
    let best_margin = std::iter::once(0.0)
        .chain((-6..=6).map(|e| 10f64.powi(e) / hnorm))
        .map(|c| {
            let lambda = &direction * (c / scale);
            min_sym_eigenvalue(&block_matrix(&p.xi0, &p.xi1, p.gamma, &lambda).expect("shapes checked"))
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LmiOutcome::Infeasible { best_margin, iterations })
}

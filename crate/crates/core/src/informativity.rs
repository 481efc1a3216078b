//! Noise-free informativity: identification, stabilization through the data
//! LMI, the frame-type operator inequalities, range-inclusion diagnostics and
//! sampling of data-compatible systems.
//!
//! On finite truncations every right inverse of `Ξ₀` is bounded, so the
//! stabilization test reduces to the frame route: full row rank of `Ξ₀` plus
//! a right inverse `R` with `Ξ₁R` power stable, decided by the LMI.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::lmi::{self, LmiOutcome, LmiProblem};
use crate::operators::{
    construct_certificate, kernel_basis, min_sym_eigenvalue, numerical_rank, pseudo_inverse, range_basis,
    spectral_radius, Certification, PowerStabilityCertificate,
};
use crate::rng;
use crate::systems::{DataBatch, LinearSystem};
use crate::{Error, Result, PSD_FLOOR};

/// `H = [Ξ₀; Υ₀]` together with `Ξ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDataOperator {
    pub h: DMatrix<f64>,
    pub xi1: DMatrix<f64>,
    pub tol: f64,
}

impl StackedDataOperator {
    pub fn from_batch(batch: &DataBatch, tol: f64) -> Self {
        Self { h: batch.stacked(), xi1: batch.xi1().clone(), tol }
    }

    /// `G = [I; K]`.
    pub fn g(k: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, n) = k.shape();
        let mut g = DMatrix::zeros(n + m, n);
        g.rows_mut(0, n).fill_with_identity();
        g.rows_mut(n, m).copy_from(k);
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub informative: bool,
    /// Rank of `[Ξ₀; Υ₀]`.
    pub rank: usize,
    /// `n + m`.
    pub required: usize,
}

/// Full row rank of `[Ξ₀; Υ₀]` at `tol`.
pub fn identification_informative(batch: &DataBatch, tol: f64) -> IdentificationReport {
    let rank = numerical_rank(&batch.stacked(), tol);
    let required = batch.n() + batch.m();
    IdentificationReport { informative: rank == required, rank, required }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Identification {
    Unique(LinearSystem),
    NotUnique(IdentificationReport),
}

/// `[A B] = Ξ₁ H⁺` when the data identify the system.
pub fn unique_system(batch: &DataBatch, tol: f64) -> Result<Identification> {
    let report = identification_informative(batch, tol);
    if !report.informative {
        return Ok(Identification::NotUnique(report));
    }
    let ab = batch.xi1() * pseudo_inverse(&batch.stacked(), tol);
    Ok(Identification::Unique(LinearSystem::from_stacked(&ab, batch.n())?))
}

/// A data-based stabilizing gain with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct GainResult {
    /// `K = Υ₀ Λ (Ξ₀Λ)⁻¹`.
    pub k: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    /// `Λ(Ξ₀Λ)⁻¹`.
    pub right_inverse: DMatrix<f64>,
    /// Data-reconstructed closed loop `Ξ₁ Λ (Ξ₀Λ)⁻¹`; equals `A + BK` for
    /// every compatible `(A, B)`.
    pub closed_loop: DMatrix<f64>,
    pub closed_loop_radius: f64,
    pub certificate: PowerStabilityCertificate,
    pub lmi_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedStage {
    /// Data matrix not of full row rank.
    Rank,
    /// No LMI solution found.
    Lmi,
    /// LMI solved but no power-stability certificate within the search cap.
    Certificate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stabilization {
    Informative(GainResult),
    NotInformative { stage: FailedStage, margin: Option<f64> },
}

impl Stabilization {
    pub fn gain(&self) -> Option<&GainResult> {
        match self {
            Stabilization::Informative(g) => Some(g),
            Stabilization::NotInformative { .. } => None,
        }
    }
}

/// Solves the data LMI on `(Ξ₀, Ξ₁)` and forms the gain from `Υ₀`. Shared by
/// the noise-free, noisy and projected pipelines.
pub(crate) fn gain_from_lmi(
    xi0: &DMatrix<f64>,
    xi1: &DMatrix<f64>,
    ups0: &DMatrix<f64>,
    gamma: f64,
) -> Result<Stabilization> {
    let problem = LmiProblem::new(xi0.clone(), xi1.clone(), gamma)?;
    let solution = match lmi::solve_feasibility(&problem, lmi::DEFAULT_MAX_ITERS, 0)? {
        LmiOutcome::Feasible(s) => s,
        LmiOutcome::Infeasible { best_margin, .. } => {
            return Ok(Stabilization::NotInformative { stage: FailedStage::Lmi, margin: Some(best_margin) })
        }
    };
    let right_inverse = solution.right_inverse(xi0)?;
    let closed_loop = xi1 * &right_inverse;
    let k = ups0 * &right_inverse;
    let closed_loop_radius = spectral_radius(&closed_loop);
    match construct_certificate(&closed_loop, gamma)? {
        Certification::Certified(certificate) => Ok(Stabilization::Informative(GainResult {
            k,
            lambda: solution.lambda,
            right_inverse,
            closed_loop,
            closed_loop_radius,
            certificate,
            lmi_margin: solution.min_eig,
        })),
        Certification::NotCertifiable { .. } => {
            Ok(Stabilization::NotInformative { stage: FailedStage::Certificate, margin: Some(solution.min_eig) })
        }
    }
}

/// Informativity for stabilization with decay rate `gamma ∈ (0,1)`.
///
/// `tol` is used only for the post-hoc symmetry check of `Ξ₀Λ`, which the
/// LMI solver already enforces at its own tolerance.
pub fn stabilization_informative(batch: &DataBatch, gamma: f64, tol: f64) -> Result<Stabilization> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParams(format!("gamma must lie in (0,1), got {gamma}")));
    }
    let out = gain_from_lmi(batch.xi0(), batch.xi1(), batch.ups0(), gamma)?;
    if let Stabilization::Informative(g) = &out {
        let p = batch.xi0() * &g.lambda;
        let asym = (&p - p.transpose()).norm();
        if asym > tol.max(lmi::DEFAULT_SYM_TOL) {
            return Err(Error::NumericalBreakdown(format!("Xi0 Lambda asymmetric by {asym:e}")));
        }
    }
    Ok(out)
}

/// PSD test of `c² (Ξ₀ᵀΞ₀ + Υ₀ᵀΥ₀)² − (Ξ₀ + KᵀΥ₀)ᵀ(Ξ₀ + KᵀΥ₀)`.
///
/// The raw eigenvalue check loses all precision once `c²‖H‖⁴` dwarfs the
/// floor, so the inequality also holds whenever `c` reaches
/// [`gain_inequality_constant`], its exact threshold.
pub fn gain_inequality_holds(batch: &DataBatch, k: &DMatrix<f64>, c: f64) -> Result<bool> {
    if gain_inequality_margin(batch, k, c)? >= -PSD_FLOOR {
        return Ok(true);
    }
    Ok(matches!(gain_inequality_constant(batch, k)?, Some(c_min) if c >= c_min * (1.0 + 1e-12)))
}

/// Least `c` for which the gain inequality holds: `‖F V S⁻²‖` with
/// `H = U S Vᵀ` the reduced SVD of `[Ξ₀; Υ₀]` and `F = Ξ₀ + KᵀΥ₀`. `None` if
/// `F` does not vanish on `Ker H`, in which case no `c` works.
pub fn gain_inequality_constant(batch: &DataBatch, k: &DMatrix<f64>) -> Result<Option<f64>> {
    check_gain_shape(batch, k)?;
    let h = batch.stacked();
    let f = batch.xi0() + k.transpose() * batch.ups0();
    let d = crate::operators::svd(&h, false);
    let s_max = d.s.first().copied().unwrap_or(0.0);
    let kept: Vec<usize> = (0..d.s.len()).filter(|&i| s_max > 0.0 && d.s[i] > crate::DEFAULT_TOL * s_max).collect();
    let z = kernel_basis(&h, crate::DEFAULT_TOL);
    if z.ncols() > 0 && (&f * &z).norm() > crate::DEFAULT_TOL * f.norm().max(1.0) {
        return Ok(None);
    }
    let mut scaled = DMatrix::zeros(f.nrows(), kept.len());
    for (j, &i) in kept.iter().enumerate() {
        let s = d.s[i];
        scaled.set_column(j, &(&f * d.v.column(i) / (s * s)));
    }
    Ok(Some(if kept.is_empty() { 0.0 } else { crate::operators::spectral_norm(&scaled) }))
}

fn check_gain_shape(batch: &DataBatch, k: &DMatrix<f64>) -> Result<()> {
    if k.shape() != (batch.m(), batch.n()) {
        return Err(Error::DimensionMismatch(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            batch.m(),
            batch.n()
        )));
    }
    Ok(())
}

/// Smallest eigenvalue of the gain inequality's slack matrix.
pub fn gain_inequality_margin(batch: &DataBatch, k: &DMatrix<f64>, c: f64) -> Result<f64> {
    check_gain_shape(batch, k)?;
    let (xi0, ups0) = (batch.xi0(), batch.ups0());
    let lhs_factor = xi0 + k.transpose() * ups0;
    let gram = xi0.transpose() * xi0 + ups0.transpose() * ups0;
    let slack = &gram * &gram * (c * c) - lhs_factor.transpose() * lhs_factor;
    Ok(min_sym_eigenvalue(&slack))
}

/// `Ξ₀ᵀΞ₀ ⪯ c² (Ξ₀ᵀΞ₀)²`, i.e. every nonzero eigenvalue `μ` of `Ξ₀ᵀΞ₀`
/// satisfies `μ ≥ 1/c²`. Eigenvalues below `tol · μ_max` count as zero.
pub fn closed_range_inequality_holds(batch: &DataBatch, c: f64, tol: f64) -> bool {
    let xi0 = batch.xi0();
    let eig = (xi0.transpose() * xi0).symmetric_eigenvalues();
    let mu_max = eig.iter().copied().fold(0.0, f64::max);
    eig.iter().filter(|&&mu| mu > tol * mu_max && mu > 0.0).all(|&mu| c * c * mu >= 1.0 - 1e-12)
}

/// Finite form of `Ran(KΞ₀ − Υ₀) ⊆ Υ₀(Ker Ξ₀)`: every column of `KΞ₀ − Υ₀`
/// lies in `Ran(Υ₀ Z)` for an orthonormal kernel basis `Z` of `Ξ₀`, up to an
/// absolute residual `tol`.
pub fn range_inclusion_diagnostic(batch: &DataBatch, k: &DMatrix<f64>, tol: f64) -> Result<bool> {
    check_gain_shape(batch, k)?;
    let d = k * batch.xi0() - batch.ups0();
    let z = kernel_basis(batch.xi0(), crate::DEFAULT_TOL);
    let q = range_basis(&(batch.ups0() * z), crate::DEFAULT_TOL);
    let residual = &d - &q * (q.transpose() * &d);
    Ok(residual.column_iter().all(|c| c.norm() <= tol))
}

/// Finite surrogate of "some kernel vector of `Ξ₀` is not orthogonal to the
/// input coefficients": true iff `Υ₀ Z ≠ 0` for a kernel basis `Z` of `Ξ₀`.
/// Diagnostic only; at finite truncation it carries no necessity claim.
pub fn kernel_reaches_inputs(batch: &DataBatch, tol: f64) -> bool {
    let z = kernel_basis(batch.xi0(), tol);
    z.ncols() > 0 && (batch.ups0() * z).amax() > tol * batch.ups0().amax().max(1.0)
}

/// `[A B] = Ξ₁ W⁺ + T (I − W W⁺)` for Gaussian `T` scaled by `scale`; one
/// independent stream per sample.
pub(crate) fn sample_affine_family(
    xi1: &DMatrix<f64>,
    w: &DMatrix<f64>,
    count: usize,
    scale: f64,
    seed: u64,
) -> Vec<DMatrix<f64>> {
    let w_pinv = pseudo_inverse(w, crate::DEFAULT_TOL);
    let base = xi1 * &w_pinv;
    let projector = DMatrix::<f64>::identity(w.nrows(), w.nrows()) - w * &w_pinv;
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let t = rng::gaussian_matrix(&mut r, xi1.nrows(), w.nrows()) * scale;
            &base + t * &projector
        })
        .collect()
}

/// Systems compatible with noise-free data, `Σ` over a seeded Gaussian
/// parameterization of the solution set of `[A B] W = Ξ₁`, `W = [Ξ₀; Υ₀]`.
pub fn sample_compatible_systems(batch: &DataBatch, count: usize, scale: f64, seed: u64) -> Result<Vec<LinearSystem>> {
    if count == 0 || !(scale > 0.0) {
        return Err(Error::InvalidParams("count must be >= 1 and scale > 0".into()));
    }
    sample_affine_family(batch.xi1(), &batch.stacked(), count, scale, seed)
        .iter()
        .map(|ab| LinearSystem::from_stacked(ab, batch.n()))
        .collect()
}

/// Norms of the minimal-norm `K` with `K Ξ₀ = Υ₀` on the truncated
/// counterexample, `‖K‖ = (Σ_{k≤n} 1/k)^{1/2}`.
pub fn least_squares_gain_norm_growth(n_list: &[usize]) -> Result<Vec<f64>> {
    n_list
        .iter()
        .map(|&n| {
            let batch = crate::systems::counterexample_sequences(n)?;
            // Ξ₀ is diagonal, so the minimal-norm solution is entrywise.
            let k = DMatrix::from_fn(1, n, |_, j| batch.ups0()[(0, j)] / batch.xi0()[(j, j)]);
            Ok(k.norm())
        })
        .collect()
}

//! Finite-data stabilization of systems whose state space splits as
//! `X = X₊ ∔ X₋` with `X₋` invariant and `A|X₋` decaying at rate `γ₋`.
//!
//! Only the projected data on `X₊` enter the analysis; the returned gain acts
//! on `X₊` and is lifted by zero on `X₋`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::informativity::{gain_from_lmi, sample_affine_family, FailedStage, Stabilization};
use crate::operators::{
    construct_certificate, kernel_basis, numerical_rank, pseudo_inverse, spectral_radius, Certification,
};
use crate::rng;
use crate::systems::{heat_eigenvalue, DataBatch, HeatCascadeParams, LinearSystem};
use crate::{Error, Result};

/// A splitting `X = X₊ ∔ X₋` in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Projection onto `X₊` along `X₋`.
    pub pi: DMatrix<f64>,
    /// Columns span `X₊`.
    pub basis_plus: DMatrix<f64>,
    /// `X₊` coordinates of `Π x`: `basis_plus · coord = Π`.
    pub coord: DMatrix<f64>,
    pub n_plus: usize,
    /// Number of retained modes when built from a modal cascade.
    pub n0: usize,
    pub gamma_minus: f64,
}

impl Decomposition {
    pub fn n(&self) -> usize {
        self.pi.nrows()
    }

    /// Decomposition keeping the listed coordinates.
    pub fn coordinate(n: usize, keep: &[usize], n0: usize, gamma_minus: f64) -> Result<Self> {
        if !(gamma_minus > 0.0 && gamma_minus < 1.0) {
            return Err(Error::InvalidParams(format!("gamma_minus must lie in (0,1), got {gamma_minus}")));
        }
        let mut coord = DMatrix::zeros(keep.len(), n);
        for (row, &i) in keep.iter().enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            coord[(row, i)] = 1.0;
        }
        let basis_plus = coord.transpose();
        let pi = &basis_plus * &coord;
        Ok(Self { pi, basis_plus, coord, n_plus: keep.len(), n0, gamma_minus })
    }

    /// Columns spanning `X₋ = Ran(I − Π)`.
    pub fn basis_minus(&self) -> DMatrix<f64> {
        kernel_basis(&self.coord, crate::DEFAULT_TOL)
    }
}

/// Least `n₀ ≥ 0` with `n₀² ≥ (log(1/γ₋) + b₀τ)/(a₀π²τ)`.
pub fn mode_cutoff(a0: f64, b0: f64, tau: f64, gamma_minus: f64) -> Result<usize> {
    if !(a0 > 0.0 && tau > 0.0 && gamma_minus > 0.0 && gamma_minus < 1.0 && b0.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "need a0 > 0, tau > 0, gamma_minus in (0,1); got a0={a0}, tau={tau}, gamma_minus={gamma_minus}"
        )));
    }
    let rhs = ((1.0 / gamma_minus).ln() + b0 * tau) / (a0 * PI * PI * tau);
    if rhs <= 0.0 {
        return Ok(0);
    }
    let mut n0 = rhs.sqrt().floor() as usize;
    while ((n0 * n0) as f64) < rhs {
        n0 += 1;
    }
    Ok(n0)
}

/// Modal splitting: `X₊` is the `v` block plus modes `0..n0`.
pub fn modal_decomposition(v_dim: usize, n_modes: usize, n0: usize, gamma_minus: f64) -> Result<Decomposition> {
    if n0 > n_modes {
        return Err(Error::CutoffExceedsTruncation { n0, n_modes });
    }
    let keep: Vec<usize> = (0..v_dim + n0).collect();
    Decomposition::coordinate(v_dim + n_modes, &keep, n0, gamma_minus)
}

/// Splitting of the heat cascade with `n₀` from the bounds `(a0, b0)`; the
/// tail decay `e^{λ_{n₀}τ} ≤ γ₋` is checked with the true coefficients.
pub fn cascade_decomposition(p: &HeatCascadeParams, gamma_minus: f64, a0: f64, b0: f64) -> Result<Decomposition> {
    p.validate()?;
    let n0 = mode_cutoff(a0, b0, p.tau, gamma_minus)?;
    if p.n_modes < n0 {
        return Err(Error::CutoffExceedsTruncation { n0, n_modes: p.n_modes });
    }
    let tail = (heat_eigenvalue(p.diffusivity, p.reaction, n0) * p.tau).exp();
    if tail > gamma_minus {
        return Err(Error::InvalidParams(format!(
            "tail decay {tail} exceeds gamma_minus {gamma_minus}; bounds (a0, b0) do not hold"
        )));
    }
    modal_decomposition(p.v_dim(), p.n_modes, n0, gamma_minus)
}

/// Data restricted to `X₊`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedData {
    pub xi1p: DMatrix<f64>,
    pub xi0p: DMatrix<f64>,
    pub ups0: DMatrix<f64>,
}

impl ProjectedData {
    pub fn n_plus(&self) -> usize {
        self.xi0p.nrows()
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, m) = (self.xi0p.nrows(), self.ups0.nrows());
        let mut w = DMatrix::zeros(n + m, self.xi0p.ncols());
        w.rows_mut(0, n).copy_from(&self.xi0p);
        w.rows_mut(n, m).copy_from(&self.ups0);
        w
    }
}

pub fn project_data(batch: &DataBatch, dec: &Decomposition) -> Result<ProjectedData> {
    if batch.n() != dec.n() {
        return Err(Error::DimensionMismatch(format!(
            "batch state dim {} vs decomposition dim {}",
            batch.n(),
            dec.n()
        )));
    }
    Ok(ProjectedData { xi1p: &dec.coord * batch.xi1(), xi0p: &dec.coord * batch.xi0(), ups0: batch.ups0().clone() })
}

/// Informativity for stabilization on `X₊` at rate `gamma ∈ (γ₋, 1)`.
pub fn finite_informative(pd: &ProjectedData, gamma: f64, gamma_minus: f64, tol: f64) -> Result<Stabilization> {
    if !(gamma_minus < gamma && gamma < 1.0 && gamma_minus > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need 0 < gamma_minus < gamma < 1; got gamma_minus={gamma_minus}, gamma={gamma}"
        )));
    }
    if numerical_rank(&pd.xi0p, tol) < pd.n_plus() {
        return Ok(Stabilization::NotInformative { stage: FailedStage::Rank, margin: None });
    }
    gain_from_lmi(&pd.xi0p, &pd.xi1p, &pd.ups0, gamma)
}

/// `K = K₊ Π̃`, zero on `X₋`.
pub fn lift_gain(k_plus: &DMatrix<f64>, dec: &Decomposition) -> Result<DMatrix<f64>> {
    if k_plus.ncols() != dec.n_plus {
        return Err(Error::DimensionMismatch(format!(
            "gain has {} columns, X+ has dimension {}",
            k_plus.ncols(),
            dec.n_plus
        )));
    }
    Ok(k_plus * &dec.coord)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlusVerification {
    pub trials: usize,
    pub gamma: f64,
    /// `None` when `trials = 0`.
    pub worst_radius: Option<f64>,
    pub violations: usize,
}

impl PlusVerification {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `ρ(A₊ + B₊K₊) ≤ γ + 1e-6` over sampled `(A₊, B₊)` compatible with
/// the projected data.
pub fn verify_on_compatible_plus(
    pd: &ProjectedData,
    k_plus: &DMatrix<f64>,
    gamma: f64,
    trials: usize,
    scale: f64,
    seed: u64,
) -> Result<PlusVerification> {
    let n = pd.n_plus();
    if k_plus.shape() != (pd.ups0.nrows(), n) {
        return Err(Error::DimensionMismatch("gain shape does not match projected data".into()));
    }
    let mut worst: Option<f64> = None;
    let mut violations = 0;
    for ab in sample_affine_family(&pd.xi1p, &pd.stacked(), trials, scale, seed) {
        let sys = LinearSystem::from_stacked(&ab, n)?;
        let rho = spectral_radius(&sys.closed_loop(k_plus)?);
        worst = Some(worst.map_or(rho, |w: f64| w.max(rho)));
        if rho > gamma + 1e-6 {
            violations += 1;
        }
    }
    Ok(PlusVerification { trials, gamma, worst_radius: worst, violations })
}

/// Certificate for the full closed loop `A + BK`.
pub fn closed_loop_full(sys: &LinearSystem, k: &DMatrix<f64>, gamma: f64) -> Result<Certification> {
    construct_certificate(&sys.closed_loop(k)?, gamma)
}

/// Full systems whose `X₊` part is compatible with the projected data and
/// whose `X₋` block has spectral radius at most `0.999 γ₋`. Coupling and
/// `B₋` are Gaussian times `scale`.
pub fn sample_full_systems(
    pd: &ProjectedData,
    dec: &Decomposition,
    count: usize,
    scale: f64,
    seed: u64,
) -> Result<Vec<LinearSystem>> {
    let (np, n, m) = (dec.n_plus, dec.n(), pd.ups0.nrows());
    if pd.n_plus() != np {
        return Err(Error::DimensionMismatch("projected data does not match decomposition".into()));
    }
    let nm = n - np;
    let basis_minus = dec.basis_minus();
    let mut t = DMatrix::zeros(n, n);
    t.columns_mut(0, np).copy_from(&dec.basis_plus);
    t.columns_mut(np, nm).copy_from(&basis_minus);
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalBreakdown("decomposition bases are not complementary".into()))?;
    let plus = sample_affine_family(&pd.xi1p, &pd.stacked(), count, scale, seed);
    plus.iter()
        .enumerate()
        .map(|(i, ab)| {
            let mut r = rng::stream(seed ^ 0x5eed_f00d, i as u64);
            let mut a_minus = rng::gaussian_matrix(&mut r, nm, nm);
            let rho = spectral_radius(&a_minus);
            if rho > 0.0 {
                a_minus *= 0.999 * dec.gamma_minus / rho;
            }
            let a_pm = rng::gaussian_matrix(&mut r, nm, np) * scale;
            let b_minus = rng::gaussian_matrix(&mut r, nm, m) * scale;
            let mut a_blk = DMatrix::zeros(n, n);
            a_blk.view_mut((0, 0), (np, np)).copy_from(&ab.columns(0, np));
            a_blk.view_mut((np, 0), (nm, np)).copy_from(&a_pm);
            a_blk.view_mut((np, np), (nm, nm)).copy_from(&a_minus);
            let mut b_blk = DMatrix::zeros(n, m);
            b_blk.rows_mut(0, np).copy_from(&ab.columns(np, m));
            b_blk.rows_mut(np, nm).copy_from(&b_minus);
            LinearSystem::new(&t * a_blk * &t_inv, &t * b_blk)
        })
        .collect()
}

/// Randomized search for a right inverse `R = Ξ₀⁺ + (I − Ξ₀⁺Ξ₀)Z` with
/// `ρ(Ξ₁R) < γ`; `Z` standard Gaussian times `scale`.
pub fn random_right_inverse_search(
    xi0: &DMatrix<f64>,
    xi1: &DMatrix<f64>,
    gamma: f64,
    tries: usize,
    scale: f64,
    seed: u64,
) -> Option<DMatrix<f64>> {
    let pinv = pseudo_inverse(xi0, crate::DEFAULT_TOL);
    let samples = xi0.ncols();
    let projector = DMatrix::<f64>::identity(samples, samples) - &pinv * xi0;
    (0..tries).find_map(|i| {
        let mut r = rng::stream(seed, i as u64);
        let z = rng::gaussian_matrix(&mut r, samples, xi0.nrows()) * scale;
        let right = &pinv + &projector * z;
        (spectral_radius(&(xi1 * &right)) < gamma).then_some(right)
    })
}

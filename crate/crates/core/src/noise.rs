//! Noisy data: noise-class membership, minimal class constants, robust
//! stabilization from noisy data and sampled verification.
//!
//! The noise class `N(c₁, c₀, Ω)` is
//!
//! ```text
//! Δ₁ΩΩᵀΔ₁ᵀ ⪯ c₁² Ξ̃₁ΩΩᵀΞ̃₁ᵀ,
//! [Δ₀; Θ₀]ΩΩᵀ[Δ₀; Θ₀]ᵀ ⪯ c₀² [Ξ̃₀; Ῡ₀]ΩΩᵀ[Ξ̃₀; Ῡ₀]ᵀ.
//! ```
//!
//! With `Ω = Ξ̃₀†` and `‖(Ξ̃₁Ξ̃₀†)ᵏ‖ ≤ Mγᵏ`, every system compatible with the
//! denoised data satisfies `‖(A + BK)ᵏ‖ ≤ M γ̃ᵏ` for `K = Ῡ₀Ξ̃₀†` and
//! `γ̃ = (1 + Mc₁)/(1 − Mc₀) γ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::informativity::{gain_from_lmi, FailedStage, Stabilization};
use crate::operators::{
    construct_certificate, douglas_minimal_constant, frame_bounds, min_sym_eigenvalue, spectral_norm, spectral_radius,
    Certification, Factorization, SynthesisOperator,
};
use crate::rng;
use crate::systems::DataBatch;
use crate::{Error, Result};

/// Fraction of the `(c₁, c₀)` budget used by the sampler.
pub const DEFAULT_BUDGET_FRACTION: f64 = 0.9;
/// Horizon of the transient check in [`verify_robust_gain`].
pub const VERIFY_HORIZON: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseClassParams {
    pub c1: f64,
    pub c0: f64,
    /// `N × n`, acts like a right inverse of `Ξ̃₀`.
    pub omega: DMatrix<f64>,
}

impl NoiseClassParams {
    pub fn new(c1: f64, c0: f64, omega: DMatrix<f64>) -> Result<Self> {
        if !(c1.is_finite() && c0.is_finite() && c1 >= 0.0 && c0 >= 0.0) {
            return Err(Error::InvalidParams(format!("c1, c0 must be finite and >= 0, got {c1}, {c0}")));
        }
        crate::operators::ensure_finite(&omega, "Omega")?;
        Ok(Self { c1, c0, omega })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMembership {
    pub in_class: bool,
    /// Smallest eigenvalue of the slack of the `Δ₁` inequality.
    pub margin1: f64,
    /// Same for the stacked `[Δ₀; Θ₀]` inequality.
    pub margin0: f64,
}

fn check_shapes(noise: &DataBatch, noisy: &DataBatch, omega: &DMatrix<f64>) -> Result<()> {
    if noise.n() != noisy.n() || noise.m() != noisy.m() || noise.len() != noisy.len() {
        return Err(Error::DimensionMismatch("noise and noisy batches differ in shape".into()));
    }
    if omega.shape() != (noisy.len(), noisy.n()) {
        return Err(Error::DimensionMismatch(format!(
            "Omega is {}x{}, expected {}x{}",
            omega.nrows(),
            omega.ncols(),
            noisy.len(),
            noisy.n()
        )));
    }
    Ok(())
}

fn slack_margin(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>, c: f64) -> f64 {
    min_sym_eigenvalue(&(rhs * rhs.transpose() * (c * c) - lhs * lhs.transpose()))
}

/// Membership of `(Δ₁, Δ₀, Θ₀)` (stored as a batch `x1 = δ₁, x0 = δ₀,
/// u0 = θ₀`) in `N(c₁, c₀, Ω)` with eigenvalue floor `−tol`.
pub fn noise_in_class(
    noise: &DataBatch,
    noisy: &DataBatch,
    params: &NoiseClassParams,
    tol: f64,
) -> Result<ClassMembership> {
    check_shapes(noise, noisy, &params.omega)?;
    let om = &params.omega;
    let margin1 = slack_margin(&(noise.xi1() * om), &(noisy.xi1() * om), params.c1);
    let margin0 = slack_margin(&(noise.stacked() * om), &(noisy.stacked() * om), params.c0);
    Ok(ClassMembership { in_class: margin1 >= -tol && margin0 >= -tol, margin1, margin0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseConstants {
    Constants {
        c1: f64,
        c0: f64,
    },
    /// The noise leaves the range of the data; `which` is 1 or 0.
    Incompatible {
        which: u8,
        residual: f64,
    },
}

/// Least `(c₁, c₀)` with the noise in `N(c₁, c₀, Ω)`.
pub fn minimal_noise_constants(
    noise: &DataBatch,
    noisy: &DataBatch,
    omega: &DMatrix<f64>,
    tol: f64,
) -> Result<NoiseConstants> {
    check_shapes(noise, noisy, omega)?;
    let c1 = match douglas_minimal_constant(&(noise.xi1() * omega), &(noisy.xi1() * omega), tol)? {
        Factorization::Factor(f) => f.norm_c,
        Factorization::NoFactorization { residual } => return Ok(NoiseConstants::Incompatible { which: 1, residual }),
    };
    let c0 = match douglas_minimal_constant(&(noise.stacked() * omega), &(noisy.stacked() * omega), tol)? {
        Factorization::Factor(f) => f.norm_c,
        Factorization::NoFactorization { residual } => return Ok(NoiseConstants::Incompatible { which: 0, residual }),
    };
    Ok(NoiseConstants::Constants { c1, c0 })
}

/// `γ̃ = (1 + Mc₁)/(1 − Mc₀) γ`, `None` when `Mc₀ ≥ 1`.
pub fn robust_decay_rate(m: f64, gamma: f64, c1: f64, c0: f64) -> Option<f64> {
    (m * c0 < 1.0).then(|| (1.0 + m * c1) * gamma / (1.0 - m * c0))
}

/// `γc₁ + c₀ < (1 − γ)/M`, evaluated as `M(γc₁ + c₀) < 1 − γ`.
pub fn margin_ok(m: f64, gamma: f64, c1: f64, c0: f64) -> bool {
    m * (gamma * c1 + c0) < 1.0 - gamma
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustGainResult {
    pub k: DMatrix<f64>,
    pub m: f64,
    pub gamma: f64,
    pub gamma_tilde: f64,
    pub margin_ok: bool,
    /// The right inverse `Ξ̃₀†` used as `Ω`.
    pub omega: DMatrix<f64>,
    /// `Ξ̃₁ Ξ̃₀†`.
    pub closed_loop: DMatrix<f64>,
    pub lmi_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustStage {
    Frame,
    Lmi,
    Certificate,
    /// `M c₀ ≥ 1`.
    NoiseBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RobustOutcome {
    Robust(RobustGainResult),
    NotApplicable { stage: RobustStage },
}

impl RobustOutcome {
    pub fn result(&self) -> Option<&RobustGainResult> {
        match self {
            RobustOutcome::Robust(r) => Some(r),
            RobustOutcome::NotApplicable { .. } => None,
        }
    }
}

/// Robust gain from noisy data with `Ω` fixed to the LMI right inverse.
pub fn robust_stabilization(noisy: &DataBatch, gamma: f64, c1: f64, c0: f64, tol: f64) -> Result<RobustOutcome> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParams(format!("gamma must lie in (0,1), got {gamma}")));
    }
    if !(c1.is_finite() && c0.is_finite() && c1 >= 0.0 && c0 >= 0.0) {
        return Err(Error::InvalidParams(format!("c1, c0 must be finite and >= 0, got {c1}, {c0}")));
    }
    let synthesis = SynthesisOperator::from_matrix(noisy.xi0().clone())?;
    if !(frame_bounds(&synthesis, tol).lower > 0.0) {
        return Ok(RobustOutcome::NotApplicable { stage: RobustStage::Frame });
    }
    let gain = match gain_from_lmi(noisy.xi0(), noisy.xi1(), noisy.ups0(), gamma)? {
        Stabilization::Informative(g) => g,
        Stabilization::NotInformative { stage, .. } => {
            let stage = if stage == FailedStage::Certificate { RobustStage::Certificate } else { RobustStage::Lmi };
            return Ok(RobustOutcome::NotApplicable { stage });
        }
    };
    let m = gain.certificate.m;
    let Some(gamma_tilde) = robust_decay_rate(m, gamma, c1, c0) else {
        return Ok(RobustOutcome::NotApplicable { stage: RobustStage::NoiseBudget });
    };
    Ok(RobustOutcome::Robust(RobustGainResult {
        k: gain.k,
        m,
        gamma,
        gamma_tilde,
        margin_ok: margin_ok(m, gamma, c1, c0),
        omega: gain.right_inverse,
        closed_loop: gain.closed_loop,
        lmi_margin: gain.lmi_margin,
    }))
}

/// Certificates of `f` over a grid of rates, keeping the one with least
/// `γ̃`. Returns `(γ, M, γ̃)`.
pub fn best_robust_rate(f: &DMatrix<f64>, c1: f64, c0: f64, gammas: &[f64]) -> Result<Option<(f64, f64, f64)>> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &g in gammas {
        if let Certification::Certified(cert) = construct_certificate(f, g)? {
            if let Some(gt) = robust_decay_rate(cert.m, g, c1, c0) {
                if best.is_none_or(|b| gt < b.2) {
                    best = Some((g, cert.m, gt));
                }
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustVerification {
    pub trials: usize,
    /// Trials whose constructed noise failed the numerical class check.
    pub skipped: usize,
    pub violations: usize,
    pub worst_radius: Option<f64>,
    /// Largest `‖(A+BK)ᵏ‖ / γ̃ᵏ` over `k ≤ 100`.
    pub worst_transient: Option<f64>,
    /// Smallest class margin among accepted trials.
    pub worst_class_margin: Option<f64>,
}

impl RobustVerification {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// One member of the noisy compatible set together with its noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySample {
    pub noise: DataBatch,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

fn scaled_to_norm(mut x: DMatrix<f64>, target: f64) -> DMatrix<f64> {
    let norm = spectral_norm(&x);
    if norm > 0.0 {
        x *= target / norm;
    }
    x
}

/// Builds noise in `N(c₁, c₀, Ω)` with `‖Φ₁‖ = fraction·c₁`, `‖Φ₀‖ =
/// fraction·c₀` and a system `(A, B)` exactly compatible with the denoised
/// data. Requires `Ξ̃₀Ω = I` and `fraction·Mc₀ < 1`-type invertibility of
/// `I − Φ₀`.
pub fn sample_noisy_member(
    noisy: &DataBatch,
    omega: &DMatrix<f64>,
    c1: f64,
    c0: f64,
    fraction: f64,
    seed: u64,
    index: u64,
) -> Result<NoisySample> {
    let (n, m, len) = (noisy.n(), noisy.m(), noisy.len());
    let mut r = rng::stream(seed, index);
    let phi1 = scaled_to_norm(rng::gaussian_matrix(&mut r, n, n), fraction * c1);
    let phi0 = scaled_to_norm(rng::gaussian_matrix(&mut r, n, n), fraction * c0);
    let r0 = rng::gaussian_matrix(&mut r, n + m, len);
    let b = rng::gaussian_matrix(&mut r, n, m);

    let w = noisy.stacked();
    let complement = DMatrix::<f64>::identity(len, len) - omega * noisy.xi0();
    let stacked_noise = &w * omega * &phi0 * noisy.xi0() + r0 * &complement;

    let eye = DMatrix::<f64>::identity(n, n);
    let k = noisy.ups0() * omega;
    let f = noisy.xi1() * omega;
    let inv = (&eye - &phi0).try_inverse().ok_or_else(|| Error::NumericalBreakdown("I - Phi0 is singular".into()))?;
    let a = &f * (&eye - &phi1) * inv - &b * &k;

    let mut ab = DMatrix::zeros(n, n + m);
    ab.columns_mut(0, n).copy_from(&a);
    ab.columns_mut(n, m).copy_from(&b);
    let delta1 = noisy.xi1() - &ab * (&w - &stacked_noise);
    let noise =
        DataBatch::new(delta1, stacked_noise.rows(0, n).into_owned(), stacked_noise.rows(n, m).into_owned(), None)?;
    Ok(NoisySample { noise, a, b })
}

/// Sampled check of the robust guarantee: every constructed member must
/// satisfy `ρ(A+BK) ≤ γ̃ + 1e-6` and `‖(A+BK)ᵏ‖ ≤ (M + 1e-6) γ̃ᵏ` for
/// `k ≤ 100`.
#[allow(clippy::too_many_arguments)]
pub fn verify_robust_gain(
    noisy: &DataBatch,
    k: &DMatrix<f64>,
    m: f64,
    gamma_tilde: f64,
    c1: f64,
    c0: f64,
    omega: &DMatrix<f64>,
    trials: usize,
    seed: u64,
) -> Result<RobustVerification> {
    verify_robust_gain_with(noisy, k, m, gamma_tilde, c1, c0, omega, trials, seed, DEFAULT_BUDGET_FRACTION)
}

#[allow(clippy::too_many_arguments)]
pub fn verify_robust_gain_with(
    noisy: &DataBatch,
    k: &DMatrix<f64>,
    m: f64,
    gamma_tilde: f64,
    c1: f64,
    c0: f64,
    omega: &DMatrix<f64>,
    trials: usize,
    seed: u64,
    fraction: f64,
) -> Result<RobustVerification> {
    if k.shape() != (noisy.m(), noisy.n()) {
        return Err(Error::DimensionMismatch("gain shape does not match batch".into()));
    }
    if !(gamma_tilde > 0.0) || !(m >= 1.0) {
        return Err(Error::InvalidParams("need gamma_tilde > 0 and M >= 1".into()));
    }
    let params = NoiseClassParams::new(c1, c0, omega.clone())?;
    let mut report = RobustVerification {
        trials,
        skipped: 0,
        violations: 0,
        worst_radius: None,
        worst_transient: None,
        worst_class_margin: None,
    };
    for i in 0..trials {
        let sample = sample_noisy_member(noisy, omega, c1, c0, fraction, seed, i as u64)?;
        let membership = noise_in_class(&sample.noise, noisy, &params, class_tolerance(noisy, omega))?;
        if !membership.in_class {
            report.skipped += 1;
            continue;
        }
        let class_margin = membership.margin1.min(membership.margin0);
        report.worst_class_margin = Some(report.worst_class_margin.map_or(class_margin, |w| w.min(class_margin)));

        let cl = &sample.a + &sample.b * k;
        let rho = spectral_radius(&cl);
        let mut power = DMatrix::<f64>::identity(cl.nrows(), cl.ncols());
        let mut transient: f64 = 1.0;
        let mut bad = rho > gamma_tilde + 1e-6;
        for step in 1..=VERIFY_HORIZON {
            power = &cl * power;
            let ratio = spectral_norm(&power) / gamma_tilde.powi(step as i32);
            transient = transient.max(ratio);
            if spectral_norm(&power) > (m + 1e-6) * gamma_tilde.powi(step as i32) {
                bad = true;
            }
        }
        report.worst_radius = Some(report.worst_radius.map_or(rho, |w| w.max(rho)));
        report.worst_transient = Some(report.worst_transient.map_or(transient, |w| w.max(transient)));
        if bad {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Absolute eigenvalue floor scaled to the data, for the constructed noise.
fn class_tolerance(noisy: &DataBatch, omega: &DMatrix<f64>) -> f64 {
    let s = spectral_norm(&(noisy.stacked() * omega)).max(spectral_norm(&(noisy.xi1() * omega)));
    1e-9 * (1.0 + s * s)
}

/// Noise that zeroes column `k0` (1-based) of the data: `−x₀(k₀)` there and
/// zero elsewhere.
pub fn range_breaking_noise(x0_cols: &DMatrix<f64>, k0: usize) -> Result<DMatrix<f64>> {
    if k0 == 0 || k0 > x0_cols.ncols() {
        return Err(Error::IndexOutOfRange { index: k0, len: x0_cols.ncols() });
    }
    let mut noise = DMatrix::zeros(x0_cols.nrows(), x0_cols.ncols());
    noise.set_column(k0 - 1, &(-x0_cols.column(k0 - 1)));
    Ok(noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::informativity::stabilization_informative;
    use crate::operators::numerical_rank;
    use crate::systems::{counterexample_sequences, random_lti_batch};
    use approx::assert_relative_eq;

    fn zeros_like(b: &DataBatch) -> DataBatch {
        DataBatch::new(
            DMatrix::zeros(b.n(), b.len()),
            DMatrix::zeros(b.n(), b.len()),
            DMatrix::zeros(b.m(), b.len()),
            None,
        )
        .unwrap()
    }

    #[test]
    fn class_membership_examples() {
        let (_, b) = random_lti_batch(3, 1, 3, 2).unwrap();
        let eye = DMatrix::identity(3, 3);
        let zero = zeros_like(&b);
        let p = NoiseClassParams::new(0.0, 0.0, eye.clone()).unwrap();
        assert!(noise_in_class(&zero, &b, &p, 1e-9).unwrap().in_class);

        let d1 = DataBatch::new(b.xi1().clone(), DMatrix::zeros(3, 3), DMatrix::zeros(1, 3), None).unwrap();
        for (c1, expected) in [(1.0, true), (1.2, true), (0.99, false)] {
            let p = NoiseClassParams::new(c1, 0.0, eye.clone()).unwrap();
            assert_eq!(noise_in_class(&d1, &b, &p, 1e-9).unwrap().in_class, expected, "c1={c1}");
        }
        assert!(NoiseClassParams::new(-1.0, 0.0, eye).is_err());
    }

    #[test]
    fn minimal_constants_examples() {
        let (_, b) = random_lti_batch(3, 1, 3, 2).unwrap();
        let eye = DMatrix::identity(3, 3);
        assert_eq!(
            minimal_noise_constants(&zeros_like(&b), &b, &eye, 1e-9).unwrap(),
            NoiseConstants::Constants { c1: 0.0, c0: 0.0 }
        );
        let d1 = DataBatch::new(b.xi1() * 0.1, DMatrix::zeros(3, 3), DMatrix::zeros(1, 3), None).unwrap();
        match minimal_noise_constants(&d1, &b, &eye, 1e-9).unwrap() {
            NoiseConstants::Constants { c1, c0 } => {
                assert_relative_eq!(c1, 0.1, epsilon = 1e-10);
                assert_eq!(c0, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn orthogonal_noise_is_incompatible() {
        // Ξ̃₁Ω has rank 1 in R²; noise along the orthogonal complement.
        let noisy = DataBatch::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            None,
        )
        .unwrap();
        let noise = DataBatch::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.3, 0.0]),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(1, 2),
            None,
        )
        .unwrap();
        let eye = DMatrix::identity(2, 2);
        assert!(matches!(
            minimal_noise_constants(&noise, &noisy, &eye, 1e-9).unwrap(),
            NoiseConstants::Incompatible { which: 1, .. }
        ));
    }

    #[test]
    fn minimal_constants_are_tight() {
        for seed in 0..5 {
            let (_, b) = random_lti_batch(2, 1, 4, seed).unwrap();
            let mut r = rng::stream(seed, 99);
            let omega = rng::gaussian_matrix(&mut r, 4, 2);
            // The stacked part must stay in Ran([Ξ̃₀; Ῡ₀]Ω), which is 2-dimensional in R³.
            let stacked = b.stacked() * &omega * rng::gaussian_matrix(&mut r, 2, 4) * 0.1;
            let noise = DataBatch::new(
                rng::gaussian_matrix(&mut r, 2, 4) * 0.1,
                stacked.rows(0, 2).into_owned(),
                stacked.rows(2, 1).into_owned(),
                None,
            )
            .unwrap();
            let NoiseConstants::Constants { c1, c0 } = minimal_noise_constants(&noise, &b, &omega, 1e-9).unwrap()
            else {
                panic!("noise built inside the range");
            };
            let ok = NoiseClassParams::new(c1 + 1e-8, c0 + 1e-8, omega.clone()).unwrap();
            assert!(noise_in_class(&noise, &b, &ok, 1e-9).unwrap().in_class);
            let tight = NoiseClassParams::new(c1 * (1.0 - 1e-4), c0, omega.clone()).unwrap();
            assert!(!noise_in_class(&noise, &b, &tight, 1e-9).unwrap().in_class);

            let scaled = DataBatch::new(noise.xi1() * 3.0, noise.xi0() * 3.0, noise.ups0() * 3.0, None).unwrap();
            let NoiseConstants::Constants { c1: s1, c0: s0 } =
                minimal_noise_constants(&scaled, &b, &omega, 1e-9).unwrap()
            else {
                panic!()
            };
            assert_relative_eq!(s1, 3.0 * c1, max_relative = 1e-9);
            assert_relative_eq!(s0, 3.0 * c0, max_relative = 1e-9);
        }
    }

    #[test]
    fn decay_rate_arithmetic() {
        assert_relative_eq!(robust_decay_rate(2.0, 0.4, 0.1, 0.1).unwrap(), 0.6, epsilon = 1e-15);
        assert!(margin_ok(2.0, 0.4, 0.1, 0.1));
        assert_eq!(robust_decay_rate(3.0, 0.5, 0.0, 0.0), Some(0.5));
        assert_eq!(robust_decay_rate(2.0, 0.5, 0.0, 0.5), None);
    }

    #[test]
    fn robust_reduces_to_noise_free() {
        let (_, b) = random_lti_batch(3, 1, 8, 21).unwrap();
        let r = robust_stabilization(&b, 0.95, 0.0, 0.0, 1e-9).unwrap();
        let r = r.result().expect("robust");
        assert_eq!(r.gamma_tilde, 0.95);
        let s = stabilization_informative(&b, 0.95, 1e-9).unwrap();
        assert!((&r.k - &s.gain().unwrap().k).amax() <= 1e-10);
        assert!((b.xi0() * &r.omega - DMatrix::<f64>::identity(3, 3)).amax() < 1e-8);

        let big = robust_stabilization(&b, 0.95, 0.0, 1.0 / r.m, 1e-9).unwrap();
        assert_eq!(big, RobustOutcome::NotApplicable { stage: RobustStage::NoiseBudget });

        let thin = DataBatch::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::zeros(1, 2),
            None,
        )
        .unwrap();
        assert_eq!(
            robust_stabilization(&thin, 0.9, 0.0, 0.0, 1e-9).unwrap(),
            RobustOutcome::NotApplicable { stage: RobustStage::Frame }
        );
    }

    #[test]
    fn constructed_members_satisfy_the_data() {
        let (_, b) = random_lti_batch(3, 1, 8, 21).unwrap();
        let r = robust_stabilization(&b, 0.95, 0.01, 0.01, 1e-9).unwrap();
        let r = r.result().unwrap();
        let params = NoiseClassParams::new(0.01, 0.01, r.omega.clone()).unwrap();
        for i in 0..5 {
            let s = sample_noisy_member(&b, &r.omega, 0.01, 0.01, 0.9, 4, i).unwrap();
            let x1 = b.xi1() - s.noise.xi1();
            let x0 = b.xi0() - s.noise.xi0();
            let u0 = b.ups0() - s.noise.ups0();
            assert!((x1 - &s.a * x0 - &s.b * u0).amax() < 1e-8);
            assert!(noise_in_class(&s.noise, &b, &params, 1e-8).unwrap().in_class);
        }
    }

    #[test]
    fn verification_small_noise() {
        let (_, b) = random_lti_batch(3, 1, 8, 21).unwrap();
        let r = robust_stabilization(&b, 0.95, 0.0, 0.0, 1e-9).unwrap();
        let r = r.result().unwrap();
        let free = spectral_radius(&r.closed_loop);
        let rep = verify_robust_gain(&b, &r.k, r.m, r.gamma_tilde, 0.0, 0.0, &r.omega, 5, 0).unwrap();
        assert!(rep.passed());
        assert_relative_eq!(rep.worst_radius.unwrap(), free, epsilon = 1e-8);

        let gt = robust_decay_rate(r.m, 0.95, 1e-8, 1e-8).unwrap();
        let rep = verify_robust_gain(&b, &r.k, r.m, gt, 1e-8, 1e-8, &r.omega, 20, 1).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.skipped, 0);
        assert!((rep.worst_radius.unwrap() - free).abs() < 1e-4);

        let again = verify_robust_gain(&b, &r.k, r.m, gt, 1e-8, 1e-8, &r.omega, 20, 1).unwrap();
        assert_eq!(serde_json::to_string(&rep).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn range_breaking() {
        let c = counterexample_sequences(100).unwrap();
        for k0 in [1usize, 10, 100] {
            let d = range_breaking_noise(c.xi0(), k0).unwrap();
            assert_relative_eq!(spectral_norm(&d), 1.0 / k0 as f64, epsilon = 1e-12);
            let perturbed = c.xi0() + &d;
            assert_eq!(numerical_rank(&perturbed, 1e-12), 99);
            let fb = frame_bounds(&SynthesisOperator::from_matrix(perturbed).unwrap(), 1e-12);
            assert_eq!(fb.lower, 0.0);
        }
        assert!(matches!(range_breaking_noise(c.xi0(), 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(range_breaking_noise(c.xi0(), 101), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn rate_sweep() {
        let f = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let grid: Vec<f64> = (51..100).map(|i| i as f64 / 100.0).collect();
        let (g, m, gt) = best_robust_rate(&f, 0.01, 0.01, &grid).unwrap().unwrap();
        assert!(g > 0.5 && m >= 1.0);
        assert_relative_eq!(gt, robust_decay_rate(m, g, 0.01, 0.01).unwrap());
    }
}

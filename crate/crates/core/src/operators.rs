//! Operator primitives on finite truncations: synthesis operators, frame
//! bounds, pseudoinverses, Douglas factorization and power-stability
//! certificates.
//!
//! All norms are spectral (operator 2-) norms unless stated otherwise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, PSD_FLOOR};

/// Cap on the power search in [`construct_certificate`].
pub const DEFAULT_K_MAX: usize = 10_000;

/// Matrix whose `k`-th column is the `k`-th data vector, copied verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOperator {
    matrix: DMatrix<f64>,
}

impl SynthesisOperator {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch("ambient dimension must be >= 1".into()));
        }
        if matrix.ncols() == 0 {
            return Err(Error::Empty("synthesis operator needs at least one sample".into()));
        }
        ensure_finite(&matrix, "synthesis operator")?;
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Number of samples `N`.
    pub fn samples(&self) -> usize {
        self.matrix.ncols()
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Stacks data vectors as columns.
pub fn build_synthesis(vectors: &[DVector<f64>]) -> Result<SynthesisOperator> {
    let first = vectors.first().ok_or_else(|| Error::Empty("no data vectors".into()))?;
    let dim = first.len();
    if let Some((k, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(Error::DimensionMismatch(format!("vector {k} has length {}, expected {dim}", v.len())));
    }
    SynthesisOperator::from_matrix(DMatrix::from_columns(vectors))
}

/// Bessel (upper) and frame (lower) bounds of the column sequence of a
/// synthesis operator.
///
/// A finite truncation always has a finite upper bound, so no "is Bessel"
/// verdict is offered; compare `upper` against your own bound instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBounds {
    pub upper: f64,
    pub lower: f64,
    pub rank: usize,
    pub tol: f64,
}

impl FrameBounds {
    /// Frame for the whole ambient space (full row rank at `tol`).
    pub fn is_frame(&self) -> bool {
        self.lower > 0.0
    }
}

pub fn frame_bounds(s: &SynthesisOperator, tol: f64) -> FrameBounds {
    let sv = singular_values(s.matrix());
    let rank = rank_from_singular_values(&sv, tol);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let lower = if rank == s.dim() {
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        smin * smin
    } else {
        0.0
    };
    FrameBounds { upper: smax * smax, lower, rank, tol }
}

/// Singular value decomposition `a = U diag(s) Vᵀ`, `s` descending.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD, or with `full` the complete square `U` and `V`. Backed by faer:
/// nalgebra's bidiagonal SVD can return a wrong factorization for wide
/// rank-deficient inputs.
///
/// # Panics
/// If `a` has non-finite entries.
pub(crate) fn svd(a: &DMatrix<f64>, full: bool) -> Svd {
    let (r, c) = a.shape();
    let m = faer::Mat::<f64>::from_fn(r, c, |i, j| a[(i, j)]);
    let to_na = |x: faer::MatRef<'_, f64>| DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)]);
    let (u, s, v) = if full {
        let d = m.svd().expect("SVD requires finite entries");
        let s = d.S().column_vector().iter().copied().collect::<Vec<_>>();
        (to_na(d.U()), s, to_na(d.V()))
    } else {
        let d = m.thin_svd().expect("SVD requires finite entries");
        let s = d.S().column_vector().iter().copied().collect::<Vec<_>>();
        (to_na(d.U()), s, to_na(d.V()))
    };
    debug_assert!(s.windows(2).all(|w| w[0] >= w[1]));
    Svd { u, s, v }
}

/// Singular values, descending. Empty matrices have none.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let mut sv = m.singular_values().expect("SVD requires finite entries");
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

fn rank_from_singular_values(sv: &[f64], tol: f64) -> usize {
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= tol * smax).count()
}

/// Rank with singular values below `tol * σ_max` treated as zero.
pub fn numerical_rank(a: &DMatrix<f64>, tol: f64) -> usize {
    rank_from_singular_values(&singular_values(a), tol)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Moore–Penrose pseudoinverse through the SVD; singular values below
/// `tol * σ_max` are dropped.
pub fn pseudo_inverse(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(c, r);
    if a.is_empty() {
        return out;
    }
    let d = svd(a, false);
    let smax = d.s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return out;
    }
    for (i, &s) in d.s.iter().enumerate() {
        if s >= tol * smax {
            out += d.v.column(i) * d.u.column(i).transpose() / s;
        }
    }
    out
}

/// Orthonormal basis of `Ker a` (columns).
pub fn kernel_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    let d = svd(a, true);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let keep = if smax <= 0.0 { 0 } else { d.s.iter().filter(|&&s| s >= tol * smax).count() };
    d.v.columns(keep, c - keep).into_owned()
}

/// Orthonormal basis of `Ran a` (columns).
pub fn range_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let r = a.nrows();
    if a.is_empty() {
        return DMatrix::zeros(r, 0);
    }
    let d = svd(a, false);
    let rank = rank_from_singular_values(&d.s, tol);
    d.u.columns(0, rank).into_owned()
}

/// `(S + Sᵀ)/2`.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
pub fn min_sym_eigenvalue(s: &DMatrix<f64>) -> f64 {
    if s.is_empty() {
        return f64::INFINITY;
    }
    symmetrize(s).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// PSD test with the library-wide eigenvalue floor.
pub fn is_psd(s: &DMatrix<f64>) -> bool {
    min_sym_eigenvalue(s) >= -PSD_FLOOR
}

/// Result of [`douglas_minimal_constant`] when `Ran A ⊆ Ran B`.
#[derive(Debug, Clone, PartialEq)]
pub struct DouglasFactor {
    /// Minimal-norm solution of `A = B C`.
    pub c: DMatrix<f64>,
    /// `σ_max(C)`: the least `c` with `A Aᵀ ⪯ c² B Bᵀ`.
    pub norm_c: f64,
    /// `‖B C − A‖_F`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factorization {
    Factor(DouglasFactor),
    /// `Ran A ⊄ Ran B`; carries the residual of the best least-squares factor.
    NoFactorization {
        residual: f64,
    },
}

impl Factorization {
    pub fn factor(&self) -> Option<&DouglasFactor> {
        match self {
            Factorization::Factor(f) => Some(f),
            Factorization::NoFactorization { .. } => None,
        }
    }
}

/// Douglas factorization `A = B C` with `C = B⁺ A`.
pub fn douglas_minimal_constant(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<Factorization> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!("A has {} rows, B has {}", a.nrows(), b.nrows())));
    }
    let c = pseudo_inverse(b, tol) * a;
    let residual = (b * &c - a).norm();
    if residual <= tol * a.norm().max(1.0) {
        let norm_c = spectral_norm(&c);
        Ok(Factorization::Factor(DouglasFactor { c, norm_c, residual }))
    } else {
        Ok(Factorization::NoFactorization { residual })
    }
}

/// Max modulus of the eigenvalues (real Schur form).
pub fn spectral_radius(f: &DMatrix<f64>) -> f64 {
    assert!(f.is_square(), "spectral radius of a non-square matrix");
    if f.is_empty() {
        return 0.0;
    }
    f.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Verified `‖Fᵏ‖ ≤ M γᵏ` for all `k ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerStabilityCertificate {
    #[serde(rename = "M")]
    pub m: f64,
    pub gamma: f64,
    /// The power `k₀` with `‖F^{k₀}‖ ≤ γ^{k₀}`; all lower powers were
    /// evaluated explicitly.
    pub horizon_checked: usize,
}

impl PowerStabilityCertificate {
    /// `M γᵏ`.
    pub fn bound(&self, k: usize) -> f64 {
        self.m * self.gamma.powi(k as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotCertifiableReason {
    /// `ρ(F) > γ`.
    SpectralRadius,
    /// No contracting power found up to the cap.
    SearchCapReached,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certification {
    Certified(PowerStabilityCertificate),
    NotCertifiable { spectral_radius: f64, gamma: f64, reason: NotCertifiableReason },
}

impl Certification {
    pub fn certificate(&self) -> Option<&PowerStabilityCertificate> {
        match self {
            Certification::Certified(c) => Some(c),
            Certification::NotCertifiable { .. } => None,
        }
    }
}

/// Power-stability certificate with the default search cap.
pub fn construct_certificate(f: &DMatrix<f64>, gamma: f64) -> Result<Certification> {
    construct_certificate_capped(f, gamma, DEFAULT_K_MAX)
}

/// Finds the least `k₀ ≥ 1` with `‖F^{k₀}‖ ≤ γ^{k₀}` and sets
/// `M = max_{r < k₀} ‖F^r‖ / γ^r`. Writing `k = q k₀ + r`,
/// submultiplicativity gives `‖Fᵏ‖ ≤ ‖F^{k₀}‖^q ‖F^r‖ ≤ M γᵏ`.
pub fn construct_certificate_capped(f: &DMatrix<f64>, gamma: f64, k_max: usize) -> Result<Certification> {
    if !f.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "certificate needs a square matrix, got {}x{}",
            f.nrows(),
            f.ncols()
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParams(format!("gamma must be positive, got {gamma}")));
    }
    ensure_finite(f, "certificate matrix")?;
    let rho = spectral_radius(f);
    if rho > gamma {
        return Ok(Certification::NotCertifiable {
            spectral_radius: rho,
            gamma,
            reason: NotCertifiableReason::SpectralRadius,
        });
    }
    // Work with G = F/γ so that γᵏ never under- or overflows.
    let g = f / gamma;
    let mut power = DMatrix::identity(f.nrows(), f.ncols());
    let mut m = 1.0_f64;
    for k in 1..=k_max {
        power = &power * &g;
        let norm = spectral_norm(&power);
        if !norm.is_finite() {
            return Err(Error::NumericalBreakdown(format!("non-finite power norm at k = {k}")));
        }
        if norm <= 1.0 {
            return Ok(Certification::Certified(PowerStabilityCertificate { m, gamma, horizon_checked: k }));
        }
        m = m.max(norm);
    }
    Ok(Certification::NotCertifiable { spectral_radius: rho, gamma, reason: NotCertifiableReason::SearchCapReached })
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(d: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(d))
    }

    #[test]
    fn synthesis_copies_columns() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let s = build_synthesis(&[e1, e2]).unwrap();
        assert_eq!(s.matrix(), &DMatrix::identity(2, 2));

        let cols: Vec<_> = (1..=4)
            .map(|k| {
                let mut v = DVector::zeros(4);
                v[k - 1] = 1.0 / k as f64;
                v
            })
            .collect();
        let s = build_synthesis(&cols).unwrap();
        assert_eq!(s.matrix(), &diag(&[1.0, 0.5, 1.0 / 3.0, 0.25]));

        let s = build_synthesis(&[DVector::from_vec(vec![3.0, 4.0])]).unwrap();
        assert_eq!(s.matrix(), &DMatrix::from_row_slice(2, 1, &[3.0, 4.0]));
        assert_eq!((s.dim(), s.samples()), (2, 1));
    }

    #[test]
    fn synthesis_rejects_bad_input() {
        assert!(matches!(build_synthesis(&[]), Err(Error::Empty(_))));
        let r = build_synthesis(&[DVector::zeros(2), DVector::zeros(3)]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        let r = build_synthesis(&[DVector::from_vec(vec![f64::NAN])]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn frame_bounds_examples() {
        let fb = frame_bounds(&SynthesisOperator::from_matrix(DMatrix::identity(3, 3)).unwrap(), 1e-9);
        assert_relative_eq!(fb.upper, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fb.lower, 1.0, epsilon = 1e-12);
        assert_eq!(fb.rank, 3);

        for n in [1usize, 3, 7] {
            let d: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
            let fb = frame_bounds(&SynthesisOperator::from_matrix(diag(&d)).unwrap(), 1e-9);
            assert_relative_eq!(fb.upper, 1.0, epsilon = 1e-12);
            assert_relative_eq!(fb.lower, 1.0 / (n * n) as f64, max_relative = 1e-12);
        }

        let fb = frame_bounds(&SynthesisOperator::from_matrix(diag(&[1.0, 0.0])).unwrap(), 1e-9);
        assert_eq!(fb.lower, 0.0);
        assert_eq!(fb.rank, 1);
        assert!(!fb.is_frame());
    }

    #[test]
    fn pseudo_inverse_examples() {
        assert_relative_eq!(pseudo_inverse(&DMatrix::identity(3, 3), 1e-9), DMatrix::identity(3, 3), epsilon = 1e-14);
        assert_relative_eq!(pseudo_inverse(&diag(&[2.0, 0.0]), 1e-9), diag(&[0.5, 0.0]), epsilon = 1e-14);
        assert_eq!(pseudo_inverse(&DMatrix::zeros(2, 3), 1e-9), DMatrix::zeros(3, 2));
    }

    #[test]
    fn kernel_and_range_bases() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let z = kernel_basis(&a, 1e-9);
        assert_eq!(z.ncols(), 1);
        assert!((&a * &z).norm() < 1e-14);
        assert_eq!(kernel_basis(&DMatrix::identity(3, 3), 1e-9).ncols(), 0);
        assert_eq!(range_basis(&diag(&[1.0, 0.0, 2.0]), 1e-9).ncols(), 2);
        assert_eq!(range_basis(&DMatrix::zeros(2, 2), 1e-9).ncols(), 0);
    }

    #[test]
    fn douglas_examples() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0]);
        let f = douglas_minimal_constant(&b, &b, 1e-9).unwrap();
        assert_relative_eq!(f.factor().unwrap().norm_c, 1.0, epsilon = 1e-10);

        let f = douglas_minimal_constant(&DMatrix::zeros(2, 3), &b, 1e-9).unwrap();
        assert_eq!(f.factor().unwrap().norm_c, 0.0);

        let a = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        match douglas_minimal_constant(&a, &b, 1e-9).unwrap() {
            Factorization::NoFactorization { residual } => assert_relative_eq!(residual, 1.0, epsilon = 1e-12),
            other => panic!("expected NoFactorization, got {other:?}"),
        }

        let r = douglas_minimal_constant(&DMatrix::zeros(2, 1), &DMatrix::zeros(3, 1), 1e-9);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(spectral_radius(&diag(&[0.2, -0.7])), 0.7, max_relative = 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert_relative_eq!(spectral_radius(&rot), 0.5, max_relative = 1e-12);
        // companion matrix of z^2 - z - 1
        let comp = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(spectral_radius(&comp), golden, max_relative = 1e-9);
    }

    #[test]
    fn certificate_trivial_cases() {
        let c = construct_certificate(&DMatrix::zeros(3, 3), 0.5).unwrap();
        let c = c.certificate().unwrap();
        assert_eq!(c.m, 1.0);
        assert_eq!(c.horizon_checked, 1);

        let c = construct_certificate(&diag(&[0.5, 0.3]), 0.5).unwrap();
        assert_eq!(c.certificate().unwrap().m, 1.0);
    }

    #[test]
    fn certificate_jordan_block_matches_brute_force() {
        let f = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
        let gamma = 0.95;
        // Oracle: sup_k ‖Fᵏ‖/γᵏ by direct powering (the ratio peaks early and
        // then decays like k (0.9/0.95)^k).
        let mut p = DMatrix::<f64>::identity(2, 2);
        let mut oracle = 0.0_f64;
        for _ in 0..=2000 {
            oracle = oracle.max(spectral_norm(&p) / 1.0);
            p = &p * &f / gamma;
        }
        let cert = *construct_certificate(&f, gamma).unwrap().certificate().unwrap();
        assert!(cert.m >= oracle * (1.0 - 1e-12), "M = {} below sup = {oracle}", cert.m);
        // M is the max over the first k0 powers, which contains the peak.
        assert_relative_eq!(cert.m, oracle, max_relative = 1e-10);
    }

    #[test]
    fn certificate_rejects_unstable_and_cap() {
        let f = diag(&[1.2, 0.1]);
        match construct_certificate(&f, 0.9).unwrap() {
            Certification::NotCertifiable { reason, spectral_radius, .. } => {
                assert_eq!(reason, NotCertifiableReason::SpectralRadius);
                assert_relative_eq!(spectral_radius, 1.2, max_relative = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let f = DMatrix::from_row_slice(2, 2, &[0.9, 10.0, 0.0, 0.9]);
        let c = construct_certificate_capped(&f, 0.91, 3).unwrap();
        assert!(matches!(c, Certification::NotCertifiable { reason: NotCertifiableReason::SearchCapReached, .. }));
        assert!(construct_certificate(&f, 0.0).is_err());
        assert!(construct_certificate(&DMatrix::zeros(2, 3), 0.5).is_err());
    }
}

//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use infostab::finitedata;
use infostab::informativity::{self, FailedStage, Stabilization};
use infostab::noise::{self, RobustOutcome, RobustStage};
use infostab::operators;
use infostab::systems::{self, matrix_from_rows, matrix_to_rows};
use infostab::{Certification, Factorization};

type Rows = Vec<Vec<f64>>;

fn err(e: infostab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &Rows) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    matrix_from_rows(rows, cols).map_err(err)
}

/// Samples as columns from rows of samples.
fn samples(rows: &Rows, dim: usize) -> PyResult<DMatrix<f64>> {
    Ok(matrix_from_rows(rows, dim).map_err(err)?.transpose())
}

#[pyclass(name = "DataBatch", module = "pyinfostab", frozen)]
pub struct PyDataBatch {
    inner: systems::DataBatch,
}

#[pymethods]
impl PyDataBatch {
    /// `x1`, `x0`, `u0` are lists of samples, one row per sample.
    #[new]
    #[pyo3(signature = (x1, x0, u0, meta=None))]
    fn new(x1: Rows, x0: Rows, u0: Rows, meta: Option<String>) -> PyResult<Self> {
        let n = x0.first().map_or(0, Vec::len);
        let m = u0.first().map_or(0, Vec::len);
        let inner = systems::DataBatch::new(samples(&x1, n)?, samples(&x0, n)?, samples(&u0, m)?, meta).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        systems::DataBatch::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `Ξ₁`, one column per sample.
    #[getter]
    fn xi1(&self) -> Rows {
        matrix_to_rows(self.inner.xi1())
    }

    #[getter]
    fn xi0(&self) -> Rows {
        matrix_to_rows(self.inner.xi0())
    }

    #[getter]
    fn ups0(&self) -> Rows {
        matrix_to_rows(self.inner.ups0())
    }

    fn __repr__(&self) -> String {
        format!("DataBatch(n={}, m={}, N={})", self.inner.n(), self.inner.m(), self.inner.len())
    }
}

#[pyclass(name = "LinearSystem", module = "pyinfostab", frozen)]
pub struct PyLinearSystem {
    inner: systems::LinearSystem,
}

#[pymethods]
impl PyLinearSystem {
    #[new]
    fn new(a: Rows, b: Rows) -> PyResult<Self> {
        let inner = systems::LinearSystem::new(to_matrix(&a)?, to_matrix(&b)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn a(&self) -> Rows {
        matrix_to_rows(self.inner.a())
    }

    #[getter]
    fn b(&self) -> Rows {
        matrix_to_rows(self.inner.b())
    }

    /// `A + BK`.
    fn closed_loop(&self, k: Rows) -> PyResult<Rows> {
        Ok(matrix_to_rows(&self.inner.closed_loop(&to_matrix(&k)?).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!("LinearSystem(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// Outcome of a stabilization test. `k` is `None` when not informative.
#[pyclass(name = "GainReport", module = "pyinfostab", frozen, get_all)]
pub struct GainReport {
    informative: bool,
    /// `rank`, `lmi` or `certificate` on failure.
    failed_stage: Option<String>,
    lmi_margin: Option<f64>,
    k: Option<Rows>,
    closed_loop: Option<Rows>,
    closed_loop_radius: Option<f64>,
    /// Certificate `(M, gamma)`.
    certificate: Option<(f64, f64)>,
    /// Modes kept and dimension of `X₊` (finite-plus only).
    n0: Option<usize>,
    n_plus: Option<usize>,
}

#[pymethods]
impl GainReport {
    fn __repr__(&self) -> String {
        format!("GainReport(informative={}, margin={:?})", self.informative, self.lmi_margin)
    }
}

fn stage_name(stage: FailedStage) -> String {
    match stage {
        FailedStage::Rank => "rank",
        FailedStage::Lmi => "lmi",
        FailedStage::Certificate => "certificate",
    }
    .into()
}

fn gain_report(s: Stabilization) -> GainReport {
    match s {
        Stabilization::Informative(g) => GainReport {
            informative: true,
            failed_stage: None,
            lmi_margin: Some(g.lmi_margin),
            k: Some(matrix_to_rows(&g.k)),
            closed_loop: Some(matrix_to_rows(&g.closed_loop)),
            closed_loop_radius: Some(g.closed_loop_radius),
            certificate: Some((g.certificate.m, g.certificate.gamma)),
            n0: None,
            n_plus: None,
        },
        Stabilization::NotInformative { stage, margin } => GainReport {
            informative: false,
            failed_stage: Some(stage_name(stage)),
            lmi_margin: margin,
            k: None,
            closed_loop: None,
            closed_loop_radius: None,
            certificate: None,
            n0: None,
            n_plus: None,
        },
    }
}

#[pyclass(name = "RobustReport", module = "pyinfostab", frozen, get_all)]
pub struct RobustReport {
    applicable: bool,
    /// `frame`, `lmi`, `certificate` or `noise_budget` when not applicable.
    stage: Option<String>,
    k: Option<Rows>,
    m: Option<f64>,
    gamma_tilde: Option<f64>,
    margin_ok: Option<bool>,
}

#[pymethods]
impl RobustReport {
    fn __repr__(&self) -> String {
        format!("RobustReport(applicable={}, gamma_tilde={:?})", self.applicable, self.gamma_tilde)
    }
}

/// Worked heat/ODE cascade instance; returns `(system, batch)`.
#[pyfunction]
#[pyo3(signature = (n_modes=systems::DEFAULT_N_MODES, samples=5))]
fn heat_cascade_batch(n_modes: usize, samples: usize) -> PyResult<(PyLinearSystem, PyDataBatch)> {
    let (sys, batch) =
        systems::heat_cascade_batch(&systems::HeatCascadeParams::reference(n_modes), samples).map_err(err)?;
    Ok((PyLinearSystem { inner: sys }, PyDataBatch { inner: batch }))
}

#[pyfunction]
#[pyo3(signature = (n, m, samples, seed=0))]
fn random_lti_batch(n: usize, m: usize, samples: usize, seed: u64) -> PyResult<(PyLinearSystem, PyDataBatch)> {
    let (sys, batch) = systems::random_lti_batch(n, m, samples, seed).map_err(err)?;
    Ok((PyLinearSystem { inner: sys }, PyDataBatch { inner: batch }))
}

#[pyfunction]
fn counterexample_sequences(n: usize) -> PyResult<PyDataBatch> {
    systems::counterexample_sequences(n).map(|inner| PyDataBatch { inner }).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (batch, level, seed=0))]
fn perturbed_batch(batch: &PyDataBatch, level: f64, seed: u64) -> PyResult<PyDataBatch> {
    systems::perturbed_batch(&batch.inner, level, seed).map(|inner| PyDataBatch { inner }).map_err(err)
}

/// `(informative, rank, required)`.
#[pyfunction]
#[pyo3(signature = (batch, tol=infostab::DEFAULT_TOL))]
fn identification_informative(batch: &PyDataBatch, tol: f64) -> (bool, usize, usize) {
    let r = informativity::identification_informative(&batch.inner, tol);
    (r.informative, r.rank, r.required)
}

#[pyfunction]
#[pyo3(signature = (batch, gamma, tol=infostab::DEFAULT_TOL))]
fn stabilization_informative(batch: &PyDataBatch, gamma: f64, tol: f64) -> PyResult<GainReport> {
    informativity::stabilization_informative(&batch.inner, gamma, tol).map(gain_report).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (a0, b0, tau, gamma_minus))]
fn mode_cutoff(a0: f64, b0: f64, tau: f64, gamma_minus: f64) -> PyResult<usize> {
    finitedata::mode_cutoff(a0, b0, tau, gamma_minus).map_err(err)
}

/// Stabilization on `X₊ = [v; modes < n₀]` of a cascade batch whose state
/// leads with a `v_dim`-dimensional subsystem.
#[pyfunction]
#[pyo3(signature = (batch, gamma, gamma_minus, a0, b0, tau=0.05, v_dim=2, tol=infostab::DEFAULT_TOL))]
#[allow(clippy::too_many_arguments)]
fn finite_plus(
    batch: &PyDataBatch,
    gamma: f64,
    gamma_minus: f64,
    a0: f64,
    b0: f64,
    tau: f64,
    v_dim: usize,
    tol: f64,
) -> PyResult<GainReport> {
    let b = &batch.inner;
    if v_dim >= b.n() {
        return Err(PyValueError::new_err(format!("v_dim = {v_dim} leaves no modes in dimension {}", b.n())));
    }
    let n0 = finitedata::mode_cutoff(a0, b0, tau, gamma_minus).map_err(err)?;
    let dec = finitedata::modal_decomposition(v_dim, b.n() - v_dim, n0, gamma_minus).map_err(err)?;
    let pd = finitedata::project_data(b, &dec).map_err(err)?;
    let s = finitedata::finite_informative(&pd, gamma, gamma_minus, tol).map_err(err)?;
    let mut report = gain_report(s);
    report.n0 = Some(dec.n0);
    report.n_plus = Some(dec.n_plus);
    Ok(report)
}

/// Largest `ρ(A + BK)` over sampled systems compatible with the batch.
#[pyfunction]
#[pyo3(signature = (batch, k, trials=200, scale=1.0, seed=0))]
fn worst_compatible_radius(batch: &PyDataBatch, k: Rows, trials: usize, scale: f64, seed: u64) -> PyResult<f64> {
    let k = to_matrix(&k)?;
    let systems = informativity::sample_compatible_systems(&batch.inner, trials, scale, seed).map_err(err)?;
    systems
        .iter()
        .try_fold(0.0f64, |worst, sys| Ok(worst.max(operators::spectral_radius(&sys.closed_loop(&k).map_err(err)?))))
}

#[pyfunction]
#[pyo3(signature = (batch, gamma, c1, c0, tol=infostab::DEFAULT_TOL))]
fn robust_stabilization(batch: &PyDataBatch, gamma: f64, c1: f64, c0: f64, tol: f64) -> PyResult<RobustReport> {
    Ok(match noise::robust_stabilization(&batch.inner, gamma, c1, c0, tol).map_err(err)? {
        RobustOutcome::Robust(r) => RobustReport {
            applicable: true,
            stage: None,
            k: Some(matrix_to_rows(&r.k)),
            m: Some(r.m),
            gamma_tilde: Some(r.gamma_tilde),
            margin_ok: Some(r.margin_ok),
        },
        RobustOutcome::NotApplicable { stage } => RobustReport {
            applicable: false,
            stage: Some(
                match stage {
                    RobustStage::Frame => "frame",
                    RobustStage::Lmi => "lmi",
                    RobustStage::Certificate => "certificate",
                    RobustStage::NoiseBudget => "noise_budget",
                }
                .into(),
            ),
            k: None,
            m: None,
            gamma_tilde: None,
            margin_ok: None,
        },
    })
}

/// `γ̃`, or `None` when `M c₀ ≥ 1`.
#[pyfunction]
fn robust_decay_rate(m: f64, gamma: f64, c1: f64, c0: f64) -> Option<f64> {
    noise::robust_decay_rate(m, gamma, c1, c0)
}

#[pyfunction]
fn margin_ok(m: f64, gamma: f64, c1: f64, c0: f64) -> bool {
    noise::margin_ok(m, gamma, c1, c0)
}

#[pyfunction]
fn spectral_radius(f: Rows) -> PyResult<f64> {
    let f = to_matrix(&f)?;
    if !f.is_square() {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(operators::spectral_radius(&f))
}

#[pyfunction]
#[pyo3(signature = (a, tol=infostab::DEFAULT_TOL))]
fn pseudo_inverse(a: Rows, tol: f64) -> PyResult<Rows> {
    Ok(matrix_to_rows(&operators::pseudo_inverse(&to_matrix(&a)?, tol)))
}

/// `(upper, lower, rank)` of the synthesis operator with the given columns.
#[pyfunction]
#[pyo3(signature = (s, tol=infostab::DEFAULT_TOL))]
fn frame_bounds(s: Rows, tol: f64) -> PyResult<(f64, f64, usize)> {
    let s = operators::SynthesisOperator::from_matrix(to_matrix(&s)?).map_err(err)?;
    let fb = operators::frame_bounds(&s, tol);
    Ok((fb.upper, fb.lower, fb.rank))
}

/// `(M, gamma)` with `‖Fᵏ‖ ≤ M γᵏ`, or `None`.
#[pyfunction]
fn construct_certificate(f: Rows, gamma: f64) -> PyResult<Option<(f64, f64)>> {
    Ok(match operators::construct_certificate(&to_matrix(&f)?, gamma).map_err(err)? {
        Certification::Certified(c) => Some((c.m, c.gamma)),
        Certification::NotCertifiable { .. } => None,
    })
}

/// Least `c` with `AAᵀ ⪯ c² BBᵀ`, or `None` when `Ran A ⊄ Ran B`.
#[pyfunction]
#[pyo3(signature = (a, b, tol=infostab::DEFAULT_TOL))]
fn douglas_minimal_constant(a: Rows, b: Rows, tol: f64) -> PyResult<Option<f64>> {
    Ok(match operators::douglas_minimal_constant(&to_matrix(&a)?, &to_matrix(&b)?, tol).map_err(err)? {
        Factorization::Factor(f) => Some(f.norm_c),
        Factorization::NoFactorization { .. } => None,
    })
}

#[pymodule]
fn pyinfostab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataBatch>()?;
    m.add_class::<PyLinearSystem>()?;
    m.add_class::<GainReport>()?;
    m.add_class::<RobustReport>()?;
    m.add_function(wrap_pyfunction!(heat_cascade_batch, m)?)?;
    m.add_function(wrap_pyfunction!(random_lti_batch, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_sequences, m)?)?;
    m.add_function(wrap_pyfunction!(perturbed_batch, m)?)?;
    m.add_function(wrap_pyfunction!(identification_informative, m)?)?;
    m.add_function(wrap_pyfunction!(stabilization_informative, m)?)?;
    m.add_function(wrap_pyfunction!(mode_cutoff, m)?)?;
    m.add_function(wrap_pyfunction!(finite_plus, m)?)?;
    m.add_function(wrap_pyfunction!(worst_compatible_radius, m)?)?;
    m.add_function(wrap_pyfunction!(robust_stabilization, m)?)?;
    m.add_function(wrap_pyfunction!(robust_decay_rate, m)?)?;
    m.add_function(wrap_pyfunction!(margin_ok, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(frame_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(construct_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(douglas_minimal_constant, m)?)?;
    m.add("DEFAULT_TOL", infostab::DEFAULT_TOL)?;
    Ok(())
}

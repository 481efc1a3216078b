//! Linear system models, the sampled heat-equation/ODE cascade, simulation,
//! and assembly of data batches from trajectories.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::operators::ensure_finite;
use crate::rng;
use crate::{Error, Result};

/// Version written to (and required from) every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// `x(k+1) = A x(k) + B u(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!("B has {} rows, A has {}", b.nrows(), a.nrows())));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        Ok(Self { a, b })
    }

    /// Splits `[A B]` after the first `n` columns.
    pub fn from_stacked(ab: &DMatrix<f64>, n: usize) -> Result<Self> {
        if ab.ncols() < n {
            return Err(Error::DimensionMismatch(format!("[A B] has {} columns, need at least {n}", ab.ncols())));
        }
        Self::new(ab.columns(0, n).into_owned(), ab.columns(n, ab.ncols() - n).into_owned())
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `A + B K`.
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if k.shape() != (self.m(), self.n()) {
            return Err(Error::DimensionMismatch(format!(
                "gain is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                self.m(),
                self.n()
            )));
        }
        Ok(&self.a + &self.b * k)
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// Parameters of the heat equation on `(0,1)` with Neumann boundary input
/// `∂ζ/∂ξ(0,t) = −C_v v(k)` on `[kτ, (k+1)τ)`, in cascade with
/// `v(k+1) = A_v v(k) + B_v u(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatCascadeParams {
    pub a_v: DMatrix<f64>,
    pub b_v: DMatrix<f64>,
    /// `1 × m_v`.
    pub c_v: DMatrix<f64>,
    /// Diffusivity `a > 0`.
    pub diffusivity: f64,
    /// Reaction rate `b`.
    pub reaction: f64,
    /// Sampling period `τ > 0`.
    pub tau: f64,
    /// Number of cosine modes kept.
    pub n_modes: usize,
}

/// Modes kept by default in the worked example.
pub const DEFAULT_N_MODES: usize = 50;

impl HeatCascadeParams {
    /// The worked example: `A_v = [1 0.5; −0.5 1]`, `B_v = [2; −1]`,
    /// `C_v = [0.5 1]`, `a = 0.2`, `b = −0.1`, `τ = 0.05`.
    pub fn reference(n_modes: usize) -> Self {
        Self {
            a_v: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]),
            b_v: DMatrix::from_row_slice(2, 1, &[2.0, -1.0]),
            c_v: DMatrix::from_row_slice(1, 2, &[0.5, 1.0]),
            diffusivity: 0.2,
            reaction: -0.1,
            tau: 0.05,
            n_modes,
        }
    }

    /// Dimension `m_v` of the finite-dimensional subsystem.
    pub fn v_dim(&self) -> usize {
        self.a_v.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_v.ncols()
    }

    /// Total truncated state dimension `m_v + n_modes`.
    pub fn state_dim(&self) -> usize {
        self.v_dim() + self.n_modes
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return Err(Error::InvalidParams(format!("diffusivity must be > 0, got {}", self.diffusivity)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParams(format!("tau must be > 0, got {}", self.tau)));
        }
        if !self.reaction.is_finite() {
            return Err(Error::InvalidParams("reaction rate must be finite".into()));
        }
        if self.n_modes == 0 {
            return Err(Error::InvalidParams("n_modes must be >= 1".into()));
        }
        let mv = self.a_v.nrows();
        if mv == 0 || !self.a_v.is_square() {
            return Err(Error::InvalidParams("A_v must be square and nonempty".into()));
        }
        if self.b_v.nrows() != mv || self.b_v.ncols() == 0 {
            return Err(Error::InvalidParams("B_v must be m_v x p with p >= 1".into()));
        }
        if self.c_v.shape() != (1, mv) {
            return Err(Error::InvalidParams("C_v must be 1 x m_v".into()));
        }
        for (m, name) in [(&self.a_v, "A_v"), (&self.b_v, "B_v"), (&self.c_v, "C_v")] {
            ensure_finite(m, name)?;
        }
        Ok(())
    }
}

/// `λ_n(a, b) = −a π² n² + b`.
pub fn heat_eigenvalue(a: f64, b: f64, n: usize) -> f64 {
    let n = n as f64;
    -a * PI * PI * n * n + b
}

/// `φ_n(0)`: 1 for the constant mode, `√2` for the cosines.
pub fn mode_boundary_value(n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        SQRT_2
    }
}

/// `∫₀^τ e^{λt} dt`, with the removable singularity at `λ = 0`.
pub fn exp_integral(lambda: f64, tau: f64) -> f64 {
    if lambda == 0.0 {
        tau
    } else {
        (lambda * tau).exp_m1() / lambda
    }
}

/// Zero-order-hold modal discretization. State ordering is
/// `[v; ⟨z,φ₀⟩; …; ⟨z,φ_{n_modes−1}⟩]` and
///
/// ```text
/// A = [ A_v   0  ]     B = [ B_v ]
///     [ A_vz  A_z]         [  0  ]
/// ```
///
/// with `A_z = diag(e^{λ_n τ})` and row `n` of `A_vz` equal to
/// `(∫₀^τ e^{λ_n t} dt) φ_n(0) C_v`.
pub fn heat_cascade_discretize(p: &HeatCascadeParams) -> Result<LinearSystem> {
    p.validate()?;
    let mv = p.v_dim();
    let n = p.state_dim();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (mv, mv)).copy_from(&p.a_v);
    for mode in 0..p.n_modes {
        let lambda = heat_eigenvalue(p.diffusivity, p.reaction, mode);
        let row = mv + mode;
        let weight = exp_integral(lambda, p.tau) * mode_boundary_value(mode);
        for j in 0..mv {
            a[(row, j)] = weight * p.c_v[(0, j)];
        }
        a[(row, row)] = (lambda * p.tau).exp();
    }
    let mut b = DMatrix::zeros(n, p.input_dim());
    b.view_mut((0, 0), (mv, p.input_dim())).copy_from(&p.b_v);
    LinearSystem::new(a, b)
}

/// `[x(0), …, x(L)]` for `L = inputs.len()`.
pub fn simulate(sys: &LinearSystem, x_init: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if x_init.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, system has n = {}",
            x_init.len(),
            sys.n()
        )));
    }
    if let Some((k, u)) = inputs.iter().enumerate().find(|(_, u)| u.len() != sys.m()) {
        return Err(Error::DimensionMismatch(format!("input {k} has length {}, system has m = {}", u.len(), sys.m())));
    }
    let mut traj = Vec::with_capacity(inputs.len() + 1);
    traj.push(x_init.clone());
    for u in inputs {
        let next = sys.step(traj.last().expect("nonempty"), u);
        traj.push(next);
    }
    Ok(traj)
}

/// Aligned samples `(x₁(k), x₀(k), u₀(k))`, `k = 1..N`, stored as synthesis
/// matrices (one column per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    x1: DMatrix<f64>,
    x0: DMatrix<f64>,
    u0: DMatrix<f64>,
    pub meta: Option<String>,
}

impl DataBatch {
    pub fn new(x1: DMatrix<f64>, x0: DMatrix<f64>, u0: DMatrix<f64>, meta: Option<String>) -> Result<Self> {
        let len = x0.ncols();
        if len == 0 {
            return Err(Error::Empty("data batch needs N >= 1 samples".into()));
        }
        if x1.ncols() != len || u0.ncols() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                found: if x1.ncols() != len { x1.ncols() } else { u0.ncols() },
            });
        }
        if x0.nrows() == 0 || u0.nrows() == 0 {
            return Err(Error::DimensionMismatch("state and input dimensions must be >= 1".into()));
        }
        if x1.nrows() != x0.nrows() {
            return Err(Error::DimensionMismatch(format!("x1 has dimension {}, x0 has {}", x1.nrows(), x0.nrows())));
        }
        ensure_finite(&x1, "x1")?;
        ensure_finite(&x0, "x0")?;
        ensure_finite(&u0, "u0")?;
        Ok(Self { x1, x0, u0, meta })
    }

    pub fn from_samples(
        x1: &[DVector<f64>],
        x0: &[DVector<f64>],
        u0: &[DVector<f64>],
        meta: Option<String>,
    ) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::Empty("data batch needs N >= 1 samples".into()));
        }
        for len in [x1.len(), u0.len()] {
            if len != x0.len() {
                return Err(Error::LengthMismatch { expected: x0.len(), found: len });
            }
        }
        let stack = |v: &[DVector<f64>], name: &str| -> Result<DMatrix<f64>> {
            let d = v[0].len();
            if v.iter().any(|x| x.len() != d) {
                return Err(Error::DimensionMismatch(format!("{name} vectors differ in length")));
            }
            Ok(DMatrix::from_columns(v))
        };
        Self::new(stack(x1, "x1")?, stack(x0, "x0")?, stack(u0, "u0")?, meta)
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.x0.nrows()
    }

    /// Input dimension `m`.
    pub fn m(&self) -> usize {
        self.u0.nrows()
    }

    /// Sample count `N`.
    pub fn len(&self) -> usize {
        self.x0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `Ξ₁`.
    pub fn xi1(&self) -> &DMatrix<f64> {
        &self.x1
    }

    /// `Ξ₀`.
    pub fn xi0(&self) -> &DMatrix<f64> {
        &self.x0
    }

    /// `Υ₀`.
    pub fn ups0(&self) -> &DMatrix<f64> {
        &self.u0
    }

    /// `[Ξ₀; Υ₀]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, m, len) = (self.n(), self.m(), self.len());
        let mut h = DMatrix::zeros(n + m, len);
        h.rows_mut(0, n).copy_from(&self.x0);
        h.rows_mut(n, m).copy_from(&self.u0);
        h
    }

    /// Largest `‖x₁(k) − A x₀(k) − B u₀(k)‖ / (1 + ‖x₀(k)‖ + ‖u₀(k)‖)`.
    pub fn max_relative_residual(&self, sys: &LinearSystem) -> Result<f64> {
        if sys.n() != self.n() || sys.m() != self.m() {
            return Err(Error::DimensionMismatch("system and batch dimensions differ".into()));
        }
        let r = &self.x1 - sys.a() * &self.x0 - sys.b() * &self.u0;
        Ok((0..self.len())
            .map(|k| r.column(k).norm() / (1.0 + self.x0.column(k).norm() + self.u0.column(k).norm()))
            .fold(0.0, f64::max))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BatchFile::from(self)).expect("batch serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: BatchFile =
            serde_json::from_str(s).map_err(|e| Error::InvalidParams(format!("malformed data batch: {e}")))?;
        file.try_into()
    }
}

/// On-disk form of a [`DataBatch`]: rows are samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFile {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub x1: Vec<Vec<f64>>,
    pub x0: Vec<Vec<f64>>,
    pub u0: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<String>,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Row-major nested vectors to a matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!("row {i} has {} entries, expected {ncols}", r.len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl From<&DataBatch> for BatchFile {
    fn from(b: &DataBatch) -> Self {
        let samples = |m: &DMatrix<f64>| matrix_to_rows(&m.transpose());
        BatchFile {
            schema_version: SCHEMA_VERSION,
            n: b.n(),
            m: b.m(),
            samples: b.len(),
            x1: samples(&b.x1),
            x0: samples(&b.x0),
            u0: samples(&b.u0),
            meta: b.meta.clone(),
        }
    }
}

impl TryFrom<BatchFile> for DataBatch {
    type Error = Error;

    fn try_from(f: BatchFile) -> Result<Self> {
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidParams(format!("unsupported schema_version {}", f.schema_version)));
        }
        for (name, rows) in [("x1", &f.x1), ("x0", &f.x0), ("u0", &f.u0)] {
            if rows.len() != f.samples {
                return Err(Error::InvalidParams(format!(
                    "{name} has {} samples, header says N = {}",
                    rows.len(),
                    f.samples
                )));
            }
        }
        let x1 = matrix_from_rows(&f.x1, f.n)?.transpose();
        let x0 = matrix_from_rows(&f.x0, f.n)?.transpose();
        let u0 = matrix_from_rows(&f.u0, f.m)?.transpose();
        DataBatch::new(x1, x0, u0, f.meta)
    }
}

/// Single trajectory: `x₁(k) = x(k)`, `x₀(k) = x(k−1)`, `u₀(k) = u(k−1)`.
pub fn assemble_single_trajectory(traj: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<DataBatch> {
    if traj.len() != inputs.len() + 1 {
        return Err(Error::LengthMismatch { expected: inputs.len() + 1, found: traj.len() });
    }
    if inputs.is_empty() {
        return Err(Error::Empty("trajectory yields no samples".into()));
    }
    DataBatch::from_samples(&traj[1..], &traj[..traj.len() - 1], inputs, None)
}

/// A trajectory `[x(0), …, x(k)]` with its inputs `[u(0), …, u(k−1)]`.
pub type Segment = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Concatenates finite-horizon trajectories in order; segment `ℓ` occupies
/// sample indices `T_ℓ + 1 ..= T_ℓ + k_ℓ` with `T_ℓ` the total length of the
/// previous segments.
pub fn assemble_multi_trajectory(segments: &[Segment]) -> Result<DataBatch> {
    if segments.is_empty() {
        return Err(Error::Empty("no trajectory segments".into()));
    }
    let mut x1: Vec<DVector<f64>> = Vec::new();
    let mut x0: Vec<DVector<f64>> = Vec::new();
    let mut u0: Vec<DVector<f64>> = Vec::new();
    for (index, (traj, inputs)) in segments.iter().enumerate() {
        let seg =
            assemble_single_trajectory(traj, inputs).map_err(|e| Error::Segment { index, source: Box::new(e) })?;
        if index > 0 && (seg.n() != x0[0].len() || seg.m() != u0[0].len()) {
            return Err(Error::Segment {
                index,
                source: Box::new(Error::DimensionMismatch("segment dimensions differ".into())),
            });
        }
        for k in 0..seg.len() {
            x1.push(seg.x1.column(k).into_owned());
            x0.push(seg.x0.column(k).into_owned());
            u0.push(seg.u0.column(k).into_owned());
        }
    }
    DataBatch::from_samples(&x1, &x0, &u0, None)
}

/// Truncation to `k = 1..n` of `x₁(k) = 0`, `x₀(k) = e_k/k`,
/// `u₀(k) = k^{−3/2}` (state dimension `n`, input dimension 1).
pub fn counterexample_sequences(n: usize) -> Result<DataBatch> {
    if n == 0 {
        return Err(Error::InvalidParams("truncation order must be >= 1".into()));
    }
    let x0 = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / (j + 1) as f64 } else { 0.0 });
    let u0 = DMatrix::from_fn(1, n, |_, j| ((j + 1) as f64).powf(-1.5));
    DataBatch::new(DMatrix::zeros(n, n), x0, u0, Some(format!("counterexample n={n}")))
}

/// The worked-example experiment: `v(0) = 0`, `ζ(·,0) ≡ 1` (modal vector
/// `e₀`), `u ≡ 1`, one trajectory of `samples` steps.
pub fn heat_cascade_batch(p: &HeatCascadeParams, samples: usize) -> Result<(LinearSystem, DataBatch)> {
    let sys = heat_cascade_discretize(p)?;
    let mut x_init = DVector::zeros(sys.n());
    x_init[p.v_dim()] = 1.0;
    let inputs = vec![DVector::from_element(sys.m(), 1.0); samples];
    let traj = simulate(&sys, &x_init, &inputs)?;
    let mut batch = assemble_single_trajectory(&traj, &inputs)?;
    batch.meta = Some(format!(
        "heat-cascade a={} b={} tau={} n_modes={} N={samples}",
        p.diffusivity, p.reaction, p.tau, p.n_modes
    ));
    Ok((sys, batch))
}

/// Random system with standard Gaussian entries (`A` scaled by `1/√n`) and a
/// single trajectory driven by Gaussian inputs from a Gaussian initial state.
pub fn random_lti_batch(n: usize, m: usize, samples: usize, seed: u64) -> Result<(LinearSystem, DataBatch)> {
    if n == 0 || m == 0 || samples == 0 {
        return Err(Error::InvalidParams("n, m and N must be >= 1".into()));
    }
    let mut r = rng::stream(seed, 0);
    let a = rng::gaussian_matrix(&mut r, n, n) / (n as f64).sqrt();
    let b = rng::gaussian_matrix(&mut r, n, m);
    let sys = LinearSystem::new(a, b)?;
    let x_init = rng::gaussian_matrix(&mut r, n, 1).column(0).into_owned();
    let u = rng::gaussian_matrix(&mut r, m, samples);
    let inputs: Vec<DVector<f64>> = u.column_iter().map(|c| c.into_owned()).collect();
    let traj = simulate(&sys, &x_init, &inputs)?;
    let mut batch = assemble_single_trajectory(&traj, &inputs)?;
    batch.meta = Some(format!("random-lti n={n} m={m} N={samples} seed={seed}"));
    Ok((sys, batch))
}

/// `batch` with independent Gaussian perturbations of standard deviation
/// `level` added to every entry of `x₁`, `x₀` and `u₀`.
pub fn perturbed_batch(batch: &DataBatch, level: f64, seed: u64) -> Result<DataBatch> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidParams(format!("noise level must be finite and >= 0, got {level}")));
    }
    let (n, m, len) = (batch.n(), batch.m(), batch.len());
    let mut r = rng::stream(seed, u64::MAX);
    let x1 = &batch.x1 + rng::gaussian_matrix(&mut r, n, len) * level;
    let x0 = &batch.x0 + rng::gaussian_matrix(&mut r, n, len) * level;
    let u0 = &batch.u0 + rng::gaussian_matrix(&mut r, m, len) * level;
    let meta = batch.meta.as_ref().map(|s| format!("{s} noise={level} seed={seed}"));
    DataBatch::new(x1, x0, u0, meta)
}

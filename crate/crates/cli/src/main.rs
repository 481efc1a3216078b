//! `infostab`: generate data batches, decide informativity, synthesize and
//! verify stabilizing gains.
//!
//! Exit codes: 0 success or informative, 1 analyzed but negative, 2 input
//! error. JSON reports go to `--out` (stdout when absent); a one-line summary
//! goes to stderr.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use infostab::finitedata::{self, Decomposition, ProjectedData};
use infostab::informativity::{self, Stabilization};
use infostab::noise::{self, RobustOutcome};
use infostab::systems::{self, matrix_from_rows, matrix_to_rows, DataBatch, HeatCascadeParams};
use infostab::{spectral_radius, LinearSystem};

use report::{
    AnalyzeReport, DecompositionSummary, GainFile, NoiseReport, OffendingSample, StabilizationSummary, VerifyReport,
    SCHEMA_VERSION,
};

#[derive(Parser, Debug)]
#[command(name = "infostab", version, about = "Data informativity and data-driven stabilization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a data batch for a built-in scenario.
    Generate(GenerateArgs),
    /// Decide informativity and synthesize a gain.
    Analyze(AnalyzeArgs),
    /// Check a gain against sampled data-compatible systems.
    Verify(VerifyArgs),
    /// Robust stabilization from noisy data.
    Noise(NoiseArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Scenario {
    HeatCascade,
    RandomLti,
    Counterexample,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Identify,
    Stabilize,
    FinitePlus,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Identify => "identify",
            Mode::Stabilize => "stabilize",
            Mode::FinitePlus => "finite-plus",
        }
    }
}

#[derive(Args, Debug)]
struct Output {
    /// Output path; stdout when absent. Existing files are overwritten.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Split {
    /// Decay bound of the discarded modes.
    #[arg(long, default_value_t = 0.89)]
    gamma_minus: f64,
    /// Lower bound on the diffusivity.
    #[arg(long, default_value_t = 0.1)]
    a0: f64,
    /// Upper bound on the reaction rate.
    #[arg(long, default_value_t = 0.0)]
    b0: f64,
    /// Sampling period.
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    /// Dimension of the finite-dimensional subsystem leading the state.
    #[arg(long, default_value_t = 2)]
    v_dim: usize,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[command(flatten)]
    output: Output,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// State dimension (random-lti) or truncation order (counterexample).
    #[arg(long)]
    n: Option<usize>,
    /// Input dimension (random-lti).
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Number of samples (heat-cascade, random-lti).
    #[arg(long)]
    samples: Option<usize>,
    /// Cosine modes kept (heat-cascade).
    #[arg(long, default_value_t = systems::DEFAULT_N_MODES)]
    n_modes: usize,
    /// Standard deviation of Gaussian noise added to every entry.
    #[arg(long, default_value_t = 0.0)]
    noise_level: f64,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    output: Output,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = infostab::DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    split: Split,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON file `{"K": [[...]]}`.
    #[arg(long)]
    gain: PathBuf,
    #[command(flatten)]
    output: Output,
    /// `stabilize` samples full compatible systems; `finite-plus` samples
    /// the projected ones and lifted full systems.
    #[arg(long, value_enum, default_value = "finite-plus")]
    mode: Mode,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = infostab::DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    split: Split,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    output: Output,
    /// `stabilize` uses the batch as is; `finite-plus` projects it first.
    #[arg(long, value_enum, default_value = "stabilize")]
    mode: Mode,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long)]
    c1: f64,
    #[arg(long)]
    c0: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = infostab::DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    split: Split,
}

/// Verdict of a command that ran to completion.
enum Outcome {
    Positive,
    Negative,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Analyze(a) => analyze(a),
        Command::Verify(a) => verify(a),
        Command::Noise(a) => noise_cmd(a),
    };
    match result {
        Ok(Outcome::Positive) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        bail!("tolerance must be > 0, got {tol}");
    }
    Ok(())
}

fn check_out(out: &Output) -> Result<()> {
    if let Some(dir) = out.out.as_ref().and_then(|p| p.parent()) {
        if !dir.as_os_str().is_empty() && !dir.is_dir() {
            bail!("output directory {} does not exist", dir.display());
        }
    }
    Ok(())
}

fn emit(out: &Output, json: &str) -> Result<()> {
    match &out.out {
        Some(path) => fs::write(path, format!("{json}\n")).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn read_batch(path: &Path) -> Result<DataBatch> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    DataBatch::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_gain(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: GainFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let cols = file.k.first().map_or(0, Vec::len);
    if file.k.is_empty() || cols == 0 {
        bail!("gain in {} is empty", path.display());
    }
    let k = matrix_from_rows(&file.k, cols)?;
    if k.iter().any(|x| !x.is_finite()) {
        bail!("gain in {} has non-finite entries", path.display());
    }
    Ok(k)
}

fn generate(a: GenerateArgs) -> Result<Outcome> {
    check_out(&a.output)?;
    let batch = match a.scenario {
        Scenario::HeatCascade => {
            let p = HeatCascadeParams::reference(a.n_modes);
            systems::heat_cascade_batch(&p, a.samples.unwrap_or(5))?.1
        }
        Scenario::RandomLti => systems::random_lti_batch(a.n.unwrap_or(3), a.m, a.samples.unwrap_or(8), a.seed)?.1,
        Scenario::Counterexample => systems::counterexample_sequences(a.n.unwrap_or(100))?,
    };
    let batch = if a.noise_level > 0.0 { systems::perturbed_batch(&batch, a.noise_level, a.seed)? } else { batch };
    emit(&a.output, &batch.to_json())?;
    eprintln!("generated n={} m={} N={}", batch.n(), batch.m(), batch.len());
    Ok(Outcome::Positive)
}

fn decomposition(batch: &DataBatch, split: &Split) -> Result<Decomposition> {
    if split.v_dim >= batch.n() {
        bail!("v_dim = {} leaves no modes in a state of dimension {}", split.v_dim, batch.n());
    }
    let n0 = finitedata::mode_cutoff(split.a0, split.b0, split.tau, split.gamma_minus)?;
    Ok(finitedata::modal_decomposition(split.v_dim, batch.n() - split.v_dim, n0, split.gamma_minus)?)
}

fn decomposition_summary(dec: &Decomposition) -> DecompositionSummary {
    DecompositionSummary { n: dec.n(), n0: dec.n0, n_plus: dec.n_plus, gamma_minus: dec.gamma_minus }
}

fn projected_batch(pd: &ProjectedData, meta: Option<String>) -> Result<DataBatch> {
    Ok(DataBatch::new(pd.xi1p.clone(), pd.xi0p.clone(), pd.ups0.clone(), meta)?)
}

fn summarize(gamma: f64, s: &Stabilization, lifted: Option<&DMatrix<f64>>) -> StabilizationSummary {
    match s {
        Stabilization::Informative(g) => StabilizationSummary {
            gamma,
            failed_stage: None,
            lmi_margin: Some(g.lmi_margin),
            k: Some(matrix_to_rows(&g.k)),
            k_lifted: lifted.map(matrix_to_rows),
            closed_loop_radius: Some(g.closed_loop_radius),
            certificate: Some(g.certificate),
        },
        Stabilization::NotInformative { stage, margin } => StabilizationSummary {
            gamma,
            failed_stage: Some(*stage),
            lmi_margin: *margin,
            k: None,
            k_lifted: None,
            closed_loop_radius: None,
            certificate: None,
        },
    }
}

fn analyze(a: AnalyzeArgs) -> Result<Outcome> {
    check_tol(a.tol)?;
    check_out(&a.output)?;
    let batch = read_batch(&a.input)?;
    let mut report = AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        mode: a.mode.name().into(),
        informative: false,
        identification: None,
        stabilization: None,
        decomposition: None,
    };
    match a.mode {
        Mode::Identify => {
            let id = informativity::identification_informative(&batch, a.tol);
            report.informative = id.informative;
            report.identification = Some(id);
            eprintln!("identification: informative={} rank={} required={}", id.informative, id.rank, id.required);
        }
        Mode::Stabilize => {
            let s = informativity::stabilization_informative(&batch, a.gamma, a.tol)?;
            report.informative = s.gain().is_some();
            report.stabilization = Some(summarize(a.gamma, &s, None));
            eprintln!("stabilization at gamma={}: informative={}", a.gamma, report.informative);
        }
        Mode::FinitePlus => {
            let dec = decomposition(&batch, &a.split)?;
            let pd = finitedata::project_data(&batch, &dec)?;
            let s = finitedata::finite_informative(&pd, a.gamma, a.split.gamma_minus, a.tol)?;
            let lifted = s.gain().map(|g| finitedata::lift_gain(&g.k, &dec)).transpose()?;
            report.informative = s.gain().is_some();
            report.stabilization = Some(summarize(a.gamma, &s, lifted.as_ref()));
            report.decomposition = Some(decomposition_summary(&dec));
            eprintln!(
                "finite-plus at gamma={}: informative={} n0={} n_plus={}",
                a.gamma, report.informative, dec.n0, dec.n_plus
            );
        }
    }
    emit(&a.output, &report.to_json())?;
    Ok(if report.informative { Outcome::Positive } else { Outcome::Negative })
}

fn offending(index: usize, sys: &LinearSystem, radius: f64) -> OffendingSample {
    OffendingSample { index, a: matrix_to_rows(sys.a()), b: matrix_to_rows(sys.b()), radius }
}

fn verify(a: VerifyArgs) -> Result<Outcome> {
    check_tol(a.tol)?;
    check_out(&a.output)?;
    if !(a.scale > 0.0 && a.scale.is_finite()) {
        bail!("scale must be > 0, got {}", a.scale);
    }
    if !(a.gamma > 0.0 && a.gamma.is_finite()) {
        bail!("gamma must be > 0, got {}", a.gamma);
    }
    let batch = read_batch(&a.input)?;
    let k = read_gain(&a.gain)?;
    let (target, k_target, dec, pd) = match a.mode {
        Mode::Identify => bail!("verify supports the stabilize and finite-plus modes"),
        Mode::Stabilize => (batch.clone(), k.clone(), None, None),
        Mode::FinitePlus => {
            let dec = decomposition(&batch, &a.split)?;
            let pd = finitedata::project_data(&batch, &dec)?;
            let k_plus = if k.ncols() == dec.n() && dec.n() != dec.n_plus { &k * &dec.basis_plus } else { k.clone() };
            (projected_batch(&pd, None)?, k_plus, Some(dec), Some(pd))
        }
    };
    if k_target.shape() != (target.m(), target.n()) {
        bail!("gain is {}x{}, expected {}x{}", k.nrows(), k.ncols(), target.m(), target.n());
    }
    let mut report = VerifyReport {
        schema_version: SCHEMA_VERSION,
        mode: a.mode.name().into(),
        gamma: a.gamma,
        trials: a.trials,
        passed: true,
        violations: 0,
        worst_radius: None,
        full_violations: None,
        full_worst_radius: None,
        warning: None,
        offending: None,
    };
    if a.trials == 0 {
        let msg = "trials = 0: nothing sampled, passing vacuously";
        eprintln!("warning: {msg}");
        report.warning = Some(msg.into());
        emit(&a.output, &report.to_json())?;
        return Ok(Outcome::Positive);
    }
    let bound = a.gamma + 1e-6;
    let systems = informativity::sample_compatible_systems(&target, a.trials, a.scale, a.seed)?;
    for (i, sys) in systems.iter().enumerate() {
        let rho = spectral_radius(&sys.closed_loop(&k_target)?);
        report.worst_radius = Some(report.worst_radius.map_or(rho, |w: f64| w.max(rho)));
        if rho > bound {
            report.violations += 1;
            report.offending.get_or_insert_with(|| offending(i, sys, rho));
        }
    }
    if let (Some(dec), Some(pd)) = (dec, pd) {
        let k_full = finitedata::lift_gain(&k_target, &dec)?;
        let mut violations = 0;
        let mut worst: Option<f64> = None;
        for (i, sys) in finitedata::sample_full_systems(&pd, &dec, a.trials, a.scale, a.seed)?.iter().enumerate() {
            let rho = spectral_radius(&sys.closed_loop(&k_full)?);
            worst = Some(worst.map_or(rho, |w: f64| w.max(rho)));
            if rho > bound {
                violations += 1;
                report.offending.get_or_insert_with(|| offending(i, sys, rho));
            }
        }
        report.full_violations = Some(violations);
        report.full_worst_radius = worst;
    }
    report.passed = report.violations == 0 && report.full_violations.unwrap_or(0) == 0;
    eprintln!(
        "verify {} trials at gamma={}: passed={} worst radius {}",
        a.trials,
        a.gamma,
        report.passed,
        report.worst_radius.map_or("n/a".into(), |r| format!("{r:.6}"))
    );
    emit(&a.output, &report.to_json())?;
    Ok(if report.passed { Outcome::Positive } else { Outcome::Negative })
}

fn noise_cmd(a: NoiseArgs) -> Result<Outcome> {
    check_tol(a.tol)?;
    check_out(&a.output)?;
    let batch = read_batch(&a.input)?;
    let (target, dec) = match a.mode {
        Mode::Identify => bail!("noise supports the stabilize and finite-plus modes"),
        Mode::Stabilize => (batch, None),
        Mode::FinitePlus => {
            let dec = decomposition(&batch, &a.split)?;
            let pd = finitedata::project_data(&batch, &dec)?;
            (projected_batch(&pd, batch.meta.clone())?, Some(dec))
        }
    };
    let outcome = noise::robust_stabilization(&target, a.gamma, a.c1, a.c0, a.tol)?;
    let mut report = NoiseReport {
        schema_version: SCHEMA_VERSION,
        mode: a.mode.name().into(),
        gamma: a.gamma,
        c1: a.c1,
        c0: a.c0,
        passed: false,
        stage: None,
        m: None,
        gamma_tilde: None,
        margin_ok: None,
        k: None,
        decomposition: dec.as_ref().map(decomposition_summary),
        verification: None,
    };
    match outcome {
        RobustOutcome::NotApplicable { stage } => {
            report.stage = Some(stage);
            eprintln!("noise: not applicable at stage {stage:?}");
        }
        RobustOutcome::Robust(r) => {
            let v =
                noise::verify_robust_gain(&target, &r.k, r.m, r.gamma_tilde, a.c1, a.c0, &r.omega, a.trials, a.seed)?;
            report.passed = r.margin_ok && r.gamma_tilde < 1.0 && v.passed();
            report.m = Some(r.m);
            report.gamma_tilde = Some(r.gamma_tilde);
            report.margin_ok = Some(r.margin_ok);
            report.k = Some(matrix_to_rows(&r.k));
            report.verification = Some(v);
            eprintln!(
                "noise: M={:.6} gamma~={:.6} margin_ok={} passed={}",
                r.m, r.gamma_tilde, r.margin_ok, report.passed
            );
        }
    }
    emit(&a.output, &report.to_json())?;
    Ok(if report.passed { Outcome::Positive } else { Outcome::Negative })
}

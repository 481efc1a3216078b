//! JSON report schemas. Every report carries `schema_version`.

use serde::{Deserialize, Serialize};

use infostab::informativity::{FailedStage, IdentificationReport};
use infostab::noise::{RobustStage, RobustVerification};
use infostab::PowerStabilityCertificate;

pub const SCHEMA_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

/// Gain file: `{"K": [[...]]}`, rows of `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainFile {
    #[serde(rename = "K")]
    pub k: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub n: usize,
    pub n0: usize,
    pub n_plus: usize,
    pub gamma_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationSummary {
    pub gamma: f64,
    pub failed_stage: Option<FailedStage>,
    pub lmi_margin: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<Rows>,
    #[serde(rename = "K_lifted")]
    pub k_lifted: Option<Rows>,
    /// Radius of the data-reconstructed closed loop.
    pub closed_loop_radius: Option<f64>,
    pub certificate: Option<PowerStabilityCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub mode: String,
    pub informative: bool,
    pub identification: Option<IdentificationReport>,
    pub stabilization: Option<StabilizationSummary>,
    pub decomposition: Option<DecompositionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffendingSample {
    pub index: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub mode: String,
    pub gamma: f64,
    pub trials: usize,
    pub passed: bool,
    pub violations: usize,
    pub worst_radius: Option<f64>,
    /// Lifted full-system check, finite-plus mode only.
    pub full_violations: Option<usize>,
    pub full_worst_radius: Option<f64>,
    pub warning: Option<String>,
    /// First violating sample.
    pub offending: Option<OffendingSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub schema_version: u32,
    pub mode: String,
    pub gamma: f64,
    pub c1: f64,
    pub c0: f64,
    pub passed: bool,
    pub stage: Option<RobustStage>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub gamma_tilde: Option<f64>,
    pub margin_ok: Option<bool>,
    #[serde(rename = "K")]
    pub k: Option<Rows>,
    pub decomposition: Option<DecompositionSummary>,
    pub verification: Option<RobustVerification>,
}

macro_rules! to_json {
    ($($t:ty),*) => {
        $(impl $t {
            pub fn to_json(&self) -> String {
                serde_json::to_string_pretty(self).expect("report serializes")
            }
        })*
    };
}

to_json!(AnalyzeReport, VerifyReport, NoiseReport);

//! Machine-readable reports. The `canonical` section is deterministic for a
//! fixed scenario and seed (timings live outside it); `report_hash` is the
//! SHA-256 of its compact JSON serialization.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
            // a skipped overall status means the command could not run
            Status::Skipped => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
            Status::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub canonical: Canonical,
    pub report_hash: String,
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
pub struct Canonical {
    pub scenario: String,
    pub command: String,
    pub seed: u64,
    pub samples: usize,
    pub tolerance_pass: f64,
    pub tolerance_fail: f64,
    pub status: Status,
    pub checks: Checks,
}

#[derive(Debug, Default, Serialize)]
pub struct Checks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dirac: Option<DiracBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transverse: Option<TransverseBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quotient: Option<QuotientBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loops: Option<LoopsBlock>,
}

#[derive(Debug, Serialize)]
pub struct DiracBlock {
    pub status: Status,
    pub isotropy_max_violation: f64,
    pub involutivity_max_residual: f64,
    pub regularity_min_singular_value: f64,
    pub projectability_min_singular_value: f64,
    pub projectable: bool,
    pub regularity_failures: usize,
}

#[derive(Debug, Serialize)]
pub struct TransverseBlock {
    pub status: Status,
    pub verdict: String,
    pub lemma_max_residual: f64,
    pub oracle_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eq1_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eq2_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub connection_continuity: Option<f64>,
    pub max_connection_coefficient: f64,
    pub gaugeable: bool,
    /// Human statement of what the verdict certifies.
    pub statement: String,
}

#[derive(Debug, Serialize)]
pub struct QuotientBlock {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basic_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_q: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_q: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_prime_max_abs: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct LoopsBlock {
    pub status: Status,
    pub extension: String,
    pub rows: Vec<LoopsRow>,
    pub observed_orders: Vec<f64>,
    pub endpoint_order: f64,
    pub closure_max: Vec<f64>,
    pub anomaly_max: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct LoopsRow {
    pub n_sites: usize,
    pub max_abs_bracket: f64,
    pub hamiltonian_v: f64,
    pub hamiltonian_w: f64,
    pub constraint_residual: f64,
}

impl Report {
    pub fn new(canonical: Canonical, timings_ms: BTreeMap<String, f64>) -> Report {
        let bytes = serde_json::to_vec(&canonical).expect("canonical serializes");
        let hash = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for b in hash {
            hex.push_str(&format!("{b:02x}"));
        }
        Report {
            schema: SCHEMA_VERSION,
            canonical,
            report_hash: hex,
            timings_ms,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

//! Report document: schema-versioned JSON with the command, a digest of the
//! inputs, the numeric payload, and the tolerance in force. Numbers are
//! emitted in shortest form that parses back to the identical float, so a
//! report round-trips losslessly through its own text.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA: u32 = 1;

#[derive(Serialize)]
pub struct Report {
    pub schema: u32,
    pub version: &'static str,
    pub command: String,
    pub inputs_digest: String,
    pub tolerance: f64,
    pub payload: Payload,
}

/// Complex entries ride in paired real grids so a report stays a plain
/// numeric document.
#[derive(Serialize)]
pub struct MatrixValue {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Serialize)]
pub struct ViolationRow {
    pub i: usize,
    pub j: usize,
    pub residual: f64,
}

#[derive(Serialize)]
pub struct ValidatePayload {
    pub dim: usize,
    pub effects: usize,
    pub histories: usize,
    pub families: usize,
    pub verdict: String,
}

#[derive(Serialize)]
pub struct DecoherencePayload {
    pub family: String,
    pub members: Vec<String>,
    pub matrix: MatrixValue,
}

#[derive(Serialize)]
pub struct ConsistencyPayload {
    pub family: String,
    pub mode: String,
    pub passed: bool,
    pub violations: Vec<ViolationRow>,
    pub worst_residual: f64,
}

#[derive(Serialize)]
pub struct ProbsPayload {
    pub family: String,
    pub members: Vec<String>,
    pub unit: Option<String>,
    pub unit_weight: Option<f64>,
    pub probabilities: Vec<f64>,
    /// Set exactly when the values are raw diagonal weights forced out of an
    /// inconsistent family rather than a normalized measure.
    pub label: Option<String>,
}

#[derive(Serialize)]
pub struct RefusalPayload {
    pub family: String,
    pub refusal: String,
    pub mode: String,
    pub violations: Vec<ViolationRow>,
    pub worst_residual: f64,
}

#[derive(Serialize)]
pub struct ImplicationRow {
    pub left: String,
    pub right: String,
    pub holds: bool,
    pub p_meet: f64,
    pub p_left: f64,
    pub p_right: Option<f64>,
    pub meet_residual: f64,
    pub join_residual: Option<f64>,
}

#[derive(Serialize)]
pub struct ImpliesPayload {
    pub family: String,
    pub members: Vec<String>,
    pub pairs: Vec<ImplicationRow>,
}

#[derive(Serialize)]
pub struct ExtensionRow {
    pub effect: String,
    pub probability: f64,
}

#[derive(Serialize)]
pub struct FullDPosetPayload {
    pub family: String,
    pub base: String,
    pub t_star: f64,
    pub rows: Vec<ExtensionRow>,
}

#[derive(Serialize)]
pub struct OrderkPayload {
    pub family: String,
    pub k: u32,
    pub blocks: usize,
    pub summands: Vec<String>,
    pub residual: f64,
    pub additive: bool,
}

#[derive(Serialize)]
pub struct AxiomRow {
    pub axiom: String,
    pub outcome: String,
    pub residual: Option<f64>,
}

#[derive(Serialize)]
pub struct DPosetLawsPayload {
    pub family: String,
    pub alpha: String,
    pub triple: Vec<String>,
    pub axioms: Vec<AxiomRow>,
    pub all_pass: bool,
    pub worst_residual: f64,
}

#[derive(Serialize)]
#[serde(untagged)]
pub enum Payload {
    Validate(ValidatePayload),
    Decoherence(DecoherencePayload),
    Consistency(ConsistencyPayload),
    Probs(ProbsPayload),
    Refusal(RefusalPayload),
    Implies(ImpliesPayload),
    FullDPoset(FullDPosetPayload),
    Orderk(OrderkPayload),
    DPosetLaws(DPosetLawsPayload),
}

/// Digest over the scenario bytes and the effective invocation parameters.
/// The output path is deliberately excluded: where a report lands does not
/// change what it says.
pub fn inputs_digest(scenario_bytes: &[u8], canonical_params: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(scenario_bytes);
    hasher.update([0u8]);
    hasher.update(canonical_params.as_bytes());
    format!("sha256:{:x}", hasher.finalize())
}

pub fn render(report: &Report) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serialization");
    text.push('\n');
    text
}

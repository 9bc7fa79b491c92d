//! JSON report schemas written by each subcommand.

use ausn_core::analysis::{InfoLossReport, LevelBin, Sqnr};
use ausn_core::hwcost::{LutCost, Scheme};
use ausn_core::{Accumulation, BitLayout, ErrorPair, Mode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutInfo {
    pub spec: String,
    pub total_bits: u32,
    pub b_basic: u32,
    pub tier_bits: Vec<u32>,
}

impl From<&BitLayout> for LayoutInfo {
    fn from(l: &BitLayout) -> Self {
        LayoutInfo {
            spec: l.spec_string(),
            total_bits: l.total_bits(),
            b_basic: l.b_basic(),
            tier_bits: l.tier_bits().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInfo {
    pub layout: String,
    pub scale_offset: i32,
    pub clipping: f64,
    pub rounding: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchInfo {
    pub max_tiers: usize,
    pub lambda: f64,
    pub candidates_evaluated: usize,
    pub candidates: Vec<CandidateInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizeReport {
    pub command: String,
    pub input: String,
    pub output: String,
    pub shape: Vec<usize>,
    pub count: usize,
    pub layout: LayoutInfo,
    pub mode: Mode,
    pub power_j: i32,
    pub scale_offset: i32,
    /// Whether the top basis value brackets the tensor maximum.
    pub range_ok: Option<bool>,
    pub errors: ErrorPair,
    pub sqnr_db: Option<Sqnr>,
    pub kl: f64,
    pub packed_bytes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchReport {
    pub command: String,
    pub input: String,
    pub total_bits: u32,
    pub mode: Mode,
    pub layout: LayoutInfo,
    pub scale_offset: i32,
    pub power_j: i32,
    pub errors: ErrorPair,
    pub objective: f64,
    pub search: SearchInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub name: String,
    pub bits: u32,
    pub sqnr_db: Option<Sqnr>,
    pub mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeReport {
    pub command: String,
    pub input: String,
    pub quantized: String,
    pub layout: LayoutInfo,
    pub power_j: i32,
    pub errors: ErrorPair,
    /// Quadrature of the same layout on standardized data.
    pub analytic_errors: Option<ErrorPair>,
    pub sqnr_db: Option<Sqnr>,
    pub mse: f64,
    pub information_loss: InfoLossSummary,
    pub baselines: Vec<BaselineReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoLossSummary {
    pub kl: f64,
    pub accuracy_loss: Option<f64>,
    pub total: f64,
    pub smoothing: f64,
    pub levels: usize,
}

impl From<&InfoLossReport> for InfoLossSummary {
    fn from(r: &InfoLossReport) -> Self {
        InfoLossSummary {
            kl: r.kl,
            accuracy_loss: r.accuracy_loss,
            total: r.total,
            smoothing: r.smoothing,
            levels: r.bins.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotRow {
    pub row: usize,
    pub exact: f64,
    /// Exact sum as a dyadic rational.
    pub exact_repr: String,
    pub value: f64,
    pub power_j: i32,
    pub code: Vec<u16>,
    pub negative: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounded_terms: Option<Vec<i64>>,
    pub accumulator_bits_required: u32,
    pub overflow: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateReport {
    pub command: String,
    pub weights: String,
    pub activations: String,
    pub mode: Accumulation,
    pub out_layout: LayoutInfo,
    pub rows: Vec<DotRow>,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub overflow_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostReport {
    pub command: String,
    pub scheme: Scheme,
    pub a_bits: u32,
    pub w_bits: u32,
    pub cost: LutCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RooflineReport {
    pub command: String,
    pub ccr: f64,
    pub attainable: f64,
    pub ridge: f64,
    pub bound: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthReport {
    pub command: String,
    pub output: String,
    pub shape: Vec<usize>,
    pub seed: u64,
    pub std: f64,
}

/// CSV of the per-level masses behind the KL figure.
pub fn histogram_csv(bins: &[LevelBin]) -> String {
    let mut out = String::from("level,original_mass,quantized_mass\n");
    for b in bins {
        out.push_str(&format!("{},{},{}\n", b.level, b.original_mass, b.quantized_mass));
    }
    out
}

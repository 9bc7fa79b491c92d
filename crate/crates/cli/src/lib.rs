//! Command-line front end: `quantize`, `search`, `analyze`, `simulate`,
//! `cost`, `roofline` and `synth`.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

pub mod report;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use ausn_core::analysis::{baseline_power_of_two, baseline_uniform, kl_information_loss, sqnr, InfoLossReport, Sqnr};
use ausn_core::error_model::analytic_errors_for_set;
use ausn_core::hwcost::{ccr, lut_cost, roofline_attainable, LayerDesc, RooflineConfig, Scheme};
use ausn_core::io::{load_container, load_tensor, save_container, save_tensor, Dtype, TensorFile};
use ausn_core::quantizer::quantize_tensor_with_offset;
use ausn_core::rounding::CodeRow;
use ausn_core::{
    dequantize_tensor, dot_product, empirical_errors, representable_set, search_layout, Accumulation, BitLayout,
    DotConfig, Mode, QuantizedTensor, SearchResult, Tensor,
};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use report::*;

/// Relative report and histogram paths resolve under this directory when set.
pub const REPORT_DIR_ENV: &str = "AUSN_REPORT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ausn", version, about = "Superposition power-of-two quantization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantize a tensor into an AUSN container.
    Quantize(QuantizeArgs),
    /// Search the bit allocation for a tensor.
    Search(SearchArgs),
    /// Compare a tensor against its quantized container.
    Analyze(AnalyzeArgs),
    /// Shift-add dot products between two containers.
    Simulate(SimulateArgs),
    /// LUT cost of one multiply.
    Cost(CostArgs),
    /// Computation-to-communication ratio and attainable throughput.
    Roofline(RooflineArgs),
    /// Write a seeded normal sample tensor.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("allocation").required(true).args(["layout", "auto"]))]
struct QuantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    bits: u32,
    /// Basic width and subdivision widths, e.g. `3:2` or `2:1,1`.
    #[arg(long)]
    layout: Option<String>,
    /// Choose the layout by error search.
    #[arg(long)]
    auto: bool,
    #[arg(long, default_value = "floor")]
    mode: Mode,
    #[arg(long, default_value_t = 3)]
    max_tiers: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    out: PathBuf,
    /// CSV of per-level masses.
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    bits: u32,
    #[arg(long, default_value_t = 3)]
    max_tiers: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value = "floor")]
    mode: Mode,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    quantized: PathBuf,
    /// Comma-separated: `uniform`, `pow2`.
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<Baseline>,
    /// Measured accuracy drop added to the KL term.
    #[arg(long, allow_negative_numbers = true)]
    acc_loss: Option<f64>,
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Baseline {
    Uniform,
    Pow2,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    activations: PathBuf,
    #[arg(long)]
    mode: Accumulation,
    #[arg(long)]
    out_layout: String,
    #[arg(long, allow_negative_numbers = true)]
    out_power: Option<i32>,
    #[arg(long)]
    accumulator_bits: Option<u32>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[arg(long)]
    scheme: Scheme,
    #[arg(long)]
    a_bits: u32,
    #[arg(long)]
    w_bits: u32,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct RooflineArgs {
    #[arg(long)]
    ops: f64,
    #[arg(long)]
    weight_elems: f64,
    #[arg(long)]
    output_elems: f64,
    #[arg(long)]
    bytes_per_elem: f64,
    #[arg(long)]
    bandwidth: f64,
    #[arg(long)]
    peak: f64,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    shape: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    std: f64,
    /// `.npy` writes NPY; anything else writes raw f32 plus a JSON sidecar.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(ausn_core::Error),
}

impl From<ausn_core::Error> for CliError {
    fn from(e: ausn_core::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` (program name first) and runs the subcommand.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Quantize(a) => quantize(a),
        Command::Search(a) => search(a),
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Cost(a) => cost(a),
        Command::Roofline(a) => roofline(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Usage(_) => 1,
                CliError::Data(_) => 2,
            }
        }
    }
}

fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(REPORT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn emit<R: Serialize>(args: &ReportArgs, report: &R) -> CliResult {
    let json = serde_json::to_string_pretty(report).map_err(ausn_core::Error::from)?;
    match &args.report {
        Some(path) => {
            let path = output_path(path);
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, json + "\n")?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn write_histogram(path: Option<&PathBuf>, info: &InfoLossReport) -> CliResult {
    if let Some(path) = path {
        std::fs::write(output_path(path), histogram_csv(&info.bins))?;
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn parse_layout(bits: u32, spec: &str) -> CliResult<BitLayout> {
    BitLayout::parse_spec(bits, spec).map_err(|e| CliError::Usage(format!("--layout {spec:?}: {e}")))
}

fn search_info(r: &SearchResult, max_tiers: usize, lambda: f64) -> SearchInfo {
    SearchInfo {
        max_tiers,
        lambda,
        candidates_evaluated: r.candidates_evaluated,
        candidates: r
            .candidates
            .iter()
            .map(|c| CandidateInfo {
                layout: c.layout.spec_string(),
                scale_offset: c.scale_offset,
                clipping: c.errors.clipping,
                rounding: c.errors.rounding,
                objective: c.objective,
            })
            .collect(),
    }
}

fn check_search_args(bits: u32, lambda: f64) -> CliResult {
    if bits < 3 {
        return Err(CliError::Usage(format!("--bits must be at least 3, got {bits}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CliError::Usage(format!("--lambda must be finite and non-negative, got {lambda}")));
    }
    Ok(())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

/// `None` when the signal is all zero.
fn sqnr_opt(original: &[f64], recon: &[f64]) -> CliResult<Option<Sqnr>> {
    match sqnr(original, recon) {
        Ok(s) => Ok(Some(s)),
        Err(ausn_core::Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn quantize(a: QuantizeArgs) -> CliResult {
    let file = load_tensor(&a.input)?;
    let tensor = &file.tensor;
    tensor.check_finite()?;
    let (layout, offset, search) = match &a.layout {
        Some(spec) => (parse_layout(a.bits, spec)?, 0, None),
        None => {
            check_search_args(a.bits, a.lambda)?;
            let r = search_layout(tensor, a.bits, a.max_tiers, a.lambda, a.mode)?;
            let info = search_info(&r, a.max_tiers, a.lambda);
            (r.layout, r.scale_offset, Some(info))
        }
    };
    let qt = quantize_tensor_with_offset(tensor, &layout, a.mode, offset)?;
    save_container(&a.out, &qt)?;
    let recon = dequantize_tensor(&qt);
    let info = kl_information_loss(tensor.data(), &qt)?;
    write_histogram(a.histogram.as_ref(), &info)?;
    let report = QuantizeReport {
        command: "quantize".into(),
        input: display(&a.input),
        output: display(&a.out),
        shape: qt.shape.clone(),
        count: qt.len(),
        layout: (&layout).into(),
        mode: a.mode,
        power_j: qt.power_j,
        scale_offset: offset,
        range_ok: qt.range_check(),
        errors: empirical_errors(tensor.data(), &qt)?,
        sqnr_db: sqnr_opt(tensor.data(), &recon)?,
        kl: info.kl,
        packed_bytes: layout.packed_len(qt.len()),
        search,
    };
    emit(&a.report, &report)
}

fn search(a: SearchArgs) -> CliResult {
    check_search_args(a.bits, a.lambda)?;
    let file = load_tensor(&a.input)?;
    let r = search_layout(&file.tensor, a.bits, a.max_tiers, a.lambda, a.mode)?;
    let report = SearchReport {
        command: "search".into(),
        input: display(&a.input),
        total_bits: a.bits,
        mode: a.mode,
        layout: (&r.layout).into(),
        scale_offset: r.scale_offset,
        power_j: r.power_j,
        errors: r.errors,
        objective: r.objective,
        search: search_info(&r, a.max_tiers, a.lambda),
    };
    emit(&a.report, &report)
}

/// Quadrature for the container's layout on the tensor rescaled to unit
/// standard deviation, mapped back to the tensor's units.
fn analytic_in_units(tensor: &Tensor, qt: &QuantizedTensor) -> CliResult<Option<ausn_core::ErrorPair>> {
    let Some(stats) = tensor.stats() else { return Ok(None) };
    if stats.std.is_nan() || stats.std <= 0.0 {
        return Ok(None);
    }
    let s = stats.std;
    let set: Vec<f64> = representable_set(&qt.layout, qt.power_j).iter().map(|p| p / s).collect();
    let mut e = analytic_errors_for_set(&set, tensor.max_abs() / s)?;
    e.clipping *= s * s;
    e.rounding *= s * s;
    e.boundary *= s;
    e.clip_bound *= s;
    Ok(Some(e))
}

fn analyze(a: AnalyzeArgs) -> CliResult {
    let file = load_tensor(&a.input)?;
    let tensor = &file.tensor;
    tensor.check_finite()?;
    let qt = load_container(&a.quantized)?;
    if qt.shape != tensor.shape() {
        return Err(ausn_core::Error::ShapeMismatch(format!(
            "tensor shape {:?}, container shape {:?}",
            tensor.shape(),
            qt.shape
        ))
        .into());
    }
    let recon = dequantize_tensor(&qt);
    let info = kl_information_loss(tensor.data(), &qt)?.with_accuracy_loss(a.acc_loss);
    write_histogram(a.histogram.as_ref(), &info)?;

    let bits = qt.layout.total_bits();
    let mut baselines = Vec::new();
    for b in &a.baselines {
        baselines.push(match b {
            Baseline::Uniform => {
                let u = baseline_uniform(tensor, bits)?;
                let r = u.dequantize();
                BaselineReport {
                    name: "uniform".into(),
                    bits,
                    sqnr_db: sqnr_opt(tensor.data(), &r)?,
                    mse: mse(tensor.data(), &r),
                    errors: None,
                    kl: None,
                }
            }
            Baseline::Pow2 => {
                let p = baseline_power_of_two(tensor, bits, qt.mode)?;
                let r = dequantize_tensor(&p);
                BaselineReport {
                    name: "pow2".into(),
                    bits,
                    sqnr_db: sqnr_opt(tensor.data(), &r)?,
                    mse: mse(tensor.data(), &r),
                    errors: Some(empirical_errors(tensor.data(), &p)?),
                    kl: Some(kl_information_loss(tensor.data(), &p)?.kl),
                }
            }
        });
    }

    let report = AnalyzeReport {
        command: "analyze".into(),
        input: display(&a.input),
        quantized: display(&a.quantized),
        layout: (&qt.layout).into(),
        power_j: qt.power_j,
        errors: empirical_errors(tensor.data(), &qt)?,
        analytic_errors: analytic_in_units(tensor, &qt)?,
        sqnr_db: sqnr_opt(tensor.data(), &recon)?,
        mse: mse(tensor.data(), &recon),
        information_loss: (&info).into(),
        baselines,
    };
    emit(&a.report, &report)
}

fn simulate(a: SimulateArgs) -> CliResult {
    let out_layout = BitLayout::parse_spec_inferred(&a.out_layout)
        .map_err(|e| CliError::Usage(format!("--out-layout {:?}: {e}", a.out_layout)))?;
    let w = load_container(&a.weights)?;
    let x = load_container(&a.activations)?;
    let k = x.len();
    if k == 0 || w.len() % k != 0 || w.shape.last() != Some(&k) && w.len() != k {
        return Err(ausn_core::Error::ShapeMismatch(format!(
            "weights {:?} do not have rows of the {} activations",
            w.shape, k
        ))
        .into());
    }
    let cfg = DotConfig {
        out_power: a.out_power,
        accumulator_bits: a.accumulator_bits,
        ..DotConfig::new(out_layout.clone(), a.mode)
    };
    let acts = CodeRow { codes: &x.codes, layout: &x.layout, power_j: x.power_j };
    let mut rows = Vec::new();
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for (i, chunk) in w.codes.chunks(k).enumerate() {
        let out = dot_product(CodeRow { codes: chunk, layout: &w.layout, power_j: w.power_j }, acts, &cfg)?;
        let exact = out.exact.to_f64();
        let err = (out.value - exact).abs();
        max_abs = max_abs.max(err);
        if exact != 0.0 {
            max_rel = max_rel.max(err / exact.abs());
        }
        rows.push(DotRow {
            row: i,
            exact,
            exact_repr: out.exact.to_string(),
            value: out.value,
            power_j: out.power_j,
            code: out.code.k.to_vec(),
            negative: out.code.sign == ausn_core::Sign::Neg,
            rounded_terms: out.rounded.map(|p| p.exponents().to_vec()),
            accumulator_bits_required: out.accumulator_bits_required,
            overflow: out.overflow,
        });
    }
    let report = SimulateReport {
        command: "simulate".into(),
        weights: display(&a.weights),
        activations: display(&a.activations),
        mode: a.mode,
        out_layout: (&out_layout).into(),
        overflow_rows: rows.iter().filter(|r| r.overflow).count(),
        rows,
        max_abs_error: max_abs,
        max_rel_error: max_rel,
    };
    emit(&a.report, &report)
}

fn cost(a: CostArgs) -> CliResult {
    let c = lut_cost(a.scheme, a.a_bits, a.w_bits).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{}", c.luts);
    if a.report.report.is_some() {
        let report =
            CostReport { command: "cost".into(), scheme: a.scheme, a_bits: a.a_bits, w_bits: a.w_bits, cost: c };
        emit(&a.report, &report)?;
    }
    Ok(())
}

fn roofline(a: RooflineArgs) -> CliResult {
    let layer = LayerDesc {
        ops: a.ops,
        weight_elems: a.weight_elems,
        output_elems: a.output_elems,
        bytes_per_elem: a.bytes_per_elem,
    };
    let ratio = ccr(&layer)?;
    let cfg = RooflineConfig::new(a.bandwidth, a.peak)?;
    let attainable = roofline_attainable(ratio, &cfg)?;
    let report = RooflineReport {
        command: "roofline".into(),
        ccr: ratio,
        attainable,
        ridge: cfg.ridge(),
        bound: if ratio < cfg.ridge() { "memory" } else { "compute" }.into(),
    };
    emit(&a.report, &report)
}

fn synth(a: SynthArgs) -> CliResult {
    if !(a.std > 0.0 && a.std.is_finite()) {
        return Err(CliError::Usage(format!("--std must be positive, got {}", a.std)));
    }
    let n: usize = a.shape.iter().product();
    let dist = Normal::new(0.0, a.std).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    // f32 storage, so round through f32 now to keep the tensor exact
    let data: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng) as f32 as f64).collect();
    let tensor = Tensor::new(a.shape.clone(), data)?;
    let name = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    save_tensor(&a.out, &TensorFile { name, dtype: Dtype::Float32, tensor })?;
    let report =
        SynthReport { command: "synth".into(), output: display(&a.out), shape: a.shape, seed: a.seed, std: a.std };
    emit(&a.report, &report)
}

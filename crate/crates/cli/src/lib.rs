//! Pipeline commands behind the `quantlab` binary.
//!
//! Each `cmd_*` function validates its inputs and the output directory
//! before computing anything, writes CSVs atomically, and returns the
//! console summary. Failures map to exit codes through [`CliError::code`].

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quantlab_core::report::{self, BenchOp, MethodMetricsRow};
use quantlab_core::sim::{self, CollapseResult, PropagationResult};
use quantlab_core::stats::{depth_profile, DepthProfile};
use quantlab_core::{load_dump, ActivationTensor, Error};

pub use config::{RunConfig, StackOverrides};

pub const METHOD_METRICS_FILE: &str = "method_metrics.csv";
pub const OUTLIER_STATS_FILE: &str = "outlier_stats.csv";
pub const MICROBENCH_FILE: &str = "microbench.csv";
pub const PROPAGATION_FILE: &str = "propagation.csv";

/// Accepted band for the injected-error variance ratio in `simulate`.
pub const RATIO_BAND: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Io(String),
    MalformedDump(String),
    Invariant(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::MalformedDump(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::MalformedDump(m) => write!(f, "malformed dump: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) => CliError::Io(msg),
            Error::MalformedHeader(_) | Error::ShapeMismatch { .. } | Error::NonFiniteValue { .. } | Error::EmptyTensor { .. } => {
                CliError::MalformedDump(msg)
            }
            Error::InvalidBits(_)
            | Error::InvalidPercentile(_)
            | Error::InvalidK { .. }
            | Error::PolicyLengthMismatch { .. }
            | Error::InvalidConfig(_)
            | Error::InvalidFraction(_)
            | Error::DuplicateLabel(_) => CliError::Usage(msg),
            _ => CliError::Invariant(msg),
        }
    }
}

/// Creates the output directory and proves it is writable.
pub fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("output directory {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    tempfile::tempfile_in(dir).map_err(io)?;
    Ok(())
}

fn dump_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads every dump before anything is written, so a bad file leaves no output.
pub fn load_dumps(paths: &[PathBuf]) -> Result<Vec<(String, ActivationTensor)>, CliError> {
    paths
        .iter()
        .map(|p| {
            let t = load_dump(p).map_err(|e| match e {
                Error::Io(io) => CliError::Io(format!("{}: {io}", p.display())),
                other => match CliError::from(other) {
                    CliError::MalformedDump(m) => CliError::MalformedDump(format!("{}: {m}", p.display())),
                    c => c,
                },
            })?;
            Ok((dump_label(p), t))
        })
        .collect()
}

pub fn layer_label(l: usize) -> String {
    format!("layer{l:02}")
}

/// Depth profile of the reference synthetic stack.
pub fn synthetic_profile(cfg: &RunConfig) -> Result<DepthProfile, CliError> {
    let layers = sim::generate_stack(&cfg.reference_stack())?;
    let labelled: Vec<(String, ActivationTensor)> =
        layers.into_iter().enumerate().map(|(l, t)| (layer_label(l), t)).collect();
    Ok(depth_profile(&labelled)?)
}

fn profile_for(cfg: &RunConfig) -> Result<DepthProfile, CliError> {
    if cfg.dumps.is_empty() {
        synthetic_profile(cfg)
    } else {
        Ok(depth_profile(&load_dumps(&cfg.dumps)?)?)
    }
}

/// Outlier statistics for the configured dumps, or for the synthetic
/// reference stack when no dumps are given.
pub fn cmd_stats(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    prepare_out_dir(&cfg.out_dir)?;
    let profile = profile_for(cfg)?;
    report::emit_outlier_stats(&profile, &cfg.out_dir.join(OUTLIER_STATS_FILE))?;
    Ok(report::render_profile_table(&profile))
}

fn propagation_csv(quant: &PropagationResult, injected: &PropagationResult) -> Result<Vec<u8>, CliError> {
    let header = [
        "layer",
        "quant_error_mean",
        "quant_error_variance",
        "quant_branch_variance",
        "injected_error_variance",
        "injected_branch_variance",
    ];
    let rows: Vec<Vec<String>> = quant
        .layers
        .iter()
        .zip(&injected.layers)
        .enumerate()
        .map(|(l, (q, i))| {
            vec![
                layer_label(l + 1),
                report::fmt6(q.error_mean),
                report::fmt6(q.error_variance),
                report::fmt6(q.branch_error_variance),
                report::fmt6(i.error_variance),
                report::fmt6(i.branch_error_variance),
            ]
        })
        .collect();
    Ok(report::to_csv(&header, &rows)?)
}

/// Error propagation through the reference stack, with fake-quant errors
/// under the configured policy and with injected i.i.d. errors. Fails with
/// an invariant error if the injected-mode ratio leaves [`RATIO_BAND`].
pub fn cmd_simulate(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let policy = cfg.simulate_policy()?;
    prepare_out_dir(&cfg.out_dir)?;
    let stack = cfg.reference_stack();
    let quant = sim::propagate_errors(&stack, &policy, cfg.bits()?)?;
    let injected = sim::propagate_injected(&stack)?;
    let ratio = injected.variance_ratio();
    let ok = (RATIO_BAND.0..=RATIO_BAND.1).contains(&ratio);
    let mut out = String::new();
    let _ = writeln!(out, "layers: {}", stack.depth);
    let _ = writeln!(
        out,
        "fake-quant: Var[eps_L] = {:.6e}, sum Var[eps_f] = {:.6e}, ratio = {:.4}",
        quant.final_error_variance(),
        quant.summed_branch_variance(),
        quant.variance_ratio()
    );
    let _ = writeln!(
        out,
        "injected:   Var[eps_L] = {:.6e}, sum Var[eps_f] = {:.6e}, ratio = {:.4} [{}]",
        injected.final_error_variance(),
        injected.summed_branch_variance(),
        ratio,
        if ok { "PASS" } else { "FAIL" }
    );
    if !ok {
        return Err(CliError::Invariant(format!(
            "injected-error variance ratio {ratio:.4} outside [{}, {}]",
            RATIO_BAND.0, RATIO_BAND.1
        )));
    }
    report::write_atomic(&cfg.out_dir.join(PROPAGATION_FILE), &propagation_csv(&quant, &injected)?)?;
    Ok(out)
}

/// Runs the collapse experiment over min-max, the percentile grid and the K grid.
pub fn run_experiment(cfg: &RunConfig) -> Result<CollapseResult, CliError> {
    let stack = cfg.collapse_stack();
    let methods = sim::sweep_methods(stack.depth, &cfg.percentile_grid, &cfg.k_grid);
    Ok(sim::collapse_experiment(&stack, &methods, cfg.bits()?)?)
}

/// One line per expected ordering, each marked PASS or FAIL.
pub fn ordering_verdict(result: &CollapseResult, cfg: &RunConfig) -> Vec<(String, bool)> {
    let fp32 = result.reference();
    let mut checks = Vec::new();
    let k_lo = cfg.k_grid.iter().min().copied();
    let k_hi = cfg.k_grid.iter().max().copied();
    let peg = |k: Option<usize>| k.and_then(|k| result.get(&format!("peg_k{k}")));
    let minmax = result.get("minmax");
    if let (Some(lo), Some(hi), Some(klo), Some(khi)) = (peg(k_lo), peg(k_hi), k_lo, k_hi) {
        checks.push((format!("fp32 >= peg_k{khi}"), fp32 >= hi));
        if khi != klo {
            checks.push((format!("peg_k{khi} > peg_k{klo}"), hi > lo));
        }
        checks.push((format!("peg_k{khi} >= 0.95 * fp32"), hi >= 0.95 * fp32));
    }
    if let Some(mm) = minmax {
        checks.push(("minmax <= 0.6 * fp32".into(), mm <= 0.6 * fp32));
        let p_lo = cfg.percentile_grid.iter().copied().fold(f64::INFINITY, f64::min);
        if let Some(pa) = result.get(&format!("percentile_{p_lo:?}")) {
            checks.push((format!("percentile_{p_lo:?} <= minmax + 0.02"), pa <= mm + 0.02));
        }
    }
    checks
}

fn render_verdict(checks: &[(String, bool)]) -> String {
    let mut out = String::new();
    for (name, ok) in checks {
        let _ = writeln!(out, "  [{}] {name}", if *ok { "PASS" } else { "FAIL" });
    }
    out
}

pub fn cmd_experiment(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    prepare_out_dir(&cfg.out_dir)?;
    let result = run_experiment(cfg)?;
    let rows: Vec<MethodMetricsRow> = report::method_rows(&result);
    report::emit_method_metrics(&rows, &cfg.out_dir.join(METHOD_METRICS_FILE))?;
    let mut out = report::render_method_table(&rows);
    out.push_str("ordering:\n");
    out.push_str(&render_verdict(&ordering_verdict(&result, cfg)));
    Ok(out)
}

/// The tensor timed by the microbenchmark: the first rows of layer 0 of
/// the reference stack.
pub fn microbench_tensor(cfg: &RunConfig) -> Result<ActivationTensor, CliError> {
    let mut stack = cfg.reference_stack();
    stack.samples = cfg.microbench_rows.max(1);
    Ok(sim::generate_layer(&stack, 0)?)
}

pub fn cmd_microbench(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    if cfg.microbench_iterations < report::MIN_ITERATIONS || cfg.microbench_warmup < 1 {
        return Err(CliError::Usage(format!(
            "microbench needs iterations >= {} and warmup >= 1",
            report::MIN_ITERATIONS
        )));
    }
    prepare_out_dir(&cfg.out_dir)?;
    let tensor = microbench_tensor(cfg)?;
    let rows = report::run_microbench(&BenchOp::all(), &tensor, cfg.bits()?, cfg.microbench_iterations, cfg.microbench_warmup)?;
    report::emit_microbench(&rows, &cfg.out_dir.join(MICROBENCH_FILE))?;
    let mut out = String::new();
    let _ = writeln!(out, "{:<24}  {:>12}  {:>12}", "op", "p50_ns", "p95_ns");
    for r in &rows {
        let _ = writeln!(out, "{:<24}  {:>12.0}  {:>12.0}", r.op_label, r.p50_ns, r.p95_ns);
    }
    Ok(out)
}

/// Stats, percentile and K sweeps (one collapse run), then microbench.
pub fn cmd_run_all(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    if cfg.microbench_iterations < report::MIN_ITERATIONS || cfg.microbench_warmup < 1 {
        return Err(CliError::Usage(format!(
            "microbench needs iterations >= {} and warmup >= 1",
            report::MIN_ITERATIONS
        )));
    }
    prepare_out_dir(&cfg.out_dir)?;
    let mut out = String::new();
    out.push_str("== outlier statistics ==\n");
    out.push_str(&cmd_stats(cfg)?);
    out.push_str("\n== calibration sweep ==\n");
    out.push_str(&cmd_experiment(cfg)?);
    out.push_str("\n== microbenchmark ==\n");
    out.push_str(&cmd_microbench(cfg)?);
    Ok(out)
}

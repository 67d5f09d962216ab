//! CSV emitters and the quantization-op microbenchmark.
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! a failed run never leaves a partial CSV behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::quant::{fake_quant, peg_fake_quant, quantize_affine, scale_minmax, scale_percentile, Bits};
use crate::sim::CollapseResult;
use crate::stats::DepthProfile;
use crate::tensor::ActivationTensor;

pub const METHOD_METRICS_HEADER: [&str; 3] = ["method", "accuracy", "delta_vs_ref"];
pub const OUTLIER_STATS_HEADER: [&str; 4] = ["layer", "mean_variance", "kurtosis", "top1_energy"];
pub const MICROBENCH_HEADER: [&str; 4] = ["op_label", "p50_ns", "p95_ns", "iterations"];

pub const MIN_ITERATIONS: usize = 100;

/// Fixed six-decimal rendering; negative zero prints as `0.000000`.
pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

/// Serializes records as RFC-4180 CSV with LF line endings.
pub fn to_csv<S: AsRef<[u8]>>(header: &[&str], rows: &[Vec<S>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(r).map_err(to_io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetricsRow {
    pub method: String,
    pub accuracy: f64,
    pub delta_vs_ref: f64,
}

/// Rows for a collapse result; the reference row comes first with delta 0.
pub fn method_rows(result: &CollapseResult) -> Vec<MethodMetricsRow> {
    let reference = result.reference();
    result
        .entries()
        .iter()
        .map(|(method, acc)| MethodMetricsRow { method: method.clone(), accuracy: *acc, delta_vs_ref: acc - reference })
        .collect()
}

/// Requires the first row to be the reference (delta exactly 0).
pub fn emit_method_metrics(rows: &[MethodMetricsRow], path: &Path) -> Result<()> {
    match rows.first() {
        Some(r) if r.delta_vs_ref == 0.0 => {}
        _ => return Err(Error::Precondition("method metrics need a leading reference row".into())),
    }
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.method.clone(), fmt6(r.accuracy), fmt6(r.delta_vs_ref)])
        .collect();
    write_atomic(path, &to_csv(&METHOD_METRICS_HEADER, &records)?)
}

pub fn emit_outlier_stats(profile: &DepthProfile, path: &Path) -> Result<()> {
    let records: Vec<Vec<String>> = profile
        .entries()
        .iter()
        .map(|(label, s)| {
            vec![label.clone(), fmt_opt(s.mean_variance), fmt_opt(s.kurtosis), fmt_opt(s.top1_energy)]
        })
        .collect();
    write_atomic(path, &to_csv(&OUTLIER_STATS_HEADER, &records)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    ScaleMinMax,
    ScalePercentile,
    QuantizeAffine,
    FakeQuantMinMax,
    PegFakeQuant(usize),
}

impl BenchOp {
    pub fn label(&self) -> String {
        match self {
            BenchOp::ScaleMinMax => "scale_minmax".into(),
            BenchOp::ScalePercentile => "scale_percentile_99.9".into(),
            BenchOp::QuantizeAffine => "quantize_affine".into(),
            BenchOp::FakeQuantMinMax => "fake_quant_minmax".into(),
            BenchOp::PegFakeQuant(k) => format!("peg_fake_quant_k{k}"),
        }
    }

    pub fn all() -> Vec<BenchOp> {
        vec![
            BenchOp::ScaleMinMax,
            BenchOp::ScalePercentile,
            BenchOp::QuantizeAffine,
            BenchOp::FakeQuantMinMax,
            BenchOp::PegFakeQuant(4),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrobenchRow {
    pub op_label: String,
    pub p50_ns: f64,
    pub p95_ns: f64,
    pub iterations: usize,
}

/// Nearest-rank percentile of sorted samples.
fn nearest_rank(sorted: &[u128], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1] as f64
}

/// Times each op on `tensor`, serially. Warmup iterations are discarded.
pub fn run_microbench(ops: &[BenchOp], tensor: &ActivationTensor, bits: Bits, iterations: usize, warmup: usize) -> Result<Vec<MicrobenchRow>> {
    if iterations < MIN_ITERATIONS {
        return Err(Error::Precondition(format!("iterations must be >= {MIN_ITERATIONS}, got {iterations}")));
    }
    if warmup < 1 {
        return Err(Error::Precondition("warmup must be >= 1".into()));
    }
    let params = scale_minmax(tensor, bits);
    let mut rows = Vec::with_capacity(ops.len());
    for op in ops {
        let run = || -> Result<()> {
            match *op {
                BenchOp::ScaleMinMax => {
                    std::hint::black_box(scale_minmax(tensor, bits));
                }
                BenchOp::ScalePercentile => {
                    std::hint::black_box(scale_percentile(tensor, 99.9, bits)?);
                }
                BenchOp::QuantizeAffine => {
                    std::hint::black_box(quantize_affine(tensor, &params));
                }
                BenchOp::FakeQuantMinMax => {
                    std::hint::black_box(fake_quant(tensor, &scale_minmax(tensor, bits)));
                }
                BenchOp::PegFakeQuant(k) => {
                    std::hint::black_box(peg_fake_quant(tensor, k, bits)?);
                }
            }
            Ok(())
        };
        for _ in 0..warmup {
            run()?;
        }
        let mut samples = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let start = Instant::now();
            run()?;
            samples.push(start.elapsed().as_nanos());
        }
        samples.sort_unstable();
        rows.push(MicrobenchRow {
            op_label: op.label(),
            p50_ns: nearest_rank(&samples, 50.0),
            p95_ns: nearest_rank(&samples, 95.0),
            iterations,
        });
    }
    Ok(rows)
}

pub fn emit_microbench(rows: &[MicrobenchRow], path: &Path) -> Result<()> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.op_label.clone(), fmt6(r.p50_ns), fmt6(r.p95_ns), r.iterations.to_string()])
        .collect();
    write_atomic(path, &to_csv(&MICROBENCH_HEADER, &records)?)
}

/// Plain-text table of method accuracies.
pub fn render_method_table(rows: &[MethodMetricsRow]) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>9}", "method", "accuracy", "delta");
    for r in rows {
        let _ = writeln!(out, "{:<width$}  {:>8.4}  {:>+9.4}", r.method, r.accuracy, r.delta_vs_ref);
    }
    out
}

/// Plain-text table of a depth profile.
pub fn render_profile_table(profile: &DepthProfile) -> String {
    let width = profile.labels().map(str::len).max().unwrap_or(0).max(5);
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}  {:>8}", "layer", "mean_var", "kurtosis", "top1%");
    for (label, s) in profile.entries() {
        let _ = writeln!(
            out,
            "{:<width$}  {:>12}  {:>12}  {:>8}",
            label,
            cell(s.mean_variance),
            cell(s.kurtosis),
            cell(s.top1_energy)
        );
    }
    out
}

/// Removes a file if present; used to clear stale outputs.
pub fn remove_if_exists(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(e.into()),
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use quantlab_cli::{cmd_run_all, RunConfig, METHOD_METRICS_FILE, MICROBENCH_FILE, OUTLIER_STATS_FILE};
use quantlab_core::quant::{
    fake_quant, peg_fake_quant, quantize_affine, resolution_factor, scale_minmax, scale_percentile, Bits, Directive,
};
use quantlab_core::report::{METHOD_METRICS_HEADER, MICROBENCH_HEADER, OUTLIER_STATS_HEADER};
use quantlab_core::sim::{
    collapse_experiment, generate_stack, propagate_injected, sweep_methods, CollapseResult, MethodSpec, ResidualStackConfig,
};
use quantlab_core::stats::{kurtosis, top_p_energy, TOP_FRACTION};
use quantlab_core::ActivationTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_tensor(rng: &mut ChaCha8Rng) -> ActivationTensor {
    let rows = rng.random_range(1..=24);
    let cols = rng.random_range(1..=24);
    let scale = 10f64.powf(rng.random_range(-3.0..4.0));
    let heavy = rng.random_bool(0.3);
    let data = (0..rows * cols)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            if heavy && rng.random_bool(0.02) {
                scale * g * 100.0
            } else {
                scale * g
            }
        })
        .collect();
    ActivationTensor::from_f64(rows, cols, data).unwrap()
}

fn round_trip_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0usize;
    let mut violations = 0usize;
    let tensors = 10_000;
    for i in 0..tensors {
        let t = random_tensor(&mut rng);
        let bits = Bits::new([4, 8, 12][i % 3]).unwrap();
        let mut params = vec![scale_minmax(&t, bits)];
        if let Ok(p) = scale_percentile(&t, rng.random_range(90.0..100.0), bits) {
            params.push(p);
        }
        for p in &params {
            let out = fake_quant(&t, p);
            let limit = p.clip_threshold();
            for (x, xh) in t.data().iter().zip(out.data()) {
                if x.abs() <= limit {
                    checked += 1;
                    if (x - xh).abs() > p.scale() / 2.0 {
                        violations += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        violations == 0 && secs < 10.0,
        format!("{tensors} tensors, {checked} in-range values, {violations} violations, {secs:.2}s"),
    )
}

fn percentile_minmax_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for i in 0..1000 {
        let t = random_tensor(&mut rng);
        let bits = Bits::new([4, 8, 12][i % 3]).unwrap();
        let a = scale_minmax(&t, bits);
        match scale_percentile(&t, 100.0, bits) {
            Ok(b) if a.scale().to_bits() == b.scale().to_bits() && a == b => {}
            _ => mismatches += 1,
        }
    }
    outcome(mismatches == 0, format!("1000 tensors, {mismatches} mismatches"))
}

fn peg_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut k1_failures = 0;
    let mut inversion_failures = 0;
    let mut cases = 0;
    for _ in 0..200 {
        let t = random_tensor(&mut rng);
        let bits = Bits::new(rng.random_range(2..=16)).unwrap();
        let (out, _) = peg_fake_quant(&t, 1, bits).unwrap();
        let reference = fake_quant(&t, &scale_minmax(&t, bits));
        if out.data().iter().zip(reference.data()).any(|(a, b)| a.to_bits() != b.to_bits()) {
            k1_failures += 1;
        }
        for k in 1..=8usize.min(t.cols()) {
            cases += 1;
            let (out, scheme) = peg_fake_quant(&t, k, bits).unwrap();
            let perm = scheme.permutation();
            let inv = scheme.inverse_permutation();
            // Quantize each contiguous block of permuted columns with its own
            // scale, then read every original channel back through `inv`.
            let mut ok = perm.iter().enumerate().all(|(pos, &ch)| inv[ch] == pos);
            let mut permuted_out = vec![0.0; t.len()];
            for g in 0..scheme.group_count() {
                let (lo, hi) = (scheme.boundaries()[g], scheme.boundaries()[g + 1]);
                let block = ActivationTensor::from_fn(t.rows(), hi - lo, |r, j| t.get(r, perm[lo + j])).unwrap();
                let q = fake_quant(&block, &scale_minmax(&block, bits));
                for r in 0..t.rows() {
                    for j in 0..hi - lo {
                        permuted_out[r * t.cols() + lo + j] = q.get(r, j);
                    }
                }
            }
            for r in 0..t.rows() {
                for c in 0..t.cols() {
                    ok &= out.get(r, c).to_bits() == permuted_out[r * t.cols() + inv[c]].to_bits();
                }
            }
            if !ok {
                inversion_failures += 1;
            }
        }
    }
    outcome(
        k1_failures == 0 && inversion_failures == 0,
        format!("K=1 mismatches {k1_failures}/200, inversion failures {inversion_failures}/{cases}"),
    )
}

fn injected_monte_carlo() -> Outcome {
    let start = Instant::now();
    let cfg = ResidualStackConfig {
        depth: 12,
        width: 32,
        dominant: vec![0, 16],
        samples: 100_000,
        ..ResidualStackConfig::reference()
    };
    let r = propagate_injected(&cfg).unwrap();
    let ratio = r.variance_ratio();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (0.95..=1.05).contains(&ratio) && secs < 60.0,
        format!("L=12 N=1e5 D=32: Var[eps_12]/sum Var[eps_f] = {ratio:.5}, {secs:.2}s"),
    )
}

fn kurtosis_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = ActivationTensor::from_f64(1000, 1000, (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
    let kg = kurtosis(&g).unwrap();
    let rademacher: Vec<f64> = (0..1_000_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let kr = kurtosis(&ActivationTensor::from_f64(1000, 1000, rademacher).unwrap()).unwrap();
    outcome(
        (2.9..=3.1).contains(&kg) && kr == 1.0,
        format!("Gaussian {kg:.4}, Rademacher {kr}"),
    )
}

fn resolution_collapse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 64 * 64;
    let mut data: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    data[1234] = 127.0;
    let t = ActivationTensor::from_f64(64, 64, data).unwrap();
    let params = scale_minmax(&t, Bits::INT8);
    let codes = quantize_affine(&t, &params);
    let bulk_levels: BTreeSet<i32> =
        codes.codes().iter().enumerate().filter(|&(i, _)| i != 1234).map(|(_, &q)| q).collect();
    let rho = resolution_factor(&t).unwrap().rho;

    // Continuous bulk for comparison: a unit Gaussian spreads over more levels.
    let mut g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    g[1234] = 127.0;
    let gt = ActivationTensor::from_f64(64, 64, g).unwrap();
    let gcodes = quantize_affine(&gt, &scale_minmax(&gt, Bits::INT8));
    let glevels: BTreeSet<i32> = gcodes.codes().iter().enumerate().filter(|&(i, _)| i != 1234).map(|(_, &q)| q).collect();

    outcome(
        bulk_levels.len() <= 2 && rho <= 0.011,
        format!(
            "+-1 bulk: {} levels, rho {rho:.5} (Gaussian bulk for reference: {} levels)",
            bulk_levels.len(),
            glevels.len()
        ),
    )
}

fn depth_trends() -> Outcome {
    let layers = generate_stack(&ResidualStackConfig::reference()).unwrap();
    let k: Vec<f64> = layers.iter().map(|t| kurtosis(t).unwrap()).collect();
    let e: Vec<f64> = layers.iter().map(|t| top_p_energy(t, TOP_FRACTION).unwrap().value).collect();
    let k_up = k.windows(2).all(|w| w[1] > w[0]);
    let e_up = e.windows(2).all(|w| w[1] > w[0]);
    let ratio = e[e.len() - 1] / e[0];
    outcome(
        layers.len() == 12 && k_up && e_up && ratio >= 3.0,
        format!(
            "kurtosis {:.1} -> {:.1} increasing={k_up}, top1 {:.4} -> {:.4} increasing={e_up}, ratio {ratio:.2}",
            k[0],
            k[11],
            e[0],
            e[11]
        ),
    )
}

fn collapse_run() -> (CollapseResult, f64) {
    let start = Instant::now();
    let cfg = ResidualStackConfig::dominant_signal();
    let mut methods = vec![MethodSpec::uniform(Directive::Retain, cfg.depth)];
    methods.extend(sweep_methods(cfg.depth, &[99.0, 99.5, 99.9, 99.99], &[2, 4]));
    let r = collapse_experiment(&cfg, &methods, Bits::INT8).unwrap();
    (r, start.elapsed().as_secs_f64())
}

fn collapse_ordering(r: &CollapseResult, secs: f64) -> Outcome {
    let fp32 = r.reference();
    let get = |l: &str| r.get(l).unwrap();
    let (retain, k4, k2, mm, p99) = (get("retain"), get("peg_k4"), get("peg_k2"), get("minmax"), get("percentile_99.0"));
    let checks = [
        fp32 == retain,
        fp32 >= k4,
        k4 > k2,
        k4 >= 0.95 * fp32,
        mm <= 0.6 * fp32,
        p99 <= mm + 0.02,
        secs < 120.0,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "fp32 {fp32:.4} retain {retain:.4} peg_k4 {k4:.4} ({:.3}x) peg_k2 {k2:.4} minmax {mm:.4} p99.0 {p99:.4}, {secs:.1}s",
            k4 / fp32
        ),
    )
}

fn percentile_spread(r: &CollapseResult) -> Outcome {
    let acc: Vec<f64> = ["99.0", "99.5", "99.9", "99.99"].iter().map(|p| r.get(&format!("percentile_{p}")).unwrap()).collect();
    let hi = acc.iter().copied().fold(f64::MIN, f64::max);
    let lo = acc.iter().copied().fold(f64::MAX, f64::min);
    outcome(hi - lo <= 0.05, format!("accuracies {acc:.4?}, spread {:.4}", hi - lo))
}

fn run_all_into(dir: &Path) -> Result<(), String> {
    let cfg = RunConfig { out_dir: dir.to_path_buf(), ..RunConfig::default() };
    cmd_run_all(&cfg).map(|_| ()).map_err(|e| e.to_string())
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    if let Err(e) = run_all_into(a).and_then(|_| run_all_into(b)) {
        return outcome(false, format!("run-all failed: {e}"));
    }
    let mut detail = Vec::new();
    let mut pass = true;
    for f in [METHOD_METRICS_FILE, OUTLIER_STATS_FILE] {
        let same = fs::read(a.join(f)).ok() == fs::read(b.join(f)).ok() && a.join(f).exists();
        pass &= same;
        detail.push(format!("{f} identical={same}"));
    }
    outcome(pass, detail.join(", "))
}

fn is_six_decimal(s: &str) -> bool {
    let body = s.strip_prefix('-').unwrap_or(s);
    match body.split_once('.') {
        Some((int, frac)) => {
            !int.is_empty() && int.bytes().all(|b| b.is_ascii_digit()) && frac.len() == 6 && frac.bytes().all(|b| b.is_ascii_digit())
        }
        None => false,
    }
}

fn check_schema(path: &Path, header: &[&str], numeric: &[usize], integer: &[usize], allow_empty: bool) -> Result<usize, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let expected = header.join(",");
    if lines.next() != Some(expected.as_str()) {
        return Err(format!("{}: header mismatch", path.display()));
    }
    if !text.ends_with('\n') || text.contains('\r') {
        return Err(format!("{}: line endings", path.display()));
    }
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(format!("{}: bad row {line:?}", path.display()));
        }
        for &i in numeric {
            if !(is_six_decimal(fields[i]) || (allow_empty && fields[i].is_empty())) {
                return Err(format!("{}: field {:?} not six-decimal", path.display(), fields[i]));
            }
        }
        for &i in integer {
            if fields[i].is_empty() || !fields[i].bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("{}: field {:?} not an integer", path.display(), fields[i]));
            }
        }
    }
    Ok(rows)
}

fn golden_schemas(dir: &Path) -> Outcome {
    let checks = [
        check_schema(&dir.join(METHOD_METRICS_FILE), &METHOD_METRICS_HEADER, &[1, 2], &[], false),
        check_schema(&dir.join(OUTLIER_STATS_FILE), &OUTLIER_STATS_HEADER, &[1, 2, 3], &[], true),
        check_schema(&dir.join(MICROBENCH_FILE), &MICROBENCH_HEADER, &[1, 2], &[3], false),
    ];
    let mut detail = Vec::new();
    let mut pass = true;
    for c in checks {
        match c {
            Ok(rows) => detail.push(format!("{rows} rows ok")),
            Err(e) => {
                pass = false;
                detail.push(e);
            }
        }
    }
    outcome(pass, detail.join("; "))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, round_trip_bound());
    report(2, percentile_minmax_identity());
    report(3, peg_identities());
    report(4, injected_monte_carlo());
    report(5, kurtosis_calibration());
    report(6, resolution_collapse());
    report(7, depth_trends());
    let (collapse, secs) = collapse_run();
    report(8, collapse_ordering(&collapse, secs));
    report(9, percentile_spread(&collapse));
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    report(10, determinism(&a, &b));
    report(11, golden_schemas(&a));

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|&(n, _)| n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quantlab_cli::{RunConfig, METHOD_METRICS_FILE, MICROBENCH_FILE, OUTLIER_STATS_FILE, PROPAGATION_FILE};
use quantlab_core::{save_dump, ActivationTensor};

const SMALL_CONFIG: &str = r#"{
    "stack": {"width": 32, "samples": 256, "dominant": [0, 16]},
    "collapse_stack": {"width": 32, "samples": 512, "dominant": [0, 4, 8, 12, 16, 20, 24, 28]},
    "microbench_iterations": 100,
    "microbench_warmup": 1,
    "microbench_rows": 16
}"#;

fn quantlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quantlab")).args(args).output().unwrap()
}

fn quantlab_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quantlab")).args(args).env(key, value).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn dump(dir: &Path, name: &str, rows: usize, cols: usize, salt: f64) -> PathBuf {
    let t = ActivationTensor::from_fn(rows, cols, |r, c| ((r * cols + c) as f64 * 0.7 + salt).sin() * (1.0 + c as f64)).unwrap();
    let path = dir.join(name);
    save_dump(&t, &path).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn stats_on_one_dump_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dump(dir.path(), "block.bin", 20, 5, 0.0);
    let out = dir.path().join("out");
    let o = quantlab(&["stats", "--dumps", d.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join(OUTLIER_STATS_FILE));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "block");
}

#[test]
fn stats_keeps_dump_order() {
    let dir = tempfile::tempdir().unwrap();
    // Names chosen so that sorted order differs from argument order.
    let names: Vec<String> = (0..13).map(|i| format!("z{:02}.bin", 12 - i)).collect();
    let paths: Vec<PathBuf> = names.iter().enumerate().map(|(i, n)| dump(dir.path(), n, 12, 4, i as f64)).collect();
    let out = dir.path().join("out");
    let mut args = vec!["stats", "--out", out.to_str().unwrap(), "--dumps"];
    args.extend(paths.iter().map(|p| p.to_str().unwrap()));
    let o = quantlab(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let labels: Vec<String> = csv_rows(&out.join(OUTLIER_STATS_FILE)).into_iter().map(|r| r[0].clone()).collect();
    let expected: Vec<String> = names.iter().map(|n| n.trim_end_matches(".bin").to_string()).collect();
    assert_eq!(labels, expected);
}

#[test]
fn missing_dump_is_io_error_with_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let good = dump(dir.path(), "a.bin", 4, 2, 0.0);
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.bin");
    let o = quantlab(&["stats", "--out", out.to_str().unwrap(), "--dumps", good.to_str().unwrap(), missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.join(OUTLIER_STATS_FILE).exists());
}

#[test]
fn malformed_dump_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    fs::write(&bad, b"NOPE\x00\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
    let out = dir.path().join("out");
    let o = quantlab(&["stats", "--out", out.to_str().unwrap(), "--dumps", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(!out.join(OUTLIER_STATS_FILE).exists());

    let truncated = dump(dir.path(), "t.bin", 4, 4, 0.0);
    let bytes = fs::read(&truncated).unwrap();
    fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
    let o = quantlab(&["stats", "--out", out.to_str().unwrap(), "--dumps", truncated.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unwritable_out_dir_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dump(dir.path(), "a.bin", 4, 2, 0.0);
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let out = blocker.join("sub");
    let o = quantlab(&["stats", "--out", out.to_str().unwrap(), "--dumps", d.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&quantlab(&["stats", "--no-such-flag"])), 1);
    assert_eq!(code(&quantlab(&[])), 1);
    assert_eq!(code(&quantlab(&["stats", "--bits", "1"])), 1);
    assert_eq!(code(&quantlab(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"policy": ["minmax", "retain"]}"#);
    let out = dir.path().join("out");
    let o = quantlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!out.join(PROPAGATION_FILE).exists());

    let cfg = write_config(dir.path(), r#"{"unknown_field": 1}"#);
    assert_eq!(code(&quantlab(&["stats", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn missing_config_file_exits_two() {
    let o = quantlab(&["stats", "--config", "/nonexistent/quantlab.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_thread_count_is_usage_error() {
    assert_eq!(code(&quantlab_env(&["stats", "--bits", "8"], "QUANTLAB_THREADS", "zero")), 1);
}

#[test]
fn simulate_with_depth_one_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"stack": {"depth": 1, "width": 16, "samples": 4096, "dominant": [3]}, "policy": ["peg:2"]}"#,
    );
    let out = dir.path().join("out");
    let o = quantlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join(PROPAGATION_FILE));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "layer01");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let run = |threads: &str| {
        let out = dir.path().join(format!("out{threads}"));
        let o = quantlab_env(
            &["experiment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
            "QUANTLAB_THREADS",
            threads,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join(METHOD_METRICS_FILE)).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn run_all_writes_every_file_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = quantlab(&["run-all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in [METHOD_METRICS_FILE, OUTLIER_STATS_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(csv_rows(&a.join(OUTLIER_STATS_FILE)).len(), 12);
    let methods: Vec<String> = csv_rows(&a.join(METHOD_METRICS_FILE)).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(methods[0], "fp32");
    assert_eq!(methods.len(), 1 + 1 + 4 + 3);
    assert_eq!(csv_rows(&a.join(MICROBENCH_FILE)).len(), 5);
}

#[test]
fn config_defaults_and_overrides() {
    let cfg = RunConfig::from_json("{}").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.reference_stack().depth, 12);

    let cfg = RunConfig::from_json(r#"{"seed": 5, "stack": {"depth": 3}, "policy": ["retain", "peg:4", "percentile:99.9"]}"#).unwrap();
    let stack = cfg.reference_stack();
    assert_eq!((stack.seed, stack.depth), (5, 3));
    assert_eq!(cfg.simulate_policy().unwrap().len(), 3);
    assert_eq!(cfg.collapse_stack().seed, 5);

    assert_eq!(RunConfig::from_json(r#"{"bits": 99}"#).unwrap().validate().unwrap_err().code(), 1);
    assert_eq!(RunConfig::from_json(r#"{"k_grid": [0]}"#).unwrap().validate().unwrap_err().code(), 1);
    assert_eq!(RunConfig::from_json(r#"{"percentile_grid": [101]}"#).unwrap().validate().unwrap_err().code(), 1);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CRATE_DIR: &str = env!("CARGO_MANIFEST_DIR");

fn multiverse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiverse"))
        .args(args)
        .current_dir(CRATE_DIR)
        .env_remove("MULTIVERSE_TOKENIZER")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn assert_schema(name: &str, instance: &Value) {
    let path = Path::new(CRATE_DIR).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name} report violates its schema: {errors:#?}");
}

/// Compares against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
fn assert_golden(name: &str, bytes: &[u8]) {
    let path = Path::new(CRATE_DIR).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, bytes).unwrap();
    }
    let expected = fs::read(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert!(
        expected == bytes,
        "{name} differs from golden:\n{}",
        String::from_utf8_lossy(bytes)
    );
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(CRATE_DIR).join("../core/fixtures").join(name)
}

fn corpus(files: &[(&str, &[u8])]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, bytes) in files {
        fs::write(dir.path().join(name), bytes).unwrap();
    }
    dir
}

fn stats(dir: &Path) -> Value {
    let out = multiverse(&["stats", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_schema("stats", &v);
    v
}

#[test]
fn validate_reference_fixture_passes_with_one_block() {
    let file = core_fixture("ref_data_a.txt");
    let out = multiverse(&["validate", file.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("validate", &v);
    assert_eq!(v["pass"], true);
    assert_eq!(v["blocks"].as_array().unwrap().len(), 1);
    assert_eq!(v["blocks"][0]["paths"], 4);
}

#[test]
fn validate_failure_exits_one() {
    let out = multiverse(&["validate", "tests/fixtures/unclosed.txt"]);
    assert_eq!(code(&out), 1);
    let v = stdout_json(&out);
    assert_schema("validate", &v);
    assert_eq!(v["pass"], false);
    assert_eq!(v["violations"][0]["kind"], "grammar");
    assert_golden("validate_unclosed.json", &out.stdout);
}

#[test]
fn validate_depth_limit() {
    let file = core_fixture("nested_two_level.txt");
    let file = file.to_str().unwrap();
    assert_eq!(code(&multiverse(&["validate", file, "--curation"])), 0);
    let out = multiverse(&["validate", file, "--max-depth", "1"]);
    assert_eq!(code(&out), 1);
    let v = stdout_json(&out);
    assert_schema("validate", &v);
    assert!(v["violations"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f["kind"] == "depth_exceeded"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&multiverse(&[])), 2);
    assert_eq!(code(&multiverse(&["frobnicate"])), 2);
    assert_eq!(code(&multiverse(&["simulate"])), 2);
    assert_eq!(code(&multiverse(&["simulate", "--trajectory", "x", "--cost", "quadratic"])), 2);
    assert_eq!(
        code(&multiverse(&["validate", "x", "--curation", "--max-depth", "3"])),
        2
    );
}

#[test]
fn missing_input_exits_two() {
    let out = multiverse(&["validate", "tests/fixtures/does_not_exist.txt"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does_not_exist.txt"));
    assert!(out.stdout.is_empty());
}

#[test]
fn simulate_t1_degree() {
    let out = multiverse(&["simulate", "--trajectory", "tests/fixtures/t1.txt", "--cost", "constant"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("simulate", &v);
    assert_eq!(v["status"]["status"], "done");
    assert_eq!(v["total_tokens"], 28);
    assert_eq!(v["sequential_length"], 23);
    let degree = v["parallel_degree"].as_f64().unwrap();
    assert_eq!(degree, 28.0 / 23.0);
    assert!((degree - 1.217).abs() < 5e-4);
    assert_eq!(v["speedup_vs_sequential"].as_f64().unwrap(), 28.0 / 23.0);
    assert_golden("simulate_t1.json", &out.stdout);
}

#[test]
fn simulate_writes_report_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let events = dir.path().join("events.jsonl");
    let out = multiverse(&[
        "simulate",
        "--trajectory",
        "tests/fixtures/t1.txt",
        "--max-len",
        "5",
        "--report",
        report.to_str().unwrap(),
        "--events",
        events.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_schema("simulate", &v);
    let workers = v["blocks"][0]["workers"].as_array().unwrap();
    assert_eq!(workers[1]["terminated_by"], "MaxLength");
    assert_eq!(workers[0]["terminated_by"], "PathClose");

    let log = fs::read_to_string(&events).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    for line in &lines {
        assert_schema("event", line);
    }
    assert_eq!(lines.iter().filter(|e| e["kind"] == "done").count(), 1);
    assert_eq!(lines.last().unwrap()["phase"], "Done");
    assert_eq!(lines.iter().filter(|e| e["kind"] == "zombie").count(), 2);
    assert_golden("simulate_t1_max5.jsonl", log.as_bytes());
}

#[test]
fn simulate_capacity_model() {
    let out = multiverse(&["simulate", "--trajectory", "tests/fixtures/t1.txt", "--cost", "capacity:1"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("simulate", &v);
    assert_eq!(v["cost"], "capacity:1");
    assert_eq!(v["wall_units"].as_f64().unwrap(), 28.0);
}

#[test]
fn simulate_rejects_malformed_trajectory() {
    let out = multiverse(&["simulate", "--trajectory", "tests/fixtures/unclosed.txt"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn attention_dump_t1() {
    let out = multiverse(&["attention-dump", "tests/fixtures/t1.txt"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("attention-dump", &v);
    let positions: Vec<u64> = v["positions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_u64().unwrap())
        .collect();
    let expected: Vec<u64> = (0..12).chain(12..17).chain(12..18).chain(18..23).collect();
    assert_eq!(positions, expected);
    assert_eq!(v["tokens"][13], "1:");
    // y1 sits at row 19; it sees the shared prefix and its own header only.
    assert_eq!(v["mask_runs"][19], serde_json::json!([[0, 12], [17, 3]]));
    assert_golden("attention_dump_t1.json", &out.stdout);

    let text = multiverse(&["attention-dump", "tests/fixtures/t1.txt", "--format", "text"]);
    assert_eq!(code(&text), 0);
    assert_eq!(String::from_utf8(text.stdout).unwrap().lines().count(), 28);
}

#[test]
fn sweep_is_seed_stable() {
    let run = |seed: &str| multiverse(&["sweep", "--seed", seed, "--paths", "1,2,4", "--batch", "1,8"]);
    let a = run("7");
    let b = run("7");
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_schema("sweep", &v);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0]["degree"].as_f64().unwrap(), 1.0);
    let degrees: Vec<f64> = rows.iter().step_by(2).map(|r| r["degree"].as_f64().unwrap()).collect();
    assert!(degrees.windows(2).all(|w| w[0] < w[1]), "{degrees:?}");
    assert_golden("sweep_seed7.json", &a.stdout);

    let other = run("8");
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn sweep_csv_output() {
    let out = multiverse(&["sweep", "--csv", "--cost", "constant", "--paths", "3", "--batch", "1"]);
    assert_eq!(code(&out), 0);
    let csv = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("degree,latency_per_token,batch,speedup"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(row[0] > 1.0);
    assert!((row[0] - row[3]).abs() < 1e-4, "constant cost speedup tracks degree: {row:?}");
    assert_golden("sweep_constant.csv", &out.stdout);
}

#[test]
fn sweep_over_trajectory_files() {
    let out = multiverse(&[
        "sweep",
        "--trajectory",
        "tests/fixtures/t1.txt",
        "--trajectory",
        "tests/fixtures/sequential.txt",
        "--cost",
        "constant",
        "--batch",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("sweep", &v);
    assert_eq!(v["rows"][0]["speedup"].as_f64().unwrap(), 28.0 / 23.0);
    assert_eq!(v["rows"][1]["degree"].as_f64().unwrap(), 1.0);
}

#[test]
fn stats_reference_data_corpus() {
    let a = fs::read(core_fixture("ref_data_a.txt")).unwrap();
    let b = fs::read(core_fixture("ref_data_b.txt")).unwrap();
    let dir = corpus(&[("b.txt", &b), ("a.txt", &a)]);
    let v = stats(dir.path());
    assert_eq!(v["aggregate"]["files"], 2);
    assert_eq!(v["aggregate"]["existence_ratio"].as_f64().unwrap(), 1.0);
    assert_eq!(v["aggregate"]["mean_blocks"].as_f64().unwrap(), 1.0);
    let names: Vec<&str> = v["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["file"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["a.txt", "b.txt"]);
    assert_eq!(v["files"][0]["path_count_histogram"], serde_json::json!({"4": 1}));
}

#[test]
fn stats_nested_fixture_records_depth_two() {
    let nested = fs::read(core_fixture("nested_two_level.txt")).unwrap();
    let dir = corpus(&[("nested.txt", &nested)]);
    let v = stats(dir.path());
    assert_eq!(v["files"][0]["max_depth"], 2);
    assert_eq!(v["files"][0]["block_count"], 2);
}

#[test]
fn stats_sequential_corpus() {
    let dir = corpus(&[
        ("1.txt", b"Add the two numbers to get 12."),
        ("2.txt", b"First factor the quadratic, then read off both roots."),
        ("3.txt", b""),
    ]);
    let v = stats(dir.path());
    assert_eq!(v["aggregate"]["files"], 3);
    assert_eq!(v["aggregate"]["existence_ratio"].as_f64().unwrap(), 0.0);
    assert_eq!(v["aggregate"]["mean_blocks"].as_f64().unwrap(), 0.0);
    for f in v["files"].as_array().unwrap() {
        assert_eq!(f["parallel_degree"].as_f64().unwrap(), 1.0);
    }
}

#[test]
fn stats_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let v = stats(dir.path());
    assert_eq!(v["files"], serde_json::json!([]));
    assert_eq!(v["aggregate"]["files"], 0);
    assert_eq!(v["aggregate"]["existence_ratio"].as_f64().unwrap(), 0.0);
}

#[test]
fn stats_lists_bad_files_and_continues() {
    let t1 = fs::read(Path::new(CRATE_DIR).join("tests/fixtures/t1.txt")).unwrap();
    let unclosed = fs::read(Path::new(CRATE_DIR).join("tests/fixtures/unclosed.txt")).unwrap();
    let dir = corpus(&[("a_binary.txt", &[0xff, 0xfe, 0x00]), ("b_t1.txt", &t1), ("c_bad.txt", &unclosed)]);
    let v = stats(dir.path());
    let skipped: Vec<&str> = v["skipped"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["file"].as_str().unwrap())
        .collect();
    assert_eq!(skipped, ["a_binary.txt", "c_bad.txt"]);
    assert_eq!(v["aggregate"]["files"], 1);
    assert_eq!(v["files"][0]["total_tokens"], 28);
    assert_eq!(v["files"][0]["sequential_length"], 23);
}

#[test]
fn stats_is_byte_stable() {
    let out = multiverse(&["stats", "../core/fixtures"]);
    assert_eq!(code(&out), 0);
    assert_eq!(out.stdout, multiverse(&["stats", "../core/fixtures"]).stdout);
    assert_schema("stats", &stdout_json(&out));
    assert_golden("stats_core_fixtures.json", &out.stdout);
}

#[test]
fn stats_missing_directory_exits_two() {
    assert_eq!(code(&multiverse(&["stats", "tests/fixtures/nope"])), 2);
}

#[test]
fn tokenizer_mode_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_multiverse"))
        .args(["simulate", "--trajectory", "tests/fixtures/t1.txt"])
        .current_dir(CRATE_DIR)
        .env("MULTIVERSE_TOKENIZER", "char")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert!(v["total_tokens"].as_u64().unwrap() > 28);
}

fn curate(candidate: &str, extra: &[&str]) -> (i32, Value) {
    let mut args = vec![
        "curate-check",
        "--original",
        "tests/fixtures/steps_original.txt",
        "--candidate",
        candidate,
    ];
    args.extend_from_slice(extra);
    let out = multiverse(&args);
    let v = stdout_json(&out);
    assert_schema("curate-check", &v);
    (code(&out), v)
}

#[test]
fn curate_check_close_rewrite_passes() {
    let (code, v) = curate("tests/fixtures/steps_close.txt", &[]);
    assert_eq!(code, 0);
    assert_eq!(v["granularity"], "per_step");
    assert_eq!(v["steps"].as_array().unwrap().len(), 2);
    assert_eq!(v["flagged"], serde_json::json!([]));
}

#[test]
fn curate_check_reworded_step_is_flagged() {
    let (code, v) = curate("tests/fixtures/steps_reworded.txt", &[]);
    assert_eq!(code, 1);
    assert_eq!(v["flagged"], serde_json::json!(["A2"]));
    assert_eq!(v["steps"][0]["result"]["distance"], 0);
}

#[test]
fn curate_check_misaligned_labels_fail() {
    let (code, v) = curate("tests/fixtures/steps_misaligned.txt", &[]);
    assert_eq!(code, 1);
    assert_eq!(v["pass"], false);
    assert_eq!(v["alignment_error"]["missing_in_refill"], serde_json::json!(["A2"]));
    assert_eq!(v["alignment_error"]["unexpected_in_refill"], serde_json::json!(["A3"]));
}

#[test]
fn curate_check_whole_text_and_threshold() {
    let (status, v) = curate("tests/fixtures/steps_reworded.txt", &["--whole-text"]);
    assert_eq!(v["granularity"], "whole_text");
    let relative = v["steps"][0]["result"]["relative"].as_f64().unwrap();
    assert_eq!(status, if relative <= 0.2 { 0 } else { 1 });

    let (status, _) = curate("tests/fixtures/steps_reworded.txt", &["--threshold", "1"]);
    assert_eq!(status, 0);
    let out = multiverse(&[
        "curate-check",
        "--original",
        "tests/fixtures/steps_original.txt",
        "--candidate",
        "tests/fixtures/steps_close.txt",
        "--threshold",
        "1.5",
    ]);
    assert_eq!(code(&out), 2);
}

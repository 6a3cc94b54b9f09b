use std::path::Path;
use std::process::{Command, Output};

fn l1dict(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l1dict")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn single_rho_single_seed_gives_one_row() {
    let out = l1dict(&["sharpness", "--dim", "6", "-s", "2", "-n", "100", "--rho", "0.1", "--seeds", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("rho,trial,seed,r,is_sharp\n"));
    assert_eq!(data_rows(&text).len(), 1);
}

#[test]
fn rows_follow_grid_arithmetic_and_are_reproducible() {
    let args = ["sharpness", "--dim", "6", "-s", "2", "-n", "80", "--rho", "0.05,0.1,0.2", "--seeds", "4", "--seed", "9"];
    let a = l1dict(&args);
    let b = l1dict(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let rows = data_rows(&stdout(&a));
    assert_eq!(rows.len(), 12);
    // Sorted by grid coordinates: ρ first, then trial.
    let keys: Vec<(String, usize)> = rows.iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|x, y| x.0.parse::<f64>().unwrap().total_cmp(&y.0.parse().unwrap()).then(x.1.cmp(&y.1)));
    assert_eq!(keys, sorted);
    let other_seed = l1dict(&["sharpness", "--dim", "6", "-s", "2", "-n", "80", "--rho", "0.05,0.1,0.2", "--seeds", "4", "--seed", "10"]);
    assert_ne!(a.stdout, other_seed.stdout);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(l1dict(&["sharpness", "--seeds", "0"]).status.code(), Some(2));
    assert_eq!(l1dict(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(l1dict(&["phase-diagram", "--tau", "-1"]).status.code(), Some(2));
    assert_eq!(l1dict(&["identifiability", "--dim", "3", "-s", "5", "--mu", "0.1"]).status.code(), Some(2));
    assert_eq!(l1dict(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_one() {
    let out = l1dict(&["test-dict", "--dict", "/nonexistent/d.csv", "--signals", "/nonexistent/y.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn generate_test_and_recover_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let signals = dir.path().join("y.csv");
    let dict = dir.path().join("d.csv");
    let gen = l1dict(&[
        "generate", "--model", "sg", "--dim", "6", "-s", "2", "-n", "600", "--mu", "0.1", "--dict-out",
        dict.to_str().unwrap(), "--out", signals.to_str().unwrap(), "--seed", "3",
    ]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("y.json")).unwrap()).unwrap();
    assert_eq!(meta["n"], 600);
    assert_eq!(meta["snr"], serde_json::Value::Null);

    let test = l1dict(&["test-dict", "--dict", dict.to_str().unwrap(), "--signals", signals.to_str().unwrap(), "--format", "json"]);
    assert!(test.status.success());
    let report: serde_json::Value = serde_json::from_slice(&test.stdout).unwrap();
    assert_eq!(report["summary"][0]["is_sharp"], true);
    assert_eq!(report["coordinates"].as_array().unwrap().len(), 6);

    let learned = dir.path().join("learned.csv");
    let trace = dir.path().join("trace.csv");
    let rec = l1dict(&[
        "recover", "--signals", signals.to_str().unwrap(), "--reference", dict.to_str().unwrap(), "--tau", "inf",
        "--dict-out", learned.to_str().unwrap(), "--out", trace.to_str().unwrap(),
    ]);
    assert!(rec.status.success(), "{}", String::from_utf8_lossy(&rec.stderr));
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("sweep,objective,nmse\n"));
    let objectives: Vec<f64> = data_rows(&trace_text).iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(objectives.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    assert_eq!(std::fs::read_to_string(&learned).unwrap().lines().count(), 6);
}

#[test]
fn mismatched_inputs_are_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.csv");
    let y = dir.path().join("y.csv");
    write(&d, "1,0\n0,1\n");
    write(&y, "1,2,3\n");
    assert_eq!(l1dict(&["test-dict", "--dict", d.to_str().unwrap(), "--signals", y.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn all_success_sample_size_reports_unavailable_crossing() {
    let out = l1dict(&["sample-size", "--dims", "6", "--ns", "1500", "-s", "2", "--mu", "0.1", "--seeds", "2"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unavailable"));
    let text = stdout(&out);
    assert!(text.contains("# fits\ndim,intercept,slope,n50\n6,,,\n"), "{text}");
}

#[test]
fn counterexample_writes_sibling_tables() {
    let dir = tempfile::tempdir().unwrap();
    let surface = dir.path().join("ce.csv");
    let out = l1dict(&["counterexample", "-n", "500", "--grid", "20", "--out", surface.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&surface).unwrap().lines().count(), 1 + 400);
    assert_eq!(std::fs::read_to_string(dir.path().join("ce.slice.csv")).unwrap().lines().count(), 1 + 20);
    let summary = std::fs::read_to_string(dir.path().join("ce.summary.csv")).unwrap();
    assert!(summary.contains("reference_is_sharp,true"));
}

#[test]
fn timing_single_point_has_no_slope() {
    let out = l1dict(&["timing", "--dim", "5", "--ns", "200", "--dims", "--repeats", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("# slopes\naxis,slope\nn,\ndim,\n"), "{text}");
}

#[test]
fn small_phase_diagram_rates_are_fractions() {
    let out = l1dict(&["phase-diagram", "--dims", "2", "--trials", "3", "--tau", "0.5,inf"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let summary: Vec<&str> = text.split("\n\n").next().unwrap().lines().skip(2).collect();
    assert_eq!(summary.len(), 2);
    for line in summary {
        let rate: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }
}

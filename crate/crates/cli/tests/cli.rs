use std::path::Path;
use std::process::{Command, Output};

const BENCH_HEADER: &str =
    "variant,m,n,k,threads_fast,threads_slow,ratio,elapsed_s,gflops,watts_total,gflops_per_watt";

fn agemm(args: &[&str]) -> Output {
    agemm_env(args, &[])
}

fn agemm_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_agemm"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("AGEMM_")) {
        cmd.env_remove(k);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstderr: {}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// `split` row of simulate output as (ratio, gflops).
fn sim_row(out: &str, split: &str) -> (String, f64) {
    let line = out
        .lines()
        .find(|l| l.starts_with(&format!("{split},")))
        .unwrap_or_else(|| panic!("no {split} row in\n{out}"));
    let cells: Vec<&str> = line.split(',').collect();
    (cells[4].to_string(), cells[5].parse().unwrap())
}

#[test]
fn bench_header_is_stable() {
    let out = stdout(&agemm(&["bench", "--sizes", "16", "--variants", "blocked"]));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some(BENCH_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), BENCH_HEADER.split(',').count());
    assert_eq!(row[..7], ["blocked", "16", "16", "16", "1", "0", "1:0"]);
}

#[test]
fn bench_verifies_every_variant() {
    let out = stdout(&agemm(&[
        "bench",
        "--sizes",
        "64,30x17x45",
        "--verify",
        "--threads",
        "1:2",
        "--threads-fast",
        "2",
        "--threads-slow",
        "2",
        "--variants",
        "a15only,a7only,symmetric,asymmetric,blocked,reference",
    ]));
    let rows: Vec<&str> = out.lines().skip(1).collect();
    // 2 thread counts x 2 clusters + symmetric + asymmetric + blocked + reference, per size
    assert_eq!(rows.len(), 8 * 2);
    assert!(rows.iter().any(|r| r.starts_with("asymmetric,30,17,45,2,2,6:1,")));
    for r in rows {
        let gflops: f64 = r.split(',').nth(8).unwrap().parse().unwrap();
        assert!(gflops > 0.0, "{r}");
    }
}

#[test]
fn bench_thread_sweep_shape() {
    let out = stdout(&agemm(&["bench", "--sizes", "48", "--variants", "fast", "--threads", "1:4"]));
    let threads: Vec<usize> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(threads, vec![1, 2, 3, 4]);
}

#[test]
fn bench_rejects_zero_size() {
    let o = agemm(&["bench", "--sizes", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn bench_rejects_bad_loops() {
    let o = agemm(&["bench", "--sizes", "8", "--variants", "asymmetric", "--fine-loops", "pc"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("pc"));
}

#[test]
fn bench_uses_trace_power_and_writes_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    std::fs::write(&trace, "0 A15 2\n0 A7 1\n200 A15 4\n200 A7 1\n400 A15 4\n400 A7 1\n").unwrap();
    let csv = dir.path().join("bench.csv");
    let o = agemm(&[
        "bench",
        "--sizes",
        "24",
        "--variants",
        "blocked",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(stdout(&o).is_empty());
    let text = std::fs::read_to_string(&csv).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    // A15 averages 3 W over the span, A7 1 W
    assert_eq!(row[9], "4.000");

    let table = stdout(&agemm(&["report", "--input", csv.to_str().unwrap()]));
    assert!(table.lines().nth(2).unwrap().starts_with("blocked"));
}

#[test]
fn simulate_reproduces_reference_predictions() {
    let out = stdout(&agemm(&["simulate", "--profile", "10.374,2.086", "--ratio", "6:1"]));
    assert_eq!(out.lines().next().unwrap(), "split,m,n,k,ratio,gflops,watts_total,gflops_per_watt,of_ideal");
    assert_eq!(sim_row(&out, "asymmetric"), ("6:1".into(), 12.103));
    assert_eq!(sim_row(&out, "symmetric"), ("1:1".into(), 4.172));
    assert_eq!(sim_row(&out, "ideal").1, 12.460);
    assert_eq!(sim_row(&out, "balanced").0, "5:1");

    let out = stdout(&agemm(&["simulate", "--profile", "10.374,2.086", "--ratio", "1:1"]));
    assert_eq!(sim_row(&out, "asymmetric"), ("1:1".into(), 4.172));

    let out = stdout(&agemm(&["simulate", "--profile", "3.5,3.5", "--ratio", "1:1"]));
    assert_eq!(sim_row(&out, "asymmetric").1, 7.0);
}

#[test]
fn simulate_quantized_rows() {
    let out = stdout(&agemm(&["simulate", "--profile", "reference", "--sizes", "352"]));
    let line = out.lines().find(|l| l.starts_with("asymmetric-quantized,352,")).unwrap();
    assert_eq!(line.split(',').nth(5), Some("10.374"));
}

#[test]
fn simulate_needs_a_profile() {
    let o = agemm(&["simulate", "--ratio", "6:1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("profile"));
}

#[test]
fn environment_equivalents_and_precedence() {
    let env = [("AGEMM_PROFILE", "10.374,2.086"), ("AGEMM_RATIO", "1:1")];
    let out = stdout(&agemm_env(&["simulate"], &env));
    assert_eq!(sim_row(&out, "asymmetric"), ("1:1".into(), 4.172));
    let out = stdout(&agemm_env(&["simulate", "--ratio", "6:1"], &env));
    assert_eq!(sim_row(&out, "asymmetric"), ("6:1".into(), 12.103));

    let env = [("AGEMM_SIZES", "12"), ("AGEMM_VARIANTS", "blocked")];
    let out = stdout(&agemm_env(&["bench"], &env));
    assert!(out.lines().nth(1).unwrap().starts_with("blocked,12,12,12,"));
    let bad = agemm_env(&["bench"], &[("AGEMM_SIZES", "0")]);
    assert_eq!(bad.status.code(), Some(2));
}

fn tune_model(out: &Path) -> Output {
    agemm(&[
        "tune",
        "--grid",
        "mc=176,kc=368",
        "--timer",
        "model",
        "--profile",
        "12,2",
        "--sizes",
        "64",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn tune_writes_calibration_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.txt");
    let o = tune_model(&path);
    assert!(stdout(&o).starts_with("mc,kc,gflops_median,gflops_min,gflops_max\n"));
    let first = std::fs::read_to_string(&path).unwrap();
    let keys: Vec<&str> = first.lines().collect();
    assert!(keys.contains(&"mc=176") && keys.contains(&"kc=368"));
    assert!(keys.contains(&"ratio_fast=6") && keys.contains(&"ratio_slow=1"));
    stdout(&tune_model(&path));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), first);

    // the file feeds simulate and bench
    let out = stdout(&agemm(&["simulate", "--calibration", path.to_str().unwrap()]));
    assert_eq!(sim_row(&out, "asymmetric").0, "6:1");
}

#[test]
fn tune_model_search_finds_default_blocking() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.txt");
    let o = agemm(&[
        "tune",
        "--grid",
        "mc=128:224:16,kc=320:416:16",
        "--timer",
        "model",
        "--skip-ratio",
        "--sizes",
        "32",
        "--out",
        path.to_str().unwrap(),
    ]);
    stdout(&o);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("mc=176\nkc=368\n"));
}

#[test]
fn tune_unwritable_path_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("cal.txt");
    let o = tune_model(&path);
    assert!(!o.status.success());
    assert!(!path.exists());
    assert!(!dir.path().join("missing").exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn report_without_input_lists_reference_rows() {
    let out = stdout(&agemm(&["report"]));
    assert_eq!(out.lines().count(), 12);
    assert!(out.contains("Symmetric BLIS"));
}

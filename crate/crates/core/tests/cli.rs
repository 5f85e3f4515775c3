//! End-to-end checks of the privmap binary: exit codes, file outputs, and
//! byte-level determinism of reports.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn privmap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_privmap"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    privmap()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn help_exits_zero_and_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let help = run_in(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("solve"));

    let bad_flag = run_in(dir.path(), &["solve", "--no-such-flag"]);
    assert_eq!(bad_flag.status.code(), Some(1));

    let bad_subcommand = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(bad_subcommand.status.code(), Some(1));
}

#[test]
fn solve_writes_plan_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(
        dir.path(),
        &["solve", "--model", "LeNet", "--helpers", "4", "--tolerance", "0.8",
          "--out", "plan.csv", "--trace", "trace.csv"],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("objective_s"));
    assert!(text.contains("shared_bits"));
    let plan = std::fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    assert!(plan.starts_with("# privmap-plan v1\nrequest,layer,segment,device\n"));
    // One row per segment of every layer: 1+8+8+8+8+1+1 for this network.
    assert_eq!(plan.lines().count(), 2 + 35);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("# privmap-trace v1\n"));
}

#[test]
fn solve_reports_infeasible_privacy_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(
        dir.path(),
        &["solve", "--model", "CifarCnn", "--helpers", "7", "--tolerance", "0.4"],
    );
    assert_eq!(output.status.code(), Some(2));
    let text = stderr(&output);
    assert!(text.contains("rejected"), "{}", text);
    assert!(text.contains("7e"), "diagnostic must name the constraint: {}", text);
    assert!(!dir.path().join("plan.csv").exists());
}

#[test]
fn solve_exact_rejects_oversized_instances_with_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(
        dir.path(),
        &["solve", "--model", "LeNet", "--helpers", "4", "--exact"],
    );
    assert_eq!(output.status.code(), Some(3));
    assert!(stderr(&output).contains("limit"));
}

#[test]
fn solve_exact_handles_tiny_models() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.toml"),
        r#"
format_version = 1
name = "Tiny"
dataset = "SYN"
input_channels = 2
input_spatial = 4

[[layers]]
kind = "conv"
filter_size = 3
out_maps = 4
out_spatial = 4

[[layers]]
kind = "max_pool"
out_maps = 4
out_spatial = 2

[[layers]]
kind = "fully_connected"
neurons = 4
"#,
    )
    .unwrap();
    let greedy = run_in(
        dir.path(),
        &["solve", "--model", "tiny.toml", "--helpers", "3", "--out", "g.csv"],
    );
    assert_eq!(greedy.status.code(), Some(0), "{}", stderr(&greedy));
    let exact = run_in(
        dir.path(),
        &["solve", "--model", "tiny.toml", "--helpers", "3", "--exact", "--out", "e.csv"],
    );
    assert_eq!(exact.status.code(), Some(0), "{}", stderr(&exact));
    let parse = |s: &str| -> f64 {
        s.lines()
            .find(|l| l.starts_with("objective_s"))
            .and_then(|l| l.split_whitespace().nth(1))
            .unwrap()
            .parse()
            .unwrap()
    };
    let g = parse(&stdout(&greedy));
    let e = parse(&stdout(&exact));
    assert!(g >= e - 1e-9, "greedy {} must not beat exact {}", g, e);
}

#[test]
fn privacy_prints_caps_table() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(dir.path(), &["privacy", "--dataset", "CIFAR", "--tolerance", "0.4"]);
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    assert!(text.contains("1,ReLU11,conv,64,8,8,measured"), "{}", text);
    assert!(text.contains("5,ReLU22,conv,128,16,8,measured"));
    assert!(text.contains("9,ReLU32,max_pool,128,32,4,measured"));
    assert!(text.contains("split_point none"));

    let mnist = run_in(dir.path(), &["privacy", "--dataset", "MNIST", "--tolerance", "0.8"]);
    assert_eq!(mnist.status.code(), Some(0));
    let text = stdout(&mnist);
    assert!(text.contains("split_point 3"), "{}", text);
    assert!(text.contains("capped_layers 2"));
}

#[test]
fn privacy_unknown_dataset_lists_available() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(dir.path(), &["privacy", "--dataset", "IMAGENET", "--tolerance", "0.4"]);
    assert_eq!(output.status.code(), Some(1));
    let text = stderr(&output);
    for dataset in ["CAR", "CELEBA", "CIFAR", "MNIST"] {
        assert!(text.contains(dataset), "{}", text);
    }
}

#[test]
fn simulate_missing_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(dir.path(), &["simulate", "--scenario", "no-such-file.toml"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn simulate_matches_golden_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let scenario_file = scenario("tolerance_sweep.toml");
    let output = run_in(
        dir.path(),
        &["simulate", "--scenario", scenario_file.to_str().unwrap(), "--out", "sweep.csv"],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let produced = std::fs::read(dir.path().join("sweep.csv")).unwrap();
    let golden = std::fs::read(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/tolerance_sweep.csv"),
    )
    .unwrap();
    assert_eq!(produced, golden, "sweep output drifted from the golden file");
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let scenario_file = scenario("fleet_mix_sweep.toml");
    let args = |out: &str, seed: &str| {
        vec![
            "simulate".to_string(),
            "--scenario".into(),
            scenario_file.to_str().unwrap().to_string(),
            "--out".into(),
            out.to_string(),
            "--seed".into(),
            seed.to_string(),
        ]
    };
    for (out, seed) in [("a.csv", "7"), ("b.csv", "7"), ("c.csv", "8")] {
        let output = privmap()
            .current_dir(dir.path())
            .args(args(out, seed))
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c.csv")).unwrap();
    assert_eq!(a, b, "same seed must produce identical bytes");
    assert_ne!(a, c, "different seed must perturb the stochastic parts");
}

#[test]
fn simulate_single_scenario_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("scenario.toml"),
        r#"
format_version = 1
name = "smoke"
models = ["LeNet"]
helpers = 4
request_count = 10
arrival_rate = 3.0
tolerance = 0.8
seed = 5
"#,
    )
    .unwrap();
    let output = run_in(
        dir.path(),
        &["simulate", "--scenario", "scenario.toml", "--out", "report.csv", "--summary", "summary.json"],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.starts_with("# privmap-report v1\n"));
    assert!(report.contains("cnn:LeNet"));
    assert!(report.lines().last().unwrap().starts_with("total,10,"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["request_count"], 10);
    assert_eq!(summary["rejected"], 0);
}

#[test]
fn compare_instance_file_reports_gap_or_infeasibility() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.toml"),
        r#"
format_version = 1
name = "Tiny"
dataset = "SYN"
input_channels = 1
input_spatial = 4

[[layers]]
kind = "conv"
filter_size = 1
out_maps = 4
out_spatial = 4

[[layers]]
kind = "conv"
filter_size = 1
out_maps = 4
out_spatial = 4

[[layers]]
kind = "fully_connected"
neurons = 2
"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("instance.toml"),
        r#"
format_version = 1
model = "tiny.toml"
helpers = 2
tolerance = 1.0
requests = 1
"#,
    )
    .unwrap();
    let output = run_in(dir.path(), &["compare", "--instance", "instance.toml"]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = stdout(&output);
    let row = text.lines().nth(1).unwrap();
    let gap: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!(gap >= -1e-9, "{}", row);
}

#[test]
fn compare_infeasible_instance_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // Eight maps under the MNIST cap of 4 need two helpers; one is offered.
    std::fs::write(
        dir.path().join("wide.toml"),
        r#"
format_version = 1
name = "Wide"
dataset = "MNIST"
input_channels = 1
input_spatial = 4

[[layers]]
kind = "conv"
filter_size = 1
out_maps = 8
out_spatial = 4

[[layers]]
kind = "conv"
filter_size = 1
out_maps = 8
out_spatial = 4

[[layers]]
kind = "fully_connected"
neurons = 2
"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("instance.toml"),
        r#"
format_version = 1
model = "wide.toml"
helpers = 1
tolerance = 0.4
requests = 1
"#,
    )
    .unwrap();
    let output = run_in(dir.path(), &["compare", "--instance", "instance.toml"]);
    assert_eq!(output.status.code(), Some(2), "{}", stdout(&output));
    let text = stdout(&output);
    assert!(text.contains("rejected"), "{}", text);
    assert!(text.contains("infeasible"), "{}", text);
}

#[test]
fn simulate_writes_decision_trace_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("scenario.toml"),
        r#"
format_version = 1
name = "traced"
models = ["LeNet"]
helpers = 4
request_count = 5
arrival_rate = 3.0
tolerance = 0.8
seed = 2
"#,
    )
    .unwrap();
    let output = run_in(
        dir.path(),
        &["simulate", "--scenario", "scenario.toml", "--trace", "trace.csv"],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("# privmap-sim-trace v1\n"));
    // Five requests, 35 placement decisions each.
    assert_eq!(trace.lines().count(), 2 + 5 * 35);
}

#[test]
fn compare_random_batch_summarizes_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(dir.path(), &["compare", "--random", "10", "--seed", "4"]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.lines().count() >= 12);
    assert!(text.contains("# both_feasible"));
}

#[test]
fn data_dir_resolves_relative_inputs() {
    let data = tempfile::tempdir().unwrap();
    let work = tempfile::tempdir().unwrap();
    std::fs::copy(
        scenario("tolerance_sweep.toml"),
        data.path().join("tolerance_sweep.toml"),
    )
    .unwrap();
    let output = privmap()
        .current_dir(work.path())
        .env("PRIVMAP_DATA_DIR", data.path())
        .args(["simulate", "--scenario", "tolerance_sweep.toml", "--out", "sweep.csv"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(work.path().join("sweep.csv").exists());
}

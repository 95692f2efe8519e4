//! Golden reports for fixed seeds. `GEOSPAR_BLESS=1 cargo test --test golden`
//! regenerates the fixtures.

use std::path::PathBuf;

use geospar_cli::commands::{cmd_bench, cmd_build, cmd_replay, random_moves, random_points};
use geospar_cli::io::{format_points, format_trace, parse_points, parse_trace, TraceOp};
use geospar_cli::RunConfig;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bless() -> bool {
    std::env::var_os("GEOSPAR_BLESS").is_some()
}

fn config() -> RunConfig {
    RunConfig::load(&fixture("run.cfg")).unwrap()
}

fn points() -> Vec<Vec<f64>> {
    let path = fixture("points128.csv");
    if bless() {
        std::fs::write(&path, format_points(&random_points(128, 4, 2024))).unwrap();
    }
    parse_points(&std::fs::read_to_string(&path).unwrap(), "points128.csv").unwrap()
}

fn trace(points: &[Vec<f64>]) -> Vec<(usize, TraceOp)> {
    let path = fixture("trace.jsonl");
    if bless() {
        let mut ops = Vec::new();
        for (t, mv) in random_moves(points, 40, 99).into_iter().enumerate() {
            ops.push(mv);
            if t % 4 == 0 {
                ops.push(TraceOp::Mulv { nz: vec![(t, 1.0), (t + 7, -0.5)] });
            }
            if t % 6 == 0 {
                ops.push(TraceOp::Solveb { nz: vec![(t, 1.0), (127 - t, -1.0)] });
            }
        }
        std::fs::write(&path, format_trace(&ops)).unwrap();
    }
    parse_trace(&std::fs::read_to_string(&path).unwrap(), "trace.jsonl").unwrap()
}

/// Pretty JSON of the report without its timing block.
fn deterministic(mut report: Value) -> String {
    report.as_object_mut().unwrap().remove("timing");
    serde_json::to_string_pretty(&report).unwrap() + "\n"
}

fn compare(name: &str, actual: String) {
    let path = fixture(name);
    if bless() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert!(expected == actual, "{name} differs from the stored golden file:\n{actual}");
}

#[test]
fn build_summary_matches_golden() {
    let out = cmd_build(&points(), &config(), true).unwrap();
    assert!(out.ok);
    compare("build_golden.json", deterministic(out.report));
}

#[test]
fn replay_matches_golden() {
    let pts = points();
    let out = cmd_replay(&pts, &trace(&pts), &config(), true).unwrap();
    assert!(out.ok, "{}", out.report);
    compare("replay_golden.json", deterministic(out.report));
}

#[test]
fn bench_op_counts_match_golden() {
    let cfg = RunConfig { bench_sizes: vec![64, 128], bench_updates: 20, bench_runs: 1, ..config() };
    let out = cmd_bench(None, &cfg).unwrap();
    assert_eq!(out.report["rows"].as_array().unwrap().len(), 2);
    compare("bench_ops.json", deterministic(out.report));
}

#[test]
fn runs_are_reproducible() {
    let pts = points();
    let tr = trace(&pts);
    let a = deterministic(cmd_replay(&pts, &tr, &config(), false).unwrap().report);
    let b = deterministic(cmd_replay(&pts, &tr, &config(), false).unwrap().report);
    assert_eq!(a, b);
}

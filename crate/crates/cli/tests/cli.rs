use std::fs;
use std::process::{Command, Output};

fn aam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aam")).args(args).output().expect("spawn aam")
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    (header, lines.map(|l| l.split(',').map(str::to_owned).collect()).collect())
}

#[test]
fn run_writes_one_validated_row() {
    for algorithm in ["bfs", "pr", "mst", "st", "color"] {
        let out = aam(&["run", "--algorithm", algorithm, "--graph", "er:200,0.03", "--procs", "2", "--threads", "2", "--t", "150"]);
        assert!(out.status.success(), "{algorithm}: {}", String::from_utf8_lossy(&out.stderr));
        let (header, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
        assert!(header.iter().any(|h| h == "build"));
        assert_eq!(rows.len(), 1);
    }
}

#[test]
fn model_sweep_round_trips_through_fit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.csv");
    let p = path.to_str().unwrap();
    let out = aam(&["bench", "model-sweep", "--n-range", "1:12:1", "--activities", "200", "--out", p]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = csv_rows(&fs::read_to_string(&path).unwrap());
    assert_eq!(rows.len(), 24);

    let out = aam(&["fit", p]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("crossing: N*="), "{text}");
}

#[test]
fn sweeps_emit_one_row_per_point() {
    let out = aam(&["bench", "coarsen-sweep", "--graph", "kron:8,8", "--m-range", "1:16:5", "--reps", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&String::from_utf8(out.stdout).unwrap()).1.len(), 4);

    let out = aam(&["bench", "coalesce-sweep", "--procs", "2", "--ops", "200", "--vertices", "64", "--c-range", "1,8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // atomics baseline plus one row per C
    assert_eq!(csv_rows(&String::from_utf8(out.stdout).unwrap()).1.len(), 3);
}

#[test]
fn benchmarks_accept_every_policy() {
    for policy in ["rtm", "hle", "bgq-short", "bgq-long", "atomics", "locks"] {
        let out = aam(&["bench", "single-vertex-acc", "--policy", policy, "--threads", "2", "--vertices", "16"]);
        assert!(out.status.success(), "{policy}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = aam(&["bench", "distributed-scenario", "--scenario", "o2", "--procs", "2", "--deterministic"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_exits_with_two() {
    let cases: [&[&str]; 5] = [
        &["run", "--algorithm", "bfs", "--graph", "nonsense:1"],
        &["run", "--algorithm", "bfs", "--graph", "er:10,0.5", "--source", "99"],
        &["bench", "coarsen-sweep", "--m-range", "5:1:0"],
        &["bench", "model-sweep", "--policy", "quantum"],
        &["fit", "/nonexistent/samples.csv"],
    ];
    for args in cases {
        let out = aam(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

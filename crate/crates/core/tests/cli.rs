use std::fs;
use std::path::Path;

use handover::cli::run;

fn handover(args: &[&str]) -> i32 {
    run(std::iter::once("handover").chain(args.iter().copied()))
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_deterministic_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let data = dir.path().to_str().unwrap();
        assert_eq!(handover(&["--data", data, "--seed", "9", "simulate", "--sessions", "2", "--episodes", "2"]), 0);
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.iter().any(|(name, _)| name.ends_with(".csv")));
    assert_eq!(ta, tb);
}

#[test]
fn ingest_and_apcheck_on_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let reports = dir.path().join("reports");
    let (data, reports) = (data.to_str().unwrap(), reports.to_str().unwrap());
    assert_eq!(handover(&["--data", data, "--seed", "1", "simulate", "--sessions", "2", "--episodes", "2"]), 0);
    assert_eq!(handover(&["--data", data, "--reports", reports, "ingest"]), 0);
    assert!(Path::new(reports).join("episodes.csv").exists());
    assert_eq!(handover(&["--data", data, "--reports", reports, "apcheck"]), 0);
    assert!(Path::new(reports).join("ap_coverage.json").exists());
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    assert_eq!(handover(&["--data", missing.to_str().unwrap(), "ingest"]), 1);
    assert_eq!(handover(&["simulate", "--sessions", "many"]), 1);
}

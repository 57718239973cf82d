use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn disco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disco")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = disco(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn generate(dir: &Path, n: usize) -> String {
    let path = dir.join(format!("pa{n}.txt"));
    let p = path.to_str().unwrap();
    ok(&["generate", "--kind", "pa", "-n", &n.to_string(), "--seed", "3", "-o", p]);
    p.to_string()
}

const SMALL: &[&str] = &[
    "--set", "episodes=2", "--set", "budget=3", "--set", "dimension=8", "--set", "batch_size=4",
    "--set", "reward_runs=10", "--set", "sample_count=2", "--set", "sample_fraction=0.2",
    "--set", "eval_runs=100", "--set", "celf_runs=20", "--set", "k=2,3", "--set", "pair_sample=50",
    "--set", "wall_time=false",
];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(SMALL).chain(extra).copied().collect()
}

#[test]
fn help_formats_lists_every_csv() {
    let text = ok(&["--help-formats"]);
    for col in ["episode,step,loss", "method,k,spread_mean", "node,q,rank", "train_snapshot,k"] {
        assert!(text.contains(col), "missing {col}");
    }
}

#[test]
fn oracle_and_evaluate_agree_on_a_path() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("path.txt");
    fs::write(&g, "1 2 0.5\n2 3 0.5\n").unwrap();
    let g = g.to_str().unwrap();
    let exact = ok(&["oracle", "-g", g, "-s", "1"]);
    let row = exact.lines().nth(1).unwrap();
    assert!(row.starts_with("1,1.75,"), "{row}");
    let est = ok(&["evaluate", "-g", g, "-s", "1", "-r", "20000"]);
    let fields: Vec<&str> = est.lines().nth(1).unwrap().split(',').collect();
    let mean: f64 = fields[1].parse().unwrap();
    let stderr: f64 = fields[2].parse().unwrap();
    assert!((mean - 1.75).abs() <= 4.0 * stderr);
    assert_eq!(fields[3], "20000");
}

#[test]
fn train_select_stability_compare() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(dir.path(), 150);
    let model = dir.path().join("model.txt");
    let log = dir.path().join("log.csv");
    ok(&with(&["train", "-g", &g, "-m", model.to_str().unwrap(), "--log", log.to_str().unwrap()], &[]));
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 3);

    let sel = ok(&["select", "-g", &g, "-m", model.to_str().unwrap(), "-k", "4"]);
    let rows: Vec<&str> = sel.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[3].split(',').nth(2) == Some("4"));

    let stab = ok(&with(&["stability", "-g", &g, "-m", model.to_str().unwrap()], &[]));
    assert_eq!(stab.lines().count(), 3);

    let cmp = ok(&with(&["compare", "-g", &g, "-m", model.to_str().unwrap()], &[]));
    assert_eq!(cmp.lines().count(), 1 + 2 * 4);
    let hash = cmp.lines().nth(1).unwrap().rsplit(',').next().unwrap().to_string();
    assert_eq!(hash.len(), 16);
    assert!(stab.lines().skip(1).all(|l| l.ends_with(&hash)));
}

#[test]
fn sample_writes_d_statistic_line() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(dir.path(), 200);
    let out = dir.path().join("s.txt");
    ok(&["sample", "-g", &g, "--set", "sample_fraction=0.25", "-o", out.to_str().unwrap()]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# d_statistic degree="));
}

#[test]
fn run_and_failure_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(dir.path(), 120);
    let out = dir.path().join("out");
    let stdout = ok(&with(&["run", "-g", &g, "-o", out.to_str().unwrap()], &[]));
    assert!(stdout.starts_with("config_hash "));
    assert!(out.join("compare.csv").is_file());

    let bad = disco(&with(&["run", "-g", &g, "-o", out.to_str().unwrap()], &["--set", "budget=500"]));
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("train"));
    assert!(out.join("quarantine").is_dir());

    assert!(!disco(&["oracle", "-g", "/nonexistent", "-s", "1"]).status.success());
    assert!(!disco(&["evaluate", "-g", &g, "-s", "99999"]).status.success());
    assert!(!disco(&["select", "-g", &g, "-k", "3", "--method", "topk"]).status.success());
    assert!(!disco(&["run", "--set", "nonsense=1"]).status.success());
}

#[test]
fn evolve_over_two_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(dir.path(), 100);
    let series = dir.path().join("series.txt");
    fs::write(&series, format!("1 {g}\n2 {g}\n")).unwrap();
    let csv = ok(&with(&["evolve", "--series", series.to_str().unwrap()], &["--set", "k=3"]));
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2], rows[1][2]);
}

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use commute_core::detector::exhaustive_scores;
use commute_core::persist;
use commute_core::spectral::CommuteTimes;
use tempfile::TempDir;

fn commute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commute"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small generated data set shared by the slower tests.
fn dataset(dir: &Path) -> (PathBuf, PathBuf) {
    ok(&commute(&[
        "gen",
        "--out-dir",
        path(dir),
        "--seed",
        "4",
        "--total-n",
        "360",
        "--test-size",
        "20",
    ]));
    (dir.join("train.csv"), dir.join("test.csv"))
}

fn train(dir: &Path, input: &Path, name: &str) -> PathBuf {
    let model = dir.join(name);
    ok(&commute(&[
        "train",
        path(input),
        "--model",
        path(&model),
        "--m",
        "20",
        "--top-n",
        "10",
        "--report",
        path(&dir.join(format!("{name}.top.csv"))),
    ]));
    model
}

fn without_elapsed(report: &str) -> Vec<String> {
    report
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(5);
            f.join(",")
        })
        .collect()
}

#[test]
fn paw_edge_list_model() {
    let dir = TempDir::new().unwrap();
    let edges = dir.path().join("paw.txt");
    fs::write(&edges, "# four nodes\n0 1 1\n1 2 1\n1 3 1\n2 3 1\n").unwrap();
    let model = dir.path().join("paw.model");
    ok(&commute(&[
        "train",
        path(&edges),
        "--model",
        path(&model),
        "--m",
        "3",
        "--k2",
        "1",
        "--top-n",
        "2",
    ]));
    let m = persist::load(BufReader::new(fs::File::open(&model).unwrap())).unwrap();
    assert!((m.eigensystem().commute_time(0, 1) - 8.0).abs() < 1e-8);
}

#[test]
fn retraining_gives_identical_bytes_and_exhaustive_tau() {
    let dir = TempDir::new().unwrap();
    let (train_csv, _) = dataset(dir.path());
    let a = train(dir.path(), &train_csv, "a.model");
    let b = train(dir.path(), &train_csv, "b.model");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let m = persist::load(BufReader::new(fs::File::open(&a).unwrap())).unwrap();
    let mut scores = exhaustive_scores(m.graph(), m.eigensystem(), m.params().k2);
    scores.sort_by(|x, y| y.total_cmp(x));
    assert_eq!(scores[m.params().top_n - 1], m.tau());

    let report = fs::read_to_string(dir.path().join("a.model.top.csv")).unwrap();
    let tau: f64 = report.lines().next().unwrap().strip_prefix("# tau=").unwrap().parse().unwrap();
    assert_eq!(tau, m.tau());
}

#[test]
fn empty_test_file_gives_empty_report() {
    let dir = TempDir::new().unwrap();
    let (train_csv, _) = dataset(dir.path());
    let model = train(dir.path(), &train_csv, "m.model");
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = commute(&["score", path(&model), path(&empty)]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.trim_end(),
        "index,score,is_anomaly,pruned,method,elapsed_s,neighbors_examined"
    );
}

#[test]
fn repeated_runs_agree_and_stream_matches_score() {
    let dir = TempDir::new().unwrap();
    let (train_csv, test_csv) = dataset(dir.path());
    let model = train(dir.path(), &train_csv, "m.model");
    for method in ["batch", "iled", "iect"] {
        let run = |cmd: &str| {
            let out = commute(&[cmd, path(&model), path(&test_csv), "--method", method]);
            ok(&out);
            without_elapsed(&String::from_utf8(out.stdout).unwrap())
        };
        let first = run("score");
        assert_eq!(first.len(), 21);
        assert_eq!(first, run("score"));
        assert_eq!(first, run("stream"));
    }
}

#[test]
fn plot_data_bench_and_robustness_outputs() {
    let dir = TempDir::new().unwrap();
    let (train_csv, test_csv) = dataset(dir.path());
    let model = train(dir.path(), &train_csv, "m.model");
    let plots = dir.path().join("plots");
    ok(&commute(&[
        "score",
        path(&model),
        path(&test_csv),
        "--plot-data",
        path(&plots),
        "--out",
        path(&dir.path().join("r.csv")),
    ]));
    assert_eq!(fs::read_to_string(plots.join("scores.csv")).unwrap().lines().count(), 21);
    assert_eq!(fs::read_to_string(plots.join("latency.csv")).unwrap().lines().count(), 21);

    let out = commute(&[
        "bench",
        path(&model),
        path(&test_csv),
        "--labels",
        path(&dir.path().join("test_labels.csv")),
    ]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("batch,"));
    // batch against itself is perfect
    assert!(rows[1].contains(",1.0000,1.0000,"));

    let out = commute(&["robustness", path(&model), path(&test_csv), "--limit", "2"]);
    ok(&out);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(commute(&["--help"]).status.code(), Some(0));
    assert_eq!(commute(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(commute(&["train"]).status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let out = dir.path().join("x.model");
    assert_eq!(
        commute(&["train", path(&bad), "--model", path(&out)]).status.code(),
        Some(2)
    );
    assert_eq!(
        commute(&["score", path(&dir.path().join("missing.model")), path(&bad)]).status.code(),
        Some(2)
    );

    let tiny = dir.path().join("tiny.csv");
    fs::write(&tiny, "0,0\n1,0\n0,1\n").unwrap();
    assert_eq!(
        commute(&["train", path(&tiny), "--model", path(&out)]).status.code(),
        Some(1)
    );
}

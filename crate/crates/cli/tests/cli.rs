use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_locmahal"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn mnist(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/mnist")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// Two well-separated labelled clusters in 4 dimensions.
fn blobs(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for i in 0..24 {
        let (label, c) = if i % 2 == 0 { ("a", 0.2) } else { ("b", 0.8) };
        let v: Vec<String> = (0..4)
            .map(|k| format!("{:.4}", c + 0.01 * ((i * 7 + k * 3) % 11) as f64))
            .collect();
        text.push_str(&format!("{label},{}\n", v.join(",")));
    }
    let p = dir.join("blobs.csv");
    std::fs::write(&p, text).unwrap();
    p
}

fn pairs(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for i in 0..20 {
        let a: Vec<f64> = (0..4)
            .map(|k| ((i * 5 + k * 7) % 13) as f64 / 13.0)
            .collect();
        let b: Vec<f64> = if i % 2 == 0 {
            a.iter().map(|x| x + 0.01).collect()
        } else {
            a.iter().map(|x| 1.0 - x).collect()
        };
        let label = if i % 2 == 0 { "same" } else { "not_same" };
        let v: Vec<String> = a.iter().chain(&b).map(|x| format!("{x:.4}")).collect();
        text.push_str(&format!("{label},{}\n", v.join(",")));
    }
    let p = dir.join("pairs.csv");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_on_every_command() {
    for cmd in ["learn", "knn-eval", "verify-pairs", "bench", "oracle-check"] {
        let o = run(&[cmd, "--help"]);
        assert_eq!(code(&o), 0, "{cmd}");
        assert!(stdout(&o).contains("Usage"), "{cmd}");
    }
}

#[test]
fn learn_without_out_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let t = blobs(dir.path());
    let o = run(&["learn", "--query", "0", "--negatives", t.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn learn_writes_a_metric_file() {
    let dir = tempfile::tempdir().unwrap();
    let t = blobs(dir.path());
    let out = dir.path().join("m.lmm");
    let o = run(&[
        "learn",
        "--query",
        "0",
        "--negatives",
        t.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = locmahal::io::load_metric(&out).unwrap();
    assert_eq!(m.dim(), 4);
    assert!(stdout(&o).contains("support="));
}

#[test]
fn even_k_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = blobs(dir.path());
    let o = run(&["knn-eval", "--table", t.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn single_fold_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = pairs(dir.path());
    let o = run(&[
        "verify-pairs",
        "--pairs",
        p.to_str().unwrap(),
        "--folds",
        "1",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_pairs_reports_folds() {
    let dir = tempfile::tempdir().unwrap();
    let p = pairs(dir.path());
    let bank = blobs(dir.path());
    let report = dir.path().join("r.txt");
    let o = run(&[
        "verify-pairs",
        "--pairs",
        p.to_str().unwrap(),
        "--bank",
        bank.to_str().unwrap(),
        "--folds",
        "4",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(report).unwrap();
    assert!(text.contains("l2.fold.3.error_rate="));
    assert!(text.contains("local_mahal.fold_std="));
}

#[test]
fn bench_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let o = run(&[
        "bench",
        "--n",
        "1",
        "--d",
        "784",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("1,784,5,"));
}

#[test]
fn oracle_check_passes() {
    let o = run(&["oracle-check"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("100 of 100"));
}

#[test]
fn knn_eval_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run_id in 0..2 {
        let report = dir.path().join(format!("r{run_id}.txt"));
        let csv = dir.path().join(format!("r{run_id}.csv"));
        let o = run(&[
            "knn-eval",
            "--images",
            &mnist("digits10k-images-idx3-ubyte.gz"),
            "--labels",
            &mnist("digits10k-labels-idx1-ubyte.gz"),
            "--train-limit",
            "120",
            "--test-limit",
            "40",
            "--negatives-per-exemplar",
            "60",
            "--methods",
            "l2,local_mahal,inv_mahal",
            "--augment",
            "--seed",
            "3",
            "--report",
            report.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((std::fs::read(report).unwrap(), std::fs::read(csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(text.contains("config.seed=3\n"));
    assert!(text.contains("inv_mahal.total=40\n"));
}

#[test]
fn args_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let t = blobs(dir.path());
    let args = dir.path().join("args.txt");
    std::fs::write(
        &args,
        format!("# blobs\n--table {}\n--k 1\n--methods=l2\n", t.display()),
    )
    .unwrap();
    let o = run(&["knn-eval", "--args-file", args.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("l2"));
    assert!(!stdout(&o).contains("local_mahal"));
}

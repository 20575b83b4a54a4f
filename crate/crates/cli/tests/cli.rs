use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phida"))
}

fn iris() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/iris.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_reports_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--dataset", path_str(&iris()), "--seeds", "3", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("final ARI"));
    for seed in 0..3 {
        assert!(out.join(format!("runs/iris__stationary__full__seed{seed}.txt")).exists());
        assert!(out.join(format!("models/iris__stationary__full__seed{seed}.json")).exists());
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("iris,stationary,full,3,0,"));
    assert_eq!(fs::read_to_string(out.join("timings.csv")).unwrap().lines().count(), 4);
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&[
            "run",
            "--dataset",
            path_str(&iris()),
            "--seeds",
            "4,9",
            "--mode",
            "nonstationary",
            "--out",
            path_str(out),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    for seed in [4, 9] {
        let name = format!("runs/iris__nonstationary__full__seed{seed}.txt");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn predict_and_inspect_a_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--dataset", path_str(&iris()), "--seeds", "1", "--scale", "minmax", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let model = out.join("models/iris__stationary__full__seed0.json");

    let o = run(&["predict", "--model", path_str(&model), "--input", path_str(&iris()), "--label-col", "species"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,cluster"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 150);
    assert!(rows.iter().enumerate().all(|(i, r)| r.starts_with(&format!("{i},"))));

    let o = run(&["inspect", "--model", path_str(&model)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("samples seen:   150"));
    assert!(text.contains("input scaling:  minmax"));
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# experiment\ndataset = {}\nseeds = 5\nvariant = noPrune\nout = {}\n",
            iris().display(),
            out.display()
        ),
    )
    .unwrap();
    let o = run(&["run", "--config", path_str(&cfg), "--seeds", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("runs/iris__stationary__noPrune__seed1.txt").exists());
    assert!(!out.join("runs/iris__stationary__noPrune__seed2.txt").exists());

    fs::write(&cfg, "colour = blue\n").unwrap();
    let o = run(&["run", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["run", "--nope"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["run", "--seeds", "2"]).status.code(), Some(1));
    let o = run(&["run", "--dataset", path_str(&iris()), "--variant", "bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["inspect", "--model", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn failed_runs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    fs::write(&csv, "a,b,label\n1,2,x\n2,3,x\n3,1,x\n4,4,x\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "--dataset",
        path_str(&csv),
        "--mode",
        "nonstationary",
        "--seeds",
        "2",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let rec = fs::read_to_string(out.join("runs/one__nonstationary__full__seed0.txt")).unwrap();
    assert!(rec.contains("status=failed"));
    assert!(rec.contains("final_ari=N/A"));
}

#[test]
fn predict_rejects_wrong_width() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&["run", "--dataset", path_str(&iris()), "--seeds", "1", "--out", path_str(&out)]).status.code(),
        Some(0)
    );
    let input = dir.path().join("narrow.csv");
    fs::write(&input, "a,b\n1,2\n").unwrap();
    let model = out.join("models/iris__stationary__full__seed0.json");
    let o = run(&["predict", "--model", path_str(&model), "--input", path_str(&input)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model expects 4"));
}

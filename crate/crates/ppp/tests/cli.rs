use std::path::Path;
use std::process::{Command, Output};

fn ppp(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ppp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("ppp binary runs");
    assert!(
        out.status.success(),
        "ppp {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn lgcp_workflow_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    ppp(d, &["simulate", "--model", "lgcp", "--params", "5,1,0.05", "--seed", "4", "--out", "obs.csv"]);
    let csv = std::fs::read_to_string(d.join("obs.csv")).unwrap();
    assert!(csv.starts_with("x,y"));

    let l = stdout(&ppp(d, &["summarize", "--stat", "L", "obs.csv", "--grid-len", "33"]));
    assert_eq!(l.lines().count(), 34);
    assert!(l.starts_with("r,value,valid"));

    ppp(
        d,
        &[
            "make-data", "--model", "lgcp", "--range", "mu=4.5,5.5", "--range", "sigma2=0,2",
            "--range", "s=0.02,0.08", "--n-train", "60", "--n-test", "20", "--seed", "9",
            "--grid-len", "257", "--resolution", "16", "--out", "train.bin", "--test-out", "test.bin",
        ],
    );
    ppp(
        d,
        &[
            "train", "--data", "train.bin", "--test", "test.bin", "--epochs", "2", "--batch", "20",
            "--out", "model.ppnn", "--history", "history.csv",
        ],
    );
    let history = std::fs::read_to_string(d.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    ppp(d, &["evaluate", "--model", "model.ppnn", "--test", "test.bin", "--out", "pred.csv"]);
    assert_eq!(std::fs::read_to_string(d.join("pred.csv")).unwrap().lines().count(), 21);

    let est: serde_json::Value =
        serde_json::from_str(&stdout(&ppp(d, &["estimate", "--model", "model.ppnn", "obs.csv", "--data", "train.bin"])))
            .unwrap();
    assert!(!est.to_string().is_empty());

    let mc: serde_json::Value =
        serde_json::from_str(&stdout(&ppp(d, &["baseline", "--method", "mincontrast", "obs.csv"]))).unwrap();
    assert!(mc.is_object());

    let env = stdout(&ppp(
        d,
        &[
            "envelope", "--stat", "L", "--nsim", "19", "--model", "lgcp", "--params", "5,1,0.05",
            "--resolution", "16", "obs.csv", "--out", "env.csv",
        ],
    ));
    assert!(env.contains('p'));
    let env_csv = std::fs::read_to_string(d.join("env.csv")).unwrap();
    assert!(env_csv.starts_with("r,lower,central,upper,data"));

    ppp(d, &["coverage-check", "--data", "train.bin", "obs.csv"]);

    let sizes = stdout(&ppp(
        d,
        &["size-study", "--data", "train.bin", "--test", "test.bin", "--sizes", "30,60", "--epochs", "1", "--batch", "15"],
    ));
    assert_eq!(sizes.lines().count(), 3);
}

#[test]
fn strauss_simulation_and_mple() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ppp(
        d,
        &[
            "simulate", "--model", "strauss", "--params", "400,0.3,0.04", "--iters", "20000", "--seed", "2",
            "--out", "s.csv", "--trace", "trace.csv", "--thin", "1000",
        ],
    );
    let trace = std::fs::read_to_string(d.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,n,s_r"));
    let fit: serde_json::Value = serde_json::from_str(&stdout(&ppp(
        d,
        &["baseline", "--method", "mple", "s.csv", "--radii", "0.01,0.06,11"],
    )))
    .unwrap();
    assert!(fit.is_object());
}

#[test]
fn bad_input_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ppp"))
        .current_dir(tmp.path())
        .args(["train", "--data", "missing.bin"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    std::fs::write(tmp.path().join("junk.bin"), b"not a dataset").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ppp"))
        .current_dir(tmp.path())
        .args(["train", "--data", "junk.bin"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

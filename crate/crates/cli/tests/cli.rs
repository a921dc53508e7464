use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_pum-rom")).args(args).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn config_errors_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    let bad = write(d.path(), "bad.json", r#"{"unknown_key": 1}"#);
    assert_eq!(run(&["train", "--config", &bad]).0, 2);
    assert_eq!(run(&["solve", "--config", "/nonexistent/config.json"]).0, 2);
    let wrong = write(d.path(), "wrong.json", r#"{"study": "verify"}"#);
    assert_eq!(run(&["train", "--config", &wrong]).0, 2);
    let missing = write(d.path(), "m.json", r#"{"basis_dir": "/nonexistent/bases"}"#);
    assert_eq!(run(&["solve", "--config", &missing, "--fast"]).0, 2);
}

#[test]
fn train_and_solve_fast() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "t.json", r#"{"training": {"n_train": 10, "n": 5}}"#);
    let out = d.path().join("bases");
    let (code, _) = run(&["train", "--config", &cfg, "--fast", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.join("basis_int.pumrom").exists());
    let solve = write(
        d.path(),
        "s.json",
        &format!(r#"{{"basis_dir": {:?}, "solve": {{"n_dd": 2, "i_star": 1}}}}"#, out.to_str().unwrap()),
    );
    let out2 = d.path().join("solve");
    let (code, stdout) = run(&["solve", "--config", &solve, "--fast", "--out", out2.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["n_dd"], 2);
    assert!(out2.join("solve_report.json").exists());
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ocaflat"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn file(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CLIMB_TO_X: &str = r#"{"states":["q","q2"],"initial":"q","params":["x"],
  "transitions":[{"from":"q","op":"+1","to":"q"},{"from":"q","op":"=x:x","to":"q2"}]}"#;
const UP: &str = r#"{"states":["q"],"initial":"q","labels":{"q":["p"]},
  "transitions":[{"from":"q","op":"+1","to":"q"}]}"#;
const STUTTER: &str = r#"{"states":["q"],"initial":"q","transitions":[{"from":"q","op":"0","to":"q"}]}"#;

#[test]
fn reach_exit_codes() {
    let d = TempDir::new().unwrap();
    let m = file(&d, "m.json", CLIMB_TO_X);
    let w = d.path().join("w.json");
    let out = run(&[
        "--json",
        "reach",
        s(&m),
        "--target",
        "q2",
        "--bound",
        "3",
        "--out",
        s(&w),
    ]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["witness"]["gamma"]["x"], 0);
    assert_eq!(report["bound"], 3);
    assert_eq!(code(&run(&["check", s(&w), s(&m)])), 0);

    let out = run(&["--json", "reach", s(&m), "--target", "q"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["witness"]["run"].as_array().unwrap().len(), 1);

    let bad = file(&d, "bad.json", &CLIMB_TO_X.replace("+1", "+y"));
    assert_eq!(code(&run(&["reach", s(&bad), "--target", "q"])), 2);
    assert_eq!(code(&run(&["reach", s(&m), "--target", "nowhere"])), 2);
    let unknown = file(
        &d,
        "u.json",
        &CLIMB_TO_X.replace("\"initial\"", "\"colour\":1,\"initial\""),
    );
    assert_eq!(code(&run(&["reach", s(&unknown), "--target", "q"])), 2);
}

#[test]
fn absent_verdicts_echo_the_bound() {
    let d = TempDir::new().unwrap();
    let m = file(
        &d,
        "m.json",
        r#"{"states":["a","b"],"initial":"a","transitions":[{"from":"a","op":"+1","to":"a"}]}"#,
    );
    let out = run(&["reach", s(&m), "--target", "b", "--bound", "5"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("<= 5"));
}

#[test]
fn every_solver_is_selectable() {
    let d = TempDir::new().unwrap();
    let m = file(&d, "m.json", CLIMB_TO_X);
    for solver in ["galil", "bfs", "a2a"] {
        let w = d.path().join(format!("{solver}.json"));
        let out = run(&[
            "reach",
            s(&m),
            "--target",
            "q2",
            "--bound",
            "3",
            "--solver",
            solver,
            "--out",
            s(&w),
        ]);
        assert_eq!(code(&out), 0, "{solver}");
        assert_eq!(code(&run(&["check", s(&w), s(&m)])), 0, "{solver}");
    }
    assert_eq!(code(&run(&["reach", s(&m), "--target", "q2", "--solver", "magic"])), 2);
    let out = run(&["solvers"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("a2a"));
}

#[test]
fn buchi_command() {
    let d = TempDir::new().unwrap();
    let m = file(&d, "m.json", STUTTER);
    let w = d.path().join("w.json");
    assert_eq!(code(&run(&["buchi", s(&m), "--accepting", "q", "--out", s(&w)])), 0);
    assert_eq!(code(&run(&["check", s(&w), s(&m)])), 0);
    let m2 = file(&d, "m2.json", CLIMB_TO_X);
    assert_eq!(code(&run(&["buchi", s(&m2), "--accepting", "q2", "--bound", "3"])), 1);
}

#[test]
fn mc_command() {
    let d = TempDir::new().unwrap();
    let up = file(&d, "up.json", UP);
    let w = d.path().join("w.json");
    assert_eq!(
        code(&run(&[
            "mc",
            s(&up),
            "--formula",
            "G p",
            "--bound",
            "3",
            "--out",
            s(&w)
        ])),
        0
    );
    assert_eq!(code(&run(&["check", s(&w), s(&up), "--formula", "G p"])), 0);
    assert_eq!(code(&run(&["check", s(&w), s(&up), "--formula", "F !p"])), 1);

    let f = file(&d, "f.ltl", "F @r. G [=r]");
    let st = file(&d, "st.json", STUTTER);
    assert_eq!(code(&run(&["mc", s(&st), "--formula", s(&f)])), 0);
    assert_eq!(
        code(&run(&[
            "mc",
            s(&up),
            "--formula",
            "F @r. G ([<r] | [=r])",
            "--bound",
            "3"
        ])),
        1
    );

    let out = run(&["mc", s(&up), "--formula", "G @r. (req -> F (serve & [=r]))"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not flat") && err.contains(" U "), "{err}");
}

#[test]
fn check_command() {
    let d = TempDir::new().unwrap();
    let m = file(&d, "m.json", CLIMB_TO_X);
    let w = d.path().join("w.json");
    assert_eq!(
        code(&run(&[
            "reach",
            s(&m),
            "--target",
            "q2",
            "--bound",
            "3",
            "--out",
            s(&w)
        ])),
        0
    );
    let good: Value = serde_json::from_str(&std::fs::read_to_string(&w).unwrap()).unwrap();

    let mut corrupt = good.clone();
    corrupt["run"][1]["value"] = 7.into();
    let c = file(&d, "c.json", &corrupt.to_string());
    let out = run(&["check", s(&c), s(&m)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("step"));

    let mut missing = good.clone();
    missing["gamma"] = serde_json::json!({});
    let c = file(&d, "missing.json", &missing.to_string());
    assert_eq!(code(&run(&["check", s(&c), s(&m)])), 2);
    assert_eq!(code(&run(&["check", "nope.json", s(&m)])), 2);
}

#[test]
fn translate_command() {
    let d = TempDir::new().unwrap();
    let six = file(
        &d,
        "six.json",
        r#"{"states":["q","r"],"initial":"q","transitions":[{"from":"q","op":"+6","to":"r"}]}"#,
    );
    let out = run(&["translate", s(&six), "--mode", "unary", "--formula", "F r"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let states = v["machine"]["states"].as_array().unwrap().len();
    assert_eq!(states, 2 + 2 * 3 + 2);
    // the unary machine is itself a machine file
    let u = file(&d, "u.json", &v["machine"].to_string());
    assert_eq!(code(&run(&["translate", s(&u), "--mode", "foldconst"])), 0);

    let m = file(&d, "m.json", CLIMB_TO_X);
    let out = run(&["translate", s(&m), "--mode", "foldconst"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let original: Value = serde_json::from_str(CLIMB_TO_X).unwrap();
    assert_eq!(v["machine"]["transitions"], original["transitions"]);
    assert_eq!(v["pinned"], serde_json::json!({}));

    assert_eq!(code(&run(&["translate", s(&m), "--mode", "a2a", "--target", "q2"])), 0);
    assert_eq!(code(&run(&["translate", s(&m), "--mode", "a2a"])), 2);
    let out = run(&["translate", s(&m), "--mode", "buchi2reach", "--accepting", "q"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["target"], "s_hat");
}

#[test]
fn generate_is_deterministic() {
    let a = run(&[
        "generate", "--seed", "7", "--states", "3", "--params", "2", "--consts", "3",
    ]);
    let b = run(&[
        "generate", "--seed", "7", "--states", "3", "--params", "2", "--consts", "3",
    ]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let d = TempDir::new().unwrap();
    let m = file(&d, "m.json", &String::from_utf8(a.stdout).unwrap());
    assert_eq!(code(&run(&["translate", s(&m), "--mode", "foldconst"])), 0);
}

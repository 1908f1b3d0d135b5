//! End-to-end runs of the `freetower` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn freetower(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freetower"))
        .args(args)
        .current_dir(fixtures())
        .output()
        .expect("spawn freetower")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("freetower-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn fixture_suite_passes() {
    let o = Command::new(env!("CARGO_BIN_EXE_freetower"))
        .arg("verify-fixtures")
        .env("BSW_FIXTURES", fixtures())
        .output()
        .unwrap();
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 15);
    assert!(!out.contains("FAIL"));
}

#[test]
fn broken_fixture_exits_three() {
    let dir = std::env::temp_dir().join(format!("freetower-suite-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::copy(fixtures().join("empty.json"), dir.join("empty.json")).unwrap();
    std::fs::write(
        dir.join("suite.json"),
        r#"[{"name": "wrong", "command": "present", "input": "empty.json", "expect": "< e1 | >\n"}]"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_freetower")).arg("verify-fixtures").env("BSW_FIXTURES", &dir).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL wrong"));
}

#[test]
fn output_is_byte_deterministic() {
    for args in [
        &["twin", "abelian_twin.json"][..],
        &["symmetrize", "symmetric.json"],
        &["testseq", "--n", "4", "single_flat.json"],
        &["complete", "--level", "2", "complete_surface.json"],
    ] {
        let (a, b) = (freetower(args), freetower(args));
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn closure_presentation() {
    let o = freetower(&["closure", "closure.json"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("< e1 e2 z1 a1 |"), "{out}");
    assert!(out.contains("z1*a1^-1*a1^-1*a1^-1*e1^-1*e1^-1"));
    assert!(out.ends_with("flat 1: z1 + a1\n"));
}

#[test]
fn extend_decisions() {
    let o = freetower(&["extend", "--p", "5", "closure.json"]);
    assert_eq!(stdout(&o).trim(), "extends, y=1");
    let o = freetower(&["extend", "--p", "4", "closure.json"]);
    assert_eq!(stdout(&o).trim(), "does not extend, coset 2+3ℤ");
    let o = freetower(&["extend", "--p", "-1", "closure.json"]);
    assert_eq!(stdout(&o).trim(), "extends, y=-1");
}

#[test]
fn symmetric_pair_intersection() {
    let o = freetower(&["symmetrize", "symmetric.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("U = 6ℤ, Û = 6ℤ"));
}

#[test]
fn twin_orderings() {
    let out = stdout(&freetower(&["twin", "nonabelian_twin.json"]));
    assert!(out.contains("case: non-abelian"));
    assert!(out.contains("ordering: 1 2 3 4\n"));
    assert!(out.contains("ordering: 3 4 1 2\n"));
}

#[test]
fn parse_errors_exit_two() {
    let bad = scratch("badgen.json", r#"{"base_rank": 2, "floors": [{"type": "abelian", "peg": "e1*q", "rank": 1}]}"#);
    let o = freetower(&["build", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown generator"));

    let junk = scratch("junk.json", "{ not json");
    assert_eq!(freetower(&["present", junk.to_str().unwrap()]).status.code(), Some(2));

    let o = freetower(&["extend", "--p", "1,2", "closure.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_towers_exit_three() {
    let power = scratch("power.json", r#"{"base_rank": 2, "floors": [{"type": "abelian", "peg": "e1*e1", "rank": 1}]}"#);
    assert_eq!(freetower(&["build", power.to_str().unwrap()]).status.code(), Some(3));
    let conj = scratch(
        "conj.json",
        r#"{"base_rank": 2, "floors": [{"type": "floor", "flats": [
            {"type": "abelian", "peg": "e1*e2", "rank": 1},
            {"type": "abelian", "peg": "e2*e1", "rank": 1}]}]}"#,
    );
    let o = freetower(&["build", conj.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn undecided_checks_exit_four_unless_assumed() {
    let spec = scratch(
        "undecided.json",
        r#"{"base_rank": 2, "floors": [
            {"type": "abelian", "peg": "e1", "rank": 1},
            {"type": "abelian", "peg": "z1*z1", "rank": 1}]}"#,
    );
    let o = freetower(&["build", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--assume-valid"));
    let o = freetower(&["build", "--assume-valid", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("warning: assumed peg"));
}

#[test]
fn oracle_finds_witness() {
    let o = freetower(&["oracle", "closure.json", "--word", "z1"]);
    assert_eq!(stdout(&o).trim(), "nontrivial witness=testseq:n=1");
}

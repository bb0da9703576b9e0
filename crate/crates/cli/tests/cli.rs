use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cyclone_pp::io::{hash_tree, verify_manifest};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclone-pp"))
        .args(args)
        .env("CYCLONE_PP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_scenario(dir: &Path) {
    ok(&["generate", "--seed", "7", "--rows", "12", "--cols", "10", "--n-reports", "6", "--out", s(dir)]);
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n);
    small_scenario(&p("scn"));
    ok(&["augment", "--scenario", s(&p("scn")), "--eta", "0.05", "--seed", "3", "--out", s(&p("aug"))]);
    ok(&[
        "train", "--scenario", s(&p("scn")), "--variant", "cnn-all", "--target", "5", "--epochs", "5",
        "--precision", "f32", "--out", s(&p("model")),
    ]);
    ok(&["predict", "--scenario", s(&p("scn")), "--target", "5", "--model", s(&p("model")), "--out", s(&p("pred"))]);
    ok(&["predict", "--scenario", s(&p("scn")), "--target", "5", "--variant", "members", "--out", s(&p("pm"))]);
    ok(&[
        "evaluate", "--scenario", s(&p("scn")), "--variants", "fcn,cnn-dyn", "--targets", "4..6", "--epochs", "3",
        "--out", s(&p("eval")),
    ]);
    for d in ["scn", "aug", "model", "pred", "pm", "eval"] {
        verify_manifest(&p(d)).unwrap();
    }
    assert_eq!(fs::read_dir(p("aug")).unwrap().filter(|e| {
        e.as_ref().unwrap().file_name().to_string_lossy().starts_with("report_")
    }).count(), 22);
    let eval = hash_tree(&p("eval")).unwrap();
    for f in ["fcn/skill_table.csv", "cnn-dyn/crpss_summary.csv", "cnn-dyn/exceedance_map_6.csv", "members/reliability.csv"] {
        assert!(eval.contains_key(f), "{f}");
    }
    let header = fs::read_to_string(p("eval/fcn/skill_table.csv")).unwrap();
    assert!(header.starts_with("report,row,col,terrain,category,crps_model,crps_ref,crpss\n"));
}

#[test]
fn training_members_fails() {
    let tmp = tempfile::tempdir().unwrap();
    small_scenario(&tmp.path().join("scn"));
    let out = cli(&[
        "train", "--scenario", s(&tmp.path().join("scn")), "--variant", "members", "--target", "4", "--out",
        s(&tmp.path().join("m")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("members"));
    assert!(!tmp.path().join("m").exists());
}

#[test]
fn stages_are_hash_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for run in 0..2 {
        let p = |n: &str| tmp.path().join(format!("{n}{run}"));
        small_scenario(&p("scn"));
        ok(&["augment", "--scenario", s(&p("scn")), "--seed", "1", "--out", s(&p("aug"))]);
        ok(&["train", "--scenario", s(&p("scn")), "--variant", "cnn", "--target", "4", "--epochs", "4", "--out", s(&p("m"))]);
        ok(&["predict", "--scenario", s(&p("scn")), "--target", "4", "--model", s(&p("m")), "--out", s(&p("pr"))]);
        trees.push(["scn", "aug", "m", "pr"].map(|d| hash_tree(&p(d)).unwrap()));
    }
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn corrupt_input_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = tmp.path().join("scn");
    small_scenario(&scn);
    fs::write(scn.join("report_0020/member_05.csv"), "1,2,3\n").unwrap();
    let out = cli(&["augment", "--scenario", s(&scn), "--out", s(&tmp.path().join("aug"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrity"));
    assert!(!tmp.path().join("aug").exists());
}

#[test]
fn bad_arguments_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = tmp.path().join("scn");
    small_scenario(&scn);
    let eval = |t: &str| cli(&["evaluate", "--scenario", s(&scn), "--targets", t, "--out", s(&tmp.path().join("e"))]);
    assert!(!eval("9..2").status.success());
    assert!(!cli(&["predict", "--scenario", s(&scn), "--target", "3", "--out", s(&tmp.path().join("p"))]).status.success());
    assert!(!cli(&["train", "--scenario", s(&scn), "--variant", "rnn", "--target", "3", "--out", "x"]).status.success());
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_weakoe"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary runs").status.code().expect("exit code")
}

#[test]
fn run_verify_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    assert_eq!(code(bin().arg("run").arg(config("small.json")).arg("--out").arg(&out)), 0);
    for f in ["report.json", "summary.csv", "gamma.json", "witness.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(code(bin().arg("verify").arg(config("small.json")).arg("--out").arg(&out)), 0);
    let v = fs::read_to_string(out.join("verify.json")).unwrap();
    assert!(v.contains("\"passed\": true"));

    let csv_path = dir.path().join("again.csv");
    assert_eq!(code(bin().arg("report").arg(out.join("report.json")).arg("--out").arg(&csv_path)), 0);
    assert_eq!(fs::read(csv_path).unwrap(), fs::read(out.join("summary.csv")).unwrap());
}

#[test]
fn tampered_gamma_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    assert_eq!(code(bin().arg("run").arg(config("small.json")).arg("--out").arg(&out)), 0);
    // swap the witness conjugator for the identity
    let n: usize = 6000;
    let w = fs::read_to_string(out.join("witness.json")).unwrap();
    let rewirings = &w[w.find("\"rewirings\"").unwrap()..];
    let ident: Vec<String> = (0..n).map(|x| x.to_string()).collect();
    fs::write(out.join("witness.json"), format!("{{\"r\": [{}], {}", ident.join(","), rewirings)).unwrap();
    assert_eq!(code(bin().arg("verify").arg(config("small.json")).arg("--out").arg(&out)), 1);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(bin().arg("run").arg(config("small.json")).arg("--seed").arg("5").arg("--out").arg(d)), 0);
    }
    for f in ["report.json", "summary.csv", "gamma.json", "witness.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(bin().arg("run").arg(config("small.json")).args(["--epsilon", "0"]).arg("--out").arg(&out)), 2);
    assert_eq!(code(bin().arg("run").arg(config("small.json")).args(["--epsilon", "abc"]).arg("--out").arg(&out)), 2);
    assert_eq!(code(bin().arg("run").arg(dir.path().join("missing.json")).arg("--out").arg(&out)), 2);
    assert_eq!(code(bin().arg("frobnicate")), 2);

    let text = fs::read_to_string(config("small.json")).unwrap();
    let start = text.find("\"beta\"").unwrap();
    let end = text[start..].find("],\n").unwrap() + start + 3;
    let no_beta = dir.path().join("no_beta.json");
    fs::write(&no_beta, format!("{}{}", &text[..start], &text[end..])).unwrap();
    assert_eq!(code(bin().arg("run").arg(&no_beta).arg("--out").arg(&out)), 2);
}

#[test]
fn stage_failure_exits_one() {
    // tiles cannot grow past 1/eps' inside orbits of length 300
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = bin()
        .arg("run")
        .arg(config("small.json"))
        .args(["--override-eps-prime", "1/1000"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(1));
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"passed\": false"));
    assert!(report.contains("tower_pair"));
    assert!(!out.join("gamma.json").exists());
}

#[test]
fn generate_writes_systems() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    assert_eq!(code(bin().arg("generate").arg(config("small.json")).arg("--out").arg(&out)), 0);
    let summary = fs::read_to_string(out.join("instance.json")).unwrap();
    assert!(summary.contains("\"transitive\": true"));
    assert!(out.join("alpha.json").exists() && out.join("beta.json").exists());
}

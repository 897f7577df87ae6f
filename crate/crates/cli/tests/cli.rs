use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
name = "small"
seed = 3

[profile]
a = 1.0
sigma = 1.0
dim = 3

[grid]
dim = 3
extent = 4.0
points = 22
boundary = "dirichlet"

[potential]
variant = "two_bump"
b = [2.0, 0.0, 0.0]
bumps = [{ amplitude = 3.0, radius = 1.5 }, { amplitude = 3.0, radius = 1.5 }]

[multiplier]
n = 4
axis = [2.0, 0.0, 0.0]
"#;

fn commlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commlab")).args(args).output().expect("binary runs")
}

fn run_config(dir: &Path, text: &str, suite: &str) -> (Output, std::path::PathBuf) {
    let cfg = dir.join("scenario.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.join("out");
    let o = commlab(&[suite, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (o, out)
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn empty_check_list_passes_with_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), SMALL, "report");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["checks"].as_array().unwrap().len(), 0);
    assert_eq!(s["seed"], 3);
}

#[test]
fn unknown_key_is_a_config_error_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("[grid]", "[grid]\nspacing_typo = 0.1");
    let (o, out) = run_config(dir.path(), &text, "report");
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("spacing_typo"), "{err}");
    assert!(!out.exists());
}

#[test]
fn nonpositive_tolerance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[[checks]]\nkind = \"pair_bound\"\nname = \"p\"\ntol = 0.0\n");
    let (o, out) = run_config(dir.path(), &text, "verify-pointwise");
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn failing_certificate_exits_with_one_and_dumps_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[[checks]]\nkind = \"certify\"\nname = \"bare\"\nresidual = {{ type = \"scaled_kinetic\", c = 0.9 }}\n");
    let text = text.replace("n = 4", "n = 1");
    let (o, out) = run_config(dir.path(), &text, "certify");
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["checks"][0]["verdict"], "fail");
    assert!(out.join("bare.witness.bin").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}\n[[checks]]\nkind = \"pair_bound\"\nname = \"pairs\"\nsamples = 2000\n\n[[checks]]\nkind = \"certify\"\nname = \"cert\"\nresidual = {{ type = \"scaled_kinetic\", c = 0.9 }}\n"
    );
    let (o1, out) = run_config(dir.path(), &text, "report");
    assert_eq!(o1.status.code(), Some(0), "{}", String::from_utf8_lossy(&o1.stderr));
    let first = std::fs::read(out.join("summary.json")).unwrap();
    let (o2, _) = run_config(dir.path(), &text, "report");
    assert_eq!(o2.status.code(), Some(0));
    assert_eq!(first, std::fs::read(out.join("summary.json")).unwrap());
    let other = dir.path().join("other");
    let o3 = commlab(&[
        "report",
        "--config",
        dir.path().join("scenario.toml").to_str().unwrap(),
        "--out",
        other.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert_eq!(o3.status.code(), Some(0));
    assert_ne!(first, std::fs::read(other.join("summary.json")).unwrap());
}

#[test]
fn suites_select_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[[checks]]\nkind = \"claim_sign\"\nname = \"claim\"\nsamples = 500\n");
    let (o, out) = run_config(dir.path(), &text, "evolve");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(summary(&out)["checks"].as_array().unwrap().len(), 0);
    let (o, out) = run_config(dir.path(), &text, "verify-pointwise");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(summary(&out)["checks"][0]["kind"], "claim_sign");
}

#[test]
fn bundled_two_bump_scan_reports_a_first_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = commlab(&["scan", "--preset", "two-bump-default", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let scan = &s["checks"][0];
    assert_eq!(scan["kind"], "scan");
    assert!(scan["metrics"]["first_pass_N"].as_u64().is_some(), "{scan}");
    assert_eq!(scan["metrics"]["scan"]["monotone"], true);
}

#[test]
fn presets_are_listed() {
    let o = commlab(&["presets"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["two-bump-default", "lattice", "axial-product", "moving-bump", "high-energy", "nondefinite"] {
        assert!(text.lines().any(|l| l == name), "{text}");
    }
    assert_eq!(commlab(&["scan", "--preset", "missing"]).status.code(), Some(2));
}

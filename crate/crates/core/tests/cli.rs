use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weighted-ou")).args(args).output().expect("spawn weighted-ou")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SMALL_DOMAIN: &str = r#"
seed = 5
tasks = ["domain"]

[[weight]]
kind = "zero"

[experiment]
dims = [1, 2]
lambdas = [1.0]
test_functions = []
domain_functions = ["const", "linear", "tanh"]

[mc]
is_samples = 4000
"#;

#[test]
fn prox_prints_closed_form() {
    let out = run(&["prox", "--weight", "l1", "--x", "2", "--alpha", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("envelope    1.500000000000"), "{text}");
    assert!(text.contains("minimizer   [-1.0]"), "{text}");

    let out = run(&["prox", "--weight", "l1", "--x", "2", "--alpha", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_domain_on_small_config_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL_DOMAIN);
    let mut reports = Vec::new();
    for tag in ["a", "b"] {
        let out_dir = dir.path().join(tag).display().to_string();
        let out = run(&["--config", &cfg, "--out", &out_dir, "--quiet", "verify-domain"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
        let base = dir.path().join(tag);
        assert!(base.join("summary.txt").exists());
        assert!(std::fs::read_dir(base.join("tables")).unwrap().count() > 0);
        reports.push(std::fs::read(base.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let rows: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    let text = rows.to_string();
    for key in ["weight", "quantity", "estimate", "std_error", "bound", "margin", "pass"] {
        assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
    }
}

#[test]
fn bad_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty_dims = write(dir.path(), "dims.toml", &SMALL_DOMAIN.replace("dims = [1, 2]", "dims = []"));
    let out = run(&["--config", &empty_dims, "verify-domain"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dims nonempty"));

    let neg = write(dir.path(), "neg.toml", &SMALL_DOMAIN.replace("lambdas = [1.0]", "lambdas = [-1.0]"));
    assert_eq!(run(&["--config", &neg, "verify-estimates"]).status.code(), Some(2));

    let missing = dir.path().join("nope.toml").display().to_string();
    assert_eq!(run(&["--config", &missing, "verify-domain"]).status.code(), Some(2));
    assert_eq!(run(&["verify-domain"]).status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FREE: &str = r#"
seed = 5
[grid]
axes = [{ kind = "line", sites = 12, spacing = 0.5 }, { kind = "circle", sites = 4, length = 2.0 }]
[multiplier]
family = "FreeField"
mass = 1.0
[[checks]]
kind = "rp"
condition = "TimeRP"
"#;

const POWER: &str = r#"
[grid]
axes = [{ kind = "line", sites = 16, spacing = 0.5 }]
[multiplier]
family = "PowerCovariance"
power = 2.0
[[checks]]
kind = "rp"
condition = "TimeRP"
"#;

fn rplab(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_rplab"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

#[test]
fn free_field_time_rp_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = rplab(dir.path(), FREE, &["all"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    let results = r["results"].as_array().unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["verdict"], "Pass");
    assert_eq!(r["seed"], 5);
    assert_eq!(r["config"]["seed"], 5);
}

#[test]
fn power_two_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let out = rplab(dir.path(), POWER, &["check-rp"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["results"][0]["verdict"], "Fail");
    let name = r["results"][0]["witness_file"].as_str().unwrap();
    let w: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out").join(name)).unwrap()).unwrap();
    assert!(w["form"][0].as_f64().unwrap() < 0.0);
    assert!(!w["sites"].as_array().unwrap().is_empty());
}

#[test]
fn empty_check_list_passes_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FREE.split("[[checks]]").next().unwrap();
    let out = rplab(dir.path(), cfg, &["all"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    assert!(r["results"].as_array().unwrap().is_empty());
    assert_eq!(r["config"]["multiplier"]["family"], "FreeField");
    assert_eq!(r["config"]["grid"]["axes"][0]["sites"], 12);
}

#[test]
fn reports_are_byte_identical() {
    let cfg = format!(
        "{FREE}\n[[checks]]\nkind = \"gaussian_identity\"\n\n[[checks]]\nkind = \"schwinger\"\nrandom = 3\n\n[[checks]]\nkind = \"quantize\"\n"
    );
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(rplab(a.path(), &cfg, &["all"]).status.code(), Some(0));
    assert_eq!(rplab(b.path(), &cfg, &["all"]).status.code(), Some(0));
    for f in ["report.json", "quantize_003.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let other = rplab(b.path(), &cfg, &["all", "--seed", "6"]);
    assert_eq!(other.status.code(), Some(0));
    assert_eq!(report(b.path())["seed"], 6);
}

#[test]
fn subcommand_flags_add_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = rplab(
        dir.path(),
        FREE,
        &["check-rp", "--condition", "SpatialRP(1)", "--condition", "DoublyRP(0)"],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    let labels: Vec<&str> = r["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["TimeRP", "SpatialRP(1)", "DoublyRP(0)"]);

    let out = rplab(dir.path(), FREE, &["schwinger", "--points", "0,5,7,9"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(dir.path())["results"][0]["kind"], "schwinger");
}

#[test]
fn compactify_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FREE.replace("FreeField", "LatticeFreeField").replace("sites = 12", "sites = 24");
    let out = rplab(dir.path(), &cfg, &["compactify", "--axis", "0", "--period", "2.0", "--tol", "1e-9"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert_eq!(r["tol"], 1e-9);
    let p = &r["results"][0]["detail"]["periodization"];
    assert_eq!(p["period"], 2.0);
    assert!(p["truncation_residual"].as_f64().unwrap() <= 1e-12);

    let out = rplab(dir.path(), &cfg, &["compactify", "--axis", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_errors_are_embedded() {
    let dir = tempfile::tempdir().unwrap();
    // Period not an even multiple of the spacing.
    let cfg = format!("{FREE}\n[[checks]]\nkind = \"compactify\"\naxis = 0\nperiod = 1.5\n");
    let out = rplab(dir.path(), &cfg, &["all"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["results"][0]["verdict"], "Pass");
    assert_eq!(r["results"][1]["verdict"], "Error");
    assert!(r["results"][1]["error"].as_str().unwrap().len() > 0);
    assert_eq!(r["summary"]["error"], 1);
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rplab(dir.path(), &FREE.replace("TimeRP", "SpatialRP(3)"), &["all"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checks[0]"));
    let out = rplab(dir.path(), &FREE.replace("mass = 1.0", "mass = 1.0\nmas = 2"), &["all"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mas"));
}

#[test]
fn csv_toggle_limits_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = rplab(dir.path(), FREE, &["yngvason", "--csv"]);
    assert_eq!(out.status.code(), Some(0));
    let o = dir.path().join("out");
    assert!(o.join("yngvason_000.csv").exists());
    assert!(!o.join("report.json").exists());
    let text = std::fs::read_to_string(o.join("yngvason_000.csv")).unwrap();
    assert!(text.starts_with("rank,k0,k1,lambda,partial"));
}

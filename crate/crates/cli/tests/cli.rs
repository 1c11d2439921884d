use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CATMAP: &str = r#"
[system]
name = "catmap"
parameter = 0.0
[trajectory]
seed = 5
horizon = 4000
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_adjshadow"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (output, out)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_single_line_error(o: &Output, code: &str) {
    let text = stderr(o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    assert!(lines[0].starts_with(&format!("error[{code}]: ")), "{text}");
}

#[test]
fn catmap_exponents_sum_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), CATMAP, &["clv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e = json(&out.join("exponents.json"));
    assert_eq!(e["schema"], 1);
    let l: Vec<f64> = e["exponents"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(l.len(), 2);
    assert!((l[0] + l[1]).abs() < 1e-3);
    assert_eq!(e["n_unstable"], 1);
    assert!(out.join("frames.csv").exists());
}

#[test]
fn lorenz_has_exactly_one_neutral_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[system]\nname = \"lorenz63\"\nparameter = 28.0\n[trajectory]\nu0 = [1.0, 1.0, 1.0]\nhorizon = 300\nstep = 2e-3\n[output]\nformats = [\"json\"]\n";
    let (o, out) = run(dir.path(), config, &["clv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e = json(&out.join("exponents.json"));
    let tol = e["neutral_tolerance"].as_f64().unwrap();
    let near: Vec<f64> =
        e["exponents"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).filter(|l| l.abs() <= tol).collect();
    assert_eq!(near.len(), 1);
    assert_eq!(e["neutral_index"], 1);
    assert!(!out.join("frames.csv").exists());
}

#[test]
fn negative_horizon_is_invalid_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = CATMAP.replace("horizon = 4000", "horizon = -10");
    let (o, out) = run(dir.path(), &config, &["clv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_single_line_error(&o, "invalid-config");
    assert!(!out.exists());
}

#[test]
fn zero_length_trajectory_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let config = CATMAP.replace("horizon = 4000", "horizon = 0");
    let (o, out) = run(dir.path(), &config, &["verify"]);
    assert_eq!(o.status.code(), Some(2));
    assert_single_line_error(&o, "invalid-config");
    assert!(!out.exists());
}

#[test]
fn unknown_system_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run(dir.path(), &CATMAP.replace("catmap", "henon"), &["clv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_single_line_error(&o, "invalid-config");
}

#[test]
fn map_methods_agree_in_the_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{CATMAP}[sensitivity]\nmethods = [\"tangent-map\", \"adjoint-map\"]\n");
    let (o, out) = run(dir.path(), &config, &["sens"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = json(&out.join("sensitivities.json"));
    let c = &t["comparison"][0];
    assert_eq!(c["a"], "tangent-map");
    assert_eq!(c["b"], "adjoint-map");
    assert!(c["relative_difference"].as_f64().unwrap() <= 1e-10);
    let r = json(&out.join("sensitivity-adjoint-map.json"));
    for key in ["schema", "method", "value", "stderr", "horizon", "system", "parameter"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert!(fs::read_to_string(out.join("comparison.csv")).unwrap().starts_with("method_a,method_b"));
}

#[test]
fn empty_method_list_is_nothing_to_do() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{CATMAP}[sensitivity]\nmethods = []\n");
    let (o, out) = run(dir.path(), &config, &["sens"]);
    assert_eq!(o.status.code(), Some(2));
    assert_single_line_error(&o, "nothing-to-do");
    assert!(!out.exists());
}

#[test]
fn catmap_verify_passes() {
    for s in ["0.0", "0.05"] {
        let dir = tempfile::tempdir().unwrap();
        let (o, out) = run(dir.path(), &CATMAP.replace("parameter = 0.0", &format!("parameter = {s}")), &["verify"]);
        assert!(o.status.success(), "s = {s}: {}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
        let r = json(&out.join("verify.json"));
        assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    }
}

#[test]
fn injected_fault_fails_only_the_unstable_component_check() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{CATMAP}[verify]\ninject_fault = true\nfault_epsilon = 1e-6\n");
    let (o, out) = run(dir.path(), &config, &["verify"]);
    assert_eq!(o.status.code(), Some(4));
    assert_single_line_error(&o, "property-failure");
    let r = json(&out.join("verify.json"));
    for c in r["checks"].as_array().unwrap() {
        let expect = c["name"] != "unstable-component-at-start";
        assert_eq!(c["pass"].as_bool().unwrap(), expect, "{c}");
    }
}

#[test]
fn same_config_and_seed_give_identical_json() {
    let config = format!("{CATMAP}[sensitivity]\nmethods = [\"adjoint-map\", \"finite-difference\"]\nfd_horizon = 2000\nensemble = 4\n");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let (o, out) = run(dir.path(), &config, &["sens", "--seed", "11"]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push((fs::read(out.join("sensitivities.json")).unwrap(), fs::read(out.join("sensitivity-finite-difference.json")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn format_flag_restricts_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{CATMAP}[sensitivity]\nmethods = [\"adjoint-map\"]\n");
    let (o, out) = run(dir.path(), &config, &["sens", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("sensitivities.csv").exists());
    assert!(!out.join("sensitivities.json").exists());
}

#[test]
fn lorenz_adjoint_and_finite_difference_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[system]
name = "lorenz63"
parameter = 28.0
[trajectory]
u0 = [1.0, 1.0, 1.0]
seed = 1
horizon = 500
step = 2e-3
[sensitivity]
methods = ["adjoint-flow", "finite-difference"]
fd_ds = 0.5
fd_horizon = 1000
fd_step = 5e-3
ensemble = 10
[output]
formats = ["json"]
"#;
    let (o, out) = run(dir.path(), config, &["sens"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = json(&out.join("sensitivities.json"));
    for r in t["records"].as_array().unwrap() {
        let v = r["value"].as_f64().unwrap();
        assert!((v - 1.01).abs() <= 0.05, "{r}");
    }
    assert!(t["comparison"][0]["separation"].as_f64().unwrap() <= 2.0, "{t}");
}

#[test]
fn annotated_example_parses_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let example = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("example.toml")).unwrap();
    // Shrink the run; everything else is taken as written.
    let config = example.replace("horizon = 2000.0", "horizon = 300.0").replace("directory = \"out\"", "directory = \"unused\"");
    let (o, out) = run(dir.path(), &config, &["shadow"]);
    assert!(o.status.success(), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert!(out.join("shadowing.json").exists());
}

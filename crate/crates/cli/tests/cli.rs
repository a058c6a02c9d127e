use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn neklab(sub: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{sub}.json"));
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_neklab"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(dir.join("out"))
        .args(extra)
        .env("NEKLAB_LOG", "error")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn dirichlet_example() {
    let tmp = TempDir::new().unwrap();
    let o = neklab(
        "dirichlet",
        r#"{ "experiment": { "kind": "dirichlet", "omega": [1.4142135623730951, 2.0], "Q": 10 } }"#,
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("(q=5, T=10π, omega0=(1.4,2))"), "{}", stdout(&o));
    let out = tmp.path().join("out");
    let csv = fs::read_to_string(out.join("dirichlet.csv")).unwrap();
    assert!(csv.starts_with("q,p_1,p_2,err,bound,T,omega0_1,omega0_2\n"), "{csv}");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("dirichlet.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["exit_code"], 0);
    assert_eq!(meta["seed"], 42);
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let o = neklab("dirichlet", "", tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = neklab(
        "drift",
        r#"{ "system": { "desk": { "N": 1, "kappa": -1 } }, "experiment": { "kind": "drift", "theta": 0.2, "a": 0.125 } }"#,
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kappa must be ≥ 0"), "{}", stderr(&o));

    let o = neklab(
        "dirichlet",
        r#"{ "experiment": { "kind": "dirichlet", "omega": [1.5], "Q": 3 }, "unknown": 1 }"#,
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    // experiment kind and subcommand disagree
    let o = neklab("drift", r#"{ "experiment": { "kind": "dirichlet", "omega": [1.5], "Q": 3 } }"#, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));

    // inadmissible exponent a is rejected by the library
    let o = neklab(
        "drift",
        r#"{ "system": { "desk": { "N": 1 } }, "experiment": { "kind": "drift", "theta": 0.2, "a": 0.5 } }"#,
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

const RECIPE: &str = r#""recipe": { "theta": THETA, "a": 0.125, "n": 2, "norm_a": 1, "C0": 1, "M": 1, "C_Lambda": 1, "tau": 3.141592653589793, "C_A": 1 }"#;

#[test]
fn check_conditions_on_recipe_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = |theta: &str| {
        format!(
            r#"{{ "experiment": {{ "kind": "check", "lemma": "L7.5", {}, "theta_scan": [1e-20, 1e-30, 1e-34] }} }}"#,
            RECIPE.replace("THETA", theta)
        )
    };
    // inside the regime where the constants are consistent
    let o = neklab("check-conditions", &cfg("1e-34"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("conditions for L7.5"));
    let csv = fs::read_to_string(tmp.path().join("out/conditions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11, "{csv}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/conditions.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["largest_passing_theta"], 1e-34);

    // at desk-scale theta the explicit constants are far too pessimistic
    let o = neklab("check-conditions", &cfg("0.2"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn check_conditions_reports_missing_inputs() {
    let tmp = TempDir::new().unwrap();
    let o = neklab(
        "check-conditions",
        r#"{ "experiment": { "kind": "check", "lemma": "L3.1", "inputs": { "epsilon": 0.0 } } }"#,
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("rho1") && err.contains("rho2") && !err.contains("epsilon,"), "{err}");
}

#[test]
fn normal_form_on_desk_system() {
    let tmp = TempDir::new().unwrap();
    let o = neklab(
        "normal-form",
        r#"{
            "system": { "desk": { "N": 1, "kappa": 0.01 } },
            "experiment": { "kind": "normalform", "omega0": [1.0, 2.0], "T": 6.283185307179586, "radii": [0.02, 0.2, 0.2], "steps": 2 },
            "numeric": { "nodes": 64 },
            "output": { "format": "json" }
        }"#,
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = tmp.path().join("out");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("normal_form.json")).unwrap()).unwrap();
    assert_eq!(report["norms"].as_array().unwrap().len(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("normal_form.summary.json")).unwrap()).unwrap();
    assert!(summary["quadrature_difference"].as_f64().unwrap() < 1e-10);
}

const DRIFT: &str = r#"{
    "system": { "desk": { "N": 2, "kappa": 0.011962 } },
    "experiment": { "kind": "drift", "theta": 0.2, "a": 0.125 },
    "numeric": { "horizon": 30 }
}"#;

#[test]
fn drift_is_deterministic_and_lossless() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let oa = neklab("drift", DRIFT, a.path(), &["--workers", "1"]);
    let ob = neklab("drift", DRIFT, b.path(), &["--workers", "2"]);
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(ob.status.code(), Some(0));
    let ca = fs::read_to_string(a.path().join("out/drift.csv")).unwrap();
    let cb = fs::read_to_string(b.path().join("out/drift.csv")).unwrap();
    assert_eq!(ca, cb);
    let row: Vec<&str> = ca.lines().nth(1).unwrap().split(',').collect();
    // 17 significant digits survive a round trip through text
    let theta: f64 = row[0].parse().unwrap();
    assert_eq!(theta, 0.2);
    assert_eq!(row[0], "2.0000000000000001e-1");

    // a different seed moves the random phase
    let c = TempDir::new().unwrap();
    neklab("drift", DRIFT, c.path(), &["--seed", "7"]);
    let cc = fs::read_to_string(c.path().join("out/drift.csv")).unwrap();
    assert_ne!(ca, cc);
}

#[test]
fn constrained_limit_on_custom_system() {
    let tmp = TempDir::new().unwrap();
    let o = neklab(
        "constrained",
        r#"{
            "system": { "custom": { "n": 1, "N": 1, "alpha": [1.0], "A": [[0.3]], "f": "0.1 * x1^3 + 0.2 * xi1 x1^2",
                        "Lambda": "0.5 * xi1^2 + 0.5 * eta1^2", "M": 4 } },
            "experiment": { "kind": "constrained", "kappa_grid": [10, 100, 1000], "init": { "z": [0.4, 0.1], "zeta": [0.6, 0.8] } },
            "numeric": { "horizon": 2 }
        }"#,
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("out/constrained.csv")).unwrap();
    assert!(csv.starts_with("kappa,sup_distance,sup_kappa_Lambda,sup_zeta,dt\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn small_kappa_and_variant_studies() {
    let tmp = TempDir::new().unwrap();
    let o = neklab(
        "small-kappa",
        r#"{
            "system": { "desk": { "N": 1 } },
            "experiment": { "kind": "smallkappa", "theta_grid": [0.3, 0.2], "a": 0.125, "N_grid": [1, 2],
                            "horizon_rule": { "fixed": 20 }, "phases": 2 }
        }"#,
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("out/small_kappa.csv")).unwrap();
    assert!(csv.starts_with("theta,a,kappa,N,horizon,horizon_cap,dt,max_action_drift,max_kappa_Lambda,"));
    assert_eq!(csv.lines().count(), 5);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/small_kappa.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_bounds_passed"], true);

    // the desk perturbation has a |ζ|²|z|⁴ term, which the variant excludes
    let variant = r#"{
        "system": { "desk": { "N": 1 } },
        "experiment": { "kind": "variant", "theta": 0.2, "a": 0.125, "kappa_grid": [1e-4], "horizon_rule": { "fixed": 10 }, "phases": 1 }
    }"#;
    let o = neklab("variant", variant, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coupling-structure violation"), "{}", stderr(&o));

    let variant = variant.replace(r#""desk": { "N": 1 }"#, r#""desk": { "N": 1, "params": { "a_coef": 0.001, "c5": 5e-6, "c4": 0, "c1": 0.001 } }"#);
    let o = neklab("variant", &variant, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn help_lists_every_subcommand() {
    let o = Command::new(env!("CARGO_BIN_EXE_neklab")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for sub in ["dirichlet", "normal-form", "drift", "constrained", "small-kappa", "variant", "check-conditions"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

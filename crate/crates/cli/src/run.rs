//! Subcommand dispatch and artifact emission.
//!
//! Every run writes its table (`<name>.csv` or `<name>.json`), a JSON
//! summary with the pass/fail flags (`<name>.summary.json`) and a metadata
//! sidecar (`metadata.json`), which is the only file holding timestamps.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use neklab_core::diophantine::{dirichlet_best, periodic_frequency};
use neklab_core::experiments::{
    constrained_limit_study, desk_family, measure_drift, recipe_for, scaled_initial_point, smallkappa_scaling_study,
    smallkappa_summary, variant_scaling_study, write_drift_csv, ConvergenceReport, DriftReport, DriftTarget,
    ScalingOptions, SystemFamily, CONSTRAINED_ZETA_SCALING,
};
use neklab_core::hamiltonian::PhasePoint;
use neklab_core::integrator::default_dt;
use neklab_core::normalform::{
    check_conditions, iterate_normal_form, largest_passing_theta, parameter_recipe, quadrature_average,
    recipe_condition_inputs, resonant_average, AveragingContext, ConditionInputs, ConditionReport,
};
use neklab_core::{actions, parse_polynomial, Error, SystemSpec};

use crate::config::{build_family, build_system, Experiment, Format, PointConfig, RunConfig, SystemConfig};

/// Exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Every asserted bound held.
    Passed = 0,
    /// A bound failed or the computation broke down.
    BoundFailed = 1,
    /// The configuration or its inputs were rejected.
    ConfigError = 2,
}

/// What a subcommand produced, before it is written out.
struct Artifacts {
    name: &'static str,
    /// CSV text of the table.
    csv: String,
    /// The same table as JSON.
    table: Value,
    summary: Value,
    /// Human-readable report for stdout.
    text: String,
    passed: bool,
}

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

/// Runs `subcommand` on a validated config and writes the artifacts.
pub fn run(subcommand: &str, cfg: &RunConfig, overrides: &Overrides, config_path: &Path) -> Status {
    if cfg.experiment.subcommand() != subcommand {
        eprintln!(
            "error: `{subcommand}` cannot run an experiment of kind `{}` (use `{}`)",
            experiment_tag(&cfg.experiment),
            cfg.experiment.subcommand()
        );
        return Status::ConfigError;
    }
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let workers = overrides.workers.or(cfg.workers);
    if let Some(k) = workers {
        // fails only if a pool already exists, in which case it is reused
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            log::debug!("thread pool already initialised: {e}");
        }
    }
    let out_dir = overrides.output.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let started = unix_now();
    let clock = Instant::now();
    let result = dispatch(cfg, seed);
    let elapsed = clock.elapsed().as_secs_f64();
    let (status, files) = match result {
        Ok(art) => {
            println!("{}", art.text);
            let status = if art.passed { Status::Passed } else { Status::BoundFailed };
            match write_artifacts(&out_dir, cfg.output.format, &art) {
                Ok(files) => (status, files),
                Err(e) => {
                    eprintln!("error: cannot write artifacts to {}: {e}", out_dir.display());
                    return Status::BoundFailed;
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            (status_for(&e), Vec::new())
        }
    };
    let meta = json!({
        "tool": "neklab",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config": config_path.display().to_string(),
        "seed": seed,
        "workers": workers.unwrap_or_else(rayon::current_num_threads),
        "started_unix": started,
        "elapsed_seconds": elapsed,
        "exit_code": status as i32,
        "artifacts": files,
    });
    if let Err(e) = write_file(&out_dir.join("metadata.json"), &pretty(&meta)) {
        eprintln!("error: cannot write metadata: {e}");
    }
    status
}

fn experiment_tag(e: &Experiment) -> &'static str {
    match e {
        Experiment::Dirichlet { .. } => "dirichlet",
        Experiment::Normalform { .. } => "normalform",
        Experiment::Drift { .. } => "drift",
        Experiment::Constrained { .. } => "constrained",
        Experiment::Smallkappa { .. } => "smallkappa",
        Experiment::Variant { .. } => "variant",
        Experiment::Check { .. } => "check",
    }
}

/// Breakdowns of the numerics are bound failures; everything else is a
/// rejected input.
fn status_for(e: &Error) -> Status {
    match e {
        Error::Convergence { .. } | Error::Singular(_) => Status::BoundFailed,
        _ => Status::ConfigError,
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())
}

fn write_artifacts(dir: &Path, format: Format, art: &Artifacts) -> std::io::Result<Vec<String>> {
    let table = match format {
        Format::Csv => (format!("{}.csv", art.name), art.csv.clone()),
        Format::Json => (format!("{}.json", art.name), pretty(&art.table)),
    };
    let summary = format!("{}.summary.json", art.name);
    write_file(&dir.join(&table.0), &table.1)?;
    write_file(&dir.join(&summary), &pretty(&art.summary))?;
    Ok(vec![table.0, summary])
}

/// Seventeen significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn system(cfg: &RunConfig) -> neklab_core::Result<(&SystemConfig, SystemSpec)> {
    let sys = cfg.system.as_ref().ok_or_else(|| Error::Precondition("a system is required".into()))?;
    Ok((sys, build_system(sys)?))
}

fn point(spec: &SystemSpec, p: &PointConfig) -> neklab_core::Result<PhasePoint> {
    let pt = PhasePoint::new(p.z.clone(), p.zeta.clone())?;
    if pt.ambient() != spec.ambient {
        return Err(Error::Dimension {
            expected: format!("{:?}", spec.ambient),
            found: format!("{:?}", pt.ambient()),
        });
    }
    Ok(pt)
}

fn dispatch(cfg: &RunConfig, seed: u64) -> neklab_core::Result<Artifacts> {
    match &cfg.experiment {
        Experiment::Dirichlet { omega, big_q } => dirichlet(omega, *big_q),
        Experiment::Normalform {
            omega0,
            t_period,
            i0,
            radii,
            steps,
        } => normal_form(cfg, omega0, *t_period, i0.as_deref(), *radii, *steps),
        Experiment::Drift {
            theta,
            a,
            init,
            tau,
            c_a,
        } => drift(cfg, seed, *theta, *a, init.as_ref(), *tau, *c_a),
        Experiment::Constrained { kappa_grid, init } => constrained(cfg, kappa_grid, init),
        Experiment::Smallkappa {
            theta_grid,
            a,
            n_grid,
            horizon_rule,
            phases,
            tau,
            c_a,
        } => {
            let (sys, spec) = system(cfg)?;
            let n_grid = n_grid.clone().unwrap_or_else(|| vec![spec.ambient.big_n]);
            let opts = scaling_options(cfg, seed, *phases, *tau, *c_a);
            let study = smallkappa_scaling_study(|nn| family_with_n(sys, nn), &n_grid, theta_grid, *a, *horizon_rule, &opts)?;
            let summary = smallkappa_summary(&study);
            let passed = summary["all_bounds_passed"] == json!(true)
                && summary["slope_passed"] == json!(true)
                && summary["n_uniform_passed"] == json!(true);
            Ok(drift_artifacts("small_kappa", &study.reports, summary, passed))
        }
        Experiment::Variant {
            theta,
            a,
            kappa_grid,
            horizon_rule,
            phases,
            tau,
            c_a,
        } => {
            let (sys, _) = system(cfg)?;
            let family = build_family(sys)?;
            let opts = scaling_options(cfg, seed, *phases, *tau, *c_a);
            let reports = variant_scaling_study(&family, *theta, *a, kappa_grid, *horizon_rule, &opts)?;
            let passed = reports.iter().all(|r| r.bound_passed);
            let summary = json!({ "all_bounds_passed": passed, "points": reports.len() });
            Ok(drift_artifacts("variant", &reports, summary, passed))
        }
        Experiment::Check {
            lemma,
            inputs,
            recipe,
            theta_scan,
            integrals,
        } => {
            let mut ci = match recipe {
                Some(r) => recipe_condition_inputs(r, &parameter_recipe(r)?),
                None => ConditionInputs::new(),
            };
            for (k, v) in inputs {
                ci.set(k, *v);
            }
            if !integrals.is_empty() {
                let (_, spec) = system(cfg)?;
                ci.lambda = Some(spec.lambda.clone());
                ci.integrals = integrals
                    .iter()
                    .map(|t| parse_polynomial(t, spec.ambient))
                    .collect::<neklab_core::Result<_>>()?;
            }
            let report = check_conditions(*lemma, &ci)?;
            let mut summary = json!({ "lemma": lemma, "passed": report.passed() });
            let mut text = report.to_string();
            if let (Some(r), false) = (recipe, theta_scan.is_empty()) {
                let best = largest_passing_theta(*lemma, r, theta_scan)?;
                summary["largest_passing_theta"] = json!(best);
                text.push_str(&match best {
                    Some(t) => format!("largest scanned theta with all conditions passing: {t:e}\n"),
                    None => "no scanned theta passes every condition\n".to_string(),
                });
            }
            Ok(condition_artifacts(&report, summary, text))
        }
    }
}

fn scaling_options(cfg: &RunConfig, seed: u64, phases: usize, tau: f64, c_a: Option<f64>) -> ScalingOptions {
    ScalingOptions {
        phases,
        seed,
        horizon_cap: cfg.numeric.horizon_cap,
        dt: cfg.numeric.dt,
        tau,
        c_a,
    }
}

fn family_with_n(sys: &SystemConfig, big_n: usize) -> neklab_core::Result<SystemFamily> {
    match sys {
        SystemConfig::Desk { params, .. } => desk_family(big_n, *params),
        SystemConfig::Custom(c) if c.big_n == big_n => build_family(sys),
        SystemConfig::Custom(c) => Err(Error::Precondition(format!(
            "a custom system has fixed N = {}; cannot run it at N = {big_n}",
            c.big_n
        ))),
    }
}

fn dirichlet(omega: &[f64], big_q: u64) -> neklab_core::Result<Artifacts> {
    let n = omega.len();
    let d = dirichlet_best(omega, big_q)?;
    let bound = (big_q as f64).powf(-1.0 / n as f64);
    let passed = d.err <= bound;
    let periodic = if n >= 2 && omega.iter().any(|w| w.abs() > 1.0) {
        Some(periodic_frequency(omega, big_q)?)
    } else {
        None
    };
    let mut header: Vec<String> = vec!["q".into()];
    header.extend((1..=n).map(|j| format!("p_{j}")));
    header.extend(["err".into(), "bound".into()]);
    let mut row: Vec<String> = vec![d.q.to_string()];
    row.extend(d.p.iter().map(|p| p.to_string()));
    row.extend([num(d.err), num(bound)]);
    let mut text = format!("dirichlet: q={}, p={:?}, err={:.6e} (bound {:.6e})", d.q, d.p, d.err, bound);
    if let Some(pf) = &periodic {
        header.push("T".into());
        header.extend((1..=n).map(|j| format!("omega0_{j}")));
        row.push(num(pf.t_period));
        row.extend(pf.omega0.iter().map(|w| num(*w)));
        let w0: Vec<String> = pf.omega0.iter().map(|w| format!("{w}")).collect();
        text.push_str(&format!(
            "\nperiodic frequency: (q={}, T={}π, omega0=({}))",
            pf.q,
            fmt_multiple(pf.t_period / PI),
            w0.join(",")
        ));
    }
    let table = json!({ "dirichlet": d, "bound": bound, "periodic": periodic });
    Ok(Artifacts {
        name: "dirichlet",
        csv: format!("{}\n{}\n", header.join(","), row.join(",")),
        summary: json!({ "passed": passed, "err": d.err, "bound": bound }),
        table,
        text,
        passed,
    })
}

/// `10` for 10.000000000000002, otherwise the full value.
fn fmt_multiple(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round())
    } else {
        format!("{x}")
    }
}

fn normal_form(
    cfg: &RunConfig,
    omega0: &[f64],
    t_period: f64,
    i0: Option<&[f64]>,
    radii: [f64; 3],
    steps: usize,
) -> neklab_core::Result<Artifacts> {
    let (_, spec) = system(cfg)?;
    let i0 = i0.map(<[f64]>::to_vec).unwrap_or_else(|| spec.i0.clone());
    let mut ctx = AveragingContext::new(spec.ambient, omega0.to_vec(), t_period, i0, spec.a.clone(), spec.kappa)?
        .with_radii(radii[0], radii[1], radii[2])
        .with_steps(steps)
        .with_c_lambda(spec.c_lambda);
    if let Some(cap) = cfg.numeric.degree_cap {
        ctx = ctx.with_degree_cap(cap);
    }
    let nf = iterate_normal_form(&ctx, &spec.f, &spec.lambda)?;
    let mut csv = String::from("step,radius_factor,norm,halving_bound\n");
    let m = nf.norms.len() - 1;
    for (j, v) in nf.norms.iter().enumerate() {
        let factor = 3.0 - j as f64 / m.max(1) as f64;
        csv.push_str(&format!("{j},{},{},{}\n", num(factor), num(*v), num(nf.norms[0] * 0.5f64.powi(j as i32))));
    }
    let mut summary = json!({
        "halving_holds": nf.halving_holds(),
        "conditions_passed": nf.conditions.passed(),
        "epsilon": nf.norms[0],
        "final_norm": nf.final_norm(),
        "degree_cap": nf.degree_cap,
        "psi_displacement_bound": nf.psi_displacement_bound,
    });
    let mut text = format!(
        "normal form: {} step(s), degree cap {}, norms {:?}\nhalving holds: {}\n{}",
        m,
        nf.degree_cap,
        nf.norms,
        nf.halving_holds(),
        nf.conditions
    );
    if let Some(nodes) = cfg.numeric.nodes {
        let q = quadrature_average(&spec.f, omega0, t_period, nodes)?;
        let exact = resonant_average(&spec.f, omega0, t_period)?;
        let diff = (&q.average - &exact).max_abs_coefficient();
        summary["quadrature_difference"] = json!(diff);
        text.push_str(&format!("quadrature ({nodes} nodes) vs exact average: {diff:.3e}\n"));
    }
    Ok(Artifacts {
        name: "normal_form",
        csv,
        table: serde_json::to_value(&nf).expect("serializable"),
        summary,
        text,
        passed: nf.halving_holds(),
    })
}

fn drift(
    cfg: &RunConfig,
    seed: u64,
    theta: f64,
    a: f64,
    init: Option<&PointConfig>,
    tau: f64,
    c_a: Option<f64>,
) -> neklab_core::Result<Artifacts> {
    let (_, spec) = system(cfg)?;
    let recipe = recipe_for(&spec, theta, a, tau, c_a)?;
    let init = match init {
        Some(p) => point(&spec, p)?,
        None => {
            let kl0 = 0.5 * recipe.c_e * theta.powf(4.0 + 2.0 * a * spec.n() as f64);
            let kl0 = if spec.kappa > 0.0 { kl0 } else { 0.0 };
            scaled_initial_point(&spec, theta, kl0, seed, 0, 1 << 40)?
        }
    };
    let dt = cfg.numeric.dt.unwrap_or_else(|| default_dt(&spec.frequency(&actions(&init).0)));
    let horizon = cfg.numeric.horizon.min(cfg.numeric.horizon_cap);
    let target = DriftTarget {
        theta,
        a,
        big_k: recipe.big_k,
    };
    let mut rep = measure_drift(&spec, &init, horizon, dt, &target)?;
    rep.horizon_cap = cfg.numeric.horizon_cap;
    let passed = rep.bound_passed;
    let summary = json!({ "all_bounds_passed": passed, "K": recipe.big_k });
    Ok(drift_artifacts("drift", &[rep], summary, passed))
}

fn drift_artifacts(name: &'static str, reports: &[DriftReport], summary: Value, passed: bool) -> Artifacts {
    let mut buf = Vec::new();
    write_drift_csv(reports, &mut buf).expect("writing to memory");
    let mut text = format!("{name}: {} report(s)\n", reports.len());
    for r in reports {
        text.push_str(&format!(
            "  theta={:<6} N={:<3} kappa={:.4e} drift={:.4e} (bound {:.4e}) kappaLambda={:.4e} (bound {:.4e}) {}\n",
            r.theta,
            r.big_n,
            r.kappa,
            r.max_action_drift,
            r.bound_k_theta,
            r.max_kappa_lambda,
            r.bound_kappa_lambda,
            if r.bound_passed { "pass" } else { "FAIL" }
        ));
    }
    text.push_str(&format!("summary: {summary}"));
    Artifacts {
        name,
        csv: String::from_utf8(buf).expect("ascii csv"),
        table: serde_json::to_value(reports).expect("serializable"),
        summary,
        text,
        passed,
    }
}

fn constrained(cfg: &RunConfig, kappa_grid: &[f64], init: &PointConfig) -> neklab_core::Result<Artifacts> {
    let (_, spec) = system(cfg)?;
    let pt = point(&spec, init)?;
    let dt = cfg.numeric.dt.unwrap_or_else(|| default_dt(&spec.alpha));
    let horizon = cfg.numeric.horizon.min(cfg.numeric.horizon_cap);
    let rep = constrained_limit_study(&spec, &pt, kappa_grid, horizon, dt)?;
    let monotone = ConvergenceReport::non_increasing(&rep.sup_distance, 0.05);
    let kl_monotone = ConvergenceReport::non_increasing(&rep.sup_kappa_lambda, 0.05);
    let slope_ok = spec.ambient.big_n == 0 || (rep.fitted_zeta_slope + CONSTRAINED_ZETA_SCALING).abs() <= 0.1;
    let passed = monotone && slope_ok;
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).expect("writing to memory");
    let summary = json!({
        "fitted_zeta_slope": if rep.fitted_zeta_slope.is_finite() { json!(rep.fitted_zeta_slope) } else { Value::Null },
        "sup_distance_non_increasing": monotone,
        "sup_kappa_Lambda_non_increasing": kl_monotone,
        "slope_passed": slope_ok,
        "passed": passed,
    });
    let text = format!(
        "constrained limit over kappa {:?}\n  sup distance {:?}\n  zeta slope {:.4}\nsummary: {summary}",
        rep.kappa_grid, rep.sup_distance, rep.fitted_zeta_slope
    );
    Ok(Artifacts {
        name: "constrained",
        csv: String::from_utf8(buf).expect("ascii csv"),
        table: serde_json::to_value(&rep).expect("serializable"),
        summary,
        text,
        passed,
    })
}

fn condition_artifacts(report: &ConditionReport, summary: Value, text: String) -> Artifacts {
    let mut csv = String::from("name,lhs,relation,rhs,passed,margin\n");
    for l in &report.lines {
        let rel = match l.relation {
            neklab_core::normalform::Relation::Less => "<",
            neklab_core::normalform::Relation::LessEq => "<=",
        };
        csv.push_str(&format!(
            "\"{}\",{},{rel},{},{},{}\n",
            l.name.replace('"', "\"\""),
            num(l.lhs),
            num(l.rhs),
            l.passed,
            num(l.margin)
        ));
    }
    Artifacts {
        name: "conditions",
        csv,
        table: serde_json::to_value(report).expect("serializable"),
        passed: report.passed(),
        summary,
        text,
    }
}

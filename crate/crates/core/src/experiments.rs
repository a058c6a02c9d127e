//! Desk-scale numerical studies: action drift against the explicit
//! constants, the large-κ constrained limit, the small-κ scaling in `θ` and
//! its variant with a weaker coupling hypothesis.
//!
//! Stability times of the form `e^{k/θ^a}` are far out of numerical reach, so
//! every study runs on a capped horizon and records the cap. Orbits are
//! independent jobs on the rayon pool; results are merged in grid order, so
//! the output does not depend on the number of workers.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diophantine::inf_norm;
use crate::error::{Error, Result};
use crate::hamiltonian::{actions, PhasePoint, SystemSpec};
use crate::integrator::{default_dt, step_plan, MidpointStepper, Observables};
use crate::normalform::{check_admissible_a, kappa_for, parameter_recipe, Recipe, RecipeInputs};
use crate::polyalg::{parse_polynomial, total_degree, Ambient, Polynomial};

/// Default cap on integration horizons.
pub const DEFAULT_HORIZON_CAP: f64 = 1e5;
/// Random torus phases per grid point.
pub const DEFAULT_PHASES: usize = 8;

/// A system whose perturbation depends on the coupling,
/// `f_κ = f + κ·coupling`; `base.kappa` is ignored.
#[derive(Debug, Clone)]
pub struct SystemFamily {
    pub base: SystemSpec,
    pub coupling: Polynomial,
}

impl SystemFamily {
    pub fn new(base: SystemSpec, coupling: Polynomial) -> Result<Self> {
        base.ambient.check_same(&coupling.ambient())?;
        Ok(Self { base, coupling })
    }

    /// A family with no κ-dependent perturbation.
    pub fn constant(base: SystemSpec) -> Self {
        let coupling = Polynomial::zero(base.ambient);
        Self { base, coupling }
    }

    pub fn at_kappa(&self, kappa: f64) -> SystemSpec {
        let mut s = self.base.with_kappa(kappa);
        if !self.coupling.is_zero() {
            s.f = &s.f + &self.coupling.scale(kappa);
        }
        s
    }
}

/// Parameters of the desk system: `n = 2`, `α = (1, 1)`, `A = a·Id`,
/// `Λ = |ζ|²/2` and
///
/// ```text
/// f_κ = c5·P(z) + |ζ|²·(c4·U(z) + κ·c1·V(z))
/// ```
///
/// with a quintic `P`, a quartic `U` and a linear `V`. Every monomial of `P`,
/// `U` and `V` is non-resonant for equal frequencies, and `ζ` enters only
/// through `|ζ|²`, which is conserved, so the `z`-motion depends on `N` only
/// through the value of `|ζ|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskParams {
    pub a_coef: f64,
    pub c5: f64,
    pub c4: f64,
    pub c1: f64,
}

impl Default for DeskParams {
    fn default() -> Self {
        Self {
            a_coef: 1e-3,
            c5: 5e-6,
            c4: 1e-6,
            c1: 1e-3,
        }
    }
}

const DESK_P: &str = "x1^5 - 0.5 * x1^3 y2^2 + 0.7 * x1^2 y1 x2^2 - 0.4 * y1^3 x2 y2 + 0.3 * x2^5 + 0.2 * y1 y2^4";
// Re(w1^4) + 0.5 Re(w1^2 w2^2)
const DESK_U: &str = "x1^4 - 6 * x1^2 y1^2 + y1^4 + 0.5 * x1^2 x2^2 - 0.5 * x1^2 y2^2 - 0.5 * y1^2 x2^2 + 0.5 * y1^2 y2^2 - 2 * x1 y1 x2 y2";
const DESK_V: &str = "x1 + 0.5 * y2";

fn l1_coefficients(p: &Polynomial) -> f64 {
    p.terms().map(|(_, c)| c.abs()).sum()
}

/// The desk family with `N` transverse degrees of freedom.
pub fn desk_family(big_n: usize, params: DeskParams) -> Result<SystemFamily> {
    let amb = Ambient::new(2, big_n);
    let p = parse_polynomial(DESK_P, amb)?;
    let u = parse_polynomial(DESK_U, amb)?;
    let v = parse_polynomial(DESK_V, amb)?;
    let zeta2 = Polynomial::transverse_norm_sq(amb);
    let mut f = p.scale(params.c5);
    let mut coupling = Polynomial::zero(amb);
    if big_n > 0 {
        f = &f + &(&zeta2 * &u).scale(params.c4);
        coupling = (&zeta2 * &v).scale(params.c1);
    }
    let c0 = (params.c5 * l1_coefficients(&p))
        .max(params.c4 * l1_coefficients(&u))
        .max(params.c1 * l1_coefficients(&v));
    let lambda = zeta2.scale(0.5);
    let base = SystemSpec::new(
        amb,
        vec![1.0, 1.0],
        DMatrix::identity(2, 2) * params.a_coef,
        vec![0.0, 0.0],
        f,
        lambda,
        0.0,
        2.0 / params.a_coef,
        1.0,
        c0,
    )?;
    SystemFamily::new(base, coupling)
}

/// The desk system at a given coupling.
pub fn desk_system(big_n: usize, kappa: f64, params: DeskParams) -> Result<SystemSpec> {
    Ok(desk_family(big_n, params)?.at_kappa(kappa))
}

/// `C_A = 2π ‖A⁻¹‖_∞`, the constant of the periodic approximation.
pub fn default_c_a(spec: &SystemSpec) -> Result<f64> {
    let inv = spec
        .a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("A is not invertible".into()))?;
    Ok(2.0 * PI * inf_norm(&inv))
}

/// Recipe inputs taken from a system's constants.
pub fn recipe_inputs_for(spec: &SystemSpec, theta: f64, a: f64, tau: f64, c_a: Option<f64>) -> Result<RecipeInputs> {
    Ok(RecipeInputs {
        theta,
        a,
        n: spec.n(),
        norm_a: spec.norm_a(),
        c0: spec.c0,
        m_const: spec.m_const,
        c_lambda: spec.c_lambda,
        tau,
        c_a: match c_a {
            Some(c) => c,
            None => default_c_a(spec)?,
        },
    })
}

pub fn recipe_for(spec: &SystemSpec, theta: f64, a: f64, tau: f64, c_a: Option<f64>) -> Result<Recipe> {
    parameter_recipe(&recipe_inputs_for(spec, theta, a, tau, c_a)?)
}

/// Everything the drift bound needs besides the orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftTarget {
    pub theta: f64,
    pub a: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub theta: f64,
    pub a: f64,
    pub kappa: f64,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub horizon: f64,
    pub horizon_cap: f64,
    pub dt: f64,
    /// `sup_t |I(t) − I(0)|₁` over `[−horizon, horizon]`.
    pub max_action_drift: f64,
    #[serde(rename = "max_kappa_Lambda")]
    pub max_kappa_lambda: f64,
    pub max_relative_energy_error: f64,
    /// `K θ^{2+a}`.
    pub bound_k_theta: f64,
    /// `K θ^{4+2a}`.
    pub bound_kappa_lambda: f64,
    pub bound_passed: bool,
    pub phases: usize,
}

impl DriftReport {
    const CSV_HEADER: &'static str = "theta,a,kappa,N,horizon,horizon_cap,dt,max_action_drift,max_kappa_Lambda,\
max_relative_energy_error,bound_K_theta,bound_kappa_Lambda,bound_passed,phases";

    fn csv_row(&self) -> String {
        let num = |v: f64| format!("{v:.16e}");
        [
            num(self.theta),
            num(self.a),
            num(self.kappa),
            self.big_n.to_string(),
            num(self.horizon),
            num(self.horizon_cap),
            num(self.dt),
            num(self.max_action_drift),
            num(self.max_kappa_lambda),
            num(self.max_relative_energy_error),
            num(self.bound_k_theta),
            num(self.bound_kappa_lambda),
            self.bound_passed.to_string(),
            self.phases.to_string(),
        ]
        .join(",")
    }
}

pub fn write_drift_csv<W: Write>(reports: &[DriftReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", DriftReport::CSV_HEADER)?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Suprema along one orbit.
#[derive(Debug, Clone, Copy, Default)]
struct OrbitSup {
    action_drift: f64,
    kappa_lambda: f64,
    energy_error: f64,
}

impl OrbitSup {
    fn merge(self, o: Self) -> Self {
        Self {
            action_drift: self.action_drift.max(o.action_drift),
            kappa_lambda: self.kappa_lambda.max(o.kappa_lambda),
            energy_error: self.energy_error.max(o.energy_error),
        }
    }
}

fn l1_action_drift(y: &[f64], i_start: &[f64]) -> f64 {
    let n = i_start.len();
    (0..n)
        .map(|j| (0.5 * (y[j] * y[j] + y[n + j] * y[n + j]) - i_start[j]).abs())
        .sum()
}

/// Integrates over `[−horizon, horizon]` and tracks the suprema at every step.
fn orbit_sup(spec: &SystemSpec, init: &PhasePoint, horizon: f64, dt: f64) -> Result<OrbitSup> {
    let i_start = actions(init).0;
    let mut obs = Observables::new(spec);
    let y0 = init.coords();
    let (e0, kl0) = obs.eval(&y0);
    let escale = e0.abs().max(f64::MIN_POSITIVE);
    let mut sup = OrbitSup {
        action_drift: 0.0,
        kappa_lambda: kl0,
        energy_error: 0.0,
    };
    let mut stepper = MidpointStepper::new(spec);
    for dir in [1.0, -1.0] {
        let (nsteps, h) = step_plan(dir * horizon, dt)?;
        let mut y = y0.clone();
        for _ in 0..nsteps {
            stepper.step_in_place(&mut y, h)?;
            let (e, kl) = obs.eval(&y);
            sup.action_drift = sup.action_drift.max(l1_action_drift(&y, &i_start));
            sup.kappa_lambda = sup.kappa_lambda.max(kl);
            sup.energy_error = sup.energy_error.max((e - e0).abs() / escale);
        }
    }
    Ok(sup)
}

fn drift_report(
    spec: &SystemSpec,
    target: &DriftTarget,
    horizon: f64,
    horizon_cap: f64,
    dt: f64,
    sup: OrbitSup,
    phases: usize,
) -> DriftReport {
    let bound_k_theta = target.big_k * target.theta.powf(2.0 + target.a);
    let bound_kappa_lambda = target.big_k * target.theta.powf(4.0 + 2.0 * target.a);
    DriftReport {
        theta: target.theta,
        a: target.a,
        kappa: spec.kappa,
        big_n: spec.ambient.big_n,
        horizon,
        horizon_cap,
        dt,
        max_action_drift: sup.action_drift,
        max_kappa_lambda: sup.kappa_lambda,
        max_relative_energy_error: sup.energy_error,
        bound_k_theta,
        bound_kappa_lambda,
        bound_passed: sup.action_drift <= bound_k_theta && sup.kappa_lambda <= bound_kappa_lambda,
        phases,
    }
}

/// Action drift and `κΛ` along the orbit of `init` over `[−horizon, horizon]`,
/// compared with `K θ^{2+a}` and `K θ^{4+2a}`.
pub fn measure_drift(
    spec: &SystemSpec,
    init: &PhasePoint,
    horizon: f64,
    dt: f64,
    target: &DriftTarget,
) -> Result<DriftReport> {
    if init.ambient() != spec.ambient {
        return Err(Error::dimension(format!("{:?}", spec.ambient), format!("{:?}", init.ambient())));
    }
    if !(horizon >= 0.0) {
        return Err(Error::Domain(format!("horizon must be non-negative (got {horizon})")));
    }
    let sup = orbit_sup(spec, init, horizon, dt)?;
    Ok(drift_report(spec, target, horizon, horizon, dt, sup, 1))
}

/// How long each orbit is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonRule {
    Fixed(f64),
    /// `e^{k/θ^a}` from the recipe, capped.
    Recipe,
}

/// Shared knobs of the scaling studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingOptions {
    pub phases: usize,
    pub seed: u64,
    pub horizon_cap: f64,
    /// Time step; the default rule `(2π/|ω|∞)/64` when `None`.
    pub dt: Option<f64>,
    /// `τ` handed to the recipe (it does not affect `K`).
    pub tau: f64,
    /// `C_A`; `2π‖A⁻¹‖∞` when `None`.
    pub c_a: Option<f64>,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            phases: DEFAULT_PHASES,
            seed: 42,
            horizon_cap: DEFAULT_HORIZON_CAP,
            dt: None,
            tau: PI,
            c_a: None,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Initial point with `I_j(0) = θ²/n` at random angles and `ζ(0)` in a random
/// direction scaled so that `κΛ(ζ(0)) = kappa_lambda`.
///
/// `z_stream` and `zeta_stream` select independent random streams, so the
/// same `z` can be paired with transverse data of any dimension.
pub fn scaled_initial_point(
    spec: &SystemSpec,
    theta: f64,
    kappa_lambda: f64,
    seed: u64,
    z_stream: u64,
    zeta_stream: u64,
) -> Result<PhasePoint> {
    let amb = spec.ambient;
    let n = amb.n;
    let mut rng = rng_for(seed, z_stream);
    let mut z = vec![0.0; 2 * n];
    let amp = (2.0 * theta * theta / n as f64).sqrt();
    for j in 0..n {
        let phase = rng.gen_range(0.0..2.0 * PI);
        z[j] = amp * phase.cos();
        z[n + j] = amp * phase.sin();
    }
    let mut zeta = vec![0.0; 2 * amb.big_n];
    if amb.big_n > 0 && kappa_lambda > 0.0 {
        if !spec.lambda.terms().all(|(e, _)| total_degree(e) == 2) {
            return Err(Error::Precondition(
                "scaling zeta to a prescribed kappa*Lambda needs a homogeneous quadratic Lambda".into(),
            ));
        }
        let mut rng = rng_for(seed, zeta_stream);
        let dir: Vec<f64> = (0..zeta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut coords = z.clone();
        coords.extend(&dir);
        let lam = spec.lambda.evaluate(&coords)?;
        if !(lam > 0.0 && spec.kappa > 0.0) {
            return Err(Error::Domain("kappa*Lambda must be positive off the origin".into()));
        }
        let s = (kappa_lambda / (spec.kappa * lam)).sqrt();
        zeta = dir.into_iter().map(|v| v * s).collect();
    }
    PhasePoint::new(z, zeta)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn horizon_for(rule: HorizonRule, recipe: &Recipe, theta: f64, a: f64, cap: f64) -> f64 {
    match rule {
        HorizonRule::Fixed(h) => h.min(cap),
        HorizonRule::Recipe => (recipe.k / theta.powf(a)).exp().min(cap),
    }
}

struct Job {
    theta_index: usize,
    theta: f64,
    kappa: f64,
    big_n: usize,
    phase: usize,
}

/// Runs all phases of every `(θ, κ, N)` job and folds them per grid point.
fn run_grid(
    families: &[(usize, SystemFamily)],
    grid: &[(usize, f64, f64)],
    a: f64,
    rule: HorizonRule,
    opts: &ScalingOptions,
) -> Result<Vec<DriftReport>> {
    let phases = opts.phases.max(1);
    let mut jobs = Vec::new();
    for &(ti, theta, kappa) in grid {
        for (big_n, _) in families {
            for phase in 0..phases {
                jobs.push(Job {
                    theta_index: ti,
                    theta,
                    kappa,
                    big_n: *big_n,
                    phase,
                });
            }
        }
    }
    let family = |big_n: usize| &families.iter().find(|(n, _)| *n == big_n).expect("listed").1;
    let results: Vec<Result<(DriftReport, OrbitSup)>> = jobs
        .par_iter()
        .map(|job| {
            let spec = family(job.big_n).at_kappa(job.kappa);
            let inputs = recipe_inputs_for(&spec, job.theta, a, opts.tau, opts.c_a)?;
            let recipe = parameter_recipe(&inputs)?;
            let n = spec.n() as f64;
            let kl0 = 0.5 * recipe.c_e * job.theta.powf(4.0 + 2.0 * a * n);
            // z phases depend on (θ, phase) only, so all N see the same z(0)
            let stream = (job.theta_index as u64) << 16 | job.phase as u64;
            let init = scaled_initial_point(&spec, job.theta, kl0, opts.seed, stream, stream | 1 << 40)?;
            let dt = opts.dt.unwrap_or_else(|| default_dt(&spec.frequency(&actions(&init))));
            let horizon = horizon_for(rule, &recipe, job.theta, a, opts.horizon_cap);
            let sup = orbit_sup(&spec, &init, horizon, dt)?;
            let target = DriftTarget {
                theta: job.theta,
                a,
                big_k: recipe.big_k,
            };
            log::debug!(
                "theta={} kappa={:.4e} N={} phase={} drift={:.4e}",
                job.theta,
                job.kappa,
                job.big_n,
                job.phase,
                sup.action_drift
            );
            Ok((drift_report(&spec, &target, horizon, opts.horizon_cap, dt, sup, phases), sup))
        })
        .collect();
    let mut out = Vec::new();
    let mut it = results.into_iter();
    for _ in 0..jobs.len() / phases {
        let mut first: Option<(DriftReport, OrbitSup)> = None;
        for _ in 0..phases {
            let (rep, sup) = it.next().expect("job count")?;
            first = Some(match first {
                None => (rep, sup),
                Some((r0, s0)) => (r0, s0.merge(sup)),
            });
        }
        let (mut rep, sup) = first.expect("phases >= 1");
        rep.max_action_drift = sup.action_drift;
        rep.max_kappa_lambda = sup.kappa_lambda;
        rep.max_relative_energy_error = sup.energy_error;
        rep.bound_passed = sup.action_drift <= rep.bound_k_theta && sup.kappa_lambda <= rep.bound_kappa_lambda;
        out.push(rep);
    }
    Ok(out)
}

/// Result of [`smallkappa_scaling_study`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallKappaStudy {
    /// One report per `(θ, N)`, θ-major, each the max over the phases.
    pub reports: Vec<DriftReport>,
    /// Slope of `ln(max drift)` against `ln θ`, one per `N`.
    pub fitted_exponents: Vec<(usize, f64)>,
    /// `max_N drift / min_N drift` at each `θ`.
    pub n_spread: Vec<(f64, f64)>,
    pub all_bounds_passed: bool,
}

impl SmallKappaStudy {
    pub fn min_fitted_exponent(&self) -> f64 {
        self.fitted_exponents.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min)
    }

    pub fn max_n_spread(&self) -> f64 {
        self.n_spread.iter().map(|(_, r)| *r).fold(1.0, f64::max)
    }
}

/// For each `θ`: `κ = θ^{2+2a(2n−1)}`, `|I(0)|₁ = θ²` and
/// `κΛ(0) = ½ C_E θ^{4+2an}`; the drift is measured for every `N` in `n_grid`
/// against `K` from the recipe.
pub fn smallkappa_scaling_study<F>(
    make_family: F,
    n_grid: &[usize],
    theta_grid: &[f64],
    a: f64,
    rule: HorizonRule,
    opts: &ScalingOptions,
) -> Result<SmallKappaStudy>
where
    F: Fn(usize) -> Result<SystemFamily>,
{
    if n_grid.is_empty() || theta_grid.is_empty() {
        return Err(Error::Precondition("empty theta or N grid".into()));
    }
    let families: Vec<(usize, SystemFamily)> = n_grid
        .iter()
        .map(|&nn| make_family(nn).map(|f| (nn, f)))
        .collect::<Result<_>>()?;
    let n = families[0].1.base.n();
    check_admissible_a(a, n)?;
    let grid: Vec<(usize, f64, f64)> = theta_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| (i, t, kappa_for(t, a, n)))
        .collect();
    let reports = run_grid(&families, &grid, a, rule, opts)?;
    let k = n_grid.len();
    let fitted_exponents = (0..k)
        .map(|ni| {
            let drifts: Vec<f64> = (0..theta_grid.len()).map(|ti| reports[ti * k + ni].max_action_drift).collect();
            (n_grid[ni], fit_loglog(theta_grid, &drifts))
        })
        .collect();
    let n_spread = theta_grid
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let d: Vec<f64> = (0..k).map(|ni| reports[ti * k + ni].max_action_drift).collect();
            let hi = d.iter().copied().fold(0.0, f64::max);
            let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
            (t, hi / lo)
        })
        .collect();
    let all_bounds_passed = reports.iter().all(|r| r.bound_passed);
    Ok(SmallKappaStudy {
        reports,
        fitted_exponents,
        n_spread,
        all_bounds_passed,
    })
}

/// Checks the weaker growth structure `|f_κ| ≤ C₀(|z|⁵ + κ|ζ|²|z|)`: the
/// κ-independent part must be a function of `z` of order at least five, and
/// the coupling at most quadratic in `ζ` with at least one `z` factor.
pub fn check_variant_structure(family: &SystemFamily) -> Result<()> {
    let amb = family.base.ambient;
    for (e, c) in family.base.f.terms() {
        let (dz, dzeta) = family.base.f.split_degree(e);
        if dzeta > 0 || dz < 5 {
            return Err(Error::Precondition(format!(
                "coupling-structure violation: kappa-independent term {c:e} * {} has z-degree {dz}, zeta-degree {dzeta}",
                Polynomial::monomial(amb, e.clone(), 1.0)
            )));
        }
    }
    for (e, c) in family.coupling.terms() {
        let (dz, dzeta) = family.coupling.split_degree(e);
        if dzeta > 2 || dz == 0 {
            return Err(Error::Precondition(format!(
                "coupling-structure violation: coupling term {c:e} * {} has z-degree {dz}, zeta-degree {dzeta}",
                Polynomial::monomial(amb, e.clone(), 1.0)
            )));
        }
    }
    Ok(())
}

/// Drift at a fixed `θ` for couplings `0 < κ ≤ θ^{2+2a(2n−1)}`.
pub fn variant_scaling_study(
    family: &SystemFamily,
    theta: f64,
    a: f64,
    kappa_grid: &[f64],
    rule: HorizonRule,
    opts: &ScalingOptions,
) -> Result<Vec<DriftReport>> {
    check_variant_structure(family)?;
    let n = family.base.n();
    check_admissible_a(a, n)?;
    let kmax = kappa_for(theta, a, n);
    for &k in kappa_grid {
        if !(k > 0.0 && k <= kmax * (1.0 + 1e-12)) {
            return Err(Error::Precondition(format!("kappa = {k:e} is outside (0, {kmax:e}]")));
        }
    }
    // every κ reuses the same z phases
    let grid: Vec<(usize, f64, f64)> = kappa_grid.iter().map(|&k| (0, theta, k)).collect();
    run_grid(&[(family.base.ambient.big_n, family.clone())], &grid, a, rule, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub kappa_grid: Vec<f64>,
    /// `max_{|t|≤T} (|z^κ(t) − z(t)| + |ζ^κ(t)|)`.
    pub sup_distance: Vec<f64>,
    #[serde(rename = "sup_kappa_Lambda")]
    pub sup_kappa_lambda: Vec<f64>,
    /// `max_{|t|≤T} |ζ^κ(t)|`.
    pub sup_zeta: Vec<f64>,
    /// Slope of `ln sup|ζ^κ|` against `ln κ`.
    pub fitted_zeta_slope: f64,
    /// Exponent `s` of the initial scaling `ζ(0) = ζ₀ / κ^s`.
    pub zeta_scaling: f64,
    pub dt: Vec<f64>,
    pub horizon: f64,
}

impl ConvergenceReport {
    /// Each entry at most `(1 + tol)` times its predecessor.
    pub fn non_increasing(values: &[f64], tol: f64) -> bool {
        values.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kappa,sup_distance,sup_kappa_Lambda,sup_zeta,dt")?;
        for i in 0..self.kappa_grid.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.kappa_grid[i], self.sup_distance[i], self.sup_kappa_lambda[i], self.sup_zeta[i], self.dt[i]
            )?;
        }
        Ok(())
    }
}

/// Exponent of the initial transverse scaling; `κΛ(0) ∝ κ^{1−2s}` → 0 for a
/// quadratic `Λ`.
pub const CONSTRAINED_ZETA_SCALING: f64 = 0.5;

/// Compares the coupled orbits for each `κ` with the constrained orbit of
/// `H(z, 0)` started from the same `z(0)`.
///
/// `ζ(0) = ζ₀/√κ` with `ζ₀ = init_template.zeta`. Each `κ` uses
/// `dt_κ = min(dt, 2π/(64 κ C_Λ))` to resolve the transverse rotation, and the
/// reference orbit is recomputed with the same `dt_κ`.
pub fn constrained_limit_study(
    spec_template: &SystemSpec,
    init_template: &PhasePoint,
    kappa_grid: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<ConvergenceReport> {
    let amb = spec_template.ambient;
    if init_template.ambient() != amb {
        return Err(Error::dimension(format!("{amb:?}"), format!("{:?}", init_template.ambient())));
    }
    if kappa_grid.windows(2).any(|w| w[1] <= w[0]) || kappa_grid.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::Precondition("kappa grid must be positive and increasing".into()));
    }
    let mut reference = spec_template.with_kappa(0.0);
    reference.f = spec_template.f.filter_terms(|e, _| spec_template.f.split_degree(e).1 == 0);
    reference.lambda = Polynomial::zero(amb);
    let n2 = 2 * amb.n;
    let y_ref0: Vec<f64> = init_template.z.iter().copied().chain(std::iter::repeat_n(0.0, 2 * amb.big_n)).collect();

    let rows: Vec<Result<(f64, f64, f64, f64)>> = kappa_grid
        .par_iter()
        .map(|&kappa| {
            let spec = spec_template.with_kappa(kappa);
            let s = kappa.powf(-CONSTRAINED_ZETA_SCALING);
            let mut y0 = init_template.z.clone();
            y0.extend(init_template.zeta.iter().map(|v| v * s));
            let transverse = if amb.big_n > 0 { kappa * spec.c_lambda.max(1.0) } else { 0.0 };
            let dtk = if transverse > 0.0 { dt.min(2.0 * PI / (64.0 * transverse)) } else { dt };
            let mut obs = Observables::new(&spec);
            let mut coupled = MidpointStepper::new(&spec);
            let mut constrained = MidpointStepper::new(&reference);
            let zeta_norm = |y: &[f64]| y[n2..].iter().map(|v| v * v).sum::<f64>().sqrt();
            let dist = |y: &[f64], r: &[f64]| {
                let dz: f64 = (0..n2).map(|i| (y[i] - r[i]).powi(2)).sum::<f64>().sqrt();
                dz + zeta_norm(y)
            };
            let mut sup_d = dist(&y0, &y_ref0);
            let mut sup_kl = obs.eval(&y0).1;
            let mut sup_z = zeta_norm(&y0);
            for dir in [1.0, -1.0] {
                let (nsteps, h) = step_plan(dir * horizon, dtk)?;
                let mut y = y0.clone();
                let mut r = y_ref0.clone();
                for _ in 0..nsteps {
                    coupled.step_in_place(&mut y, h)?;
                    constrained.step_in_place(&mut r, h)?;
                    sup_d = sup_d.max(dist(&y, &r));
                    sup_kl = sup_kl.max(obs.eval(&y).1);
                    sup_z = sup_z.max(zeta_norm(&y));
                }
            }
            Ok((sup_d, sup_kl, sup_z, dtk))
        })
        .collect();
    let mut rep = ConvergenceReport {
        kappa_grid: kappa_grid.to_vec(),
        sup_distance: Vec::new(),
        sup_kappa_lambda: Vec::new(),
        sup_zeta: Vec::new(),
        fitted_zeta_slope: f64::NAN,
        zeta_scaling: CONSTRAINED_ZETA_SCALING,
        dt: Vec::new(),
        horizon,
    };
    for r in rows {
        let (d, kl, z, h) = r?;
        rep.sup_distance.push(d);
        rep.sup_kappa_lambda.push(kl);
        rep.sup_zeta.push(z);
        rep.dt.push(h);
    }
    if amb.big_n > 0 && rep.sup_zeta.iter().all(|z| *z > 0.0) && kappa_grid.len() >= 2 {
        rep.fitted_zeta_slope = fit_loglog(kappa_grid, &rep.sup_zeta);
    }
    Ok(rep)
}

/// JSON summary of a small-κ study.
pub fn smallkappa_summary(study: &SmallKappaStudy) -> serde_json::Value {
    serde_json::json!({
        "fitted_exponents": study.fitted_exponents,
        "min_fitted_exponent": study.min_fitted_exponent(),
        "n_spread": study.n_spread,
        "max_n_spread": study.max_n_spread(),
        "all_bounds_passed": study.all_bounds_passed,
        "slope_passed": study.min_fitted_exponent() >= 2.0,
        "n_uniform_passed": study.max_n_spread() < 2.0,
    })
}

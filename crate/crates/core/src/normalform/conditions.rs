//! Evaluation of the inequality sets behind the stability lemmas and
//! theorems. Every inequality is reported with both sides so that failing
//! margins can be inspected, not just a verdict.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::recipe::{kappa_for, max_admissible_a, parameter_recipe, Recipe, RecipeInputs};
use crate::error::{Error, Result};
use crate::polyalg::Polynomial;

/// Which statement's hypotheses to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LemmaId {
    /// One averaging step.
    #[serde(rename = "L3.1")]
    L3_1,
    /// Iterated normal form.
    #[serde(rename = "L4.1")]
    L4_1,
    /// Local stability with a confining potential (large κ).
    #[serde(rename = "L6.6")]
    L6_6,
    /// Stability near a periodic orbit (small κ).
    #[serde(rename = "L7.5")]
    L7_5,
    /// Quantitative large-κ theorem with commuting integrals.
    #[serde(rename = "T6.9")]
    T6_9,
    /// Small-κ theorem.
    #[serde(rename = "T7.3")]
    T7_3,
    /// Variant with `κ` below its prescribed value.
    #[serde(rename = "T8.1")]
    T8_1,
}

impl LemmaId {
    pub const ALL: [LemmaId; 7] = [
        LemmaId::L3_1,
        LemmaId::L4_1,
        LemmaId::L6_6,
        LemmaId::L7_5,
        LemmaId::T6_9,
        LemmaId::T7_3,
        LemmaId::T8_1,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            LemmaId::L3_1 => "L3.1",
            LemmaId::L4_1 => "L4.1",
            LemmaId::L6_6 => "L6.6",
            LemmaId::L7_5 => "L7.5",
            LemmaId::T6_9 => "T6.9",
            LemmaId::T7_3 => "T7.3",
            LemmaId::T8_1 => "T8.1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.label().eq_ignore_ascii_case(s))
    }

    /// Scalar fields that must be supplied.
    pub fn required(&self) -> &'static [&'static str] {
        match self {
            LemmaId::L3_1 => &["epsilon", "T", "r2", "rho1", "rho2"],
            LemmaId::L4_1 => &["r1", "r2", "epsilon", "T", "m", "norm_A", "delta", "kappa", "C_Lambda"],
            LemmaId::L6_6 => &[
                "r1", "r2", "epsilon", "M", "I0_norm", "m", "norm_A", "T", "kappaLambda0", "action_offset",
            ],
            LemmaId::L7_5 => &[
                "r1", "r2", "r3", "epsilon", "M", "I0_norm", "kappa", "m", "norm_A", "T", "C_Lambda",
                "kappaLambda0", "action_offset",
            ],
            LemmaId::T6_9 => &["theta", "a", "n", "k", "kappa", "L", "M", "J_sum", "kappaLambda0"],
            LemmaId::T7_3 | LemmaId::T8_1 => &["theta", "a", "n", "kappa", "I_norm", "kappaLambda0", "C_E"],
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Named scalars plus optional polynomial data.
#[derive(Debug, Clone, Default)]
pub struct ConditionInputs {
    pub scalars: BTreeMap<String, f64>,
    /// Integrals `J_k` that must Poisson-commute with `Λ` (T6.9).
    pub integrals: Vec<Polynomial>,
    pub lambda: Option<Polynomial>,
}

impl ConditionInputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.scalars.insert(key.to_string(), value);
        self
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.scalars.insert(key.to_string(), value);
    }

    fn get(&self, key: &str) -> f64 {
        self.scalars[key]
    }

    fn opt(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "<=")]
    LessEq,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionLine {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub passed: bool,
    /// `rhs − lhs`; negative when the inequality fails.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub lemma: LemmaId,
    pub lines: Vec<ConditionLine>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionLine> {
        self.lines.iter().filter(|l| !l.passed)
    }

    pub fn line(&self, name: &str) -> Option<&ConditionLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "conditions for {}:", self.lemma)?;
        for l in &self.lines {
            let rel = match l.relation {
                Relation::Less => "<",
                Relation::LessEq => "<=",
            };
            writeln!(
                f,
                "  [{}] {:<28} {:>14.6e} {rel:>2} {:<14.6e} (margin {:.3e})",
                if l.passed { "pass" } else { "FAIL" },
                l.name,
                l.lhs,
                l.rhs,
                l.margin
            )?;
        }
        Ok(())
    }
}

/// Relative slack of `≤` comparisons.
pub const LE_SLACK: f64 = 1e-12;

struct Lines(Vec<ConditionLine>);

impl Lines {
    fn lt(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, lhs, Relation::Less, rhs, lhs < rhs);
    }

    /// Non-strict inequalities hold with equality for some recipe choices
    /// (e.g. `τ = π`), so they get a relative rounding allowance.
    fn le(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, lhs, Relation::LessEq, rhs, lhs <= rhs + LE_SLACK * rhs.abs());
    }

    fn push(&mut self, name: &str, lhs: f64, relation: Relation, rhs: f64, passed: bool) {
        self.0.push(ConditionLine {
            name: name.to_string(),
            lhs,
            relation,
            rhs,
            passed,
            margin: rhs - lhs,
        });
    }
}

/// Evaluates every inequality of `lemma` on the supplied inputs.
///
/// Optional inputs: `r3`, `rho3` (transverse terms of L3.1/L4.1 are dropped
/// when absent, which is the `N = 0` case), `t_star` and `omega0_norm` for the
/// time restriction of L6.6.
pub fn check_conditions(lemma: LemmaId, inputs: &ConditionInputs) -> Result<ConditionReport> {
    let missing: Vec<String> = lemma
        .required()
        .iter()
        .filter(|k| !inputs.scalars.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let g = |k: &str| inputs.get(k);
    let mut out = Lines(Vec::new());
    match lemma {
        LemmaId::L3_1 => {
            let mut mn = (g("rho1") / g("r2")).min(g("rho2"));
            if let Some(rho3) = inputs.opt("rho3") {
                mn = mn.min(rho3);
            }
            out.lt("step smallness", g("epsilon") * g("T"), mn * mn / 9.0);
        }
        LemmaId::L4_1 => {
            let (r1, r2, eps, t, m) = (g("r1"), g("r2"), g("epsilon"), g("T"), g("m"));
            out.lt("(iv) r1 < 2 r2^2", r1, 2.0 * r2 * r2);
            if let Some(r3) = inputs.opt("r3") {
                out.lt("(iv) r1 < 2 r2 r3", r1, 2.0 * r2 * r3);
            }
            out.lt("(v) m^2 eps T", m * m * eps * t, r1 * r1 / (81.0 * r2 * r2));
            let mut lhs = 54.0 * m * g("norm_A") * r1 * t
                + 324.0 * (g("delta") + 2.0 * eps) * m * m * r2 * r2 * t / (r1 * r1);
            if inputs.opt("r3").is_some() {
                lhs += 4.5 * g("kappa") * g("C_Lambda") * m * t;
            }
            out.le("(vi) combined step budget", lhs, 0.5);
        }
        LemmaId::L6_6 => {
            let (r1, r2, eps, mm, m, t) = (g("r1"), g("r2"), g("epsilon"), g("M"), g("m"), g("T"));
            let s = (mm * g("norm_A")).sqrt();
            let l1 = 0.25f64.min(1.0 / (5.0 * s));
            let l2 = (1.0 / 2592.0f64).min(1.0 / (120.0 * s));
            out.lt("r1 < r2^2/4", r1, r2 * r2 / 4.0);
            out.lt("eps M < r1^2/2200", eps * mm, r1 * r1 / 2200.0);
            out.lt("|I0| < r2^2/16", g("I0_norm"), r2 * r2 / 16.0);
            out.le("54 m |A| r1 T <= 1/4", 54.0 * m * g("norm_A") * r1 * t, 0.25);
            out.lt("m^2 eps T < l2 r1^2/r2^2", m * m * eps * t, l2 * r1 * r1 / (r2 * r2));
            out.le("kappa Lambda(0) <= r1^2/(360M)", g("kappaLambda0"), r1 * r1 / (360.0 * mm));
            out.le("|I(0)-I0| <= l1 r1", g("action_offset"), l1 * r1);
            if let (Some(ts), Some(w)) = (inputs.opt("t_star"), inputs.opt("omega0_norm")) {
                out.le("t* <= 3 2^m r1/(50|w0| r2^2)", ts, 3.0 * 2f64.powf(m) * r1 / (50.0 * w * r2 * r2));
            }
        }
        LemmaId::L7_5 => {
            let (r1, r2, r3, eps, mm) = (g("r1"), g("r2"), g("r3"), g("epsilon"), g("M"));
            let (kappa, m, t, na) = (g("kappa"), g("m"), g("T"), g("norm_A"));
            let s = (mm * na).sqrt();
            let l0 = 1.0 / 2200.0;
            let l1 = 0.25f64.min(1.0 / (20.0 * s));
            let l2 = (1.0 / 3888.0f64).min(1.0 / (480.0 * s));
            out.lt("r1 < r2^2/4", r1, r2 * r2 / 4.0);
            out.lt("r1 < 2 r2 r3", r1, 2.0 * r2 * r3);
            out.lt("eps M < l0 r1^2", eps * mm, l0 * r1 * r1);
            out.lt("|I0| < r2^2/16", g("I0_norm"), r2 * r2 / 16.0);
            out.le("r1^2 <= 4 kappa M r3^2", r1 * r1, 4.0 * kappa * mm * r3 * r3);
            out.le("54 m |A| r1 T <= 1/6", 54.0 * m * na * r1 * t, 1.0 / 6.0);
            out.lt("m^2 eps T < l2 r1^2/r2^2", m * m * eps * t, l2 * r1 * r1 / (r2 * r2));
            out.le("C_L kappa m T <= r1/(54 r2 r3)", g("C_Lambda") * kappa * m * t, r1 / (54.0 * r2 * r3));
            out.le("|I(0)-I0| <= l1 r1", g("action_offset"), l1 * r1);
            out.le("kappa Lambda(0) <= r1^2/(200M)", g("kappaLambda0"), r1 * r1 / (200.0 * mm));
        }
        LemmaId::T6_9 => {
            let (theta, a, n, k, kappa) = (g("theta"), g("a"), g("n"), g("k"), g("kappa"));
            let pi = std::f64::consts::PI;
            out.le(
                "sum |J_k(zeta(0))| <= th^4 e^(-k/th^a)/kappa",
                g("J_sum"),
                theta.powi(4) * (-k / theta.powf(a)).exp() / kappa,
            );
            out.le(
                "kappa Lambda(0) <= L^2 th^(4+2an)/((4pi)^2 360 M)",
                g("kappaLambda0"),
                g("L").powi(2) * theta.powf(4.0 + 2.0 * a * n) / ((4.0 * pi).powi(2) * 360.0 * g("M")),
            );
            if let Some(lambda) = &inputs.lambda {
                for (i, j) in inputs.integrals.iter().enumerate() {
                    let b = j.poisson_bracket(lambda)?;
                    out.le(&format!("{{J_{}, Lambda}} = 0 (max |coef|)", i + 1), b.max_abs_coefficient(), 0.0);
                }
            } else if !inputs.integrals.is_empty() {
                return Err(Error::MissingInputs(vec!["Lambda".into()]));
            }
        }
        LemmaId::T7_3 | LemmaId::T8_1 => {
            let (theta, a, n, kappa) = (g("theta"), g("a"), g("n"), g("kappa"));
            let nn = n.round() as usize;
            out.lt("0 < a", 0.0, a);
            out.lt("a < a_max(n)", a, max_admissible_a(nn));
            out.le("|I(0)| <= theta^2", g("I_norm"), theta * theta);
            out.le(
                "kappa Lambda(0) <= C_E theta^(4+2an)",
                g("kappaLambda0"),
                g("C_E") * theta.powf(4.0 + 2.0 * a * n),
            );
            let target = kappa_for(theta, a, nn);
            if lemma == LemmaId::T7_3 {
                out.le("|kappa - theta^(2+2a(2n-1))|", (kappa - target).abs(), 1e-12 * target);
            } else {
                out.lt("0 < kappa", 0.0, kappa);
                out.le("kappa <= theta^(2+2a(2n-1))", kappa, target * (1.0 + 1e-12));
            }
        }
    }
    Ok(ConditionReport {
        lemma,
        lines: out.0,
    })
}

/// Scalars of every lemma filled from a recipe, for the worst admissible
/// start: `|I(0)|₁ = θ²`, `|I(0) − I⁰|_∞ = C_A θ^{2+a}/τ` and
/// `κΛ(0) = C_E θ^{4+2an}`; `g` starts at zero (`δ = 0`).
pub fn recipe_condition_inputs(inputs: &RecipeInputs, recipe: &Recipe) -> ConditionInputs {
    let (theta, a, n) = (inputs.theta, inputs.a, inputs.n as f64);
    let offset = inputs.c_a * theta.powf(2.0 + a) / inputs.tau;
    let kl0 = recipe.c_e * theta.powf(4.0 + 2.0 * a * n);
    ConditionInputs::new()
        .with("theta", theta)
        .with("a", a)
        .with("n", n)
        .with("k", recipe.k)
        .with("L", recipe.big_l)
        .with("M", inputs.m_const)
        .with("C_E", recipe.c_e)
        .with("C_Lambda", inputs.c_lambda)
        .with("norm_A", inputs.norm_a)
        .with("kappa", recipe.kappa)
        .with("r1", recipe.r1)
        .with("r2", recipe.r2)
        .with("r3", recipe.r3)
        .with("rho1", recipe.r1 / recipe.m as f64)
        .with("rho2", recipe.r2 / recipe.m as f64)
        .with("rho3", recipe.r3 / recipe.m as f64)
        .with("epsilon", recipe.epsilon)
        .with("delta", 0.0)
        .with("T", recipe.t_period)
        .with("m", recipe.m as f64)
        .with("I_norm", theta * theta)
        .with("I0_norm", theta * theta + n * offset)
        .with("action_offset", offset)
        .with("kappaLambda0", kl0)
        .with("J_sum", 0.0)
}

/// Largest `θ` of `thetas` at which every inequality of `lemma` holds for the
/// recipe built from `template` (its `theta` is replaced), or `None`.
pub fn largest_passing_theta(lemma: LemmaId, template: &RecipeInputs, thetas: &[f64]) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for &theta in thetas {
        let inputs = RecipeInputs { theta, ..*template };
        let recipe = parameter_recipe(&inputs)?;
        if check_conditions(lemma, &recipe_condition_inputs(&inputs, &recipe))?.passed() {
            best = Some(best.map_or(theta, |b: f64| b.max(theta)));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{parse_polynomial, Ambient};

    fn l41_inputs(eps: f64, m: f64) -> ConditionInputs {
        ConditionInputs::new()
            .with("r1", 0.01)
            .with("r2", 0.2)
            .with("r3", 0.2)
            .with("epsilon", eps)
            .with("T", 6.0)
            .with("m", m)
            .with("norm_A", 0.1)
            .with("delta", 0.0)
            .with("kappa", 0.01)
            .with("C_Lambda", 1.0)
    }

    #[test]
    fn zero_perturbation_passes_epsilon_conditions() {
        let r = check_conditions(LemmaId::L4_1, &l41_inputs(0.0, 1.0)).unwrap();
        assert!(r.line("(v) m^2 eps T").unwrap().passed);
        let r = check_conditions(
            LemmaId::L3_1,
            &ConditionInputs::new()
                .with("epsilon", 0.0)
                .with("T", 1.0)
                .with("r2", 1.0)
                .with("rho1", 0.1)
                .with("rho2", 0.1),
        )
        .unwrap();
        assert!(r.passed());
    }

    #[test]
    fn too_many_steps_fail_with_margin() {
        let r = check_conditions(LemmaId::L4_1, &l41_inputs(1e-9, 1000.0)).unwrap();
        let vi = r.line("(vi) combined step budget").unwrap();
        assert!(!vi.passed && vi.margin < 0.0);
    }

    #[test]
    fn missing_inputs_are_listed() {
        let e = check_conditions(LemmaId::L7_5, &ConditionInputs::new().with("r1", 1.0)).unwrap_err();
        match e {
            Error::MissingInputs(v) => {
                assert!(v.contains(&"r2".to_string()) && v.contains(&"kappaLambda0".to_string()));
                assert!(!v.contains(&"r1".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn commuting_integrals() {
        let a = Ambient::new(1, 2);
        let lambda = parse_polynomial("0.5 * xi1^2 + 0.5 * eta1^2 + 0.5 * xi2^2 + 0.5 * eta2^2", a).unwrap();
        let mut inp = ConditionInputs::new()
            .with("theta", 0.1)
            .with("a", 0.1)
            .with("n", 1.0)
            .with("k", 0.0)
            .with("kappa", 1.0)
            .with("L", 1.0)
            .with("M", 1.0)
            .with("J_sum", 0.0)
            .with("kappaLambda0", 0.0);
        inp.lambda = Some(lambda);
        inp.integrals = vec![
            parse_polynomial("xi1 eta2 - xi2 eta1", a).unwrap(),
            parse_polynomial("xi1^2", a).unwrap(),
        ];
        let r = check_conditions(LemmaId::T6_9, &inp).unwrap();
        assert!(r.line("{J_1, Lambda} = 0 (max |coef|)").unwrap().passed);
        assert!(!r.line("{J_2, Lambda} = 0 (max |coef|)").unwrap().passed);
    }

    #[test]
    fn kappa_prescriptions() {
        let theta: f64 = 0.2;
        let base = ConditionInputs::new()
            .with("theta", theta)
            .with("a", 0.125)
            .with("n", 2.0)
            .with("I_norm", 0.04)
            .with("kappaLambda0", 0.0)
            .with("C_E", 0.05);
        let k = kappa_for(theta, 0.125, 2);
        assert!(check_conditions(LemmaId::T7_3, &base.clone().with("kappa", k)).unwrap().passed());
        assert!(!check_conditions(LemmaId::T7_3, &base.clone().with("kappa", k / 2.0)).unwrap().passed());
        assert!(check_conditions(LemmaId::T8_1, &base.clone().with("kappa", k / 2.0)).unwrap().passed());
        assert!(!check_conditions(LemmaId::T8_1, &base.with("kappa", 2.0 * k)).unwrap().passed());
    }

    #[test]
    fn recipe_feeds_every_lemma() {
        let inp = RecipeInputs {
            theta: 0.2,
            a: 0.125,
            n: 2,
            norm_a: 1.0,
            c0: 1.0,
            m_const: 1.0,
            c_lambda: 1.0,
            tau: std::f64::consts::PI,
            c_a: 1.0,
        };
        let rec = parameter_recipe(&inp).unwrap();
        let ci = recipe_condition_inputs(&inp, &rec);
        for lemma in LemmaId::ALL {
            check_conditions(lemma, &ci).unwrap();
        }
        assert!(check_conditions(LemmaId::T7_3, &ci).unwrap().passed());
    }
}

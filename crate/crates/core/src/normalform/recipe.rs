//! Explicit constants for the small-κ stability theorem: radii, step count,
//! perturbation size and the final drift constants `K`, `k`, `C_E`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of [`parameter_recipe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeInputs {
    pub theta: f64,
    pub a: f64,
    pub n: usize,
    /// `‖A‖`, operator norm with respect to the ℓ₁ norm on actions.
    pub norm_a: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "M")]
    pub m_const: f64,
    #[serde(rename = "C_Lambda")]
    pub c_lambda: f64,
    pub tau: f64,
    /// Bound on the inverse frequency map, `|I − I⁰|_∞ ≤ C_A θ^{2+a}/τ`.
    #[serde(rename = "C_A")]
    pub c_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recipe {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    #[serde(rename = "L")]
    pub big_l: f64,
    #[serde(rename = "P")]
    pub big_p: f64,
    pub delta: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// `δ ⌊θ^{−a}⌋` before rounding to an integer step count.
    pub m_raw: f64,
    pub m: usize,
    #[serde(rename = "T")]
    pub t_period: f64,
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    pub k: f64,
    #[serde(rename = "C_E")]
    pub c_e: f64,
    /// `θ^{2+2a(2n−1)}`, the coupling the theorem prescribes.
    pub kappa: f64,
}

/// Upper end of the admissible interval for `a`.
pub fn max_admissible_a(n: usize) -> f64 {
    let b = 1.0 / (1.0 + 3.0 * n as f64);
    if n > 1 {
        b.min(1.0 / (4.0 * (n as f64 - 1.0)))
    } else {
        b
    }
}

pub fn check_admissible_a(a: f64, n: usize) -> Result<()> {
    let hi = max_admissible_a(n);
    if a > 0.0 && a < hi {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "a = {a} is outside the admissible interval (0, {hi:.6})"
        )))
    }
}

/// `κ = θ^{2+2a(2n−1)}`.
pub fn kappa_for(theta: f64, a: f64, n: usize) -> f64 {
    theta.powf(2.0 + 2.0 * a * (2.0 * n as f64 - 1.0))
}

/// The transverse radius of the variant theorem, `r₃ = P θ^{2+a} / √κ`.
pub fn variant_r3(theta: f64, a: f64, big_p: f64, kappa: f64) -> f64 {
    big_p * theta.powf(2.0 + a) / kappa.sqrt()
}

pub fn parameter_recipe(inp: &RecipeInputs) -> Result<Recipe> {
    check_admissible_a(inp.a, inp.n)?;
    if !(inp.theta > 0.0 && inp.theta < 1.0) {
        return Err(Error::Precondition(format!("theta = {} must lie in (0, 1)", inp.theta)));
    }
    if !(inp.tau >= PI) {
        return Err(Error::Precondition(format!("tau = {} must be at least pi", inp.tau)));
    }
    for (name, v) in [
        ("norm_a", inp.norm_a),
        ("M", inp.m_const),
        ("C_Lambda", inp.c_lambda),
        ("C_A", inp.c_a),
        ("C0", inp.c0),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Precondition(format!("{name} must be positive (got {v})")));
        }
    }
    let (theta, a, n) = (inp.theta, inp.a, inp.n as f64);
    let s = (inp.m_const * inp.norm_a).sqrt();
    let l0 = 1.0 / 2200.0;
    let l1 = (0.25f64).min(1.0 / (20.0 * s));
    let l2 = (1.0 / 3888.0f64).min(1.0 / (480.0 * s));
    let big_l = n * inp.c_a / l1;
    let big_p = big_l / (2.0 * PI * inp.m_const.sqrt());
    let delta = (1.0 / (324.0 * inp.norm_a * big_l))
        .min(big_l / (6912.0 * PI * PI * inp.c_lambda * big_p));
    let c1 = (24f64.powi(5) + 24f64.powi(4) * big_p * big_p + 24.0 * big_p * big_p) * inp.c0;
    let r2 = 8.0 * theta;
    let r1 = big_l * theta.powf(2.0 + a) / inp.tau;
    let r3 = big_p * theta.powf(1.0 + 2.0 * a * (1.0 - n));
    let m_raw = delta * theta.powf(-a).floor();
    let m = (m_raw.floor() as usize).max(1);
    let big_k = (2.0 * big_l / PI).max(big_l * big_l / (16.0 * inp.m_const * PI * PI));
    Ok(Recipe {
        l0,
        l1,
        l2,
        big_l,
        big_p,
        delta,
        c1,
        r1,
        r2,
        r3,
        m_raw,
        m,
        t_period: inp.tau / (theta * theta),
        epsilon: c1 * theta.powi(5),
        big_k,
        k: std::f64::consts::LN_2 / 2.0 * delta,
        c_e: big_l * big_l / ((4.0 * PI).powi(2) * 200.0 * inp.m_const),
        kappa: kappa_for(theta, a, inp.n),
    })
}

/// Exponents `(p₁, q₁, p₂, q₂)` of the κ-form of the stability theorem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents4 {
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
}

pub fn exponents_from_a(a: f64, n: usize) -> Result<Exponents4> {
    if a != 0.0 {
        check_admissible_a(a, n)?;
    }
    let nf = n as f64;
    let d = 2.0 + 2.0 * a * (2.0 * nf - 1.0);
    let e = Exponents4 {
        p1: 2.0 / d,
        q1: (4.0 + 2.0 * a * nf) / d,
        p2: (2.0 + a) / d,
        q2: a / d,
    };
    debug_assert!(2.0 * e.p2 > 1.0);
    Ok(e)
}

//! Simultaneous Diophantine approximation and the construction of nearby
//! fully resonant (periodic) frequency vectors.
//!
//! Everything here is exhaustive search: at desk scale the denominators stay
//! below ~10⁶, so there is no need for continued fractions or lattice
//! reduction.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Best simultaneous approximation `q ω ≈ p` found by [`dirichlet_best`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletResult {
    pub q: u64,
    pub p: Vec<i64>,
    /// `|q ω − p|_∞`
    pub err: f64,
}

/// Exhaustive search over `q = 1..=Q` with `p = round(q ω)` (ties to even).
///
/// The error is the exact minimum over the search set; among equal errors
/// the smallest `q` wins. Lemma-level guarantee: `err ≤ Q^{−1/n}`.
pub fn dirichlet_best(omega: &[f64], big_q: u64) -> Result<DirichletResult> {
    if big_q == 0 {
        return Err(Error::Precondition("Q must be at least 1".into()));
    }
    if omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::Domain("omega must be finite".into()));
    }
    let mut best: Option<DirichletResult> = None;
    for q in 1..=big_q {
        let qf = q as f64;
        let mut err = 0.0f64;
        for &w in omega {
            let t = qf * w;
            err = err.max((t - t.round_ties_even()).abs());
        }
        if best.as_ref().is_none_or(|b| err < b.err) {
            best = Some(DirichletResult {
                q,
                p: omega.iter().map(|&w| (qf * w).round_ties_even() as i64).collect(),
                err,
            });
            if err == 0.0 {
                break;
            }
        }
    }
    Ok(best.expect("Q >= 1"))
}

/// A periodic frequency vector `ω⁰` with period `T`, `T ω⁰ ∈ 2πZⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicFrequency {
    pub omega0: Vec<f64>,
    #[serde(rename = "T")]
    pub t_period: f64,
    /// Denominator chosen by the Dirichlet search (1 when `n = 1`).
    pub q: u64,
    /// Integer vector `T ω⁰ / 2π`.
    pub winding: Vec<i64>,
}

/// Replaces `ω` by a nearby `T`-periodic frequency with `T ≤ 2πQ` and
/// `|ω − ω⁰|_∞ ≤ 2π / (T Q^{1/(n−1)})`.
///
/// The largest component (in absolute value, last index on ties) is kept
/// exactly; the others are rescaled by `⌊|ω_k|⌋/|ω_k|` and approximated by
/// rationals with a common denominator. For `n = 1` the frequency is already
/// periodic and is returned unchanged with `T = 2π⌊|ω|⌋/|ω|`.
pub fn periodic_frequency(omega: &[f64], big_q: u64) -> Result<PeriodicFrequency> {
    let n = omega.len();
    if n == 0 {
        return Err(Error::Precondition("omega must be non-empty".into()));
    }
    let (k, w) = omega
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, bw), (i, v)| {
            if v.abs() >= bw {
                (i, v.abs())
            } else {
                (bk, bw)
            }
        });
    if !(w > 1.0) || !w.is_finite() {
        return Err(Error::Precondition(format!(
            "|omega|_inf must exceed 1 (got {w})"
        )));
    }
    let sigma = omega[k].signum();
    let floor_w = w.floor();
    let two_pi = 2.0 * std::f64::consts::PI;

    if n == 1 {
        return Ok(PeriodicFrequency {
            omega0: omega.to_vec(),
            t_period: two_pi * floor_w / w,
            q: 1,
            winding: vec![(sigma * floor_w) as i64],
        });
    }

    let rest: Vec<f64> = (0..n)
        .filter(|&j| j != k)
        .map(|j| omega[j] * floor_w / w)
        .collect();
    let d = dirichlet_best(&rest, big_q)?;
    let qf = d.q as f64;
    let mut omega0 = Vec::with_capacity(n);
    let mut winding = Vec::with_capacity(n);
    let mut it = d.p.iter();
    for j in 0..n {
        if j == k {
            omega0.push(sigma * w);
            winding.push((sigma * qf * floor_w) as i64);
        } else {
            let p = *it.next().expect("n-1 numerators");
            omega0.push(w * p as f64 / (qf * floor_w));
            winding.push(p);
        }
    }
    Ok(PeriodicFrequency {
        omega0,
        t_period: two_pi * qf * floor_w / w,
        q: d.q,
        winding,
    })
}

/// Periodic torus near a given action vector, for `Ω(I) = α + A I`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicApproximation {
    #[serde(rename = "I0")]
    pub i0: Vec<f64>,
    pub tau: f64,
    pub omega0: Vec<f64>,
    /// `τ/θ²`, the period of `ω⁰`.
    #[serde(rename = "T")]
    pub t_period: f64,
    pub theta: f64,
    #[serde(rename = "Q")]
    pub big_q: u64,
    /// `C = 2π ‖A⁻¹‖_∞` in the action-error bound `|I − I⁰|_∞ ≤ C θ^{2+a}/τ`.
    pub c_bound: f64,
    /// Smallness threshold on `θ` under which the guarantees are proved.
    pub theta0: f64,
    pub warning: Option<String>,
}

/// `‖M‖_∞`, the maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Threshold on `θ` below which the periodic approximation is guaranteed,
/// using the half-way choice `δ = |α|_∞/2`.
pub fn theta_threshold(alpha: &[f64], a_mat: &DMatrix<f64>, a: f64) -> f64 {
    let amax = alpha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let na = inf_norm(a_mat);
    let from_a = if na > 0.0 {
        (amax / (4.0 * na)).sqrt()
    } else {
        f64::INFINITY
    };
    from_a
        .min((amax / 4.0).sqrt())
        .min(1.0)
        .min((amax / 8.0).powf(1.0 / (2.0 + a)))
}

/// Builds `(I⁰, τ, ω⁰)` with `ω⁰ = Ω(I⁰)` periodic of period `τ/θ²`,
/// where `θ² = |I_init|₁`.
pub fn approximate_periodic_orbit(
    alpha: &[f64],
    a_mat: &DMatrix<f64>,
    i_init: &[f64],
    a: f64,
) -> Result<PeriodicApproximation> {
    let n = alpha.len();
    if a_mat.nrows() != n || a_mat.ncols() != n {
        return Err(Error::dimension(
            format!("{n}x{n} matrix"),
            format!("{}x{}", a_mat.nrows(), a_mat.ncols()),
        ));
    }
    if i_init.len() != n {
        return Err(Error::dimension(n, i_init.len()));
    }
    let a_inv = a_mat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("A is not invertible".into()))?;
    let theta2: f64 = i_init.iter().map(|v| v.abs()).sum();
    if !(theta2 > 0.0) {
        return Err(Error::Domain("initial actions must be non-zero".into()));
    }
    let theta = theta2.sqrt();
    let theta0 = theta_threshold(alpha, a_mat, a);
    let warning = (theta > theta0).then(|| {
        let msg = format!("theta = {theta:.4e} exceeds the guaranteed threshold {theta0:.4e}");
        log::warn!("{msg}");
        msg
    });

    let i_vec = nalgebra::DVector::from_column_slice(i_init);
    let omega: Vec<f64> = (a_mat * &i_vec)
        .iter()
        .zip(alpha)
        .map(|(ai, al)| al + ai)
        .collect();
    let big_q = (theta.powf(-a * (n as f64 - 1.0))).floor() as u64 + 1;
    let omega_t: Vec<f64> = omega.iter().map(|w| w / theta2).collect();
    let pf = periodic_frequency(&omega_t, big_q)?;
    let omega0: Vec<f64> = pf.omega0.iter().map(|w| w * theta2).collect();
    let diff = nalgebra::DVector::from_iterator(n, omega0.iter().zip(alpha).map(|(w, al)| w - al));
    let i0: Vec<f64> = (&a_inv * diff).iter().copied().collect();
    Ok(PeriodicApproximation {
        i0,
        tau: pf.t_period,
        omega0,
        t_period: pf.t_period / theta2,
        theta,
        big_q,
        c_bound: 2.0 * std::f64::consts::PI * inf_norm(&a_inv),
        theta0,
        warning,
    })
}

/// Largest distance of the components of `v` from `2πZ`.
pub fn distance_to_2pi_lattice(v: &[f64]) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    v.iter()
        .map(|x| {
            let k = (x / two_pi).round();
            (x - k * two_pi).abs()
        })
        .fold(0.0, f64::max)
}

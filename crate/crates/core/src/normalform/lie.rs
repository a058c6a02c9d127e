//! Lie series for the time-one map of a polynomial generator.
//!
//! `F ∘ X_φ^1 = Σ_k ad_φ^k F / k!` with `ad_φ F = {F, φ}`. Each iterated
//! bracket is truncated at the degree cap before the next one is taken, which
//! is exact for the retained degrees whenever `φ` has no terms of degree
//! below two (brackets then never lower the degree).

use crate::error::Result;
use crate::polyalg::Polynomial;

/// Hard limit on the number of series terms; quadratic generators preserve
/// degree and would otherwise sum forever.
pub const MAX_SERIES_TERMS: usize = 200;

/// `Σ_{k ≥ k0} weight(k) · ad_φ^k F`, truncated at `degree_cap`.
///
/// Summation stops when an iterated bracket vanishes, when a weighted term
/// falls below round-off relative to the partial sum, or after
/// [`MAX_SERIES_TERMS`] terms.
pub fn lie_series<W>(
    f: &Polynomial,
    phi: &Polynomial,
    degree_cap: usize,
    k0: usize,
    weight: W,
) -> Result<Polynomial>
where
    W: Fn(usize) -> f64,
{
    f.ambient().check_same(&phi.ambient())?;
    let mut term = f.truncate(degree_cap);
    let mut sum = Polynomial::zero(f.ambient());
    if phi.is_zero() {
        return Ok(if k0 == 0 { term.scale(weight(0)) } else { sum });
    }
    for k in 0..MAX_SERIES_TERMS {
        if term.is_zero() {
            break;
        }
        if k >= k0 {
            let w = weight(k);
            let contribution = term.scale(w);
            let small = contribution.max_abs_coefficient()
                <= 1e-17 * sum.max_abs_coefficient();
            sum = &sum + &contribution;
            if small && k > k0 {
                break;
            }
        }
        term = term.poisson_bracket(phi)?.truncate(degree_cap);
    }
    Ok(sum)
}

fn inv_factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc / i as f64)
}

/// `F ∘ X_φ^1` as a Lie series truncated at `degree_cap`.
pub fn lie_transform(f: &Polynomial, phi: &Polynomial, degree_cap: usize) -> Result<Polynomial> {
    lie_series(f, phi, degree_cap, 0, inv_factorial)
}

/// `∫_0^1 {G, φ} ∘ X_φ^t dt = Σ_{k≥1} ad^k G / k!` (equivalently `G ∘ Φ − G`).
pub fn lie_increment(g: &Polynomial, phi: &Polynomial, degree_cap: usize) -> Result<Polynomial> {
    lie_series(g, phi, degree_cap, 1, inv_factorial)
}

/// `∫_0^1 t {D, φ} ∘ X_φ^t dt = Σ_{k≥1} ad^k D / ((k + 1)(k − 1)!)`.
pub fn lie_weighted_increment(d: &Polynomial, phi: &Polynomial, degree_cap: usize) -> Result<Polynomial> {
    lie_series(d, phi, degree_cap, 1, |k| inv_factorial(k - 1) / (k + 1) as f64)
}

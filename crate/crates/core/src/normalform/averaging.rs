//! Averaging over the periodic flow of `h = ⟨ω⁰, I⟩` and the homological
//! generator, computed exactly in complex coordinates.
//!
//! With `w_j = x_j + i y_j` the flow of `h` is `w_j ↦ e^{−iω⁰_j t} w_j`, so a
//! complex monomial `w^a w̄^b ζ^c` picks up the phase `e^{−iμt}` with
//! `μ = ⟨ω⁰, a − b⟩`. Averaging keeps the `μ = 0` part; the generator divides
//! every other monomial by `−iμ`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::diophantine::distance_to_2pi_lattice;
use crate::error::{Error, Result};
use crate::polyalg::{Ambient, Exponents, Polynomial, DROP_TOLERANCE};

/// Polynomial in `(w, w̄, ζ)`; exponent slots reuse the real layout with
/// `x_j ↔ w_j` and `y_j ↔ w̄_j`.
pub(crate) type ComplexTerms = BTreeMap<Exponents, Complex64>;

fn binomial(n: u16, k: u16) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Multiplies out per-pair expansions into full monomials.
fn cartesian(
    base: &Exponents,
    ambient: Ambient,
    coeff: Complex64,
    per_pair: &[Vec<((u16, u16), Complex64)>],
    out: &mut ComplexTerms,
) {
    let n = ambient.n;
    let mut stack: Vec<(Exponents, Complex64)> = vec![(base.clone(), coeff)];
    for (j, expansion) in per_pair.iter().enumerate() {
        let mut next = Vec::with_capacity(stack.len() * expansion.len());
        for (e, c) in &stack {
            for &((p, q), d) in expansion {
                let mut e2 = e.clone();
                e2[j] = p;
                e2[n + j] = q;
                next.push((e2, c * d));
            }
        }
        stack = next;
    }
    for (e, c) in stack {
        *out.entry(e).or_insert(Complex64::new(0.0, 0.0)) += c;
    }
}

/// Real `(x, y, ζ)` to complex `(w, w̄, ζ)` coefficients.
pub(crate) fn to_complex(f: &Polynomial) -> ComplexTerms {
    let amb = f.ambient();
    let n = amb.n;
    let mut out = ComplexTerms::new();
    for (e, c) in f.terms() {
        // x^a y^b = 2^{-a}(w + w̄)^a (2i)^{-b}(w − w̄)^b
        let per_pair: Vec<_> = (0..n)
            .map(|j| {
                let (a, b) = (e[j], e[n + j]);
                let scale = Complex64::new(0.5f64.powi((a + b) as i32), 0.0)
                    * Complex64::new(0.0, -1.0).powu(b as u32);
                let mut v = Vec::new();
                for k in 0..=a {
                    for l in 0..=b {
                        let sign = if (b - l) % 2 == 1 { -1.0 } else { 1.0 };
                        let coef = binomial(a, k) * binomial(b, l) * sign;
                        v.push(((k + l, (a - k) + (b - l)), scale * coef));
                    }
                }
                v
            })
            .collect();
        cartesian(e, amb, Complex64::new(c, 0.0), &per_pair, &mut out);
    }
    out
}

/// Complex coefficients back to a real polynomial; the imaginary parts of a
/// real-valued function cancel and are discarded.
pub(crate) fn to_real(ambient: Ambient, terms: &ComplexTerms, scale: f64) -> Polynomial {
    let n = ambient.n;
    let mut out = ComplexTerms::new();
    let i = Complex64::new(0.0, 1.0);
    for (e, c) in terms {
        // w^p w̄^q = (x + iy)^p (x − iy)^q
        let per_pair: Vec<_> = (0..n)
            .map(|j| {
                let (p, q) = (e[j], e[n + j]);
                let mut v = Vec::new();
                for k in 0..=p {
                    for l in 0..=q {
                        let coef = binomial(p, k) * binomial(q, l);
                        let phase = i.powu(k as u32) * (-i).powu(l as u32);
                        v.push(((p + q - k - l, k + l), phase * coef));
                    }
                }
                v
            })
            .collect();
        cartesian(e, ambient, *c, &per_pair, &mut out);
    }
    let cut = DROP_TOLERANCE * scale;
    let real = out
        .into_iter()
        .filter(|(_, c)| c.re.abs() > cut)
        .map(|(e, c)| (e, c.re));
    Polynomial::from_terms(ambient, real).expect("layout preserved")
}

/// `μ = ⟨ω⁰, a − b⟩` of a complex monomial.
pub(crate) fn frequency(e: &[u16], omega0: &[f64]) -> f64 {
    let n = omega0.len();
    (0..n)
        .map(|j| omega0[j] * (e[j] as f64 - e[n + j] as f64))
        .sum()
}

pub(crate) fn check_periodic(omega0: &[f64], t_period: f64, ambient: Ambient) -> Result<()> {
    if omega0.len() != ambient.n {
        return Err(Error::dimension(ambient.n, omega0.len()));
    }
    if !(t_period > 0.0) {
        return Err(Error::Precondition(format!("period T must be positive (got {t_period})")));
    }
    let tw: Vec<f64> = omega0.iter().map(|w| w * t_period).collect();
    let d = distance_to_2pi_lattice(&tw);
    if d > 1e-9 {
        return Err(Error::Precondition(format!(
            "T * omega0 is {d:.3e} away from 2*pi*Z^n; the flow of h is not T-periodic"
        )));
    }
    Ok(())
}

/// Whether `μ T ∈ 2πZ` rounds to zero.
fn is_resonant(mu: f64, t_period: f64) -> bool {
    (mu * t_period / (2.0 * std::f64::consts::PI)).round() == 0.0
}

/// The average of `f` over one period of the flow of `h`.
pub fn resonant_average(f: &Polynomial, omega0: &[f64], t_period: f64) -> Result<Polynomial> {
    check_periodic(omega0, t_period, f.ambient())?;
    let mut c = to_complex(f);
    c.retain(|e, _| is_resonant(frequency(e, omega0), t_period));
    Ok(to_real(f.ambient(), &c, f.max_abs_coefficient()))
}

/// Solution `φ` of `{φ, h} = f − f̄` given by the t-weighted average of
/// `f − f̄` along the flow of `h`.
pub fn homological_generator(f: &Polynomial, omega0: &[f64], t_period: f64) -> Result<Polynomial> {
    check_periodic(omega0, t_period, f.ambient())?;
    let mut c = to_complex(f);
    c.retain(|e, _| !is_resonant(frequency(e, omega0), t_period));
    let mut max_mag = 0.0f64;
    for (e, v) in c.iter_mut() {
        let mu = frequency(e, omega0);
        *v /= Complex64::new(0.0, -mu);
        max_mag = max_mag.max(v.norm());
    }
    Ok(to_real(f.ambient(), &c, max_mag.max(f.max_abs_coefficient())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::parse_polynomial;
    use std::f64::consts::PI;

    fn amb1() -> Ambient {
        Ambient::new(1, 0)
    }

    #[test]
    fn complex_round_trip() {
        let a = Ambient::new(2, 1);
        let f = parse_polynomial("1.5 * x1^3 y2 - 2 * x2 y1^2 xi1 + 0.25 * eta1^2 + y1", a).unwrap();
        let back = to_real(a, &to_complex(&f), f.max_abs_coefficient());
        let diff = &back - &f;
        assert!(diff.max_abs_coefficient() < 1e-14, "{diff}");
    }

    #[test]
    fn averages() {
        let a = amb1();
        let i1 = Polynomial::action(a, 0);
        assert_eq!(resonant_average(&i1, &[1.0], 2.0 * PI).unwrap(), i1);
        assert!(resonant_average(&Polynomial::var(a, 0), &[1.0], 2.0 * PI).unwrap().is_zero());
        let x2 = parse_polynomial("x1^2", a).unwrap();
        assert_eq!(resonant_average(&x2, &[1.0], 2.0 * PI).unwrap(), i1);
    }

    #[test]
    fn mixed_resonance() {
        // x1 y2 = Im-type combination of w1 w̄2 (μ = 0) and w1 w2 (μ = 2)
        let a = Ambient::new(2, 0);
        let f = parse_polynomial("x1 y2", a).unwrap();
        let avg = resonant_average(&f, &[1.0, 1.0], 2.0 * PI).unwrap();
        let expected = parse_polynomial("0.5 * x1 y2 - 0.5 * x2 y1", a).unwrap();
        assert!((&avg - &expected).max_abs_coefficient() < 1e-15, "{avg}");
    }

    #[test]
    fn generators() {
        let a = amb1();
        let x = Polynomial::var(a, 0);
        let y = Polynomial::var(a, 1);
        let phi = homological_generator(&x, &[1.0], 2.0 * PI).unwrap();
        assert!((&phi + &y).max_abs_coefficient() < 1e-15, "{phi}");
        let phi = homological_generator(&y, &[1.0], 2.0 * PI).unwrap();
        assert!((&phi - &x).max_abs_coefficient() < 1e-15, "{phi}");
        let i1 = Polynomial::action(a, 0);
        assert!(homological_generator(&i1, &[1.0], 2.0 * PI).unwrap().is_zero());
    }

    #[test]
    fn rejects_non_periodic_frequency() {
        let a = amb1();
        let r = resonant_average(&Polynomial::var(a, 0), &[2f64.sqrt()], 2.0 * PI);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}

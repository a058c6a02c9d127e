//! The explicit rotation flow of `h = ⟨ω⁰, I⟩` and the trapezoidal
//! discretisation of the period average, used as an independent oracle for
//! the exact averaging in complex coordinates.

use serde::Serialize;

use super::averaging::{check_periodic, frequency, to_complex};
use crate::error::{Error, Result};
use crate::hamiltonian::PhasePoint;
use crate::polyalg::{Ambient, Polynomial};

/// `z_j ↦ R_j(t) z_j` with `R_j = [[cos ω⁰_j t, sin ω⁰_j t], [−sin ω⁰_j t, cos ω⁰_j t]]`;
/// `ζ` is left unchanged.
pub fn exact_flow_h(pt: &PhasePoint, omega0: &[f64], t: f64) -> Result<PhasePoint> {
    let n = pt.z.len() / 2;
    if omega0.len() != n {
        return Err(Error::dimension(n, omega0.len()));
    }
    let mut z = pt.z.clone();
    for j in 0..n {
        let (s, c) = (omega0[j] * t).sin_cos();
        let (x, y) = (pt.z[j], pt.z[n + j]);
        z[j] = c * x + s * y;
        z[n + j] = -s * x + c * y;
    }
    Ok(PhasePoint {
        z,
        zeta: pt.zeta.clone(),
    })
}

/// Pull-back `f ∘ X_h^t` as a polynomial (linear substitution).
pub fn pull_back_by_rotation(f: &Polynomial, omega0: &[f64], t: f64) -> Polynomial {
    let amb = f.ambient();
    let n = amb.n;
    // Image of each coordinate function under the rotation.
    let images: Vec<Polynomial> = (0..amb.nvars())
        .map(|v| {
            if v < n {
                let (s, c) = (omega0[v] * t).sin_cos();
                &Polynomial::var(amb, amb.x(v)).scale(c) + &Polynomial::var(amb, amb.y(v)).scale(s)
            } else if v < 2 * n {
                let j = v - n;
                let (s, c) = (omega0[j] * t).sin_cos();
                &Polynomial::var(amb, amb.x(j)).scale(-s) + &Polynomial::var(amb, amb.y(j)).scale(c)
            } else {
                Polynomial::var(amb, v)
            }
        })
        .collect();
    substitute(f, &images)
}

/// `f(images[0], images[1], ...)`, caching powers of each image.
pub(crate) fn substitute(f: &Polynomial, images: &[Polynomial]) -> Polynomial {
    let amb = f.ambient();
    let mut powers: Vec<Vec<Polynomial>> = images
        .iter()
        .map(|p| vec![Polynomial::constant(amb, 1.0), p.clone()])
        .collect();
    let mut acc = Polynomial::zero(amb);
    for (e, c) in f.terms() {
        let mut term = Polynomial::constant(amb, c);
        for (v, &k) in e.iter().enumerate() {
            if k == 0 {
                continue;
            }
            while powers[v].len() <= k as usize {
                let next = &powers[v][powers[v].len() - 1] * &images[v];
                powers[v].push(next);
            }
            term = &term * &powers[v][k as usize];
        }
        acc = &acc + &term;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureAverage {
    pub average: Polynomial,
    pub nodes: usize,
    /// Smallest node count for which the rule is exact on `f`.
    pub required_nodes: usize,
    pub warning: Option<String>,
}

/// Largest `|μ| T / 2π` over the complex monomials of `f`.
fn max_winding(f: &Polynomial, omega0: &[f64], t_period: f64) -> f64 {
    to_complex(f)
        .keys()
        .map(|e| (frequency(e, omega0) * t_period / (2.0 * std::f64::consts::PI)).abs())
        .fold(0.0, f64::max)
}

/// Equally spaced (trapezoidal) average of `f ∘ X_h^{t_k}` over one period.
pub fn quadrature_average(
    f: &Polynomial,
    omega0: &[f64],
    t_period: f64,
    nodes: usize,
) -> Result<QuadratureAverage> {
    check_periodic(omega0, t_period, f.ambient())?;
    if nodes == 0 {
        return Err(Error::Precondition("at least one quadrature node is needed".into()));
    }
    let required = 2 * max_winding(f, omega0, t_period).round() as usize + 1;
    let warning = (nodes < required).then(|| {
        let msg = format!("{nodes} nodes cannot resolve frequencies up to winding {}; need {required}", required / 2);
        log::warn!("{msg}");
        msg
    });
    let amb: Ambient = f.ambient();
    let mut acc = Polynomial::zero(amb);
    for k in 0..nodes {
        let t = t_period * k as f64 / nodes as f64;
        acc = &acc + &pull_back_by_rotation(f, omega0, t);
    }
    let avg = acc.scale(1.0 / nodes as f64);
    // Remove quadrature round-off at the level of the input coefficients.
    let cut = 1e-12 * f.max_abs_coefficient();
    let average = avg.filter_terms(|_, c| c.abs() > cut);
    Ok(QuadratureAverage {
        average,
        nodes,
        required_nodes: required,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalform::resonant_average;
    use crate::polyalg::parse_polynomial;
    use std::f64::consts::PI;

    #[test]
    fn flow_examples() {
        let p = PhasePoint::new(vec![1.0, 0.0], vec![]).unwrap();
        assert_eq!(exact_flow_h(&p, &[1.0], 0.0).unwrap(), p);
        let q = exact_flow_h(&p, &[1.0], PI / 2.0).unwrap();
        assert!(q.z[0].abs() < 1e-15 && (q.z[1] + 1.0).abs() < 1e-15);

        let p = PhasePoint::new(vec![0.3, -0.4, 0.7, 0.1], vec![0.5, 0.5]).unwrap();
        let w = [2.0, 3.0];
        let r = exact_flow_h(&p, &w, 2.0 * PI).unwrap();
        for (a, b) in r.z.iter().zip(&p.z) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(r.zeta, p.zeta);
    }

    #[test]
    fn quadrature_examples() {
        let a = Ambient::new(1, 0);
        let i1 = Polynomial::action(a, 0);
        let q = quadrature_average(&i1, &[1.0], 2.0 * PI, 8).unwrap();
        assert!((&q.average - &i1).max_abs_coefficient() < 1e-12);

        let x2 = parse_polynomial("x1^2", a).unwrap();
        let q = quadrature_average(&x2, &[1.0], 2.0 * PI, 8).unwrap();
        assert!((&q.average - &i1).max_abs_coefficient() < 1e-10);

        let b = Ambient::new(2, 0);
        let f = parse_polynomial("x1 y2", b).unwrap();
        let q = quadrature_average(&f, &[1.0, 1.0], 2.0 * PI, 8).unwrap();
        let exact = resonant_average(&f, &[1.0, 1.0], 2.0 * PI).unwrap();
        assert!((&q.average - &exact).max_abs_coefficient() < 1e-10);
        assert!(q.warning.is_none());
    }

    #[test]
    fn too_few_nodes_warns() {
        let a = Ambient::new(1, 0);
        let f = parse_polynomial("x1^4", a).unwrap();
        let q = quadrature_average(&f, &[1.0], 2.0 * PI, 3).unwrap();
        assert_eq!(q.required_nodes, 9);
        assert!(q.warning.is_some());
    }

    #[test]
    fn pull_back_matches_pointwise_flow() {
        let a = Ambient::new(2, 1);
        let f = parse_polynomial("x1^2 y2 + 3 * y1 xi1 eta1 - 0.5 * x2^3", a).unwrap();
        let w = [1.0, 2.0];
        let t = 0.37;
        let g = pull_back_by_rotation(&f, &w, t);
        let p = PhasePoint::new(vec![0.3, -0.2, 0.5, 0.9], vec![0.4, -0.1]).unwrap();
        let moved = exact_flow_h(&p, &w, t).unwrap();
        let lhs = g.evaluate(&p.coords()).unwrap();
        let rhs = f.evaluate(&moved.coords()).unwrap();
        assert!((lhs - rhs).abs() < 1e-13);
    }
}

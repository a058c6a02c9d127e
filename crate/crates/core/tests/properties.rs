//! Algebraic invariants on random polynomials.

use std::f64::consts::PI;

use proptest::prelude::*;

use neklab_core::experiments::fit_loglog;
use neklab_core::integrator::time_one_map;
use neklab_core::normalform::{homological_generator, lie_transform, resonant_average};
use neklab_core::{parse_polynomial, Ambient, PhasePoint, Polynomial};

const AMB: Ambient = Ambient { n: 2, big_n: 1 };

/// Sparse polynomials with dyadic coefficients, so most products are exact.
fn poly(max_degree: u16, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    let nv = AMB.nvars();
    let term = (prop::collection::vec(0..=max_degree, nv), -16i32..=16);
    prop::collection::vec(term, 0..=max_terms).prop_map(move |terms| {
        let items = terms.into_iter().map(|(mut e, c)| {
            // rescale the exponent vector into the degree budget
            while e.iter().sum::<u16>() > max_degree {
                let k = e.iter().position(|v| *v > 0).expect("positive sum");
                e[k] -= 1;
            }
            (e, c as f64 / 8.0)
        });
        Polynomial::from_terms(AMB, items.collect::<Vec<_>>()).expect("valid exponents")
    })
}

fn small(p: &Polynomial, scale: f64) -> bool {
    p.max_abs_coefficient() <= 1e-12 * scale.max(1.0)
}

fn h_of(omega0: &[f64]) -> Polynomial {
    omega0
        .iter()
        .enumerate()
        .fold(Polynomial::zero(AMB), |acc, (j, w)| &acc + &Polynomial::action(AMB, j).scale(*w))
}

fn frequency() -> impl Strategy<Value = (Vec<f64>, f64)> {
    prop_oneof![
        Just((vec![1.0, 2.0], 2.0 * PI)),
        Just((vec![1.0, 1.0], 2.0 * PI)),
        Just((vec![2.0, 3.0], 2.0 * PI)),
        Just((vec![1.5, 0.5], 4.0 * PI)),
    ]
}

fn b(p: &Polynomial, q: &Polynomial) -> Polynomial {
    p.poisson_bracket(q).expect("same ambient")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_is_antisymmetric(f in poly(4, 6), g in poly(4, 6)) {
        let s = &b(&f, &g) + &b(&g, &f);
        prop_assert!(small(&s, b(&f, &g).max_abs_coefficient()), "{s}");
    }

    #[test]
    fn jacobi_identity(f in poly(3, 4), g in poly(3, 4), h in poly(3, 4)) {
        let parts = [b(&f, &b(&g, &h)), b(&g, &b(&h, &f)), b(&h, &b(&f, &g))];
        let scale = parts.iter().map(Polynomial::max_abs_coefficient).fold(0.0, f64::max);
        let s = &(&parts[0] + &parts[1]) + &parts[2];
        prop_assert!(small(&s, scale), "{s}");
    }

    #[test]
    fn leibniz_rule(f in poly(3, 4), g in poly(3, 4), h in poly(3, 4)) {
        let lhs = b(&(&f * &g), &h);
        let rhs = &(&f * &b(&g, &h)) + &(&g * &b(&f, &h));
        prop_assert!(small(&(&lhs - &rhs), lhs.max_abs_coefficient()));
    }

    #[test]
    fn majorant_is_subadditive_and_bounds_values(
        f in poly(5, 8),
        g in poly(5, 8),
        r2 in 0.1f64..2.0,
        r3 in 0.1f64..2.0,
        unit in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let nf = f.majorant_norm(r2, r3).unwrap();
        let ng = g.majorant_norm(r2, r3).unwrap();
        prop_assert!((&f + &g).majorant_norm(r2, r3).unwrap() <= (nf + ng) * (1.0 + 1e-12));
        let pt: Vec<f64> = unit.iter().enumerate().map(|(i, u)| u * if AMB.is_core(i) { r2 } else { r3 }).collect();
        prop_assert!(f.evaluate(&pt).unwrap().abs() <= nf * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn text_round_trip(f in poly(6, 10), s in -20i32..20) {
        let f = f.scale(1.1f64.powi(s));
        let back = parse_polynomial(&f.to_string(), AMB).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn averaging_and_homological_equation((omega0, t) in frequency(), f in poly(6, 12)) {
        let h = h_of(&omega0);
        let fbar = resonant_average(&f, &omega0, t).unwrap();
        let phi = homological_generator(&f, &omega0, t).unwrap();
        let scale = f.max_abs_coefficient();
        prop_assert!(small(&b(&fbar, &h), scale));
        prop_assert!(small(&(&b(&phi, &h) - &(&f - &fbar)), scale));
        // averaging is idempotent and removes exactly the resonant part
        prop_assert!(small(&(&resonant_average(&fbar, &omega0, t).unwrap() - &fbar), scale));
        prop_assert!(homological_generator(&fbar, &omega0, t).unwrap().is_zero());
    }

    #[test]
    fn generator_norm_bound((omega0, t) in frequency(), f in poly(6, 12), r2 in 0.1f64..2.0, r3 in 0.1f64..2.0) {
        // The flow of h rotates each (x_j, y_j) pair, which can grow a real
        // majorant by at most a factor √2 per core variable.
        let phi = homological_generator(&f, &omega0, t).unwrap();
        let nf = f.majorant_norm(std::f64::consts::SQRT_2 * r2, r3).unwrap();
        prop_assert!(phi.majorant_norm(r2, r3).unwrap() <= t * nf * (1.0 + 1e-12));
        prop_assert!(resonant_average(&f, &omega0, t).unwrap().majorant_norm(r2, r3).unwrap() <= nf * (1.0 + 1e-12));
    }
}

/// `|F(X_φ¹(s·p)) − lie_transform(F, φ, D)(s·p)| = O(s^{D+1})`.
#[test]
fn lie_truncation_order() {
    let amb = Ambient::new(2, 1);
    let phi = parse_polynomial("0.3 * x1^2 y1 - 0.2 * x1 y2^2 + 0.25 * y1 x2 xi1 + 0.1 * eta1^3", amb).unwrap();
    let f = parse_polynomial("0.5 * x1^2 + 0.5 * y1^2 + x2 y2 + 0.7 * xi1 eta1 + 0.4 * x1 x2 y2", amb).unwrap();
    let base = [0.8, -0.5, 0.6, 0.9, -0.7, 0.4];
    let scales: Vec<f64> = (0..5).map(|k| 10f64.powf(-1.0 - 0.5 * k as f64)).collect();
    for cap in [3, 4, 5] {
        let series = lie_transform(&f, &phi, cap).unwrap();
        let errors: Vec<f64> = scales
            .iter()
            .map(|s| {
                let coords: Vec<f64> = base.iter().map(|v| v * s).collect();
                let pt = PhasePoint::from_coords(amb, &coords).unwrap();
                let image = time_one_map(&phi, &pt, 1.0 / 1024.0).unwrap();
                (f.evaluate(&image.coords()).unwrap() - series.evaluate(&coords).unwrap()).abs()
            })
            .collect();
        let slope = fit_loglog(&scales, &errors);
        assert!(slope >= cap as f64 + 0.5, "cap {cap}: slope {slope}, errors {errors:?}");
    }
}

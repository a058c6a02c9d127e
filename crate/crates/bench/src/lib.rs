//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use neklab_core::experiments::{desk_system, DeskParams};
use neklab_core::normalform::AveragingContext;
use neklab_core::{Ambient, Polynomial, SystemSpec};

/// Dense polynomial in `amb` with every monomial of degree `1..=degree`,
/// coefficients from a fixed arithmetic pattern.
pub fn dense_polynomial(amb: Ambient, degree: u16) -> Polynomial {
    let nv = amb.nvars();
    let mut terms = Vec::new();
    let mut e = vec![0u16; nv];
    let mut k = 0usize;
    fill(&mut e, 0, degree, &mut |ex| {
        let d: u16 = ex.iter().sum();
        if d > 0 {
            k += 1;
            terms.push((ex.to_vec(), ((k * 37) % 19) as f64 / 19.0 - 0.5));
        }
    });
    Polynomial::from_terms(amb, terms).expect("valid exponents")
}

fn fill(e: &mut Vec<u16>, pos: usize, left: u16, visit: &mut impl FnMut(&[u16])) {
    if pos == e.len() {
        visit(e);
        return;
    }
    for v in 0..=left {
        e[pos] = v;
        fill(e, pos + 1, left - v, visit);
    }
    e[pos] = 0;
}

pub fn desk(big_n: usize) -> SystemSpec {
    desk_system(big_n, 0.01, DeskParams::default()).expect("desk system")
}

/// The one-step setting of the desk system: `ω⁰ = (1, 2)`, `T = 2π`, `A = Id`.
pub fn desk_context(spec: &SystemSpec) -> AveragingContext {
    AveragingContext::new(
        spec.ambient,
        vec![1.0, 2.0],
        2.0 * std::f64::consts::PI,
        vec![0.0, 0.0],
        DMatrix::identity(2, 2),
        spec.kappa,
    )
    .expect("periodic frequency")
    .with_radii(0.125, 0.5, 0.5)
    .with_c_lambda(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_polynomial_counts() {
        // monomials of degree 1..=3 in 4 variables: C(7,4) − 1
        let p = dense_polynomial(Ambient::new(2, 0), 3);
        assert_eq!(p.len(), 34);
        assert_eq!(p.degree(), 3);
    }
}

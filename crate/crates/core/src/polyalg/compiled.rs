//! Flat, allocation-free evaluation of polynomial vectors.
//!
//! The integrator evaluates the same gradient millions of times; walking a
//! `BTreeMap` of exponent vectors each time is far too slow. A
//! [`CompiledVector`] stores every component as a run of `(coefficient,
//! factors)` records and shares one table of coordinate powers per call.

use super::Polynomial;

#[derive(Debug, Clone)]
pub struct CompiledVector {
    nvars: usize,
    stride: usize,
    coefs: Vec<f64>,
    /// Start of each term's factor run in `factors` (one extra sentinel).
    term_start: Vec<u32>,
    /// Flat `(variable, power)` pairs; powers are always ≥ 1.
    factors: Vec<(u16, u16)>,
    /// Start of each component's term run (one extra sentinel).
    comp_start: Vec<u32>,
}

impl CompiledVector {
    pub fn new(components: &[Polynomial], nvars: usize) -> Self {
        let mut max_pow = 1usize;
        let mut coefs = Vec::new();
        let mut term_start = vec![0u32];
        let mut factors = Vec::new();
        let mut comp_start = vec![0u32];
        for p in components {
            debug_assert_eq!(p.ambient().nvars(), nvars);
            for (e, c) in p.terms() {
                coefs.push(c);
                for (v, &k) in e.iter().enumerate() {
                    if k > 0 {
                        factors.push((v as u16, k));
                        max_pow = max_pow.max(k as usize);
                    }
                }
                term_start.push(factors.len() as u32);
            }
            comp_start.push(coefs.len() as u32);
        }
        Self {
            nvars,
            stride: max_pow + 1,
            coefs,
            term_start,
            factors,
            comp_start,
        }
    }

    pub fn len(&self) -> usize {
        self.comp_start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Size of the scratch buffer [`Self::eval_with`] expects.
    pub fn scratch_len(&self) -> usize {
        self.nvars * self.stride
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let mut scratch = vec![0.0; self.scratch_len()];
        self.eval_with(x, out, &mut scratch);
    }

    /// Evaluates every component at `x` into `out`, using `pows` as scratch.
    pub fn eval_with(&self, x: &[f64], out: &mut [f64], pows: &mut [f64]) {
        let s = self.stride;
        for (v, &xv) in x.iter().enumerate().take(self.nvars) {
            let row = &mut pows[v * s..(v + 1) * s];
            row[0] = 1.0;
            for k in 1..s {
                row[k] = row[k - 1] * xv;
            }
        }
        for (c, o) in out.iter_mut().enumerate().take(self.len()) {
            let (t0, t1) = (self.comp_start[c] as usize, self.comp_start[c + 1] as usize);
            let mut acc = 0.0;
            for t in t0..t1 {
                let (f0, f1) = (self.term_start[t] as usize, self.term_start[t + 1] as usize);
                let mut m = self.coefs[t];
                for &(v, k) in &self.factors[f0..f1] {
                    m *= pows[v as usize * s + k as usize];
                }
                acc += m;
            }
            *o = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{parse_polynomial, Ambient};

    #[test]
    fn matches_direct_evaluation() {
        let a = Ambient::new(2, 1);
        let ps = [
            parse_polynomial("1.5 * x1^3 y2 - 2 * xi1 eta1^2 + 0.25", a).unwrap(),
            Polynomial::zero(a),
            parse_polynomial("x2^5", a).unwrap(),
        ];
        let c = CompiledVector::new(&ps, a.nvars());
        let x = [0.3, -0.7, 1.1, 0.2, -0.4, 0.9];
        let mut out = [0.0; 3];
        c.eval(&x, &mut out);
        for (p, o) in ps.iter().zip(out) {
            let direct = p.evaluate(&x).unwrap();
            assert!((direct - o).abs() <= 1e-14 * direct.abs().max(1.0));
        }
    }
}

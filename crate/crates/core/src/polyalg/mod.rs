//! Sparse real polynomials in the phase variables `(x, y, ξ, η)`.
//!
//! Every function symbol the normal-form machinery manipulates (the
//! integrable part, the perturbation, the constraining potential and the
//! generators) is a finite polynomial over a fixed ambient space of
//! `n` core pairs and `N` transverse pairs. Variables are ordered in four
//! blocks: `x_1..x_n, y_1..y_n, ξ_1..ξ_N, η_1..η_N`.
//!
//! Arithmetic is done in `f64`. After each operation coefficients smaller
//! than [`DROP_TOLERANCE`] times the largest operand coefficient are removed,
//! which keeps cancellations (for instance `{f̄, h}`) exactly zero.

mod compiled;
mod text;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use compiled::CompiledVector;
pub use text::parse_polynomial;

/// Relative size below which a coefficient produced by an operation is dropped.
pub const DROP_TOLERANCE: f64 = 1e-14;

/// Exponent vector of a monomial in the fixed variable order.
pub type Exponents = Vec<u16>;

/// The phase space `R^{2n} x R^{2N}` a polynomial lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ambient {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
}

impl Ambient {
    pub fn new(n: usize, big_n: usize) -> Self {
        Self { n, big_n }
    }

    /// Total number of variables, `2n + 2N`.
    pub fn nvars(&self) -> usize {
        2 * self.n + 2 * self.big_n
    }

    pub fn x(&self, j: usize) -> usize {
        debug_assert!(j < self.n);
        j
    }

    pub fn y(&self, j: usize) -> usize {
        debug_assert!(j < self.n);
        self.n + j
    }

    pub fn xi(&self, k: usize) -> usize {
        debug_assert!(k < self.big_n);
        2 * self.n + k
    }

    pub fn eta(&self, k: usize) -> usize {
        debug_assert!(k < self.big_n);
        2 * self.n + self.big_n + k
    }

    /// Is variable `v` one of the core coordinates `z`?
    pub fn is_core(&self, v: usize) -> bool {
        v < 2 * self.n
    }

    /// Conjugate pairs `(q, p)` in the fixed order, core pairs first.
    pub fn conjugate_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n)
            .map(move |j| (self.x(j), self.y(j)))
            .chain((0..self.big_n).map(move |k| (self.xi(k), self.eta(k))))
    }

    pub fn var_name(&self, v: usize) -> String {
        let n = self.n;
        let nn = self.big_n;
        if v < n {
            format!("x{}", v + 1)
        } else if v < 2 * n {
            format!("y{}", v - n + 1)
        } else if v < 2 * n + nn {
            format!("xi{}", v - 2 * n + 1)
        } else {
            format!("eta{}", v - 2 * n - nn + 1)
        }
    }

    pub(crate) fn check_same(&self, other: &Ambient) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::dimension(
                format!("ambient (n={}, N={})", self.n, self.big_n),
                format!("ambient (n={}, N={})", other.n, other.big_n),
            ))
        }
    }
}

/// One stored term of a [`Polynomial`].
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub exponents: Exponents,
    pub coefficient: f64,
}

/// Arithmetic operation selector for [`arith`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Scale(f64),
}

/// Sparse polynomial with real coefficients in canonical form: no duplicate
/// exponent keys and no zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    ambient: Ambient,
    terms: BTreeMap<Exponents, f64>,
}

impl Polynomial {
    pub fn zero(ambient: Ambient) -> Self {
        Self {
            ambient,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(ambient: Ambient, c: f64) -> Self {
        let mut p = Self::zero(ambient);
        if c != 0.0 {
            p.terms.insert(vec![0; ambient.nvars()], c);
        }
        p
    }

    /// The coordinate function of variable `v`.
    pub fn var(ambient: Ambient, v: usize) -> Self {
        let mut e = vec![0; ambient.nvars()];
        e[v] = 1;
        Self::monomial(ambient, e, 1.0)
    }

    pub fn monomial(ambient: Ambient, exponents: Exponents, coefficient: f64) -> Self {
        assert_eq!(exponents.len(), ambient.nvars(), "exponent length");
        let mut p = Self::zero(ambient);
        if coefficient != 0.0 {
            p.terms.insert(exponents, coefficient);
        }
        p
    }

    /// Builds a polynomial from possibly repeated terms; repeated keys are summed.
    pub fn from_terms<I>(ambient: Ambient, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exponents, f64)>,
    {
        let mut acc: BTreeMap<Exponents, f64> = BTreeMap::new();
        for (e, c) in terms {
            if e.len() != ambient.nvars() {
                return Err(Error::dimension(ambient.nvars(), e.len()));
            }
            *acc.entry(e).or_insert(0.0) += c;
        }
        acc.retain(|_, c| *c != 0.0);
        Ok(Self { ambient, terms: acc })
    }

    /// Action `I_j = (x_j^2 + y_j^2)/2`.
    pub fn action(ambient: Ambient, j: usize) -> Self {
        let mut ex = vec![0; ambient.nvars()];
        ex[ambient.x(j)] = 2;
        let mut ey = vec![0; ambient.nvars()];
        ey[ambient.y(j)] = 2;
        Self::from_terms(ambient, [(ex, 0.5), (ey, 0.5)]).expect("valid exponents")
    }

    /// `|ζ|^2 = Σ_k (ξ_k^2 + η_k^2)`.
    pub fn transverse_norm_sq(ambient: Ambient) -> Self {
        let terms = (0..ambient.big_n).flat_map(|k| {
            let mut a = vec![0; ambient.nvars()];
            a[ambient.xi(k)] = 2;
            let mut b = vec![0; ambient.nvars()];
            b[ambient.eta(k)] = 2;
            [(a, 1.0), (b, 1.0)]
        });
        Self::from_terms(ambient, terms).expect("valid exponents")
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// Alias of [`Polynomial::is_zero`].
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, f64)> + '_ {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms
            .iter()
            .map(|(e, c)| Monomial {
                exponents: e.clone(),
                coefficient: *c,
            })
            .collect()
    }

    pub fn coefficient(&self, exponents: &[u16]) -> f64 {
        self.terms.get(exponents).copied().unwrap_or(0.0)
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| total_degree(e))
            .max()
            .unwrap_or(0)
    }

    /// Lowest total degree among stored terms (0 for the zero polynomial).
    pub fn min_degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| total_degree(e))
            .min()
            .unwrap_or(0)
    }

    /// Split of a monomial's degree into core and transverse parts.
    pub fn split_degree(&self, e: &[u16]) -> (usize, usize) {
        let core = 2 * self.ambient.n;
        let dz = e[..core].iter().map(|&k| k as usize).sum();
        let dzeta = e[core..].iter().map(|&k| k as usize).sum();
        (dz, dzeta)
    }

    /// True when no term involves the core variables `z`.
    pub fn depends_only_on_transverse(&self) -> bool {
        let core = 2 * self.ambient.n;
        self.terms.keys().all(|e| e[..core].iter().all(|&k| k == 0))
    }

    /// True when no term involves the transverse variables `ζ`.
    pub fn depends_only_on_core(&self) -> bool {
        let core = 2 * self.ambient.n;
        self.terms.keys().all(|e| e[core..].iter().all(|&k| k == 0))
    }

    /// Drops every term of total degree above `max_degree`.
    pub fn truncate(&self, max_degree: usize) -> Self {
        Self {
            ambient: self.ambient,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| total_degree(e) <= max_degree)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    /// Keeps the terms selected by `keep`.
    pub fn filter_terms<F>(&self, mut keep: F) -> Self
    where
        F: FnMut(&[u16], f64) -> bool,
    {
        Self {
            ambient: self.ambient,
            terms: self
                .terms
                .iter()
                .filter(|(e, c)| keep(e, **c))
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero(self.ambient);
        }
        let mut p = Self {
            ambient: self.ambient,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        };
        p.terms.retain(|_, c| *c != 0.0);
        p
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Self, sign: f64) -> Result<Self> {
        self.ambient.check_same(&other.ambient)?;
        let scale = self.max_abs_coefficient().max(other.max_abs_coefficient());
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            *terms.entry(e.clone()).or_insert(0.0) += sign * c;
        }
        Ok(Self::pruned(self.ambient, terms, scale))
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.ambient.check_same(&other.ambient)?;
        let scale = self.max_abs_coefficient() * other.max_abs_coefficient();
        let mut acc: HashMap<Exponents, f64> = HashMap::new();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let e: Exponents = a.iter().zip(b).map(|(x, y)| x + y).collect();
                *acc.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        Ok(Self::pruned(self.ambient, acc.into_iter().collect(), scale))
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, k: u32) -> Self {
        let mut result = Self::constant(self.ambient, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Exact partial derivative with respect to variable `v`.
    pub fn partial(&self, v: usize) -> Self {
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let k = e[v];
            if k == 0 {
                continue;
            }
            let mut d = e.clone();
            d[v] -= 1;
            terms.insert(d, c * k as f64);
        }
        Self {
            ambient: self.ambient,
            terms,
        }
    }

    /// All `2n + 2N` partial derivatives in the fixed variable order.
    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.ambient.nvars()).map(|v| self.partial(v)).collect()
    }

    /// Poisson bracket
    /// `{F, G} = Σ_j (∂F/∂x_j ∂G/∂y_j − ∂F/∂y_j ∂G/∂x_j) + Σ_k (∂F/∂ξ_k ∂G/∂η_k − ∂F/∂η_k ∂G/∂ξ_k)`.
    ///
    /// With this sign, `d/dt (F ∘ X_H^t) = {F, H} ∘ X_H^t`.
    pub fn poisson_bracket(&self, other: &Self) -> Result<Self> {
        self.ambient.check_same(&other.ambient)?;
        let pairs: Vec<(usize, usize)> = self.ambient.conjugate_pairs().collect();
        let mut acc: HashMap<Exponents, f64> = HashMap::new();
        let mut scale = 0.0f64;
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                for &(q, p) in &pairs {
                    let w = a[q] as f64 * b[p] as f64 - a[p] as f64 * b[q] as f64;
                    if w == 0.0 {
                        continue;
                    }
                    let mut e: Exponents = a.iter().zip(b).map(|(x, y)| x + y).collect();
                    e[q] -= 1;
                    e[p] -= 1;
                    let c = ca * cb * w;
                    scale = scale.max(c.abs());
                    *acc.entry(e).or_insert(0.0) += c;
                }
            }
        }
        Ok(Self::pruned(self.ambient, acc.into_iter().collect(), scale))
    }

    /// Coefficient majorant `Σ |c| r2^{deg_z} r3^{deg_ζ}`, an upper bound for
    /// the supremum over `{|z| ≤ r2, |ζ| ≤ r3}`.
    pub fn majorant_norm(&self, r2: f64, r3: f64) -> Result<f64> {
        if !(r2 >= 0.0 && r3 >= 0.0) {
            return Err(Error::Domain(format!(
                "radii must be non-negative (r2={r2}, r3={r3})"
            )));
        }
        Ok(self
            .terms
            .iter()
            .map(|(e, c)| {
                let (dz, dzeta) = self.split_degree(e);
                c.abs() * r2.powi(dz as i32) * r3.powi(dzeta as i32)
            })
            .sum())
    }

    /// Evaluates at a point given as the concatenated coordinates `(z, ζ)`.
    pub fn evaluate(&self, coords: &[f64]) -> Result<f64> {
        if coords.len() != self.ambient.nvars() {
            return Err(Error::dimension(self.ambient.nvars(), coords.len()));
        }
        Ok(self.terms.iter().map(|(e, c)| c * monomial_value(e, coords)).sum())
    }

    /// Re-embeds into an ambient with the same `n` and possibly more
    /// transverse pairs; existing transverse variables keep their index `k`.
    pub fn embed(&self, target: Ambient) -> Result<Self> {
        if target.n != self.ambient.n || target.big_n < self.ambient.big_n {
            return Err(Error::dimension(
                format!("n={} and N>={}", self.ambient.n, self.ambient.big_n),
                format!("n={}, N={}", target.n, target.big_n),
            ));
        }
        let src = self.ambient;
        let terms = self.terms.iter().map(|(e, c)| {
            let mut t = vec![0u16; target.nvars()];
            for j in 0..src.n {
                t[target.x(j)] = e[src.x(j)];
                t[target.y(j)] = e[src.y(j)];
            }
            for k in 0..src.big_n {
                t[target.xi(k)] = e[src.xi(k)];
                t[target.eta(k)] = e[src.eta(k)];
            }
            (t, *c)
        });
        Self::from_terms(target, terms)
    }

    fn pruned(ambient: Ambient, terms: BTreeMap<Exponents, f64>, scale: f64) -> Self {
        let cut = DROP_TOLERANCE * scale;
        let mut terms = terms;
        terms.retain(|_, c| *c != 0.0 && c.abs() >= cut);
        Self { ambient, terms }
    }
}

/// Exact coefficient arithmetic with ambient checking.
pub fn arith(p: &Polynomial, q: &Polynomial, op: ArithOp) -> Result<Polynomial> {
    match op {
        ArithOp::Add => p.checked_add(q),
        ArithOp::Sub => p.checked_sub(q),
        ArithOp::Mul => p.checked_mul(q),
        ArithOp::Scale(s) => Ok(p.scale(s)),
    }
}

pub fn total_degree(e: &[u16]) -> usize {
    e.iter().map(|&k| k as usize).sum()
}

pub(crate) fn monomial_value(e: &[u16], coords: &[f64]) -> f64 {
    e.iter()
        .zip(coords)
        .filter(|(k, _)| **k > 0)
        .map(|(&k, &x)| x.powi(k as i32))
        .product()
}

// Operator sugar for internal use. These panic on ambient mismatch; the
// `checked_*` methods report it instead.

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("ambient mismatch in add")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("ambient mismatch in sub")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("ambient mismatch in mul")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&text::format_polynomial(self))
    }
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&text::format_polynomial(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amb(n: usize, nn: usize) -> Ambient {
        Ambient::new(n, nn)
    }

    #[test]
    fn cancellation_gives_zero() {
        let a = amb(1, 0);
        let x = Polynomial::var(a, a.x(0));
        let sum = arith(&x, &x.scale(-1.0), ArithOp::Add).unwrap();
        assert!(sum.is_zero());
    }

    #[test]
    fn square_of_coordinate() {
        let a = amb(1, 0);
        let x = Polynomial::var(a, a.x(0));
        let sq = arith(&x, &x, ArithOp::Mul).unwrap();
        assert_eq!(sq.len(), 1);
        assert_eq!(sq.coefficient(&[2, 0]), 1.0);
    }

    #[test]
    fn scaling() {
        let a = amb(2, 0);
        let p = Polynomial::monomial(a, vec![2, 0, 0, 1], 2.0);
        let q = arith(&p, &p, ArithOp::Scale(0.5)).unwrap();
        assert_eq!(q, Polynomial::monomial(a, vec![2, 0, 0, 1], 1.0));
    }

    #[test]
    fn ambient_mismatch_is_reported() {
        let p = Polynomial::constant(amb(1, 0), 1.0);
        let q = Polynomial::constant(amb(2, 0), 1.0);
        assert!(matches!(p.checked_add(&q), Err(Error::Dimension { .. })));
        assert!(matches!(p.poisson_bracket(&q), Err(Error::Dimension { .. })));
        assert!(matches!(p.evaluate(&[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn gradient_examples() {
        let a = amb(1, 1);
        let x2 = Polynomial::monomial(a, vec![2, 0, 0, 0], 1.0);
        assert_eq!(x2.partial(a.x(0)), Polynomial::monomial(a, vec![1, 0, 0, 0], 2.0));

        let i1 = Polynomial::action(a, 0);
        assert_eq!(i1.partial(a.y(0)), Polynomial::var(a, a.y(0)));

        let p = Polynomial::monomial(a, vec![1, 0, 1, 1], 1.0);
        let g = p.gradient();
        assert_eq!(g.len(), 4);
        assert_eq!(g[a.eta(0)], Polynomial::monomial(a, vec![1, 0, 1, 0], 1.0));
    }

    #[test]
    fn bracket_examples() {
        let a = amb(2, 0);
        let x1 = Polynomial::var(a, a.x(0));
        let y1 = Polynomial::var(a, a.y(0));
        assert_eq!(x1.poisson_bracket(&y1).unwrap(), Polynomial::constant(a, 1.0));

        let i1 = Polynomial::action(a, 0);
        let i2 = Polynomial::action(a, 1);
        assert!(i1.poisson_bracket(&i2).unwrap().is_zero());

        // {-y1, I1} = -∂(-y1)/∂y1 · ∂I1/∂x1 = x1
        let b = y1.scale(-1.0).poisson_bracket(&i1).unwrap();
        assert_eq!(b, x1);
    }

    #[test]
    fn transverse_bracket_sign() {
        let a = amb(0, 1);
        let xi = Polynomial::var(a, a.xi(0));
        let eta = Polynomial::var(a, a.eta(0));
        assert_eq!(xi.poisson_bracket(&eta).unwrap(), Polynomial::constant(a, 1.0));
    }

    #[test]
    fn majorant_examples() {
        let a = amb(2, 0);
        let p = Polynomial::monomial(a, vec![2, 0, 0, 1], 2.0);
        assert_eq!(p.majorant_norm(0.5, 0.0).unwrap(), 0.25);
        assert_eq!(Polynomial::zero(a).majorant_norm(1.0, 1.0).unwrap(), 0.0);

        let b = amb(1, 1);
        let q = &Polynomial::var(b, b.x(0)) + &Polynomial::var(b, b.xi(0));
        assert_eq!(q.majorant_norm(1.0, 2.0).unwrap(), 3.0);
        assert!(matches!(q.majorant_norm(-1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn evaluate_examples() {
        let a = amb(1, 0);
        assert_eq!(Polynomial::action(a, 0).evaluate(&[1.0, 0.0]).unwrap(), 0.5);
        let xy = Polynomial::monomial(a, vec![1, 1], 1.0);
        assert_eq!(xy.evaluate(&[2.0, 3.0]).unwrap(), 6.0);
    }

    #[test]
    fn pow_matches_repeated_product() {
        let a = amb(1, 0);
        let p = &Polynomial::var(a, 0) + &Polynomial::constant(a, 2.0);
        let cube = &(&p * &p) * &p;
        assert_eq!(p.pow(3), cube);
        assert_eq!(p.pow(0), Polynomial::constant(a, 1.0));
    }

    #[test]
    fn embed_keeps_indices() {
        let a = amb(1, 1);
        let p = Polynomial::monomial(a, vec![1, 0, 2, 1], 3.0);
        let big = amb(1, 3);
        let q = p.embed(big).unwrap();
        assert_eq!(q.coefficient(&[1, 0, 2, 0, 0, 1, 0, 0]), 3.0);
    }

    #[test]
    fn truncation_drops_high_degree() {
        let a = amb(1, 0);
        let p = &Polynomial::var(a, 0).pow(5) + &Polynomial::var(a, 1);
        assert_eq!(p.truncate(4), Polynomial::var(a, 1));
    }
}

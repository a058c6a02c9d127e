//! Systems of the form `H = ⟨α, I⟩ + ½⟨A I, I⟩ + f(z, ζ) + κ Λ(ζ)` and their
//! geometric primitives: actions, the Hamiltonian vector field and the
//! structural hypotheses the stability theorems need.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polyalg::{Ambient, CompiledVector, Polynomial};

/// A real point `(z, ζ) ∈ R^{2n} × R^{2N}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    /// `(x_1..x_n, y_1..y_n)`
    pub z: Vec<f64>,
    /// `(ξ_1..ξ_N, η_1..η_N)`
    pub zeta: Vec<f64>,
}

impl PhasePoint {
    pub fn new(z: Vec<f64>, zeta: Vec<f64>) -> Result<Self> {
        if !z.len().is_multiple_of(2) || !zeta.len().is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "coordinate blocks must have even length (|z|={}, |zeta|={})",
                z.len(),
                zeta.len()
            )));
        }
        Ok(Self { z, zeta })
    }

    pub fn origin(ambient: Ambient) -> Self {
        Self {
            z: vec![0.0; 2 * ambient.n],
            zeta: vec![0.0; 2 * ambient.big_n],
        }
    }

    /// Splits a flat coordinate vector in the fixed variable order.
    pub fn from_coords(ambient: Ambient, coords: &[f64]) -> Result<Self> {
        if coords.len() != ambient.nvars() {
            return Err(Error::dimension(ambient.nvars(), coords.len()));
        }
        let (z, zeta) = coords.split_at(2 * ambient.n);
        Ok(Self {
            z: z.to_vec(),
            zeta: zeta.to_vec(),
        })
    }

    pub fn ambient(&self) -> Ambient {
        Ambient::new(self.z.len() / 2, self.zeta.len() / 2)
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.z.len() + self.zeta.len());
        c.extend_from_slice(&self.z);
        c.extend_from_slice(&self.zeta);
        c
    }

    pub fn norm_z(&self) -> f64 {
        self.z.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_zeta(&self) -> f64 {
        self.zeta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Actions `I_j = (x_j² + y_j²)/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionVector(pub Vec<f64>);

impl ActionVector {
    /// ℓ₁ norm `|I|`.
    pub fn l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }
}

impl std::ops::Deref for ActionVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn actions(pt: &PhasePoint) -> ActionVector {
    let n = pt.z.len() / 2;
    ActionVector(
        (0..n)
            .map(|j| 0.5 * (pt.z[j] * pt.z[j] + pt.z[n + j] * pt.z[n + j]))
            .collect(),
    )
}

/// ℓ₁ distance `Σ |I_j − J_j|`.
pub fn action_distance(i: &[f64], j: &[f64]) -> Result<f64> {
    if i.len() != j.len() {
        return Err(Error::dimension(i.len(), j.len()));
    }
    Ok(i.iter().zip(j).map(|(a, b)| (a - b).abs()).sum())
}

/// Full description of a system near an elliptic fixed point with a
/// transverse component.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub ambient: Ambient,
    pub alpha: Vec<f64>,
    pub a: DMatrix<f64>,
    pub i0: Vec<f64>,
    pub f: Polynomial,
    pub lambda: Polynomial,
    pub kappa: f64,
    /// Convexity constant `M` in `⟨AI, I⟩ ≥ |I|²/M`.
    pub m_const: f64,
    pub c_lambda: f64,
    pub c0: f64,
}

impl SystemSpec {
    /// Builds and validates a system. `a` is given row-major.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ambient: Ambient,
        alpha: Vec<f64>,
        a: DMatrix<f64>,
        i0: Vec<f64>,
        f: Polynomial,
        lambda: Polynomial,
        kappa: f64,
        m_const: f64,
        c_lambda: f64,
        c0: f64,
    ) -> Result<Self> {
        let n = ambient.n;
        if alpha.len() != n {
            return Err(Error::dimension(format!("alpha of length {n}"), alpha.len()));
        }
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::dimension(
                format!("{n}x{n} matrix A"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if i0.len() != n {
            return Err(Error::dimension(format!("I0 of length {n}"), i0.len()));
        }
        ambient.check_same(&f.ambient())?;
        ambient.check_same(&lambda.ambient())?;
        for r in 0..n {
            for c in 0..n {
                if (a[(r, c)] - a[(c, r)]).abs() > 1e-12 {
                    return Err(Error::Domain(format!("A is not symmetric at ({r}, {c})")));
                }
            }
        }
        if !lambda.depends_only_on_transverse() {
            return Err(Error::Domain("Lambda must depend only on zeta".into()));
        }
        if !(kappa >= 0.0) {
            return Err(Error::Domain("kappa must be >= 0".into()));
        }
        Ok(Self {
            ambient,
            alpha,
            a,
            i0,
            f,
            lambda,
            kappa,
            m_const,
            c_lambda,
            c0,
        })
    }

    pub fn n(&self) -> usize {
        self.ambient.n
    }

    /// Frequency map `Ω(I) = α + A I`.
    pub fn frequency(&self, i: &[f64]) -> Vec<f64> {
        let iv = DVector::from_column_slice(i);
        let w = &self.a * iv;
        self.alpha.iter().zip(w.iter()).map(|(a, b)| a + b).collect()
    }

    /// `‖A‖`, the operator norm for the ℓ₁ norm on actions.
    pub fn norm_a(&self) -> f64 {
        matrix_norm(&self.a)
    }

    /// `⟨α, I⟩ + ½⟨A I, I⟩` as a polynomial.
    pub fn integrable_part(&self) -> Polynomial {
        let amb = self.ambient;
        let acts: Vec<Polynomial> = (0..amb.n).map(|j| Polynomial::action(amb, j)).collect();
        let mut h = Polynomial::zero(amb);
        for j in 0..amb.n {
            h = &h + &acts[j].scale(self.alpha[j]);
            for k in 0..amb.n {
                let c = 0.5 * self.a[(j, k)];
                if c != 0.0 {
                    h = &h + &(&acts[j] * &acts[k]).scale(c);
                }
            }
        }
        h
    }

    /// The whole Hamiltonian as one polynomial.
    pub fn total_hamiltonian(&self) -> Polynomial {
        let h = &self.integrable_part() + &self.f;
        &h + &self.lambda.scale(self.kappa)
    }

    /// A copy with a different `κ`.
    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self {
            kappa,
            ..self.clone()
        }
    }
}

/// Largest absolute column sum, i.e. the operator norm induced by `|·|₁`.
pub fn matrix_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn hamiltonian_value(spec: &SystemSpec, pt: &PhasePoint) -> Result<f64> {
    if pt.ambient() != spec.ambient {
        return Err(Error::dimension(
            format!("point in ambient {:?}", spec.ambient),
            format!("{:?}", pt.ambient()),
        ));
    }
    let i = actions(pt);
    let ai = spec.a.clone() * DVector::from_column_slice(&i);
    let lin: f64 = spec.alpha.iter().zip(i.iter()).map(|(a, b)| a * b).sum();
    let quad: f64 = 0.5 * ai.iter().zip(i.iter()).map(|(a, b)| a * b).sum::<f64>();
    let coords = pt.coords();
    Ok(lin + quad + spec.f.evaluate(&coords)? + spec.kappa * spec.lambda.evaluate(&coords)?)
}

/// The Hamiltonian vector field `X_H` of an arbitrary polynomial, compiled
/// for repeated evaluation.
#[derive(Debug, Clone)]
pub struct HamiltonianField {
    ambient: Ambient,
    compiled: CompiledVector,
}

impl HamiltonianField {
    pub fn new(h: &Polynomial) -> Self {
        let amb = h.ambient();
        let grad = h.gradient();
        let mut comps = vec![Polynomial::zero(amb); amb.nvars()];
        for (q, p) in amb.conjugate_pairs() {
            comps[q] = grad[p].clone();
            comps[p] = grad[q].scale(-1.0);
        }
        Self {
            ambient: amb,
            compiled: CompiledVector::new(&comps, amb.nvars()),
        }
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn scratch_len(&self) -> usize {
        self.compiled.scratch_len()
    }

    pub fn eval_with(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.compiled.eval_with(x, out, scratch);
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient.nvars()];
        self.compiled.eval(x, &mut out);
        out
    }
}

/// `(ẋ, ẏ, ξ̇, η̇) = (∂H/∂y, −∂H/∂x, ∂H/∂η, −∂H/∂ξ)` at `pt`.
pub fn vector_field(spec: &SystemSpec, pt: &PhasePoint) -> Result<Vec<f64>> {
    if pt.ambient() != spec.ambient {
        return Err(Error::dimension(
            format!("point in ambient {:?}", spec.ambient),
            format!("{:?}", pt.ambient()),
        ));
    }
    Ok(HamiltonianField::new(&spec.total_hamiltonian()).eval(&pt.coords()))
}

/// Where and how densely the sampled hypotheses are probed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisSampling {
    pub z_radius: f64,
    pub zeta_radius: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for HypothesisSampling {
    fn default() -> Self {
        Self {
            z_radius: 1.0,
            zeta_radius: 1.0,
            samples: 10_000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    /// Whether the verdict is a proof (eigenvalue/coefficient certificate)
    /// rather than a sampling outcome.
    pub certified: bool,
    pub detail: String,
    /// Coordinates of a violating point, in the fixed variable order.
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn sample_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if r2 > 1e-24 && r2 <= 1.0 {
            // Uniform direction, radius spread over the whole ball.
            let scale = radius * rng.gen::<f64>().powf(1.0 / dim as f64) / r2.sqrt();
            return v.into_iter().map(|x| x * scale).collect();
        }
    }
}

/// Checks convexity of the integrable part, the two-sided quadratic bounds
/// on `Λ` with its gradient bound, and the growth bound on `f`.
pub fn check_structural_hypotheses(spec: &SystemSpec, sampling: &HypothesisSampling) -> HypothesisReport {
    let amb = spec.ambient;
    let n = amb.n;
    let mut checks = Vec::new();

    let eig = SymmetricEigen::new(spec.a.clone());
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let need = n as f64 / spec.m_const;
    checks.push(HypothesisCheck {
        name: "convexity".into(),
        passed: lmin >= need,
        certified: true,
        detail: format!("lambda_min(A) = {lmin:.6e}, required n/M = {need:.6e}"),
        witness: None,
    });

    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let core = 2 * n;
    let tz = 2 * amb.big_n;
    let lambda_grad: Vec<Polynomial> = (0..tz).map(|k| spec.lambda.partial(core + k)).collect();

    // Λ = ½ ζᵀ B ζ admits an exact eigenvalue certificate.
    let quadratic = !spec.lambda.is_zero()
        && spec.lambda.terms().all(|(e, _)| crate::polyalg::total_degree(e) == 2);
    let (mut lower_cert, mut upper_cert) = (None, None);
    if tz > 0 && quadratic {
        let mut b = DMatrix::<f64>::zeros(tz, tz);
        for (e, c) in spec.lambda.terms() {
            let vars: Vec<usize> = (0..tz).filter(|&k| e[core + k] > 0).collect();
            match vars.as_slice() {
                [k] => b[(*k, *k)] += 2.0 * c,
                [k, l] => {
                    b[(*k, *l)] += c;
                    b[(*l, *k)] += c;
                }
                _ => unreachable!("degree-2 monomial"),
            }
        }
        let ev = SymmetricEigen::new(b).eigenvalues;
        let bmin = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let bmax_abs = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bmax = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lower_cert = Some((bmin >= 1.0 - 1e-12, format!("Hessian eigenvalues >= {bmin:.6e} (need >= 1)")));
        upper_cert = Some((
            bmax <= spec.c_lambda * (1.0 + 1e-12) && bmax_abs <= spec.c_lambda * (1.0 + 1e-12),
            format!("Hessian spectral norm {bmax_abs:.6e} (need <= C_Lambda = {})", spec.c_lambda),
        ));
    }

    let mut lower_witness = None;
    let mut upper_witness = None;
    let mut grad_witness = None;
    let mut growth_witness = None;
    let mut coords = vec![0.0; amb.nvars()];
    for _ in 0..sampling.samples {
        let z = sample_ball(&mut rng, core, sampling.z_radius);
        let zeta = sample_ball(&mut rng, tz, sampling.zeta_radius);
        coords[..core].copy_from_slice(&z);
        coords[core..].copy_from_slice(&zeta);
        let zeta2: f64 = zeta.iter().map(|v| v * v).sum();
        let z2: f64 = z.iter().map(|v| v * v).sum();
        let tol = 1e-12 * (1.0 + zeta2);
        if tz > 0 {
            let lam = spec.lambda.evaluate(&coords).expect("ambient");
            if lower_witness.is_none() && lam < 0.5 * zeta2 - tol {
                lower_witness = Some(coords.clone());
            }
            if upper_witness.is_none() && lam > 0.5 * spec.c_lambda * zeta2 + tol {
                upper_witness = Some(coords.clone());
            }
            let g2: f64 = lambda_grad
                .iter()
                .map(|g| g.evaluate(&coords).expect("ambient").powi(2))
                .sum();
            if grad_witness.is_none() && g2.sqrt() > spec.c_lambda * zeta2.sqrt() + 1e-12 {
                grad_witness = Some(coords.clone());
            }
        }
        let fz = spec.f.evaluate(&coords).expect("ambient").abs();
        let zn = z2.sqrt();
        let bound = spec.c0 * (zn.powi(5) + zeta2 * zn.powi(4) + spec.kappa * zeta2 * zn);
        if growth_witness.is_none() && fz > bound * (1.0 + 1e-12) + 1e-300 {
            growth_witness = Some(coords.clone());
        }
    }

    let sampled = |name: &str, witness: Option<Vec<f64>>, what: &str| HypothesisCheck {
        name: name.into(),
        passed: witness.is_none(),
        certified: false,
        detail: if witness.is_none() {
            format!("{what} held at {} sampled points", sampling.samples)
        } else {
            format!("{what} violated")
        },
        witness,
    };
    if tz > 0 {
        let mut lower = sampled("lambda_lower", lower_witness, "Lambda >= |zeta|^2/2");
        if let Some((ok, detail)) = lower_cert {
            lower.passed = ok && lower.passed;
            lower.certified = true;
            lower.detail = detail;
        }
        checks.push(lower);
        let mut upper = sampled("lambda_upper", upper_witness, "Lambda <= C_Lambda |zeta|^2/2");
        let mut grad = sampled("lambda_gradient", grad_witness, "|D Lambda| <= C_Lambda |zeta|");
        if let Some((ok, detail)) = upper_cert {
            upper.passed = ok && upper.passed;
            upper.certified = true;
            upper.detail = detail.clone();
            grad.passed = ok && grad.passed;
            grad.certified = true;
            grad.detail = detail;
        }
        checks.push(upper);
        checks.push(grad);
    }
    checks.push(sampled(
        "f_growth",
        growth_witness,
        "|f| <= C0 (|z|^5 + |zeta|^2 |z|^4 + kappa |zeta|^2 |z|)",
    ));
    HypothesisReport { checks }
}

//! Implicit midpoint integration of polynomial Hamiltonian fields.
//!
//! The implicit midpoint rule `y₁ = y₀ + dt·X_H((y₀ + y₁)/2)` is symmetric,
//! symplectic and of order two, and it conserves every quadratic first
//! integral exactly — in particular the actions `I_j` of a decoupled harmonic
//! part. The quadratic part of `H` gives a linear field `L y`, which is
//! solved in closed form inside the midpoint equation:
//!
//! ```text
//! (1 − dt/2 L) y₁ = (1 + dt/2 L) y₀ + dt N((y₀ + y₁)/2)
//! ```
//!
//! so the fixed-point iteration only has to resolve the (small) nonlinear
//! remainder `N` and converges in a handful of sweeps even for stiff
//! transverse frequencies.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{actions, HamiltonianField, PhasePoint, SystemSpec};
use crate::polyalg::{total_degree, Ambient, CompiledVector, Polynomial};

/// Sweeps allowed per step before reporting non-convergence.
pub const MAX_ITERATIONS: usize = 50;
/// Fixed-point stopping tolerance, relative to `max(1, |y|∞)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-13;

/// Step size resolving the fastest linear oscillation with 64 steps per period.
pub fn default_dt(omega: &[f64]) -> f64 {
    let w = omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if w == 0.0 {
        2.0 * std::f64::consts::PI / 64.0
    } else {
        2.0 * std::f64::consts::PI / w / 64.0
    }
}

/// Sparse row-major matrix; the linearised flows here are block diagonal.
#[derive(Debug, Clone)]
struct SparseMatrix {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut row_start = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Self { row_start, cols, vals }
    }

    fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_start[i]..self.row_start[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *o += s;
        }
    }
}

#[derive(Debug, Clone)]
struct Propagators {
    dt: f64,
    /// `(1 − dt/2 L)⁻¹ (1 + dt/2 L)`
    m1: SparseMatrix,
    /// `dt (1 − dt/2 L)⁻¹`
    m2: SparseMatrix,
}

/// Reusable implicit-midpoint stepper for one Hamiltonian.
#[derive(Debug, Clone)]
pub struct MidpointStepper {
    ambient: Ambient,
    linear: DMatrix<f64>,
    nonlinear: Option<HamiltonianField>,
    props: Option<Propagators>,
    scratch: Vec<f64>,
    ym: Vec<f64>,
    base: Vec<f64>,
    next: Vec<f64>,
    upd: Vec<f64>,
    field: Vec<f64>,
    /// Total fixed-point sweeps performed, for diagnostics.
    pub sweeps: u64,
}

impl MidpointStepper {
    pub fn new(spec: &SystemSpec) -> Self {
        Self::from_hamiltonian(&spec.total_hamiltonian())
    }

    pub fn from_hamiltonian(h: &Polynomial) -> Self {
        let amb = h.ambient();
        let d = amb.nvars();
        let quad = h.filter_terms(|e, _| total_degree(e) == 2);
        let rest = h.filter_terms(|e, _| total_degree(e) != 2);
        let qf = HamiltonianField::new(&quad);
        let mut linear = DMatrix::zeros(d, d);
        let mut unit = vec![0.0; d];
        for j in 0..d {
            unit[j] = 1.0;
            let col = qf.eval(&unit);
            for i in 0..d {
                linear[(i, j)] = col[i];
            }
            unit[j] = 0.0;
        }
        let nonlinear = (!rest.filter_terms(|e, _| total_degree(e) > 0).is_zero()).then(|| HamiltonianField::new(&rest));
        let scratch = vec![0.0; nonlinear.as_ref().map_or(0, |f| f.scratch_len())];
        Self {
            ambient: amb,
            linear,
            nonlinear,
            props: None,
            scratch,
            ym: vec![0.0; d],
            base: vec![0.0; d],
            next: vec![0.0; d],
            upd: vec![0.0; d],
            field: vec![0.0; d],
            sweeps: 0,
        }
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    fn propagators(&mut self, dt: f64) -> Result<&Propagators> {
        if self.props.as_ref().is_none_or(|p| p.dt != dt) {
            let d = self.linear.nrows();
            let id = DMatrix::<f64>::identity(d, d);
            let minus = &id - &self.linear * (dt / 2.0);
            let plus = &id + &self.linear * (dt / 2.0);
            let inv = minus
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("1 - dt/2 L is singular for dt = {dt}")))?;
            self.props = Some(Propagators {
                dt,
                m1: SparseMatrix::from_dense(&(&inv * plus)),
                m2: SparseMatrix::from_dense(&(inv * dt)),
            });
        }
        Ok(self.props.as_ref().expect("just set"))
    }

    /// Advances `y` in place by one step of size `dt` (either sign) and
    /// returns the number of fixed-point sweeps used.
    pub fn step_in_place(&mut self, y: &mut [f64], dt: f64) -> Result<usize> {
        let d = self.linear.nrows();
        if y.len() != d {
            return Err(Error::dimension(d, y.len()));
        }
        if dt == 0.0 {
            return Ok(0);
        }
        self.propagators(dt)?;
        let props = self.props.as_ref().expect("computed above");
        self.base.iter_mut().for_each(|v| *v = 0.0);
        props.m1.mul_add(y, &mut self.base);
        let Some(nl) = &self.nonlinear else {
            y.copy_from_slice(&self.base);
            return Ok(0);
        };
        // predictor: nonlinear term frozen at y₀
        nl.eval_with(y, &mut self.field, &mut self.scratch);
        self.next.copy_from_slice(&self.base);
        props.m2.mul_add(&self.field, &mut self.next);
        let mut residual = f64::INFINITY;
        for it in 1..=MAX_ITERATIONS {
            for ((m, a), b) in self.ym.iter_mut().zip(y.iter()).zip(&self.next) {
                *m = 0.5 * (a + b);
            }
            nl.eval_with(&self.ym, &mut self.field, &mut self.scratch);
            self.upd.copy_from_slice(&self.base);
            props.m2.mul_add(&self.field, &mut self.upd);
            residual = 0.0;
            let mut size = 1.0f64;
            for i in 0..d {
                residual = residual.max((self.upd[i] - self.next[i]).abs());
                size = size.max(self.upd[i].abs());
            }
            std::mem::swap(&mut self.next, &mut self.upd);
            self.sweeps += 1;
            if !residual.is_finite() {
                break;
            }
            if residual <= RESIDUAL_TOLERANCE * size {
                y.copy_from_slice(&self.next);
                return Ok(it);
            }
        }
        Err(Error::Convergence {
            iterations: MAX_ITERATIONS,
            residual,
        })
    }
}

/// One implicit midpoint step of `X_H` for the full Hamiltonian of `spec`.
pub fn step(spec: &SystemSpec, pt: &PhasePoint, dt: f64) -> Result<PhasePoint> {
    if pt.ambient() != spec.ambient {
        return Err(Error::dimension(format!("{:?}", spec.ambient), format!("{:?}", pt.ambient())));
    }
    let mut y = pt.coords();
    MidpointStepper::new(spec).step_in_place(&mut y, dt)?;
    PhasePoint::from_coords(spec.ambient, &y)
}

/// The time-one map of the flow of `phi`, used to cross-check Lie series.
pub fn time_one_map(phi: &Polynomial, pt: &PhasePoint, dt: f64) -> Result<PhasePoint> {
    let mut s = MidpointStepper::from_hamiltonian(phi);
    let n = (1.0 / dt).round().max(1.0) as usize;
    let h = 1.0 / n as f64;
    let mut y = pt.coords();
    for _ in 0..n {
        s.step_in_place(&mut y, h)?;
    }
    PhasePoint::from_coords(phi.ambient(), &y)
}

/// Observables recorded along an orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub n: usize,
    /// Signed effective step; all samples lie on the grid `k·dt`.
    pub dt: f64,
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub energy: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub kappa_lambda: Vec<f64>,
    pub norm_z: Vec<f64>,
    pub norm_zeta: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_relative_energy_error(&self) -> f64 {
        let e0 = self.energy[0];
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.energy.iter().map(|e| (e - e0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn max_action_drift(&self) -> f64 {
        let i0 = &self.actions[0];
        self.actions
            .iter()
            .map(|i| i.iter().zip(i0).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Columns `t,H,I_1..I_n,kappaLambda,norm_z,norm_zeta`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string(), "H".to_string()];
        header.extend((1..=self.n).map(|j| format!("I_{j}")));
        header.extend(["kappaLambda", "norm_z", "norm_zeta"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k], self.energy[k]];
            row.extend(&self.actions[k]);
            row.extend([self.kappa_lambda[k], self.norm_z[k], self.norm_zeta[k]]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Evaluates `H` and `κΛ` quickly along an orbit.
pub(crate) struct Observables {
    values: CompiledVector,
    scratch: Vec<f64>,
    out: [f64; 2],
}

impl Observables {
    pub(crate) fn new(spec: &SystemSpec) -> Self {
        let nv = spec.ambient.nvars();
        let values = CompiledVector::new(&[spec.total_hamiltonian(), spec.lambda.scale(spec.kappa)], nv);
        let scratch = vec![0.0; values.scratch_len()];
        Self {
            values,
            scratch,
            out: [0.0; 2],
        }
    }

    /// `(H, κΛ)` at `y`.
    pub(crate) fn eval(&mut self, y: &[f64]) -> (f64, f64) {
        self.values.eval_with(y, &mut self.out, &mut self.scratch);
        (self.out[0], self.out[1])
    }
}

/// Step count and signed uniform step covering `[0, t_end]`.
pub fn step_plan(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt != 0.0) {
        return Err(Error::Domain(format!("time step must be finite and nonzero (got {dt})")));
    }
    if !t_end.is_finite() {
        return Err(Error::Domain(format!("t_end must be finite (got {t_end})")));
    }
    if t_end == 0.0 {
        return Ok((0, 0.0));
    }
    let n = (t_end.abs() / dt.abs()).ceil() as usize;
    Ok((n, t_end / n as f64))
}

/// Integrates from `t = 0` to `t_end` (negative values run backwards) and
/// records observables every `observe_every` steps and at the final time.
pub fn integrate(spec: &SystemSpec, pt: &PhasePoint, t_end: f64, dt: f64, observe_every: usize) -> Result<Trajectory> {
    if pt.ambient() != spec.ambient {
        return Err(Error::dimension(format!("{:?}", spec.ambient), format!("{:?}", pt.ambient())));
    }
    let (nsteps, h) = step_plan(t_end, dt)?;
    let every = observe_every.max(1);
    let mut stepper = MidpointStepper::new(spec);
    let mut obs = Observables::new(spec);
    let n = spec.n();
    let mut traj = Trajectory {
        n,
        dt: h,
        times: Vec::new(),
        points: Vec::new(),
        energy: Vec::new(),
        actions: Vec::new(),
        kappa_lambda: Vec::new(),
        norm_z: Vec::new(),
        norm_zeta: Vec::new(),
    };
    let mut y = pt.coords();
    let mut record = |k: usize, y: &[f64], traj: &mut Trajectory| -> Result<()> {
        let p = PhasePoint::from_coords(spec.ambient, y)?;
        let (e, kl) = obs.eval(y);
        traj.times.push(k as f64 * h);
        traj.energy.push(e);
        traj.actions.push(actions(&p).0);
        traj.kappa_lambda.push(kl);
        traj.norm_z.push(p.norm_z());
        traj.norm_zeta.push(p.norm_zeta());
        traj.points.push(p);
        Ok(())
    };
    record(0, &y, &mut traj)?;
    for k in 1..=nsteps {
        stepper.step_in_place(&mut y, h)?;
        if k % every == 0 || k == nsteps {
            record(k, &y, &mut traj)?;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalform::exact_flow_h;
    use crate::polyalg::parse_polynomial;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn oscillator() -> SystemSpec {
        let amb = Ambient::new(1, 0);
        SystemSpec::new(
            amb,
            vec![1.0],
            DMatrix::zeros(1, 1),
            vec![0.0],
            Polynomial::zero(amb),
            Polynomial::zero(amb),
            0.0,
            1.0,
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn constant_hamiltonian_leaves_point_fixed() {
        let amb = Ambient::new(1, 1);
        let mut s = MidpointStepper::from_hamiltonian(&Polynomial::constant(amb, 3.0));
        let mut y = vec![0.3, -0.1, 0.2, 0.5];
        let y0 = y.clone();
        s.step_in_place(&mut y, 0.1).unwrap();
        assert_eq!(y, y0);
    }

    #[test]
    fn rotation_is_the_cayley_map() {
        let spec = oscillator();
        let dt = 2.0 * PI / 1000.0;
        let mut s = MidpointStepper::new(&spec);
        let mut y = vec![1.0, 0.0];
        for _ in 0..1000 {
            s.step_in_place(&mut y, dt).unwrap();
        }
        // each step rotates by 2·atan(dt/2) instead of dt
        let angle = 1000.0 * 2.0 * (dt / 2.0).atan();
        let exact = exact_flow_h(&PhasePoint::new(vec![1.0, 0.0], vec![]).unwrap(), &[1.0], angle).unwrap();
        assert!((y[0] - exact.z[0]).abs() < 1e-12 && (y[1] - exact.z[1]).abs() < 1e-12);
        let defect = ((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt();
        assert!((defect - 2.07e-5).abs() < 1e-7, "{defect}");
    }

    #[test]
    fn forward_then_backward_is_identity() {
        let amb = Ambient::new(2, 1);
        let h = parse_polynomial(
            "0.5 * x1^2 + 0.5 * y1^2 + x2^2 + y2^2 + 3 * xi1^2 + 3 * eta1^2 + 0.1 * x1^3 y2 + 0.2 * xi1^2 x2^2",
            amb,
        )
        .unwrap();
        let mut s = MidpointStepper::from_hamiltonian(&h);
        let y0 = vec![0.3, -0.2, 0.1, 0.4, 0.2, -0.3];
        let mut y = y0.clone();
        s.step_in_place(&mut y, 0.05).unwrap();
        s.step_in_place(&mut y, -0.05).unwrap();
        for (a, b) in y.iter().zip(&y0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn integrable_actions_are_constant() {
        let amb = Ambient::new(2, 0);
        let spec = SystemSpec::new(
            amb,
            vec![1.0, 1.5],
            DMatrix::from_row_slice(2, 2, &[0.1, 0.02, 0.02, 0.2]),
            vec![0.0, 0.0],
            Polynomial::zero(amb),
            Polynomial::zero(amb),
            0.0,
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let p = PhasePoint::new(vec![0.3, 0.1, -0.2, 0.4], vec![]).unwrap();
        let tr = integrate(&spec, &p, 1e4, default_dt(&spec.frequency(&actions(&p))), 1000).unwrap();
        assert!(tr.max_action_drift() < 1e-10, "{}", tr.max_action_drift());
        assert!(tr.max_relative_energy_error() < 1e-10, "{}", tr.max_relative_energy_error());
    }

    #[test]
    fn zero_horizon_and_backwards() {
        let spec = oscillator();
        let p = PhasePoint::new(vec![1.0, 0.0], vec![]).unwrap();
        let tr = integrate(&spec, &p, 0.0, 0.1, 1).unwrap();
        assert_eq!(tr.len(), 1);
        let tr = integrate(&spec, &p, -1.0, 0.3, 1).unwrap();
        assert_eq!(tr.len(), 5);
        assert!((tr.times[4] + 1.0).abs() < 1e-15);
        // backwards rotation: y becomes positive
        assert!(tr.points[4].z[1] > 0.0);
    }

    #[test]
    fn csv_layout() {
        let spec = oscillator();
        let p = PhasePoint::new(vec![1.0, 0.0], vec![]).unwrap();
        let tr = integrate(&spec, &p, 0.2, 0.1, 1).unwrap();
        let csv = tr.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,H,I_1,kappaLambda,norm_z,norm_zeta");
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 0.5, 0.5, 0.0, 1.0, 0.0]);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn time_one_map_matches_translation() {
        let amb = Ambient::new(1, 0);
        let phi = parse_polynomial("-1 * y1", amb).unwrap();
        let p = PhasePoint::new(vec![0.3, 0.2], vec![]).unwrap();
        let q = time_one_map(&phi, &p, 1.0 / 1024.0).unwrap();
        assert!((q.z[0] - (0.3 - 1.0)).abs() < 1e-13 && (q.z[1] - 0.2).abs() < 1e-13);
    }
}

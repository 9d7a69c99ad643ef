use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{DynamicsError, IntegratorConfig};
use crate::hilbert::{DensityMatrix, OperatorMatrix, StateVector};
use crate::model::CollapseOperator;

const MINUS_I: C64 = C64 { re: 0.0, im: -1.0 };

pub(crate) struct VectorStepper {
    k: Vec<C64>,
    tmp: Vec<C64>,
    acc: Vec<C64>,
}

impl VectorStepper {
    pub(crate) fn new(dim: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Self {
            k: z.clone(),
            tmp: z.clone(),
            acc: z,
        }
    }

    /// One classical RK4 step of `dψ/dt = −i H ψ`.
    pub(crate) fn step(&mut self, h: &OperatorMatrix, psi: &mut [C64], dt: f64) {
        let n = psi.len();
        let stages = [(0.5, 1.0 / 6.0), (0.5, 1.0 / 3.0), (1.0, 1.0 / 3.0), (0.0, 1.0 / 6.0)];
        self.acc.copy_from_slice(psi);
        self.tmp.copy_from_slice(psi);
        for (advance, weight) in stages {
            h.apply_into(&self.tmp, &mut self.k);
            let w = MINUS_I * (dt * weight);
            let a = MINUS_I * (dt * advance);
            for i in 0..n {
                let k = self.k[i];
                self.acc[i] += w * k;
                self.tmp[i] = psi[i] + a * k;
            }
        }
        psi.copy_from_slice(&self.acc);
    }
}

fn check_vector(
    psi: &[C64],
    start_norm: f64,
    time: f64,
    tol: f64,
    conserving: bool,
) -> Result<(), DynamicsError> {
    let mut n2 = 0.0;
    for a in psi {
        if !(a.re.is_finite() && a.im.is_finite()) {
            return Err(DynamicsError::Instability {
                time,
                what: "non-finite amplitude".into(),
            });
        }
        n2 += a.norm_sqr();
    }
    check_drift(start_norm, n2, time, tol, conserving, "norm")
}

fn check_drift(
    start: f64,
    end: f64,
    time: f64,
    tol: f64,
    conserving: bool,
    what: &str,
) -> Result<(), DynamicsError> {
    let bad = if conserving {
        (end - start).abs() > tol * start
    } else {
        end > start * (1.0 + tol) + f64::MIN_POSITIVE
    };
    if bad {
        return Err(DynamicsError::Instability {
            time,
            what: format!("{what} drifted from {start:e} to {end:e}"),
        });
    }
    Ok(())
}

/// `steps` uniform RK4 steps of `dψ/dt = −i H ψ` over `duration`.
pub(crate) fn schrodinger_steps(
    h: &OperatorMatrix,
    psi: &StateVector,
    duration: f64,
    steps: u64,
    t0: f64,
    tol: f64,
) -> Result<StateVector, DynamicsError> {
    let mut out = psi.clone();
    if steps == 0 {
        return Ok(out);
    }
    let dt = duration / steps as f64;
    let start = out.norm_sqr();
    let mut stepper = VectorStepper::new(out.dim());
    for _ in 0..steps {
        stepper.step(h, out.amplitudes_mut(), dt);
    }
    check_vector(out.amplitudes(), start, t0 + duration, tol, h.is_hermitian())?;
    Ok(out)
}

/// Evolve `psi` for `duration` under a (possibly non-Hermitian) generator.
pub fn evolve_schrodinger(
    h: &OperatorMatrix,
    psi: &StateVector,
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<StateVector, DynamicsError> {
    if h.dim() != psi.dim() {
        return Err(DynamicsError::DimensionMismatch {
            expected: h.dim(),
            got: psi.dim(),
        });
    }
    let steps = cfg.steps_for(duration, h.max_abs_entry())?;
    schrodinger_steps(h, psi, duration, steps, 0.0, cfg.norm_tolerance)
}

/// All `L_k ρ L_k†` contributions as `out[o] += w·ρ[i]` over column-major
/// linear indices; jump operators here have a few nonzeros per column, so
/// pairing entries beats dense products.
struct JumpTerms {
    terms: Vec<(usize, usize, C64)>,
}

impl JumpTerms {
    fn new(collapse: &[CollapseOperator], dim: usize) -> Self {
        let mut terms = Vec::new();
        for c in collapse {
            let e: Vec<(usize, usize, C64)> = c.op.entries().collect();
            for &(ra, ca, va) in &e {
                for &(rb, cb, vb) in &e {
                    terms.push((ra + rb * dim, ca + cb * dim, va * vb.conj()));
                }
            }
        }
        terms.sort_by_key(|t| (t.0, t.1));
        Self { terms }
    }

    fn add_into(&self, rho: &[C64], out: &mut [C64]) {
        for &(o, i, w) in &self.terms {
            out[o] += w * rho[i];
        }
    }
}

fn rhs_into(heff: &OperatorMatrix, jumps: &JumpTerms, rho: &DMatrix<C64>, x: &mut DMatrix<C64>, out: &mut DMatrix<C64>) {
    let n = rho.nrows();
    for j in 0..n {
        heff.apply_into(rho.column(j).as_slice(), x.column_mut(j).as_mut_slice());
    }
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = (x[(i, j)] - x[(j, i)].conj()) * MINUS_I;
        }
    }
    jumps.add_into(rho.as_slice(), out.as_mut_slice());
}

/// `−i(H_eff ρ − ρ H_eff†) + Σ_k L_k ρ L_k†` for Hermitian `ρ`.
pub fn lindblad_rhs(
    heff: &OperatorMatrix,
    collapse: &[CollapseOperator],
    rho: &DMatrix<C64>,
) -> DMatrix<C64> {
    let n = rho.nrows();
    let mut x = DMatrix::zeros(n, n);
    let mut out = DMatrix::zeros(n, n);
    rhs_into(heff, &JumpTerms::new(collapse, n), rho, &mut x, &mut out);
    out
}

fn axpy(y: &mut [C64], a: f64, x: &[C64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += x * a;
    }
}

fn hermitize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
        m[(j, j)].im = 0.0;
    }
}

pub(crate) fn lindblad_steps(
    heff: &OperatorMatrix,
    collapse: &[CollapseOperator],
    rho: &DensityMatrix,
    duration: f64,
    steps: u64,
    t0: f64,
    tol: f64,
) -> Result<DensityMatrix, DynamicsError> {
    if steps == 0 {
        return Ok(rho.clone());
    }
    let mut m = rho.matrix().clone();
    let n = m.nrows();
    let jumps = JumpTerms::new(collapse, n);
    let dt = duration / steps as f64;
    let start = m.trace().re;
    let mut x = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    let mut probe = DMatrix::zeros(n, n);
    let mut acc = DMatrix::zeros(n, n);
    let stages = [(0.5, 1.0 / 6.0), (0.5, 1.0 / 3.0), (1.0, 1.0 / 3.0), (0.0, 1.0 / 6.0)];
    for _ in 0..steps {
        acc.copy_from(&m);
        probe.copy_from(&m);
        for &(next, weight) in &stages {
            rhs_into(heff, &jumps, &probe, &mut x, &mut k);
            axpy(acc.as_mut_slice(), weight * dt, k.as_slice());
            if next > 0.0 {
                probe.copy_from(&m);
                axpy(probe.as_mut_slice(), next * dt, k.as_slice());
            }
        }
        std::mem::swap(&mut m, &mut acc);
        hermitize(&mut m);
    }
    if m.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(DynamicsError::Instability {
            time: t0 + duration,
            what: "non-finite density matrix entry".into(),
        });
    }
    check_drift(start, m.trace().re, t0 + duration, tol, true, "trace")?;
    Ok(DensityMatrix::from_matrix(m))
}

/// Master-equation evolution for `duration` under Hermitian `h` and the
/// given jump operators.
pub fn evolve_lindblad(
    h: &OperatorMatrix,
    collapse: &[CollapseOperator],
    rho: &DensityMatrix,
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix, DynamicsError> {
    if h.dim() != rho.dim() {
        return Err(DynamicsError::DimensionMismatch {
            expected: h.dim(),
            got: rho.dim(),
        });
    }
    let mut heff = h.clone();
    let mut jump_rate: f64 = 0.0;
    for c in collapse {
        heff = heff.sub(&c.op.adjoint().matmul(&c.op).scale(C64::new(0.0, 0.5)));
        jump_rate = jump_rate.max(c.op.max_abs_entry().powi(2));
    }
    let steps = cfg.steps_for(duration, heff.max_abs_entry().max(jump_rate))?;
    lindblad_steps(&heff, collapse, rho, duration, steps, 0.0, cfg.norm_tolerance)
}

//! Pure and mixed states over a basis.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{Basis, BasisState, HilbertError, OperatorMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            amps: vec![C64::new(0.0, 0.0); dim],
        }
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn basis_state(basis: &Basis, state: &BasisState) -> Result<Self, HilbertError> {
        let i = basis
            .index_of(state)
            .ok_or(HilbertError::OutsideTruncation)?;
        let mut v = Self::zeros(basis.dim());
        v.amps[i] = C64::new(1.0, 0.0);
        Ok(v)
    }

    /// Normalized superposition `Σ c_k |s_k⟩`.
    pub fn superposition(basis: &Basis, terms: &[(C64, BasisState)]) -> Result<Self, HilbertError> {
        let mut v = Self::zeros(basis.dim());
        for (c, s) in terms {
            let i = basis.index_of(s).ok_or(HilbertError::OutsideTruncation)?;
            v.amps[i] += *c;
        }
        v.normalize()?;
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Rescale to unit norm; returns the previous norm².
    pub fn normalize(&mut self) -> Result<f64, HilbertError> {
        let n2 = self.norm_sqr();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(HilbertError::ZeroNorm);
        }
        let s = 1.0 / n2.sqrt();
        for a in &mut self.amps {
            *a *= s;
        }
        Ok(n2)
    }

    pub fn normalized(&self) -> Result<Self, HilbertError> {
        let mut v = self.clone();
        v.normalize()?;
        Ok(v)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn apply(&self, op: &OperatorMatrix) -> Self {
        Self {
            amps: op.apply(&self.amps),
        }
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        op.expectation(&self.amps)
    }
}

/// Dense density matrix. Invariants (checked by [`DensityMatrix::validate`]):
/// Hermitian to 1e-10, eigenvalues ≥ -1e-8, real trace to 1e-10.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_EIGEN_TOL: f64 = 1e-8;

impl DensityMatrix {
    pub fn from_matrix(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "density matrix must be square");
        Self { m }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let n = psi.dim();
        let a = psi.amplitudes();
        Self {
            m: DMatrix::from_fn(n, n, |i, j| a[i] * a[j].conj()),
        }
    }

    /// Accumulate `weight · |ψ⟩⟨ψ|`.
    pub fn add_pure(&mut self, psi: &StateVector, weight: f64) {
        let a = psi.amplitudes();
        let n = a.len();
        for j in 0..n {
            let cj = a[j].conj() * weight;
            if cj == C64::new(0.0, 0.0) {
                continue;
            }
            for i in 0..n {
                self.m[(i, j)] += a[i] * cj;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m: &self.m * C64::new(factor, 0.0),
        }
    }

    /// Divide by the trace.
    pub fn normalized(&self) -> Result<Self, HilbertError> {
        let tr = self.trace().re;
        if !(tr > 0.0) {
            return Err(HilbertError::ZeroNorm);
        }
        Ok(self.scaled(1.0 / tr))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.m - self.m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Check Hermiticity, positivity and a real trace.
    pub fn validate(&self) -> Result<(), HilbertError> {
        let h = self.hermiticity_defect();
        if h > DENSITY_HERMITIAN_TOL {
            return Err(HilbertError::NotHermitian(h));
        }
        if self.trace().im.abs() > DENSITY_HERMITIAN_TOL {
            return Err(HilbertError::ComplexTrace(self.trace().im));
        }
        let min = self.min_eigenvalue();
        if min < -DENSITY_EIGEN_TOL {
            return Err(HilbertError::NegativeEigenvalue(min));
        }
        Ok(())
    }

    /// `⟨ψ|ρ|ψ⟩` (real part).
    pub fn overlap_pure(&self, psi: &[C64]) -> f64 {
        let n = psi.len();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += psi[i].conj() * self.m[(i, j)] * psi[j];
            }
        }
        acc.re
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (r, c, v) in op.entries() {
            acc += v * self.m[(c, r)];
        }
        acc
    }

    /// `U ρ U†` for a sparse operator.
    pub fn conjugate_by(&self, u: &OperatorMatrix) -> Self {
        let ur = u.mul_dense(&self.m);
        let out = u.mul_dense(&ur.adjoint()).adjoint();
        Self { m: out }
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let diff = Self {
            m: &self.m - &other.m,
        };
        0.5 * diff.eigenvalues().iter().map(|e| e.abs()).sum::<f64>()
    }
}

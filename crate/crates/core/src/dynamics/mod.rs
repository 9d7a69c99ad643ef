//! Time evolution: fixed-step RK4 for state vectors and density matrices,
//! piecewise-constant programs with instantaneous measurements, and
//! quantum-trajectory sampling.

mod integrate;
mod trajectory;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{DensityMatrix, HilbertError, OperatorMatrix, StateVector};
use crate::model::{CollapseOperator, Outcome};

pub use integrate::{evolve_lindblad, evolve_schrodinger, lindblad_rhs};
use integrate::{lindblad_steps, schrodinger_steps};
pub use trajectory::{
    derive_seed, run_trajectory, sample_trajectories, JumpRecord, MeasurementOutcome,
    TrajectoryOptions, TrajectoryRecord, TrajectorySummary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("numerical instability at t={time}: {what}")]
    Instability { time: f64, what: String },
    #[error("segment would need {0} steps, above the configured limit")]
    StepLimit(u64),
    #[error("invalid integrator setting: {0}")]
    InvalidConfig(String),
    #[error("stage `{stage}` has a non-Hermitian Hamiltonian")]
    NonHermitianStage { stage: String },
    #[error("measurement `{0}` is not postselected; pure evolution cannot branch")]
    BranchingMeasurement(String),
    #[error("dimension mismatch: program acts on {expected}, state has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Step size in units of the inverse largest generator entry.
    pub step_fraction: f64,
    /// Upper bound on steps in one segment.
    pub max_steps: u64,
    /// Allowed relative norm (trace) drift per segment where evolution
    /// should conserve it, and allowed growth elsewhere.
    pub norm_tolerance: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step_fraction: 0.01,
            max_steps: 50_000_000,
            norm_tolerance: 1e-8,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.step_fraction > 0.0 && self.step_fraction.is_finite()) {
            return Err(DynamicsError::InvalidConfig(format!(
                "step_fraction must be positive, got {}",
                self.step_fraction
            )));
        }
        if !(self.norm_tolerance > 0.0) {
            return Err(DynamicsError::InvalidConfig(format!(
                "norm_tolerance must be positive, got {}",
                self.norm_tolerance
            )));
        }
        if self.max_steps == 0 {
            return Err(DynamicsError::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Number of uniform steps for a segment of length `duration` whose
    /// generator has largest entry `scale`.
    pub fn steps_for(&self, duration: f64, scale: f64) -> Result<u64, DynamicsError> {
        self.validate()?;
        if duration <= 0.0 {
            return Ok(0);
        }
        let n = (duration * scale / self.step_fraction).ceil().max(1.0);
        if !n.is_finite() || n > self.max_steps as f64 {
            return Err(DynamicsError::StepLimit(if n.is_finite() { n as u64 } else { u64::MAX }));
        }
        Ok(n as u64)
    }
}

/// Instantaneous projective measurement at the end of a stage.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub label: String,
    /// Orthogonal projectors resolving the identity.
    pub outcomes: Vec<(Outcome, OperatorMatrix)>,
    /// Keep only this outcome (heralding); `None` records all branches.
    pub postselect: Option<Outcome>,
}

impl Measurement {
    pub fn projector(&self, outcome: Outcome) -> Option<&OperatorMatrix> {
        self.outcomes.iter().find(|(o, _)| *o == outcome).map(|(_, p)| p)
    }
}

/// One piecewise-constant segment: instantaneous unitaries, evolution under
/// a Hermitian Hamiltonian, then measurements in order.
#[derive(Clone, Debug)]
pub struct Stage {
    pub label: String,
    pub preparations: Vec<OperatorMatrix>,
    pub hamiltonian: OperatorMatrix,
    pub duration: f64,
    pub measurements: Vec<Measurement>,
}

/// A sequence of stages sharing one set of collapse operators.
#[derive(Clone, Debug)]
pub struct Program {
    pub dim: usize,
    pub stages: Vec<Stage>,
    pub collapse: Vec<CollapseOperator>,
}

impl Program {
    pub fn total_duration(&self) -> f64 {
        self.stages.iter().map(|s| s.duration).sum()
    }

    fn decay_operator(&self) -> OperatorMatrix {
        let mut sum = OperatorMatrix::zeros(self.dim);
        for c in &self.collapse {
            sum = sum.add(&c.op.adjoint().matmul(&c.op));
        }
        sum
    }

    /// `H − (i/2) Σ L†L` for every stage.
    pub fn effective_hamiltonians(&self) -> Result<Vec<OperatorMatrix>, DynamicsError> {
        let decay = self.decay_operator().scale(C64::new(0.0, -0.5));
        self.stages
            .iter()
            .map(|s| {
                if !s.hamiltonian.is_hermitian() {
                    return Err(DynamicsError::NonHermitianStage { stage: s.label.clone() });
                }
                if s.hamiltonian.dim() != self.dim {
                    return Err(DynamicsError::DimensionMismatch {
                        expected: self.dim,
                        got: s.hamiltonian.dim(),
                    });
                }
                Ok(s.hamiltonian.add(&decay))
            })
            .collect()
    }

    /// Largest jump-rate entry, used alongside the Hamiltonian for step sizes.
    pub fn max_jump_rate(&self) -> f64 {
        self.collapse
            .iter()
            .map(|c| c.op.max_abs_entry().powi(2))
            .fold(0.0, f64::max)
    }

    fn check_dim(&self, got: usize) -> Result<(), DynamicsError> {
        if got != self.dim {
            return Err(DynamicsError::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

/// Outcome probabilities of one measurement in a deterministic run,
/// relative to the weight entering the measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementProbabilities {
    pub stage: String,
    pub label: String,
    pub probabilities: Vec<(Outcome, f64)>,
}

/// Result of [`run_lindblad`]. `rho` is unnormalized: its trace is the
/// probability of all postselected outcomes.
#[derive(Clone, Debug)]
pub struct LindbladRun {
    pub rho: DensityMatrix,
    pub measurements: Vec<MeasurementProbabilities>,
}

impl LindbladRun {
    pub fn success_probability(&self) -> f64 {
        self.rho.trace().re
    }
}

fn measure_density(rho: &DensityMatrix, m: &Measurement, stage: &str) -> (DensityMatrix, MeasurementProbabilities) {
    let total = rho.trace().re;
    let probabilities: Vec<(Outcome, f64)> = m
        .outcomes
        .iter()
        .map(|(o, p)| {
            let w = rho.expectation(p).re;
            (*o, if total > 0.0 { w / total } else { 0.0 })
        })
        .collect();
    let out = match m.postselect {
        Some(o) => {
            let p = m.projector(o).expect("postselected outcome has a projector");
            rho.conjugate_by(p)
        }
        None => {
            let mut acc = DensityMatrix::zeros(rho.dim());
            for (_, p) in &m.outcomes {
                *acc.matrix_mut() += rho.conjugate_by(p).into_matrix();
            }
            acc
        }
    };
    (
        out,
        MeasurementProbabilities {
            stage: stage.to_string(),
            label: m.label.clone(),
            probabilities,
        },
    )
}

/// Master-equation evolution of a program; postselected measurements keep
/// `P ρ P`, others apply `Σ_k P_k ρ P_k`.
pub fn run_lindblad(
    program: &Program,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
) -> Result<LindbladRun, DynamicsError> {
    program.check_dim(rho0.dim())?;
    let heffs = program.effective_hamiltonians()?;
    let jump_rate = program.max_jump_rate();
    let mut rho = rho0.clone();
    let mut records = Vec::new();
    let mut t0 = 0.0;
    for (stage, heff) in program.stages.iter().zip(&heffs) {
        for u in &stage.preparations {
            rho = rho.conjugate_by(u);
        }
        let scale = heff.max_abs_entry().max(jump_rate);
        let steps = cfg.steps_for(stage.duration, scale)?;
        rho = lindblad_steps(heff, &program.collapse, &rho, stage.duration, steps, t0, cfg.norm_tolerance)?;
        t0 += stage.duration;
        for m in &stage.measurements {
            let (next, rec) = measure_density(&rho, m, &stage.label);
            rho = next;
            records.push(rec);
        }
    }
    Ok(LindbladRun {
        rho,
        measurements: records,
    })
}

/// Pure-state evolution under each stage's effective Hamiltonian with
/// projective postselection and no renormalization: the final norm² is the
/// no-jump probability of the postselected record.
pub fn run_pure(
    program: &Program,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
) -> Result<StateVector, DynamicsError> {
    program.check_dim(psi0.dim())?;
    let heffs = program.effective_hamiltonians()?;
    let mut psi = psi0.clone();
    let mut t0 = 0.0;
    for (stage, heff) in program.stages.iter().zip(&heffs) {
        for u in &stage.preparations {
            psi = psi.apply(u);
        }
        let steps = cfg.steps_for(stage.duration, heff.max_abs_entry())?;
        psi = schrodinger_steps(heff, &psi, stage.duration, steps, t0, cfg.norm_tolerance)?;
        t0 += stage.duration;
        for m in &stage.measurements {
            let o = m
                .postselect
                .ok_or_else(|| DynamicsError::BranchingMeasurement(m.label.clone()))?;
            psi = psi.apply(m.projector(o).expect("postselected outcome has a projector"));
        }
    }
    Ok(psi)
}

//! Reference formulas, Bell-state fidelities, linear scaling fits and the
//! comparison of the multimode fiber model with its two-mode reduction.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{evolve_schrodinger, DynamicsError, IntegratorConfig};
use crate::hilbert::{
    mode_annihilator, DensityMatrix, HilbertError, ModeId, OperatorMatrix, Polarization, QubitEncoding,
    Site, StateVector,
};
use crate::model::{effective_hopping_rate, fiber_hamiltonian, Advisory, FiberParams, ModelError};
use crate::protocol::SchemeKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("state is not normalized (trace {0})")]
    NotNormalized(f64),
    #[error("expected a {expected}x{expected} density matrix, got {got}x{got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("hopping rate must be positive, got {0}")]
    NonPositiveHopping(f64),
    #[error("kappa must be non-negative, got {0}")]
    NegativeKappa(f64),
    #[error("no first-order reference formula for the {0} scheme")]
    NoReference(SchemeKind),
    #[error("scaling fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("scaling fit abscissa must be positive and finite, got {0}")]
    BadAbscissa(f64),
    #[error("scaling fit abscissa values are all equal")]
    DegenerateAbscissa,
    #[error("fiber dynamics are not oscillatory: {0}")]
    NonOscillatory(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellLabel {
    PsiMinus,
    PsiPlus,
    PhiPlus,
    PhiMinus,
}

/// A Bell state on two qubits. Index convention `q1·2 + q2`; the encoding
/// records which physical carriers the qubits refer to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellTarget {
    pub label: BellLabel,
    pub encoding: QubitEncoding,
}

impl BellTarget {
    pub fn psi_minus(encoding: QubitEncoding) -> Self {
        Self {
            label: BellLabel::PsiMinus,
            encoding,
        }
    }

    pub fn vector(&self) -> [C64; 4] {
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        let z = C64::new(0.0, 0.0);
        match self.label {
            BellLabel::PsiMinus => [z, s, -s, z],
            BellLabel::PsiPlus => [z, s, s, z],
            BellLabel::PhiPlus => [s, z, z, s],
            BellLabel::PhiMinus => [s, z, z, -s],
        }
    }
}

/// `⟨target|ρ|target⟩` for a unit-trace two-qubit state.
pub fn fidelity(rho: &DensityMatrix, target: &BellTarget) -> Result<f64, AnalysisError> {
    if rho.dim() != 4 {
        return Err(AnalysisError::WrongDimension {
            expected: 4,
            got: rho.dim(),
        });
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(AnalysisError::NotNormalized(tr.re));
    }
    Ok(rho.overlap_pure(&target.vector()))
}

/// `½ exp(−πκ/2J)`.
pub fn success_probability_ideal(kappa: f64, hopping: f64) -> Result<f64, AnalysisError> {
    if !(hopping > 0.0) {
        return Err(AnalysisError::NonPositiveHopping(hopping));
    }
    if kappa < 0.0 {
        return Err(AnalysisError::NegativeKappa(kappa));
    }
    Ok(0.5 * (-PI * kappa / (2.0 * hopping)).exp())
}

/// First-order fidelity: `1 − (3π/16)(γ+κ)/g` for photons,
/// `1 − (3π/(16√2)) γ/g` for atoms.
pub fn perturbative_fidelity(scheme: SchemeKind, gamma: f64, kappa: f64, g: f64) -> Result<f64, AnalysisError> {
    match scheme {
        SchemeKind::TwoPhoton => Ok(1.0 - 3.0 * PI / 16.0 * (gamma + kappa) / g),
        SchemeKind::TwoAtom => Ok(1.0 - 3.0 * PI / (16.0 * SQRT_2) * gamma / g),
        SchemeKind::AtomPhoton => Err(AnalysisError::NoReference(scheme)),
    }
}

/// `Some` advisory when the first-order formulas are being used outside
/// `max(γ, κ) ≤ 0.1 g`.
pub fn perturbative_advisory(gamma: f64, kappa: f64, g: f64) -> Option<Advisory> {
    let ratio = gamma.max(kappa) / g;
    (ratio > 0.1).then_some(Advisory::RatesNotSmall { ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through `(x, 1−F)` points.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit, AnalysisError> {
    if points.len() < 4 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    if let Some(&(x, _)) = points.iter().find(|(x, _)| !(*x > 0.0 && x.is_finite())) {
        return Err(AnalysisError::BadAbscissa(x));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 1e-300) {
        return Err(AnalysisError::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ScalingFit {
        x: points.iter().map(|p| p.0).collect(),
        y: points.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        r_squared,
    })
}

/// Half the trace norm of `a − b`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    a.trace_distance(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    pub effective_rate: f64,
    /// `π/(2|J_eff|)`: time for a full A → B transfer.
    pub predicted_transfer_time: f64,
    pub full_transfer_time: f64,
    pub effective_transfer_time: f64,
    /// `|T_full − T_eff| / T_eff`.
    pub relative_deviation: f64,
    /// Largest total population in all fiber modes.
    pub peak_fiber_population: f64,
    /// Largest population of any single fiber mode.
    pub peak_mode_population: f64,
    pub duration: f64,
    pub samples: usize,
    pub advisories: Vec<Advisory>,
}

fn zero_crossings(times: &[f64], values: &[f64], merge_window: f64) -> Vec<f64> {
    let mut raw = Vec::new();
    for k in 1..values.len() {
        let (a, b) = (values[k - 1], values[k]);
        if (a > 0.0) != (b > 0.0) {
            let f = a / (a - b);
            raw.push(times[k - 1] + f * (times[k] - times[k - 1]));
        }
    }
    // fast fiber ripples split one slow crossing into a burst
    let mut merged: Vec<Vec<f64>> = Vec::new();
    for t in raw {
        match merged.last_mut() {
            Some(group) if t - group[group.len() - 1] < merge_window => group.push(t),
            _ => merged.push(vec![t]),
        }
    }
    merged
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect()
}

struct Sampled {
    transfer_time: f64,
    peak_total: f64,
    peak_mode: f64,
}

fn sample_transfer(
    h: &OperatorMatrix,
    psi0: &StateVector,
    a: &OperatorMatrix,
    b: &OperatorMatrix,
    fiber_numbers: &[OperatorMatrix],
    duration: f64,
    samples: usize,
    merge_window: f64,
    cfg: &IntegratorConfig,
) -> Result<Sampled, AnalysisError> {
    let na = a.adjoint().matmul(a);
    let nb = b.adjoint().matmul(b);
    let dt = duration / samples as f64;
    let mut psi = psi0.clone();
    let mut times = Vec::with_capacity(samples + 1);
    let mut diff = Vec::with_capacity(samples + 1);
    let mut peak_total: f64 = 0.0;
    let mut peak_mode: f64 = 0.0;
    for k in 0..=samples {
        if k > 0 {
            psi = evolve_schrodinger(h, &psi, dt, cfg)?;
        }
        times.push(k as f64 * dt);
        diff.push(psi.expectation(&na).re - psi.expectation(&nb).re);
        let pops: Vec<f64> = fiber_numbers.iter().map(|n| psi.expectation(n).re).collect();
        peak_total = peak_total.max(pops.iter().sum());
        peak_mode = pops.iter().copied().fold(peak_mode, f64::max);
    }
    let crossings = zero_crossings(&times, &diff, merge_window);
    if crossings.len() < 2 {
        return Err(AnalysisError::NonOscillatory(format!(
            "{} population crossing(s) within t={duration}",
            crossings.len()
        )));
    }
    Ok(Sampled {
        transfer_time: crossings[1] - crossings[0],
        peak_total,
        peak_mode,
    })
}

/// Evolve one photon starting in cavity A under the full fiber model and
/// under the two-mode model with `J_eff`, and compare the A → B transfer
/// times (spacing of consecutive zero crossings of `P_A − P_B`).
pub fn fiber_compare(
    fiber: &FiberParams,
    duration: Option<f64>,
    samples: usize,
    cfg: &IntegratorConfig,
) -> Result<FiberReport, AnalysisError> {
    let advisories = fiber.validate()?;
    let j_eff = effective_hopping_rate(fiber)?;
    if !(j_eff.abs() > 0.0) {
        return Err(AnalysisError::NonOscillatory("effective coupling is zero".into()));
    }
    let predicted = PI / (2.0 * j_eff.abs());
    let duration = duration.unwrap_or(2.6 * predicted);
    let samples = samples.max(16);

    let basis = fiber.basis()?;
    let am = ModeId::new(Site::CavityA, Polarization::L);
    let bm = ModeId::new(Site::CavityB, Polarization::L);
    let a = mode_annihilator(&basis, am)?;
    let b = mode_annihilator(&basis, bm)?;
    let fiber_numbers: Vec<OperatorMatrix> = fiber
        .modes
        .iter()
        .map(|m| {
            let f = mode_annihilator(&basis, ModeId::new(Site::Fiber(m.index), Polarization::L))?;
            Ok(f.adjoint().matmul(&f))
        })
        .collect::<Result<_, HilbertError>>()?;
    let start = basis.product_state([crate::hilbert::AtomLevel::G0; 2], &[am])?;
    let psi0 = StateVector::basis_state(&basis, &start)?;

    let h_full = fiber_hamiltonian(&basis, fiber)?;
    let hop = a.adjoint().matmul(&b);
    let h_eff = hop
        .add(&hop.adjoint())
        .scale(C64::new(j_eff, 0.0))
        .flagged_hermitian()?;

    let window = 0.25 * predicted;
    let full = sample_transfer(&h_full, &psi0, &a, &b, &fiber_numbers, duration, samples, window, cfg)?;
    let eff = sample_transfer(&h_eff, &psi0, &a, &b, &[], duration, samples, window, cfg)?;
    Ok(FiberReport {
        effective_rate: j_eff,
        predicted_transfer_time: predicted,
        full_transfer_time: full.transfer_time,
        effective_transfer_time: eff.transfer_time,
        relative_deviation: (full.transfer_time - eff.transfer_time).abs() / eff.transfer_time,
        peak_fiber_population: full.peak_total,
        peak_mode_population: full.peak_mode,
        duration,
        samples,
        advisories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::QubitEncoding;

    fn bell_rho(label: BellLabel) -> DensityMatrix {
        let v = BellTarget { label, encoding: QubitEncoding::ATOM_GROUND }.vector();
        DensityMatrix::from_pure(&StateVector::from_amplitudes(v.to_vec()))
    }

    #[test]
    fn bell_states_are_orthonormal() {
        let labels = [BellLabel::PsiMinus, BellLabel::PsiPlus, BellLabel::PhiPlus, BellLabel::PhiMinus];
        for a in labels {
            for b in labels {
                let f = fidelity(&bell_rho(a), &BellTarget { label: b, encoding: QubitEncoding::ATOM_GROUND }).unwrap();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((f - want).abs() < 1e-12);
            }
        }
        let v = BellTarget::psi_minus(QubitEncoding::ATOM_GROUND).vector();
        // antisymmetric under qubit swap (|01⟩ ↔ |10⟩)
        assert_eq!(v[1], -v[2]);
    }

    #[test]
    fn fidelity_of_maximally_mixed_is_quarter() {
        let m = DensityMatrix::from_matrix(nalgebra::DMatrix::identity(4, 4) * C64::new(0.25, 0.0));
        let t = BellTarget::psi_minus(QubitEncoding::PHOTON_POLARIZATION);
        assert!((fidelity(&m, &t).unwrap() - 0.25).abs() < 1e-12);
        let bad = m.scaled(2.0);
        assert!(matches!(fidelity(&bad, &t), Err(AnalysisError::NotNormalized(_))));
    }

    #[test]
    fn reference_formulas() {
        assert_eq!(success_probability_ideal(0.0, 1.0).unwrap(), 0.5);
        assert!((success_probability_ideal(0.1, 1.0).unwrap() - 0.427_31).abs() < 1e-5);
        assert!(success_probability_ideal(1e3, 1.0).unwrap() < 1e-300);
        assert!(success_probability_ideal(0.1, 0.0).is_err());
        let fp = perturbative_fidelity(SchemeKind::TwoPhoton, 0.01, 0.01, 1.0).unwrap();
        assert!((fp - 0.988_22).abs() < 1e-5);
        assert_eq!(perturbative_fidelity(SchemeKind::TwoAtom, 0.0, 0.3, 1.0).unwrap(), 1.0);
        let fa = perturbative_fidelity(SchemeKind::TwoAtom, 0.02, 0.0, 1.0).unwrap();
        assert!((fa - 0.991_67).abs() < 1e-5);
        assert!(perturbative_fidelity(SchemeKind::AtomPhoton, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn mixing_model_reproduces_first_order_constant() {
        // ρ = (1 − 2P)|Ψ⁻⟩⟨Ψ⁻| + P·I/4, normalized; P = (π/4g)(γ+κ)
        let x = 1e-4;
        let p = PI / 4.0 * x;
        let mut m = bell_rho(BellLabel::PsiMinus).scaled(1.0 - 2.0 * p).into_matrix();
        m += nalgebra::DMatrix::identity(4, 4) * C64::new(0.25 * p, 0.0);
        let rho = DensityMatrix::from_matrix(m).normalized().unwrap();
        let f = fidelity(&rho, &BellTarget::psi_minus(QubitEncoding::PHOTON_POLARIZATION)).unwrap();
        let slope = (1.0 - f) / x;
        assert!((slope - 3.0 * PI / 16.0).abs() < 1e-3, "{slope}");
    }

    #[test]
    fn fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = [0.002, 0.005, 0.01, 0.02].iter().map(|&x| (x, 0.3 * x + 1e-4)).collect();
        let fit = scaling_fit(&pts).unwrap();
        assert!((fit.slope - 0.3).abs() < 1e-12);
        assert!((fit.intercept - 1e-4).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(scaling_fit(&pts[..3]), Err(AnalysisError::TooFewPoints(3))));
        let flat = vec![(0.1, 0.0); 4];
        assert!(matches!(scaling_fit(&flat), Err(AnalysisError::DegenerateAbscissa)));
    }

    #[test]
    fn vanishing_fiber_coupling_is_flagged() {
        let f = FiberParams::default_grid(0.0, 1.0);
        let err = fiber_compare(&f, None, 100, &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(err, AnalysisError::NonOscillatory(_)));
    }
}

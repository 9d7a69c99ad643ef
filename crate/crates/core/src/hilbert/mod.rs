//! Truncated Hilbert space of two five-level atoms plus bosonic modes, with
//! the operator and state algebra built on top of it.

mod basis;
mod operator;
mod state;

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use basis::{
    build_basis, Atom, AtomLevel, Basis, BasisBuilder, BasisState, ModeId, Polarization, Site,
};
pub use operator::{OperatorMatrix, HERMITIAN_TOL};
pub use state::{DensityMatrix, StateVector, DENSITY_EIGEN_TOL, DENSITY_HERMITIAN_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("basis needs at least one mode")]
    NoModes,
    #[error("an atom has no allowed levels")]
    NoAtomLevels,
    #[error("invalid truncation n_max={n_max}, e_max={e_max}")]
    InvalidTruncation { n_max: u8, e_max: u32 },
    #[error("mode {0} listed twice")]
    DuplicateMode(ModeId),
    #[error("mode {0} not present in basis")]
    UnknownMode(ModeId),
    #[error("state lies outside the truncated space")]
    OutsideTruncation,
    #[error("transition needs distinct levels, got {0} -> {0}")]
    TrivialTransition(AtomLevel),
    #[error("operator is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("density matrix has complex trace (imaginary part {0:e})")]
    ComplexTrace(f64),
    #[error("density matrix has negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("partial trace needs at least one kept factor")]
    EmptyKeepSet,
    #[error("conditioning sector has zero weight")]
    EmptySector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Annihilation operator of mode `mode`. Matrix elements that would leave the
/// truncated space are dropped.
pub fn mode_annihilator(basis: &Basis, mode: ModeId) -> Result<OperatorMatrix, HilbertError> {
    let k = basis.require_mode(mode)?;
    Ok(OperatorMatrix::from_action(basis, |s| {
        let n = s.occupations[k];
        if n == 0 {
            return Vec::new();
        }
        let mut t = s.clone();
        t.occupations[k] -= 1;
        vec![(t, C64::new(f64::from(n).sqrt(), 0.0))]
    }))
}

pub fn mode_creator(basis: &Basis, mode: ModeId) -> Result<OperatorMatrix, HilbertError> {
    Ok(mode_annihilator(basis, mode)?.adjoint())
}

/// Photon-number operator of `mode`.
pub fn mode_number(basis: &Basis, mode: ModeId) -> Result<OperatorMatrix, HilbertError> {
    let k = basis.require_mode(mode)?;
    OperatorMatrix::diagonal(basis, |s| C64::new(f64::from(s.occupations[k]), 0.0)).flagged_hermitian()
}

/// `|to⟩⟨from|` on `atom`, identity on everything else.
pub fn atom_transition(
    basis: &Basis,
    atom: Atom,
    from: AtomLevel,
    to: AtomLevel,
) -> Result<OperatorMatrix, HilbertError> {
    if from == to {
        return Err(HilbertError::TrivialTransition(from));
    }
    let a = atom.index();
    Ok(OperatorMatrix::from_action(basis, |s| {
        if s.atoms[a] != from {
            return Vec::new();
        }
        let mut t = s.clone();
        t.atoms[a] = to;
        vec![(t, C64::new(1.0, 0.0))]
    }))
}

/// Projector onto `atom` occupying any of `levels`.
pub fn atom_projector(basis: &Basis, atom: Atom, levels: &[AtomLevel]) -> OperatorMatrix {
    let a = atom.index();
    OperatorMatrix::diagonal(basis, |s| {
        if levels.contains(&s.atoms[a]) {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
    .flagged_hermitian()
    .expect("diagonal real projector")
}

/// A tensor factor that can be kept by [`partial_trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    Atom(Atom),
    Mode(ModeId),
}

/// Reduced state on a set of kept factors. `labels[i]` holds the kept
/// factors' values (atom level index or photon number) for reduced index `i`.
#[derive(Clone, Debug)]
pub struct ReducedState {
    pub factors: Vec<Factor>,
    pub labels: Vec<Vec<u8>>,
    pub rho: DensityMatrix,
}

fn factor_value(basis: &Basis, s: &BasisState, f: Factor) -> Result<u8, HilbertError> {
    Ok(match f {
        Factor::Atom(a) => s.level(a) as u8,
        Factor::Mode(m) => s.occupations[basis.require_mode(m)?],
    })
}

/// Trace out every factor not listed in `keep`.
///
/// The truncated space is not a full tensor product; the reduced matrix sums
/// `ρ[(k, t), (k', t)]` over traced configurations `t` for which both states
/// exist in the basis.
pub fn partial_trace(
    rho: &DensityMatrix,
    basis: &Basis,
    keep: &[Factor],
) -> Result<ReducedState, HilbertError> {
    if keep.is_empty() {
        return Err(HilbertError::EmptyKeepSet);
    }
    check_dim(basis, rho.dim())?;
    let mut factors = keep.to_vec();
    factors.sort();
    factors.dedup();

    let mut kept_keys = Vec::with_capacity(basis.dim());
    for s in basis.states() {
        let key = factors
            .iter()
            .map(|&f| factor_value(basis, s, f))
            .collect::<Result<Vec<u8>, _>>()?;
        kept_keys.push(key);
    }
    let mut labels: Vec<Vec<u8>> = kept_keys.clone();
    labels.sort();
    labels.dedup();
    let label_index: HashMap<&Vec<u8>, usize> =
        labels.iter().enumerate().map(|(i, l)| (l, i)).collect();

    let mut groups: BTreeMap<BasisState, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, s) in basis.states().iter().enumerate() {
        let mut env = s.clone();
        for &f in &factors {
            match f {
                Factor::Atom(a) => env.atoms[a.index()] = AtomLevel::G0,
                Factor::Mode(m) => env.occupations[basis.require_mode(m)?] = 0,
            }
        }
        groups
            .entry(env)
            .or_default()
            .push((label_index[&kept_keys[i]], i));
    }

    let mut red = DMatrix::zeros(labels.len(), labels.len());
    let m = rho.matrix();
    for members in groups.values() {
        for &(ka, ia) in members {
            for &(kb, ib) in members {
                red[(ka, kb)] += m[(ia, ib)];
            }
        }
    }
    Ok(ReducedState {
        factors,
        labels,
        rho: DensityMatrix::from_matrix(red),
    })
}

fn check_dim(basis: &Basis, got: usize) -> Result<(), HilbertError> {
    if basis.dim() != got {
        return Err(HilbertError::DimensionMismatch {
            expected: basis.dim(),
            got,
        });
    }
    Ok(())
}

/// Physical carrier of one logical qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QubitCarrier {
    /// Polarization of the single photon in a cavity: L → 0, R → 1.
    Photon(Site),
    /// Atomic ground-state qubit: gL → 0, gR → 1.
    Atom(Atom),
}

/// Two-qubit encoding; qubit 1 is the more significant index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QubitEncoding(pub [QubitCarrier; 2]);

impl QubitEncoding {
    pub const PHOTON_POLARIZATION: QubitEncoding = QubitEncoding([
        QubitCarrier::Photon(Site::CavityA),
        QubitCarrier::Photon(Site::CavityB),
    ]);
    pub const ATOM_GROUND: QubitEncoding =
        QubitEncoding([QubitCarrier::Atom(Atom::A), QubitCarrier::Atom(Atom::B)]);
    /// Photon kept in cavity A, atom B mapped.
    pub const PHOTON_ATOM: QubitEncoding =
        QubitEncoding([QubitCarrier::Photon(Site::CavityA), QubitCarrier::Atom(Atom::B)]);
}

/// Normalized two-qubit state plus the weight of the conditioning sector
/// relative to the input trace.
#[derive(Clone, Debug)]
pub struct QubitState {
    pub rho: DensityMatrix,
    pub weight: f64,
}

fn carrier_label(basis: &Basis, s: &BasisState, c: QubitCarrier) -> Option<u8> {
    match c {
        QubitCarrier::Photon(site) => {
            let idx = basis.site_modes(site);
            let total: u32 = idx.iter().map(|&k| u32::from(s.occupations[k])).sum();
            if total != 1 {
                return None;
            }
            let k = idx.into_iter().find(|&k| s.occupations[k] == 1)?;
            Some(match basis.modes()[k].pol {
                Polarization::L => 0,
                Polarization::R => 1,
            })
        }
        QubitCarrier::Atom(a) => match s.level(a) {
            AtomLevel::GL => Some(0),
            AtomLevel::GR => Some(1),
            _ => None,
        },
    }
}

fn blank_carrier(basis: &Basis, s: &mut BasisState, c: QubitCarrier) {
    match c {
        QubitCarrier::Photon(site) => {
            for k in basis.site_modes(site) {
                s.occupations[k] = 0;
            }
        }
        QubitCarrier::Atom(a) => s.atoms[a.index()] = AtomLevel::G0,
    }
}

/// For each basis index inside the sector: (two-qubit index, environment key).
fn sector_members(basis: &Basis, enc: QubitEncoding) -> BTreeMap<BasisState, Vec<(usize, usize)>> {
    let mut groups: BTreeMap<BasisState, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, s) in basis.states().iter().enumerate() {
        let (Some(q1), Some(q2)) = (
            carrier_label(basis, s, enc.0[0]),
            carrier_label(basis, s, enc.0[1]),
        ) else {
            continue;
        };
        let mut env = s.clone();
        blank_carrier(basis, &mut env, enc.0[0]);
        blank_carrier(basis, &mut env, enc.0[1]);
        groups
            .entry(env)
            .or_default()
            .push((usize::from(q1) * 2 + usize::from(q2), i));
    }
    groups
}

/// Project onto the sector where both carriers hold a qubit, trace out the
/// rest and renormalize.
pub fn qubit_extract(
    rho: &DensityMatrix,
    basis: &Basis,
    enc: QubitEncoding,
) -> Result<QubitState, HilbertError> {
    check_dim(basis, rho.dim())?;
    let m = rho.matrix();
    let mut q = DMatrix::zeros(4, 4);
    for members in sector_members(basis, enc).values() {
        for &(qa, ia) in members {
            for &(qb, ib) in members {
                q[(qa, qb)] += m[(ia, ib)];
            }
        }
    }
    finish_extract(q, rho.trace().re)
}

/// [`qubit_extract`] for a pure state.
pub fn qubit_extract_pure(
    psi: &StateVector,
    basis: &Basis,
    enc: QubitEncoding,
) -> Result<QubitState, HilbertError> {
    check_dim(basis, psi.dim())?;
    let a = psi.amplitudes();
    let mut q = DMatrix::zeros(4, 4);
    for members in sector_members(basis, enc).values() {
        for &(qa, ia) in members {
            for &(qb, ib) in members {
                q[(qa, qb)] += a[ia] * a[ib].conj();
            }
        }
    }
    finish_extract(q, psi.norm_sqr())
}

fn finish_extract(q: DMatrix<C64>, total: f64) -> Result<QubitState, HilbertError> {
    let w = q.trace().re;
    if !(w > 1e-300) || !(total > 0.0) {
        return Err(HilbertError::EmptySector);
    }
    Ok(QubitState {
        rho: DensityMatrix::from_matrix(q / C64::new(w, 0.0)),
        weight: w / total,
    })
}

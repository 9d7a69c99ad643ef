//! Hamiltonians, collapse operators and measurement operators built from
//! physical parameters.
//!
//! All rates are angular frequencies in one common (arbitrary) unit; times are
//! in the inverse of that unit.

use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{
    atom_projector, atom_transition, mode_annihilator, mode_number, Atom, AtomLevel, Basis,
    BasisBuilder, HilbertError, ModeId, OperatorMatrix, Polarization, Site,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be non-negative, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("branching ratio must lie in [0, 1], got {0}")]
    Branching(f64),
    #[error("basis is missing mode {0}")]
    MissingMode(ModeId),
    #[error("fiber mode {0} is resonant with the cavity (zero detuning)")]
    ResonantFiberMode(i32),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Non-fatal warnings about the validity regime of a parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Advisory {
    /// `g < 10·max(J, κ, γ)`.
    WeakCoupling { ratio: f64 },
    /// `min|Δ_n| < 10·max ν_n`.
    FiberNotDispersive { ratio: f64 },
    /// No fiber modes: the effective coupling is zero.
    NoFiberModes,
    /// Decay rates above `0.1·g`, outside the first-order regime.
    RatesNotSmall { ratio: f64 },
}

impl fmt::Display for Advisory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Advisory::WeakCoupling { ratio } => {
                write!(f, "g/max(J, kappa, gamma) = {ratio:.3} < 10: outside strong coupling")
            }
            Advisory::FiberNotDispersive { ratio } => {
                write!(f, "min|Delta_n|/max(nu_n) = {ratio:.3} < 10: fiber modes not far detuned")
            }
            Advisory::NoFiberModes => f.write_str("no fiber modes: effective coupling is zero"),
            Advisory::RatesNotSmall { ratio } => {
                write!(f, "max(kappa, gamma)/g = {ratio:.3} > 0.1: first-order formulas unreliable")
            }
        }
    }
}

/// Physical constants of the two-cavity system. Per-segment detunings and
/// Rabi frequencies live on the pulse segments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    /// Atom-cavity coupling `g`.
    pub g: f64,
    /// Inter-cavity hopping rate `J`.
    #[serde(alias = "J")]
    pub hopping: f64,
    /// Cavity decay rate into the output channel.
    pub kappa: f64,
    /// Atomic spontaneous decay rate.
    pub gamma: f64,
    /// Fraction of atomic decay from `e_p` that returns to `g0`.
    pub branching_g0: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            hopping: 0.01,
            kappa: 0.0,
            gamma: 0.0,
            branching_g0: 0.5,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<Vec<Advisory>, ModelError> {
        for (name, value) in [
            ("g", self.g),
            ("J", self.hopping),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
        ] {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { name, value });
            }
            if value < 0.0 {
                return Err(ModelError::NegativeRate { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.branching_g0) {
            return Err(ModelError::Branching(self.branching_g0));
        }
        let mut out = Vec::new();
        let fastest = self.hopping.max(self.kappa).max(self.gamma);
        if fastest > 0.0 && self.g < 10.0 * fastest {
            out.push(Advisory::WeakCoupling {
                ratio: self.g / fastest,
            });
        }
        Ok(out)
    }

    pub fn is_strong_coupling(&self) -> bool {
        self.g >= 10.0 * self.hopping.max(self.kappa).max(self.gamma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberMode {
    /// Mode index `n`; sets the `(-1)^n` sign at the cavity B end.
    pub index: i32,
    /// Cavity-fiber coupling `ν_n`.
    pub coupling: f64,
    /// Fiber-mode detuning `Δ_n` from the cavity resonance.
    pub detuning: f64,
}

impl FiberMode {
    pub fn parity_sign(&self) -> f64 {
        if self.index.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    pub modes: Vec<FiberMode>,
}

impl FiberParams {
    /// `count` modes with contiguous indices centered on zero, equal
    /// coupling, and detunings `offset + n·spacing`.
    pub fn uniform_grid(count: usize, coupling: f64, spacing: f64, offset: f64) -> Self {
        let first = -(count as i32 / 2);
        Self {
            modes: (0..count as i32)
                .map(|k| {
                    let index = first + k;
                    FiberMode {
                        index,
                        coupling,
                        detuning: offset + f64::from(index) * spacing,
                    }
                })
                .collect(),
        }
    }

    /// Default grid: five modes, the cavity halfway between two fiber modes.
    pub fn default_grid(coupling: f64, spacing: f64) -> Self {
        Self::uniform_grid(5, coupling, spacing, 0.5 * spacing)
    }

    pub fn min_abs_detuning(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.detuning.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_coupling(&self) -> f64 {
        self.modes.iter().map(|m| m.coupling.abs()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<Vec<Advisory>, ModelError> {
        for m in &self.modes {
            if m.detuning == 0.0 {
                return Err(ModelError::ResonantFiberMode(m.index));
            }
            if !m.detuning.is_finite() {
                return Err(ModelError::NonFinite {
                    name: "fiber detuning",
                    value: m.detuning,
                });
            }
            if !m.coupling.is_finite() {
                return Err(ModelError::NonFinite {
                    name: "fiber coupling",
                    value: m.coupling,
                });
            }
        }
        if self.modes.is_empty() {
            return Ok(vec![Advisory::NoFiberModes]);
        }
        let mut out = Vec::new();
        let ratio = self.min_abs_detuning() / self.max_coupling();
        if ratio < 10.0 {
            out.push(Advisory::FiberNotDispersive { ratio });
        }
        Ok(out)
    }

    /// Single-polarization, single-excitation basis with both atoms frozen in
    /// `g0`: modes A·L, B·L, then one L mode per fiber mode.
    pub fn basis(&self) -> Result<Basis, ModelError> {
        let mut modes = vec![
            ModeId::new(Site::CavityA, Polarization::L),
            ModeId::new(Site::CavityB, Polarization::L),
        ];
        modes.extend(
            self.modes
                .iter()
                .map(|m| ModeId::new(Site::Fiber(m.index), Polarization::L)),
        );
        Ok(BasisBuilder::new(modes)
            .n_max(1)
            .e_max(1)
            .atom_levels(Atom::A, &[AtomLevel::G0])
            .atom_levels(Atom::B, &[AtomLevel::G0])
            .build()?)
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn check_rate(name: &'static str, value: f64) -> Result<(), ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NonFinite { name, value });
    }
    if value < 0.0 {
        return Err(ModelError::NegativeRate { name, value });
    }
    Ok(())
}

fn require(basis: &Basis, mode: ModeId) -> Result<(), ModelError> {
    if basis.mode_index(mode).is_none() {
        return Err(ModelError::MissingMode(mode));
    }
    Ok(())
}

/// `Σ_p (x_p† y_p + y_p† x_p)` between two modes of each polarization.
fn exchange(basis: &Basis, x: ModeId, y: ModeId) -> Result<OperatorMatrix, ModelError> {
    let ax = mode_annihilator(basis, x)?;
    let ay = mode_annihilator(basis, y)?;
    let forward = ax.adjoint().matmul(&ay);
    Ok(forward.add(&forward.adjoint()))
}

/// `J Σ_{p∈{L,R}} (a_p† b_p + b_p† a_p)`.
pub fn hopping_hamiltonian(basis: &Basis, hopping: f64) -> Result<OperatorMatrix, ModelError> {
    let mut h = OperatorMatrix::zeros(basis.dim());
    for pol in Polarization::BOTH {
        let a = ModeId::new(Site::CavityA, pol);
        let b = ModeId::new(Site::CavityB, pol);
        require(basis, a)?;
        require(basis, b)?;
        h = h.add(&exchange(basis, a, b)?);
    }
    Ok(h.scale(real(hopping)).flagged_hermitian()?)
}

/// Total photon number in the four cavity modes.
pub fn cavity_photon_number(basis: &Basis) -> Result<OperatorMatrix, ModelError> {
    let mut n = OperatorMatrix::zeros(basis.dim());
    for m in ModeId::cavity_modes() {
        require(basis, m)?;
        n = n.add(&mode_number(basis, m)?);
    }
    Ok(n.flagged_hermitian()?)
}

/// Hopping term minus `i(κ/2)` times the cavity photon number: the
/// generator of evolution conditioned on no cavity decay.
pub fn conditional_hamiltonian(
    basis: &Basis,
    hopping: f64,
    kappa: f64,
) -> Result<OperatorMatrix, ModelError> {
    check_rate("kappa", kappa)?;
    let h = hopping_hamiltonian(basis, hopping)?;
    if kappa == 0.0 {
        return Ok(h);
    }
    let n = cavity_photon_number(basis)?;
    Ok(h.sub(&n.scale(C64::new(0.0, 0.5 * kappa))))
}

/// Jaynes-Cummings coupling of `atom` to both polarization modes of its own
/// cavity: `Σ_p [g(|e_p⟩⟨g0| c_p + h.c.) + Δ|e_p⟩⟨e_p|]`.
pub fn jc_atom_hamiltonian(
    basis: &Basis,
    atom: Atom,
    g: f64,
    detuning: f64,
) -> Result<OperatorMatrix, ModelError> {
    let mut h = OperatorMatrix::zeros(basis.dim());
    for pol in Polarization::BOTH {
        let mode = ModeId::new(atom.cavity(), pol);
        require(basis, mode)?;
        let raise = atom_transition(basis, atom, AtomLevel::G0, AtomLevel::excited(pol))?;
        let absorb = raise.matmul(&mode_annihilator(basis, mode)?);
        h = h.add(&absorb.add(&absorb.adjoint()).scale(real(g)));
    }
    if detuning != 0.0 {
        let p = atom_projector(basis, atom, &[AtomLevel::EL, AtomLevel::ER]);
        h = h.add(&p.scale(real(detuning)));
    }
    Ok(h.flagged_hermitian()?)
}

/// [`jc_atom_hamiltonian`] summed over both atoms.
pub fn jc_hamiltonian(basis: &Basis, g: f64, detuning: [f64; 2]) -> Result<OperatorMatrix, ModelError> {
    let a = jc_atom_hamiltonian(basis, Atom::A, g, detuning[0])?;
    let b = jc_atom_hamiltonian(basis, Atom::B, g, detuning[1])?;
    Ok(a.add(&b).flagged_hermitian()?)
}

/// Classical drive `Σ_atoms Σ_p Ω(|e_p⟩⟨g_p| + h.c.)`; never touches `g0`.
pub fn drive_hamiltonian(basis: &Basis, rabi: [f64; 2]) -> Result<OperatorMatrix, ModelError> {
    let mut h = OperatorMatrix::zeros(basis.dim());
    for atom in Atom::BOTH {
        let omega = rabi[atom.index()];
        if omega == 0.0 {
            continue;
        }
        for pol in Polarization::BOTH {
            let up = atom_transition(basis, atom, AtomLevel::ground(pol), AtomLevel::excited(pol))?;
            h = h.add(&up.add(&up.adjoint()).scale(real(omega)));
        }
    }
    Ok(h.flagged_hermitian()?)
}

/// `Σ_n ν_n[a† f_n + (−1)^n b† f_n + h.c.] + Σ_n Δ_n f_n† f_n`, applied for
/// every polarization whose fiber modes are present in the basis.
pub fn fiber_hamiltonian(basis: &Basis, fiber: &FiberParams) -> Result<OperatorMatrix, ModelError> {
    fiber.validate()?;
    let mut h = OperatorMatrix::zeros(basis.dim());
    for pol in Polarization::BOTH {
        let present: Vec<&FiberMode> = fiber
            .modes
            .iter()
            .filter(|m| basis.mode_index(ModeId::new(Site::Fiber(m.index), pol)).is_some())
            .collect();
        if present.is_empty() {
            continue;
        }
        let a = ModeId::new(Site::CavityA, pol);
        let b = ModeId::new(Site::CavityB, pol);
        require(basis, a)?;
        require(basis, b)?;
        for m in present {
            let f = ModeId::new(Site::Fiber(m.index), pol);
            let to_a = exchange(basis, a, f)?.scale(real(m.coupling));
            let to_b = exchange(basis, b, f)?.scale(real(m.coupling * m.parity_sign()));
            let shift = mode_number(basis, f)?.scale(real(m.detuning));
            h = h.add(&to_a).add(&to_b).add(&shift);
        }
    }
    Ok(h.flagged_hermitian()?)
}

/// Adiabatically eliminated coupling `Σ_n (−1)^n ν_n² / Δ_n` (signed).
/// An empty mode list gives zero; see [`FiberParams::validate`] for the
/// accompanying advisory.
pub fn effective_hopping_rate(fiber: &FiberParams) -> Result<f64, ModelError> {
    fiber.validate()?;
    Ok(fiber
        .modes
        .iter()
        .map(|m| m.parity_sign() * m.coupling * m.coupling / m.detuning)
        .sum())
}

/// Label of a quantum-jump channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// Photon leaves a cavity mode into the output channel.
    Cavity(ModeId),
    /// Spontaneous decay of `atom` from `e_from` to `to`.
    AtomDecay {
        atom: Atom,
        from: Polarization,
        to: AtomLevel,
    },
}

impl Channel {
    pub fn is_cavity(&self) -> bool {
        matches!(self, Channel::Cavity(_))
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Channel::AtomDecay { .. })
    }

    pub fn cavity_site(&self) -> Option<Site> {
        match self {
            Channel::Cavity(m) => Some(m.site),
            Channel::AtomDecay { .. } => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Cavity(m) => write!(f, "{}, pol {}", m.site, m.pol),
            Channel::AtomDecay { atom, from, to } => {
                write!(f, "atom {atom}, e{from} -> {to}")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct CollapseOperator {
    pub channel: Channel,
    pub op: OperatorMatrix,
}

/// Jump operators: `√κ` times each cavity annihilator, and per atom and
/// polarization `√(γ b)|g0⟩⟨e_p|` and `√(γ(1−b))|g_p⟩⟨e_p|`. Zero-rate and
/// empty channels are omitted.
pub fn collapse_operators(
    basis: &Basis,
    kappa: f64,
    gamma: f64,
    branching_g0: f64,
) -> Result<Vec<CollapseOperator>, ModelError> {
    check_rate("kappa", kappa)?;
    check_rate("gamma", gamma)?;
    if !(0.0..=1.0).contains(&branching_g0) {
        return Err(ModelError::Branching(branching_g0));
    }
    let mut out = Vec::new();
    if kappa > 0.0 {
        for &m in basis.modes() {
            if matches!(m.site, Site::CavityA | Site::CavityB) {
                let op = mode_annihilator(basis, m)?.scale(real(kappa.sqrt()));
                if op.nnz() > 0 {
                    out.push(CollapseOperator {
                        channel: Channel::Cavity(m),
                        op,
                    });
                }
            }
        }
    }
    if gamma > 0.0 {
        for atom in Atom::BOTH {
            for pol in Polarization::BOTH {
                let from = AtomLevel::excited(pol);
                for (to, rate) in [
                    (AtomLevel::G0, gamma * branching_g0),
                    (AtomLevel::ground(pol), gamma * (1.0 - branching_g0)),
                ] {
                    if rate <= 0.0 {
                        continue;
                    }
                    let op = atom_transition(basis, atom, from, to)?.scale(real(rate.sqrt()));
                    if op.nnz() > 0 {
                        out.push(CollapseOperator {
                            channel: Channel::AtomDecay { atom, from: pol, to },
                            op,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of an instantaneous projective measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    /// Atom found in `(|gL⟩ + |g0⟩)/√2`.
    Plus,
    /// Atom found in `(|gL⟩ − |g0⟩)/√2`.
    Minus,
    /// Fluorescence observed: atom in `g0`.
    Bright,
    /// No fluorescence: atom in `gL` or `gR`.
    Dark,
    /// Cavity holds no photon.
    Empty,
    /// Cavity holds exactly one photon.
    One,
    /// Cavity holds two or more photons.
    Many,
    /// Remaining weight (excited or otherwise outside the measured pair).
    Other,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Plus => "+",
            Outcome::Minus => "-",
            Outcome::Bright => "bright",
            Outcome::Dark => "dark",
            Outcome::Empty => "empty",
            Outcome::One => "one",
            Outcome::Many => "many",
            Outcome::Other => "other",
        };
        f.write_str(s)
    }
}

fn g0_gl_coherence(basis: &Basis, atom: Atom) -> Result<OperatorMatrix, ModelError> {
    let up = atom_transition(basis, atom, AtomLevel::G0, AtomLevel::GL)?;
    Ok(up.add(&up.adjoint()))
}

/// Projectors of a measurement of `atom` in the `{|+⟩, |−⟩}` basis, the
/// remainder (gR, eL, eR) reported as [`Outcome::Other`].
pub fn plus_minus_projectors(
    basis: &Basis,
    atom: Atom,
) -> Result<Vec<(Outcome, OperatorMatrix)>, ModelError> {
    let pair = atom_projector(basis, atom, &[AtomLevel::G0, AtomLevel::GL]);
    let coh = g0_gl_coherence(basis, atom)?;
    let plus = pair.add(&coh).scale(real(0.5)).flagged_hermitian()?;
    let minus = pair.sub(&coh).scale(real(0.5)).flagged_hermitian()?;
    let other = atom_projector(basis, atom, &[AtomLevel::GR, AtomLevel::EL, AtomLevel::ER]);
    Ok(vec![
        (Outcome::Plus, plus),
        (Outcome::Minus, minus),
        (Outcome::Other, other),
    ])
}

/// Fluorescence readout on a `g0` cycling transition: bright for `g0`, dark
/// for `gL`/`gR` without distinguishing them.
pub fn fluorescence_projectors(basis: &Basis, atom: Atom) -> Vec<(Outcome, OperatorMatrix)> {
    vec![
        (Outcome::Bright, atom_projector(basis, atom, &[AtomLevel::G0])),
        (
            Outcome::Dark,
            atom_projector(basis, atom, &[AtomLevel::GL, AtomLevel::GR]),
        ),
        (
            Outcome::Other,
            atom_projector(basis, atom, &[AtomLevel::EL, AtomLevel::ER]),
        ),
    ]
}

/// Ideal photon-number measurement of a cavity (both polarizations).
pub fn photon_count_projectors(basis: &Basis, site: Site) -> Vec<(Outcome, OperatorMatrix)> {
    let proj = |pred: fn(u32) -> bool| {
        OperatorMatrix::diagonal(basis, |s| {
            if pred(basis.site_photons(s, site)) {
                real(1.0)
            } else {
                real(0.0)
            }
        })
        .flagged_hermitian()
        .expect("diagonal real projector")
    };
    vec![
        (Outcome::Empty, proj(|n| n == 0)),
        (Outcome::One, proj(|n| n == 1)),
        (Outcome::Many, proj(|n| n >= 2)),
    ]
}

/// Instantaneous Raman rotation on `{g0, gL}` of `atom`:
/// `|g0⟩ → |+⟩`, `|gL⟩ → |−⟩`, identity elsewhere.
pub fn plus_preparation(basis: &Basis, atom: Atom) -> Result<OperatorMatrix, ModelError> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rest = atom_projector(
        basis,
        atom,
        &[AtomLevel::GR, AtomLevel::EL, AtomLevel::ER],
    );
    let pair = atom_projector(basis, atom, &[AtomLevel::G0, AtomLevel::GL]);
    let g0_to_gl = atom_transition(basis, atom, AtomLevel::G0, AtomLevel::GL)?;
    let gl_to_g0 = atom_transition(basis, atom, AtomLevel::GL, AtomLevel::G0)?;
    let diag_sign = OperatorMatrix::diagonal(basis, |st| match st.level(atom) {
        AtomLevel::G0 | AtomLevel::GL => real(s),
        _ => real(0.0),
    });
    debug_assert_eq!(pair.nnz(), diag_sign.nnz());
    Ok(rest
        .add(&diag_sign)
        .add(&g0_to_gl.scale(real(s)))
        .add(&gl_to_g0.scale(real(-s))))
}

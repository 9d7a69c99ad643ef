//! Pulse sequences and heralding rules for the two-photon, two-atom and
//! atom-photon entanglement schemes.

mod run;
mod steps;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::dynamics::DynamicsError;
use crate::hilbert::{Atom, HilbertError, ModeId, QubitEncoding, Site};
use crate::model::{ModelError, Outcome};

pub use run::{
    compile, emitted_pair_postselect, lossless_phase_correction, run_ideal_probe, run_scheme,
    run_schedule, CompiledSchedule, EmittedPairSelection, HeraldedResult, OutcomeTally, RunMode,
    ScheduleRun,
};
pub use steps::{
    hopping_step, ideal_probe_schedule, mapping_step, ndm_probe_step, photon_generation_step,
    scheme_schedule, validate_schedule,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("hopping rate must be positive for a hopping step")]
    ZeroHopping,
    #[error("timing compensation 1/g = {compensation} is not shorter than the hopping time {duration}")]
    CompensationTooLong { compensation: f64, duration: f64 },
    #[error("segment `{segment}`: atom {atom} is not in g0")]
    AtomNotInG0 { segment: String, atom: Atom },
    #[error("segment `{segment}`: atom {atom} was not prepared in |+>")]
    AtomNotPrepared { segment: String, atom: Atom },
    #[error("segment `{segment}` has invalid duration {duration}")]
    InvalidDuration { segment: String, duration: f64 },
    #[error("no trajectory was heralded")]
    NoHeralds,
    #[error("post-selection kept no trajectories")]
    EmptyPostselection,
    #[error("trajectories were run without pre-jump states")]
    MissingPreJumpStates,
    #[error("trajectory ensemble needs n >= 1")]
    EmptyEnsemble,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Analysis(#[from] Box<AnalysisError>),
}

impl From<AnalysisError> for ProtocolError {
    fn from(e: AnalysisError) -> Self {
        ProtocolError::Analysis(Box::new(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    TwoPhoton,
    TwoAtom,
    AtomPhoton,
}

impl SchemeKind {
    pub fn encoding(self) -> QubitEncoding {
        match self {
            SchemeKind::TwoPhoton => QubitEncoding::PHOTON_POLARIZATION,
            SchemeKind::TwoAtom => QubitEncoding::ATOM_GROUND,
            SchemeKind::AtomPhoton => QubitEncoding::PHOTON_ATOM,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::TwoPhoton => "two_photon",
            SchemeKind::TwoAtom => "two_atom",
            SchemeKind::AtomPhoton => "atom_photon",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheme {
    pub kind: SchemeKind,
    /// Shorten the hopping step by `1/g` to absorb hopping during generation.
    pub compensate: bool,
}

/// Knobs of the pulse sequence beyond the physical constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolOptions {
    pub n_max: u8,
    pub e_max: u32,
    /// Residual atom-cavity detuning during the photon-number probe.
    pub probe_detuning: f64,
    /// Keep inter-cavity hopping on during probe and mapping pulses.
    pub hopping_during_readout: bool,
    /// Append an atom-decoupled segment of this length after the last
    /// measurement (cavity emission window).
    pub emission_tail: Option<f64>,
    /// Apply the fixed local phase correction derived from the lossless run.
    pub phase_correction: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            n_max: 2,
            e_max: 2,
            probe_detuning: 0.0,
            hopping_during_readout: true,
            emission_tail: None,
            phase_correction: true,
        }
    }
}

/// Projective readout applied at the end of a segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Readout {
    /// `{|+⟩, |−⟩}` measurement of an atom.
    PlusMinus(Atom),
    /// Fluorescence: `g0` bright, `gL`/`gR` dark.
    Fluorescence(Atom),
    /// Ideal photon-number measurement of a cavity.
    PhotonCount(Site),
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Readout::PlusMinus(a) => write!(f, "pm[{a}]"),
            Readout::Fluorescence(a) => write!(f, "fluorescence[{a}]"),
            Readout::PhotonCount(s) => write!(f, "count[{s}]"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalMeasurement {
    pub readout: Readout,
    /// Outcome required for success.
    pub herald: Option<Outcome>,
}

/// One piecewise-constant control segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub label: String,
    pub duration: f64,
    /// Atom-cavity detuning per atom; `None` means far detuned (decoupled).
    pub detuning: [Option<f64>; 2],
    /// Classical drive Rabi frequency per atom.
    pub rabi: [f64; 2],
    pub hopping_enabled: bool,
    /// Atoms rotated `g0 → |+⟩` at the start of the segment.
    pub preparations: Vec<Atom>,
    pub measurements: Vec<TerminalMeasurement>,
}

impl PulseSegment {
    pub fn idle(label: &str, duration: f64) -> Self {
        Self {
            label: label.to_string(),
            duration,
            detuning: [None, None],
            rabi: [0.0, 0.0],
            hopping_enabled: true,
            preparations: Vec::new(),
            measurements: Vec::new(),
        }
    }

    pub fn is_coupled(&self, atom: Atom) -> bool {
        self.detuning[atom.index()].is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    /// Atoms in the given excited levels, cavities empty.
    ExcitedAtoms,
    /// Atoms in `g0`, one photon in each listed mode.
    Photons(Vec<ModeId>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// All five levels per atom and the four cavity modes.
    Full,
    /// Atoms frozen in `g0`.
    PhotonOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub basis: BasisKind,
    pub initial: InitialState,
    pub segments: Vec<PulseSegment>,
    pub encoding: QubitEncoding,
}

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::steps::{ideal_probe_schedule, scheme_schedule};
use super::{
    BasisKind, InitialState, ProtocolError, ProtocolOptions, Readout, Schedule, Scheme,
};
use crate::analysis::{fidelity, BellTarget};
use crate::dynamics::{
    run_lindblad, run_pure, sample_trajectories, IntegratorConfig, Measurement, Program, Stage,
    TrajectoryOptions, TrajectoryRecord,
};
use crate::hilbert::{
    build_basis, qubit_extract, qubit_extract_pure, Atom, AtomLevel, Basis, BasisBuilder, DensityMatrix, HilbertError,
    ModeId, OperatorMatrix, QubitEncoding, Site, StateVector,
};
use crate::model::{
    collapse_operators, drive_hamiltonian, fluorescence_projectors, hopping_hamiltonian,
    jc_atom_hamiltonian, photon_count_projectors, plus_minus_projectors, plus_preparation, Advisory,
    Channel, Outcome, SystemParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Master equation with measurement superoperators.
    Deterministic,
    /// Sampled quantum trajectories.
    Trajectories { n: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTally {
    pub stage: String,
    pub measurement: String,
    pub outcome: Outcome,
    /// Sampled count (trajectory mode only).
    pub count: Option<usize>,
    /// Probability conditioned on reaching this measurement.
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct HeraldedResult {
    pub experiment: String,
    pub mode: RunMode,
    pub herald_probability: f64,
    /// Binomial standard error (trajectory mode only).
    pub herald_stderr: Option<f64>,
    pub heralded_count: Option<usize>,
    /// Normalized two-qubit state in the scheme's encoding, phase-corrected.
    pub qubit_state: DensityMatrix,
    /// Fraction of the heralded state inside the two-qubit sector.
    pub sector_weight: f64,
    /// `sector_weight · ⟨Ψ⁻|ρ_q|Ψ⁻⟩`: heralded weight outside the qubit
    /// sector counts as error.
    pub fidelity: f64,
    /// `⟨Ψ⁻|ρ_q|Ψ⁻⟩` within the sector.
    pub sector_fidelity: f64,
    /// Local phase applied to qubit 2.
    pub phase_correction: f64,
    /// Normalized heralded state of the full system (phase-uncorrected).
    pub full_state: DensityMatrix,
    pub tallies: Vec<OutcomeTally>,
    pub advisories: Vec<Advisory>,
}

/// A schedule lowered onto a concrete basis.
#[derive(Clone, Debug)]
pub struct CompiledSchedule {
    pub basis: Basis,
    pub program: Program,
    pub initial: StateVector,
    pub encoding: QubitEncoding,
}

/// Everything produced by [`run_schedule`].
#[derive(Clone, Debug)]
pub struct ScheduleRun {
    pub result: HeraldedResult,
    pub compiled: CompiledSchedule,
    /// Empty in deterministic mode.
    pub records: Vec<TrajectoryRecord>,
}

fn schedule_basis(kind: BasisKind, opts: &ProtocolOptions) -> Result<Basis, ProtocolError> {
    let modes = ModeId::cavity_modes();
    Ok(match kind {
        BasisKind::Full => build_basis(opts.n_max, opts.e_max, &modes)?,
        BasisKind::PhotonOnly => BasisBuilder::new(modes)
            .n_max(opts.n_max)
            .e_max(opts.e_max)
            .atom_levels(Atom::A, &[AtomLevel::G0])
            .atom_levels(Atom::B, &[AtomLevel::G0])
            .build()?,
    })
}

fn measurement(basis: &Basis, readout: Readout, herald: Option<Outcome>) -> Result<Measurement, ProtocolError> {
    let outcomes = match readout {
        Readout::PlusMinus(a) => plus_minus_projectors(basis, a)?,
        Readout::Fluorescence(a) => fluorescence_projectors(basis, a),
        Readout::PhotonCount(s) => photon_count_projectors(basis, s),
    };
    Ok(Measurement {
        label: readout.to_string(),
        outcomes,
        postselect: herald,
    })
}

/// Build the basis, per-segment Hamiltonians, collapse operators and
/// initial state of a schedule.
pub fn compile(
    schedule: &Schedule,
    params: &SystemParams,
    opts: &ProtocolOptions,
) -> Result<CompiledSchedule, ProtocolError> {
    params.validate()?;
    let basis = schedule_basis(schedule.basis, opts)?;
    let dim = basis.dim();
    let mut stages = Vec::with_capacity(schedule.segments.len());
    for seg in &schedule.segments {
        let mut h = OperatorMatrix::zeros(dim);
        if seg.hopping_enabled && params.hopping != 0.0 {
            h = h.add(&hopping_hamiltonian(&basis, params.hopping)?);
        }
        for atom in Atom::BOTH {
            if let Some(delta) = seg.detuning[atom.index()] {
                h = h.add(&jc_atom_hamiltonian(&basis, atom, params.g, delta)?);
            }
        }
        if seg.rabi.iter().any(|&r| r != 0.0) {
            h = h.add(&drive_hamiltonian(&basis, seg.rabi)?);
        }
        let preparations = seg
            .preparations
            .iter()
            .map(|&a| plus_preparation(&basis, a))
            .collect::<Result<Vec<_>, _>>()?;
        let measurements = seg
            .measurements
            .iter()
            .map(|m| measurement(&basis, m.readout, m.herald))
            .collect::<Result<Vec<_>, _>>()?;
        stages.push(Stage {
            label: seg.label.clone(),
            preparations,
            hamiltonian: h.flagged_hermitian()?,
            duration: seg.duration,
            measurements,
        });
    }
    let collapse = collapse_operators(&basis, params.kappa, params.gamma, params.branching_g0)?;
    let start = match &schedule.initial {
        InitialState::ExcitedAtoms => basis.product_state([AtomLevel::EL, AtomLevel::ER], &[])?,
        InitialState::Photons(modes) => basis.product_state([AtomLevel::G0, AtomLevel::G0], modes)?,
    };
    let initial = StateVector::basis_state(&basis, &start)?;
    Ok(CompiledSchedule {
        basis,
        program: Program {
            dim,
            stages,
            collapse,
        },
        initial,
        encoding: schedule.encoding,
    })
}

fn phase_unitary(phi: f64) -> DensityMatrix {
    let mut u = nalgebra::DMatrix::<C64>::identity(4, 4);
    let e = C64::from_polar(1.0, phi);
    u[(1, 1)] = e;
    u[(3, 3)] = e;
    DensityMatrix::from_matrix(u)
}

fn apply_phase(rho: &DensityMatrix, phi: f64) -> DensityMatrix {
    if phi == 0.0 {
        return rho.clone();
    }
    let u = phase_unitary(phi).into_matrix();
    DensityMatrix::from_matrix(&u * rho.matrix() * u.adjoint())
}

/// Local phase on qubit 2 that makes the lossless heralded state's
/// `|01⟩⟨10|` coherence real and negative, as in `|Ψ⁻⟩`.
pub fn lossless_phase_correction(
    schedule: &Schedule,
    params: &SystemParams,
    opts: &ProtocolOptions,
    cfg: &IntegratorConfig,
) -> Result<f64, ProtocolError> {
    let lossless = SystemParams {
        kappa: 0.0,
        gamma: 0.0,
        ..*params
    };
    let c = compile(schedule, &lossless, opts)?;
    let psi = run_pure(&c.program, &c.initial, cfg)?;
    let q = qubit_extract_pure(&psi, &c.basis, c.encoding)?;
    let coherence = q.rho.matrix()[(1, 2)];
    if coherence.norm() < 1e-12 {
        return Ok(0.0);
    }
    let phi = std::f64::consts::PI - coherence.arg();
    Ok(phi.rem_euclid(2.0 * std::f64::consts::PI))
}

fn finish(
    experiment: &str,
    mode: RunMode,
    basis: &Basis,
    encoding: QubitEncoding,
    full: DensityMatrix,
    probability: f64,
    stderr: Option<f64>,
    count: Option<usize>,
    phase: f64,
    tallies: Vec<OutcomeTally>,
    advisories: Vec<Advisory>,
) -> Result<HeraldedResult, ProtocolError> {
    // An empty sector (all photons emitted, say) scores zero.
    let (qubit_state, weight, sector_fidelity) = match qubit_extract(&full, basis, encoding) {
        Ok(q) => {
            let rho = apply_phase(&q.rho, phase);
            let f = fidelity(&rho, &BellTarget::psi_minus(encoding))?;
            (rho, q.weight, f)
        }
        Err(HilbertError::EmptySector) => (DensityMatrix::zeros(4), 0.0, 0.0),
        Err(e) => return Err(e.into()),
    };
    Ok(HeraldedResult {
        experiment: experiment.to_string(),
        mode,
        herald_probability: probability,
        herald_stderr: stderr,
        heralded_count: count,
        qubit_state,
        sector_weight: weight,
        fidelity: weight * sector_fidelity,
        sector_fidelity,
        phase_correction: phase,
        full_state: full,
        tallies,
        advisories,
    })
}

fn trajectory_tallies(records: &[TrajectoryRecord]) -> Vec<OutcomeTally> {
    let mut out: Vec<OutcomeTally> = Vec::new();
    let mut reached: Vec<((String, String), usize)> = Vec::new();
    for r in records {
        for o in &r.outcomes {
            let key = (o.stage.clone(), o.label.clone());
            match reached.iter_mut().find(|(k, _)| *k == key) {
                Some((_, n)) => *n += 1,
                None => reached.push((key, 1)),
            }
            match out
                .iter_mut()
                .find(|t| t.stage == o.stage && t.measurement == o.label && t.outcome == o.outcome)
            {
                Some(t) => *t.count.as_mut().expect("sampled tally") += 1,
                None => out.push(OutcomeTally {
                    stage: o.stage.clone(),
                    measurement: o.label.clone(),
                    outcome: o.outcome,
                    count: Some(1),
                    probability: 0.0,
                }),
            }
        }
    }
    for t in &mut out {
        let total = reached
            .iter()
            .find(|((s, m), _)| *s == t.stage && *m == t.measurement)
            .map_or(1, |(_, n)| *n);
        t.probability = t.count.unwrap_or(0) as f64 / total as f64;
    }
    out
}

/// Run a compiled schedule in the requested mode. Pre-jump states are kept
/// when `record_pre_jump` is set (trajectory mode).
pub fn run_schedule(
    experiment: &str,
    schedule: &Schedule,
    params: &SystemParams,
    opts: &ProtocolOptions,
    mode: RunMode,
    cfg: &IntegratorConfig,
    record_pre_jump: bool,
) -> Result<ScheduleRun, ProtocolError> {
    let advisories = params.validate()?;
    let phase = if opts.phase_correction {
        lossless_phase_correction(schedule, params, opts, cfg)?
    } else {
        0.0
    };
    let compiled = compile(schedule, params, opts)?;
    let c = &compiled;
    match mode {
        RunMode::Deterministic => {
            let rho0 = DensityMatrix::from_pure(&c.initial);
            let run = run_lindblad(&c.program, &rho0, cfg)?;
            let p = run.success_probability();
            if !(p > 0.0) {
                return Err(ProtocolError::NoHeralds);
            }
            let tallies = run
                .measurements
                .iter()
                .flat_map(|m| {
                    m.probabilities.iter().map(|(o, prob)| OutcomeTally {
                        stage: m.stage.clone(),
                        measurement: m.label.clone(),
                        outcome: *o,
                        count: None,
                        probability: *prob,
                    })
                })
                .collect();
            let full = run.rho.normalized()?;
            let result = finish(
                experiment, mode, &c.basis, c.encoding, full, p, None, None, phase, tallies, advisories,
            )?;
            Ok(ScheduleRun {
                result,
                compiled,
                records: Vec::new(),
            })
        }
        RunMode::Trajectories { n, seed } => {
            if n == 0 {
                return Err(ProtocolError::EmptyEnsemble);
            }
            let opts = TrajectoryOptions {
                n,
                seed,
                record_pre_jump,
            };
            let records = sample_trajectories(&c.program, &c.initial, cfg, &opts)?;
            let heralded: Vec<&TrajectoryRecord> = records.iter().filter(|r| r.postselected).collect();
            if heralded.is_empty() {
                return Err(ProtocolError::NoHeralds);
            }
            let k = heralded.len();
            let p = k as f64 / n as f64;
            let stderr = (p * (1.0 - p) / n as f64).sqrt();
            let mut full = DensityMatrix::zeros(c.basis.dim());
            for r in &heralded {
                full.add_pure(&r.final_state, 1.0 / k as f64);
            }
            let tallies = trajectory_tallies(&records);
            let result = finish(
                experiment,
                mode,
                &c.basis,
                c.encoding,
                full,
                p,
                Some(stderr),
                Some(k),
                phase,
                tallies,
                advisories,
            )?;
            Ok(ScheduleRun {
                result,
                compiled,
                records,
            })
        }
    }
}

/// Assemble and run one of the three schemes.
pub fn run_scheme(
    scheme: Scheme,
    params: &SystemParams,
    opts: &ProtocolOptions,
    mode: RunMode,
    cfg: &IntegratorConfig,
) -> Result<HeraldedResult, ProtocolError> {
    let schedule = scheme_schedule(scheme, params, opts)?;
    Ok(run_schedule(&scheme.kind.to_string(), &schedule, params, opts, mode, cfg, false)?.result)
}

/// Photon-only hopping from `a_L† b_R†|0⟩` with an ideal photon count;
/// isolates the hopping-step success probability.
pub fn run_ideal_probe(
    params: &SystemParams,
    opts: &ProtocolOptions,
    mode: RunMode,
    cfg: &IntegratorConfig,
) -> Result<HeraldedResult, ProtocolError> {
    let schedule = ideal_probe_schedule(params)?;
    Ok(run_schedule("ideal_probe", &schedule, params, opts, mode, cfg, false)?.result)
}

#[derive(Clone, Debug)]
pub struct EmittedPairSelection {
    pub total: usize,
    pub heralded: usize,
    pub selected: usize,
    /// `selected / total`.
    pub fraction: f64,
    /// Average polarization state of the cavity photons just before the
    /// first emission, phase-corrected.
    pub pair_state: DensityMatrix,
    pub fidelity: f64,
    /// Mean weight of the one-photon-per-cavity sector in those states.
    pub mean_sector_weight: f64,
}

/// Keep heralded trajectories with exactly one cavity-A and one cavity-B
/// emission and no atomic decay, and reconstruct the emitted pair state.
pub fn emitted_pair_postselect(run: &ScheduleRun) -> Result<EmittedPairSelection, ProtocolError> {
    let basis = &run.compiled.basis;
    let enc = QubitEncoding::PHOTON_POLARIZATION;
    let mut acc = DensityMatrix::zeros(4);
    let mut weight_sum = 0.0;
    let mut selected = 0usize;
    for r in run.records.iter().filter(|r| r.postselected) {
        let from = |site: Site| r.jumps_on(|c| c.cavity_site() == Some(site));
        if r.jumps_on(Channel::is_atomic) > 0 || from(Site::CavityA) != 1 || from(Site::CavityB) != 1 {
            continue;
        }
        let first = r
            .jumps
            .iter()
            .find(|j| j.channel.is_cavity())
            .expect("two cavity jumps present");
        let psi = first.pre_jump_state.as_ref().ok_or(ProtocolError::MissingPreJumpStates)?;
        let q = qubit_extract_pure(psi, basis, enc)?;
        *acc.matrix_mut() += q.rho.into_matrix();
        weight_sum += q.weight;
        selected += 1;
    }
    if selected == 0 {
        return Err(ProtocolError::EmptyPostselection);
    }
    let pair_state = apply_phase(&acc.scaled(1.0 / selected as f64), run.result.phase_correction);
    let fid = fidelity(&pair_state, &BellTarget::psi_minus(enc))?;
    Ok(EmittedPairSelection {
        total: run.records.len(),
        heralded: run.records.iter().filter(|r| r.postselected).count(),
        selected,
        fraction: selected as f64 / run.records.len() as f64,
        pair_state,
        fidelity: fid,
        mean_sector_weight: weight_sum / selected as f64,
    })
}

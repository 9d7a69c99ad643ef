use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use super::{
    BasisKind, InitialState, ProtocolError, ProtocolOptions, PulseSegment, Readout, Schedule, Scheme,
    SchemeKind, TerminalMeasurement,
};
use crate::hilbert::{Atom, ModeId, Polarization, Site};
use crate::model::{Outcome, SystemParams};

/// Both atoms resonant for `π/2g`: each excited atom emits into its cavity.
pub fn photon_generation_step(params: &SystemParams) -> PulseSegment {
    PulseSegment {
        detuning: [Some(0.0), Some(0.0)],
        ..PulseSegment::idle("generation", FRAC_PI_2 / params.g)
    }
}

/// Atoms decoupled for `π/4J`, or `π/4J − 1/g` with compensation.
pub fn hopping_step(params: &SystemParams, compensate: bool) -> Result<PulseSegment, ProtocolError> {
    if !(params.hopping > 0.0) {
        return Err(ProtocolError::ZeroHopping);
    }
    let nominal = FRAC_PI_4 / params.hopping;
    let duration = if compensate {
        let compensation = 1.0 / params.g;
        if compensation >= nominal {
            return Err(ProtocolError::CompensationTooLong {
                compensation,
                duration: nominal,
            });
        }
        nominal - compensation
    } else {
        nominal
    };
    Ok(PulseSegment::idle("hopping", duration))
}

/// Length of one full vacuum-Rabi cycle at detuning `delta`.
fn probe_duration(g: f64, delta: f64) -> f64 {
    PI / (g * g + 0.25 * delta * delta).sqrt()
}

/// Rotate the addressed atoms to `|+⟩`, couple them for one vacuum-Rabi
/// cycle, then read out in the `±` basis; success is `|−⟩` on every atom.
pub fn ndm_probe_step(params: &SystemParams, atoms: &[Atom], opts: &ProtocolOptions) -> Vec<PulseSegment> {
    let mut seg = PulseSegment::idle("probe", probe_duration(params.g, opts.probe_detuning));
    seg.hopping_enabled = opts.hopping_during_readout;
    for &a in atoms {
        seg.detuning[a.index()] = Some(opts.probe_detuning);
        seg.preparations.push(a);
        seg.measurements.push(TerminalMeasurement {
            readout: Readout::PlusMinus(a),
            herald: Some(Outcome::Minus),
        });
    }
    vec![seg]
}

/// Resonant Λ pulse with `Ω = g` for `π/(√2 g)`, then fluorescence; success
/// is a dark atom.
pub fn mapping_step(params: &SystemParams, atoms: &[Atom], opts: &ProtocolOptions) -> Vec<PulseSegment> {
    let mut seg = PulseSegment::idle("mapping", PI / (SQRT_2 * params.g));
    seg.hopping_enabled = opts.hopping_during_readout;
    for &a in atoms {
        seg.detuning[a.index()] = Some(0.0);
        seg.rabi[a.index()] = params.g;
        seg.measurements.push(TerminalMeasurement {
            readout: Readout::Fluorescence(a),
            herald: Some(Outcome::Dark),
        });
    }
    vec![seg]
}

/// Probe on atom A and mapping on atom B, started together.
fn atom_photon_readout(params: &SystemParams, opts: &ProtocolOptions) -> Result<Vec<PulseSegment>, ProtocolError> {
    let probe = probe_duration(params.g, opts.probe_detuning);
    let map = PI / (SQRT_2 * params.g);
    if probe <= map {
        return Err(ProtocolError::InvalidDuration {
            segment: "probe (after mapping)".into(),
            duration: probe - map,
        });
    }
    let mut first = PulseSegment::idle("probe+mapping", map);
    first.hopping_enabled = opts.hopping_during_readout;
    first.detuning = [Some(opts.probe_detuning), Some(0.0)];
    first.rabi = [0.0, params.g];
    first.preparations.push(Atom::A);
    first.measurements.push(TerminalMeasurement {
        readout: Readout::Fluorescence(Atom::B),
        herald: Some(Outcome::Dark),
    });
    let mut second = PulseSegment::idle("probe", probe - map);
    second.hopping_enabled = opts.hopping_during_readout;
    second.detuning = [Some(opts.probe_detuning), None];
    second.measurements.push(TerminalMeasurement {
        readout: Readout::PlusMinus(Atom::A),
        herald: Some(Outcome::Minus),
    });
    Ok(vec![first, second])
}

/// Full pulse sequence of a scheme, validated.
pub fn scheme_schedule(
    scheme: Scheme,
    params: &SystemParams,
    opts: &ProtocolOptions,
) -> Result<Schedule, ProtocolError> {
    let mut segments = vec![photon_generation_step(params), hopping_step(params, scheme.compensate)?];
    match scheme.kind {
        SchemeKind::TwoPhoton => segments.extend(ndm_probe_step(params, &Atom::BOTH, opts)),
        SchemeKind::TwoAtom => segments.extend(mapping_step(params, &Atom::BOTH, opts)),
        SchemeKind::AtomPhoton => segments.extend(atom_photon_readout(params, opts)?),
    }
    if let Some(t) = opts.emission_tail {
        segments.push(PulseSegment::idle("emission", t));
    }
    let schedule = Schedule {
        basis: BasisKind::Full,
        initial: InitialState::ExcitedAtoms,
        segments,
        encoding: scheme.kind.encoding(),
    };
    validate_schedule(&schedule)?;
    Ok(schedule)
}

/// Photons only: `a_L† b_R†|0⟩`, hopping for `π/4J`, then an ideal photon
/// count in each cavity; success is one photon in each.
pub fn ideal_probe_schedule(params: &SystemParams) -> Result<Schedule, ProtocolError> {
    let mut hop = hopping_step(params, false)?;
    for site in [Site::CavityA, Site::CavityB] {
        hop.measurements.push(TerminalMeasurement {
            readout: Readout::PhotonCount(site),
            herald: Some(Outcome::One),
        });
    }
    let schedule = Schedule {
        basis: BasisKind::PhotonOnly,
        initial: InitialState::Photons(vec![
            ModeId::new(Site::CavityA, Polarization::L),
            ModeId::new(Site::CavityB, Polarization::R),
        ]),
        segments: vec![hop],
        encoding: crate::hilbert::QubitEncoding::PHOTON_POLARIZATION,
    };
    validate_schedule(&schedule)?;
    Ok(schedule)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Nominal {
    Excited,
    Ground0,
    Plus,
    Mapped,
}

/// Check durations and that every preparation, probe and mapping pulse
/// addresses an atom in the level it expects, following each atom's
/// nominal level through the sequence.
pub fn validate_schedule(schedule: &Schedule) -> Result<(), ProtocolError> {
    let mut nominal = match schedule.initial {
        InitialState::ExcitedAtoms => [Nominal::Excited; 2],
        InitialState::Photons(_) => [Nominal::Ground0; 2],
    };
    for seg in &schedule.segments {
        if !(seg.duration > 0.0 && seg.duration.is_finite()) {
            return Err(ProtocolError::InvalidDuration {
                segment: seg.label.clone(),
                duration: seg.duration,
            });
        }
        for &a in &seg.preparations {
            if nominal[a.index()] != Nominal::Ground0 {
                return Err(ProtocolError::AtomNotInG0 {
                    segment: seg.label.clone(),
                    atom: a,
                });
            }
            nominal[a.index()] = Nominal::Plus;
        }
        for a in Atom::BOTH {
            let i = a.index();
            if seg.rabi[i] != 0.0 {
                if nominal[i] != Nominal::Ground0 {
                    return Err(ProtocolError::AtomNotInG0 {
                        segment: seg.label.clone(),
                        atom: a,
                    });
                }
                nominal[i] = Nominal::Mapped;
            } else if seg.is_coupled(a) && nominal[i] == Nominal::Excited {
                nominal[i] = Nominal::Ground0;
            }
        }
        for m in &seg.measurements {
            if let Readout::PlusMinus(a) = m.readout {
                if nominal[a.index()] != Nominal::Plus {
                    return Err(ProtocolError::AtomNotPrepared {
                        segment: seg.label.clone(),
                        atom: a,
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SystemParams {
        SystemParams { g: 1.0, hopping: 0.01, ..SystemParams::default() }
    }

    #[test]
    fn step_durations() {
        let p = params();
        assert!((photon_generation_step(&p).duration - FRAC_PI_2).abs() < 1e-15);
        assert!((hopping_step(&p, false).unwrap().duration - 25.0 * PI).abs() < 1e-12);
        assert!((hopping_step(&p, true).unwrap().duration - (25.0 * PI - 1.0)).abs() < 1e-12);
        let probe = ndm_probe_step(&p, &Atom::BOTH, &ProtocolOptions::default());
        assert!((probe[0].duration - PI).abs() < 1e-15);
        let map = mapping_step(&p, &[Atom::B], &ProtocolOptions::default());
        assert!((map[0].duration - PI / SQRT_2).abs() < 1e-15);
        assert_eq!(map[0].rabi, [0.0, 1.0]);
        assert_eq!(map[0].detuning[0], None);
    }

    #[test]
    fn compensation_longer_than_hopping_is_rejected() {
        let p = SystemParams { g: 1.0, hopping: 0.9, ..SystemParams::default() };
        assert!(matches!(hopping_step(&p, true), Err(ProtocolError::CompensationTooLong { .. })));
        let zero = SystemParams { hopping: 0.0, ..params() };
        assert!(matches!(hopping_step(&zero, false), Err(ProtocolError::ZeroHopping)));
    }

    #[test]
    fn atom_photon_uses_probe_on_a_and_mapping_on_b() {
        let s = scheme_schedule(
            Scheme { kind: SchemeKind::AtomPhoton, compensate: true },
            &params(),
            &ProtocolOptions::default(),
        )
        .unwrap();
        let readouts: Vec<Readout> = s.segments.iter().flat_map(|g| g.measurements.iter().map(|m| m.readout)).collect();
        assert_eq!(readouts, vec![Readout::Fluorescence(Atom::B), Readout::PlusMinus(Atom::A)]);
        let total: f64 = s.segments[2..].iter().map(|g| g.duration).sum();
        assert!((total - PI).abs() < 1e-12);
    }

    #[test]
    fn preparing_an_excited_atom_is_rejected() {
        let p = params();
        let seg = ndm_probe_step(&p, &[Atom::A], &ProtocolOptions::default());
        let s = Schedule {
            basis: BasisKind::Full,
            initial: InitialState::ExcitedAtoms,
            segments: seg,
            encoding: SchemeKind::TwoPhoton.encoding(),
        };
        assert!(matches!(validate_schedule(&s), Err(ProtocolError::AtomNotInG0 { atom: Atom::A, .. })));
        let mut twice = scheme_schedule(
            Scheme { kind: SchemeKind::TwoAtom, compensate: false },
            &p,
            &ProtocolOptions::default(),
        )
        .unwrap();
        twice.segments.extend(mapping_step(&p, &[Atom::A], &ProtocolOptions::default()));
        assert!(matches!(validate_schedule(&twice), Err(ProtocolError::AtomNotInG0 { .. })));
    }
}

//! Truncated joint Hilbert space of two five-level atoms and a set of bosonic
//! modes.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::HilbertError;

/// Internal level of one atom.
///
/// `GL` and `GR` do not couple to the cavity; `G0` couples to `EL` (`ER`)
/// through the left (right) circularly polarized cavity mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomLevel {
    G0,
    GL,
    GR,
    EL,
    ER,
}

impl AtomLevel {
    pub const ALL: [AtomLevel; 5] = [
        AtomLevel::G0,
        AtomLevel::GL,
        AtomLevel::GR,
        AtomLevel::EL,
        AtomLevel::ER,
    ];

    pub fn is_excited(self) -> bool {
        matches!(self, AtomLevel::EL | AtomLevel::ER)
    }

    /// Excited level reached from `G0` by absorbing a photon of polarization `pol`.
    pub fn excited(pol: Polarization) -> AtomLevel {
        match pol {
            Polarization::L => AtomLevel::EL,
            Polarization::R => AtomLevel::ER,
        }
    }

    /// Cavity-decoupled ground level paired with polarization `pol`.
    pub fn ground(pol: Polarization) -> AtomLevel {
        match pol {
            Polarization::L => AtomLevel::GL,
            Polarization::R => AtomLevel::GR,
        }
    }
}

impl fmt::Display for AtomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AtomLevel::G0 => "g0",
            AtomLevel::GL => "gL",
            AtomLevel::GR => "gR",
            AtomLevel::EL => "eL",
            AtomLevel::ER => "eR",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Atom {
    A,
    B,
}

impl Atom {
    pub const BOTH: [Atom; 2] = [Atom::A, Atom::B];

    pub fn index(self) -> usize {
        match self {
            Atom::A => 0,
            Atom::B => 1,
        }
    }

    /// The cavity this atom sits in.
    pub fn cavity(self) -> Site {
        match self {
            Atom::A => Site::CavityA,
            Atom::B => Site::CavityB,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::A => f.write_str("A"),
            Atom::B => f.write_str("B"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    L,
    R,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::L, Polarization::R];
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::L => f.write_str("L"),
            Polarization::R => f.write_str("R"),
        }
    }
}

/// Where a bosonic mode lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    CavityA,
    CavityB,
    /// Discrete fiber mode with signed index `n`.
    Fiber(i32),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::CavityA => f.write_str("cavity A"),
            Site::CavityB => f.write_str("cavity B"),
            Site::Fiber(n) => write!(f, "fiber {n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeId {
    pub site: Site,
    pub pol: Polarization,
}

impl ModeId {
    pub const fn new(site: Site, pol: Polarization) -> Self {
        Self { site, pol }
    }

    /// The four cavity modes A·L, A·R, B·L, B·R.
    pub fn cavity_modes() -> Vec<ModeId> {
        vec![
            ModeId::new(Site::CavityA, Polarization::L),
            ModeId::new(Site::CavityA, Polarization::R),
            ModeId::new(Site::CavityB, Polarization::L),
            ModeId::new(Site::CavityB, Polarization::R),
        ]
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}·{}", self.site, self.pol)
    }
}

/// One element of the product basis: both atomic levels and one photon
/// number per mode (in the order of [`Basis::modes`]).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisState {
    pub atoms: [AtomLevel; 2],
    pub occupations: Vec<u8>,
}

impl BasisState {
    pub fn level(&self, atom: Atom) -> AtomLevel {
        self.atoms[atom.index()]
    }

    pub fn photons(&self) -> u32 {
        self.occupations.iter().map(|&n| u32::from(n)).sum()
    }

    pub fn excited_atoms(&self) -> u32 {
        self.atoms.iter().filter(|l| l.is_excited()).count() as u32
    }

    /// Photons plus excited atoms.
    pub fn excitations(&self) -> u32 {
        self.photons() + self.excited_atoms()
    }
}

/// Ordered, deduplicated set of admissible basis states with index lookup.
#[derive(Clone, Debug)]
pub struct Basis {
    modes: Vec<ModeId>,
    n_max: u8,
    e_max: u32,
    atom_levels: [Vec<AtomLevel>; 2],
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

/// Builder for [`Basis`]; atoms default to all five levels.
#[derive(Clone, Debug)]
pub struct BasisBuilder {
    modes: Vec<ModeId>,
    n_max: u8,
    e_max: u32,
    atom_levels: [Vec<AtomLevel>; 2],
}

impl BasisBuilder {
    pub fn new(modes: Vec<ModeId>) -> Self {
        Self {
            modes,
            n_max: 2,
            e_max: 2,
            atom_levels: [AtomLevel::ALL.to_vec(), AtomLevel::ALL.to_vec()],
        }
    }

    pub fn n_max(mut self, n_max: u8) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn e_max(mut self, e_max: u32) -> Self {
        self.e_max = e_max;
        self
    }

    /// Restrict the levels an atom may occupy, e.g. `[G0]` for a
    /// photon-only model with spectator atoms.
    pub fn atom_levels(mut self, atom: Atom, levels: &[AtomLevel]) -> Self {
        let mut levels = levels.to_vec();
        levels.sort();
        levels.dedup();
        self.atom_levels[atom.index()] = levels;
        self
    }

    pub fn build(self) -> Result<Basis, HilbertError> {
        if self.modes.is_empty() {
            return Err(HilbertError::NoModes);
        }
        if self.e_max == 0 {
            return Err(HilbertError::InvalidTruncation {
                n_max: self.n_max,
                e_max: self.e_max,
            });
        }
        let mut seen = HashSet::new();
        for m in &self.modes {
            if !seen.insert(*m) {
                return Err(HilbertError::DuplicateMode(*m));
            }
        }
        if self.atom_levels.iter().any(|l| l.is_empty()) {
            return Err(HilbertError::NoAtomLevels);
        }

        let mut states = Vec::new();
        let mut occ = vec![0u8; self.modes.len()];
        for &la in &self.atom_levels[0] {
            for &lb in &self.atom_levels[1] {
                let excited = u32::from(la.is_excited()) + u32::from(lb.is_excited());
                if excited > self.e_max {
                    continue;
                }
                let budget = self.e_max - excited;
                enumerate_occupations(&mut occ, 0, budget, self.n_max, &mut |o| {
                    states.push(BasisState {
                        atoms: [la, lb],
                        occupations: o.to_vec(),
                    });
                });
            }
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Basis {
            modes: self.modes,
            n_max: self.n_max,
            e_max: self.e_max,
            atom_levels: self.atom_levels,
            states,
            index,
        })
    }
}

/// Lexicographic odometer over occupation vectors with per-mode cap `n_max`
/// and total photon budget.
fn enumerate_occupations(
    occ: &mut [u8],
    pos: usize,
    budget: u32,
    n_max: u8,
    emit: &mut dyn FnMut(&[u8]),
) {
    if pos == occ.len() {
        emit(occ);
        return;
    }
    let cap = u32::from(n_max).min(budget);
    for n in 0..=cap {
        occ[pos] = n as u8;
        enumerate_occupations(occ, pos + 1, budget - n, n_max, emit);
    }
    occ[pos] = 0;
}

/// Build a basis with all five levels per atom.
pub fn build_basis(n_max: u8, e_max: u32, modes: &[ModeId]) -> Result<Basis, HilbertError> {
    BasisBuilder::new(modes.to_vec())
        .n_max(n_max)
        .e_max(e_max)
        .build()
}

impl Basis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn n_max(&self) -> u8 {
        self.n_max
    }

    pub fn e_max(&self) -> u32 {
        self.e_max
    }

    pub fn atom_levels(&self, atom: Atom) -> &[AtomLevel] {
        &self.atom_levels[atom.index()]
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> &BasisState {
        &self.states[index]
    }

    pub fn index_of(&self, state: &BasisState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn mode_index(&self, mode: ModeId) -> Option<usize> {
        self.modes.iter().position(|&m| m == mode)
    }

    pub fn require_mode(&self, mode: ModeId) -> Result<usize, HilbertError> {
        self.mode_index(mode).ok_or(HilbertError::UnknownMode(mode))
    }

    /// Indices of modes located at `site`.
    pub fn site_modes(&self, site: Site) -> Vec<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.site == site)
            .map(|(i, _)| i)
            .collect()
    }

    /// Photon number in all modes at `site`.
    pub fn site_photons(&self, state: &BasisState, site: Site) -> u32 {
        self.modes
            .iter()
            .zip(&state.occupations)
            .filter(|(m, _)| m.site == site)
            .map(|(_, &n)| u32::from(n))
            .sum()
    }

    /// Basis state with both atoms at the given levels and the listed modes
    /// holding one photon each.
    pub fn product_state(
        &self,
        atoms: [AtomLevel; 2],
        photons: &[ModeId],
    ) -> Result<BasisState, HilbertError> {
        let mut occupations = vec![0u8; self.modes.len()];
        for &m in photons {
            occupations[self.require_mode(m)?] += 1;
        }
        let s = BasisState { atoms, occupations };
        if self.index_of(&s).is_none() {
            return Err(HilbertError::OutsideTruncation);
        }
        Ok(s)
    }

    /// True when no single raising operation from `state` can leave the
    /// truncated space: every occupation below `n_max`, total excitation
    /// below `e_max`.
    pub fn is_interior(&self, state: &BasisState) -> bool {
        state.excitations() < self.e_max && state.occupations.iter().all(|&n| n < self.n_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_count(n_max: u8, e_max: u32, n_modes: usize) -> usize {
        // independent count: walk every occupation vector in [0, n_max]^modes
        let mut count = 0;
        let total = (n_max as usize + 1).pow(n_modes as u32);
        for la in AtomLevel::ALL {
            for lb in AtomLevel::ALL {
                for code in 0..total {
                    let mut c = code;
                    let mut photons = 0;
                    for _ in 0..n_modes {
                        photons += c % (n_max as usize + 1);
                        c /= n_max as usize + 1;
                    }
                    let ex = la.is_excited() as usize + lb.is_excited() as usize;
                    if photons + ex <= e_max as usize {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    #[test]
    fn single_mode_single_excitation_count() {
        let b = build_basis(1, 1, &[ModeId::new(Site::CavityA, Polarization::L)]).unwrap();
        // 50 raw states, minus 8 doubly excited, minus 12 excited-with-photon
        assert_eq!(b.dim(), 30);
        assert_eq!(b.dim(), brute_force_count(1, 1, 1));
    }

    #[test]
    fn zero_photon_cap_is_purely_atomic() {
        let b = build_basis(0, 2, &ModeId::cavity_modes()).unwrap();
        assert_eq!(b.dim(), 25);
        assert!(b.states().iter().all(|s| s.photons() == 0));
    }

    #[test]
    fn protocol_default_matches_enumeration() {
        let b = build_basis(2, 2, &ModeId::cavity_modes()).unwrap();
        assert_eq!(b.dim(), brute_force_count(2, 2, 4));
        assert_eq!(b.dim(), 199);
    }

    #[test]
    fn ordering_is_lexicographic_and_lookup_round_trips() {
        let b = build_basis(2, 2, &ModeId::cavity_modes()).unwrap();
        for w in b.states().windows(2) {
            assert!(w[0] < w[1]);
        }
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
    }

    #[test]
    fn rejects_bad_configurations() {
        let m = ModeId::new(Site::CavityA, Polarization::L);
        assert!(matches!(build_basis(1, 1, &[m, m]), Err(HilbertError::DuplicateMode(_))));
        assert!(matches!(build_basis(1, 1, &[]), Err(HilbertError::NoModes)));
        assert!(matches!(
            build_basis(0, 0, &[m]),
            Err(HilbertError::InvalidTruncation { .. })
        ));
    }

    #[test]
    fn restricted_atoms_shrink_the_space() {
        let b = BasisBuilder::new(ModeId::cavity_modes())
            .atom_levels(Atom::A, &[AtomLevel::G0])
            .atom_levels(Atom::B, &[AtomLevel::G0])
            .build()
            .unwrap();
        assert_eq!(b.dim(), 15);
    }
}

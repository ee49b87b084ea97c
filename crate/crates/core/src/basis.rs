//! Bare product states `|q1 q2, n_cav, n_wg>` and ordered bases over them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Qubit {
    G,
    E,
}

impl Qubit {
    pub fn is_excited(self) -> bool {
        self == Qubit::E
    }

    pub fn flipped(self) -> Qubit {
        match self {
            Qubit::G => Qubit::E,
            Qubit::E => Qubit::G,
        }
    }

    /// Eigenvalue of `sigma_z` with `|e>` at `+1`.
    pub fn sigma_z(self) -> f64 {
        match self {
            Qubit::G => -1.0,
            Qubit::E => 1.0,
        }
    }

    fn letter(self) -> char {
        match self {
            Qubit::G => 'g',
            Qubit::E => 'e',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub q1: Qubit,
    pub q2: Qubit,
    pub n_cav: u32,
    pub n_wg: u8,
}

impl BasisState {
    pub const fn new(q1: Qubit, q2: Qubit, n_cav: u32, n_wg: u8) -> Self {
        BasisState { q1, q2, n_cav, n_wg }
    }

    /// State with an empty waveguide.
    pub const fn local(q1: Qubit, q2: Qubit, n_cav: u32) -> Self {
        BasisState::new(q1, q2, n_cav, 0)
    }

    pub fn excitations(&self) -> u32 {
        self.q1.is_excited() as u32 + self.q2.is_excited() as u32 + self.n_cav + self.n_wg as u32
    }

    /// Compact ASCII label, e.g. `gg10`.
    pub fn label(&self) -> String {
        format!(
            "{}{}{}{}",
            self.q1.letter(),
            self.q2.letter(),
            self.n_cav,
            self.n_wg
        )
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}\u{27e9}", self.label())
    }
}

impl Serialize for BasisState {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseStateError {
    #[error("state label `{0}` is malformed; expected e.g. `gg10` or `|gg10>`")]
    Malformed(String),
    #[error("waveguide occupation in `{0}` must be 0 or 1")]
    WaveguideOccupation(String),
}

impl FromStr for BasisState {
    type Err = ParseStateError;

    /// Accepts `gg10`, `|gg10>` and `|gg10⟩`. The last digit is the waveguide
    /// occupation, the preceding digits the cavity photon number.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || ParseStateError::Malformed(s.to_string());
        let body = s.trim();
        let body = body.strip_prefix('|').unwrap_or(body);
        let body = body
            .strip_suffix('\u{27e9}')
            .or_else(|| body.strip_suffix('>'))
            .unwrap_or(body);

        let mut chars = body.chars();
        let qubit = |c: Option<char>| match c {
            Some('g') | Some('G') => Some(Qubit::G),
            Some('e') | Some('E') => Some(Qubit::E),
            _ => None,
        };
        let q1 = qubit(chars.next()).ok_or_else(malformed)?;
        let q2 = qubit(chars.next()).ok_or_else(malformed)?;
        let digits = chars.as_str();
        if digits.len() < 2 || digits.len() > 10 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let (cav, wg) = digits.split_at(digits.len() - 1);
        let n_cav: u32 = cav.parse().map_err(|_| malformed())?;
        let n_wg = match wg {
            "0" => 0,
            "1" => 1,
            _ => return Err(ParseStateError::WaveguideOccupation(s.to_string())),
        };
        Ok(BasisState::new(q1, q2, n_cav, n_wg))
    }
}

/// An ordered list of distinct bare states with index lookup.
#[derive(Debug, Clone)]
pub struct BasisSet {
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl BasisSet {
    /// Panics on duplicate states.
    pub fn from_states(states: Vec<BasisState>) -> Self {
        let mut index = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            let prev = index.insert(*s, i);
            assert!(prev.is_none(), "duplicate basis state {s}");
        }
        BasisSet { states, index }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn get(&self, i: usize) -> Option<BasisState> {
        self.states.get(i).copied()
    }

    pub fn index_of(&self, s: &BasisState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BasisState> {
        self.states.iter()
    }
}

impl PartialEq for BasisSet {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
    }
}

use Qubit::{E, G};

pub const EE10: BasisState = BasisState::local(E, E, 1);
pub const EE00: BasisState = BasisState::local(E, E, 0);
pub const EG20: BasisState = BasisState::local(E, G, 2);
pub const EG10: BasisState = BasisState::local(E, G, 1);
pub const EG00: BasisState = BasisState::local(E, G, 0);
pub const GE20: BasisState = BasisState::local(G, E, 2);
pub const GE10: BasisState = BasisState::local(G, E, 1);
pub const GE00: BasisState = BasisState::local(G, E, 0);
pub const GG20: BasisState = BasisState::local(G, G, 2);
pub const GG10: BasisState = BasisState::local(G, G, 1);
pub const GG01: BasisState = BasisState::new(G, G, 0, 1);
pub const GG00: BasisState = BasisState::local(G, G, 0);

/// The twelve states of the 3-excitation scattering manifold in canonical order.
pub const SCATTERING_ORDER: [BasisState; 12] = [
    EE10, EE00, EG20, EG10, EG00, GE20, GE10, GE00, GG20, GG10, GG01, GG00,
];

pub fn scattering_basis() -> BasisSet {
    BasisSet::from_states(SCATTERING_ORDER.to_vec())
}

/// The eleven localized states (scattering basis without the waveguide photon).
pub fn localized_basis() -> BasisSet {
    BasisSet::from_states(
        SCATTERING_ORDER
            .iter()
            .copied()
            .filter(|s| s.n_wg == 0)
            .collect(),
    )
}

/// All `{g,e} x {g,e} x {0..=n_max}` states ordered by `(n_cav, q1, q2)`.
pub fn fock_basis(n_max: usize) -> BasisSet {
    let n_max = u32::try_from(n_max).expect("cutoff fits in u32");
    let mut states = Vec::with_capacity(4 * (n_max as usize + 1));
    for n in 0..=n_max {
        for q1 in [G, E] {
            for q2 in [G, E] {
                states.push(BasisState::local(q1, q2, n));
            }
        }
    }
    BasisSet::from_states(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scattering_ordering() {
        let b = scattering_basis();
        assert_eq!(b.len(), 12);
        assert_eq!(b.index_of(&GG10), Some(9));
        assert_eq!(b.index_of(&EE00), Some(1));
        assert_eq!(b.index_of(&GG01), Some(10));
        assert_eq!(b.index_of(&GG00), Some(11));
        for (i, s) in b.iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
            assert!(s.excitations() <= 3);
        }
        assert_eq!(b, scattering_basis());
    }

    #[test]
    fn localized_drops_waveguide_state() {
        let b = localized_basis();
        assert_eq!(b.len(), 11);
        assert_eq!(b.index_of(&GG01), None);
        assert_eq!(b.index_of(&GG00), Some(10));
        assert_eq!(b.index_of(&EG00), Some(4));
        assert_eq!(b.index_of(&GE00), Some(7));
    }

    #[test]
    fn fock_sizes() {
        let b0 = fock_basis(0);
        let labels: Vec<String> = b0.iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["gg00", "ge00", "eg00", "ee00"]);
        assert_eq!(fock_basis(2).len(), 12);
        assert_eq!(fock_basis(10).len(), 44);
    }

    #[test]
    fn display_and_parse() {
        assert_eq!(GG10.to_string(), "|gg10\u{27e9}");
        assert_eq!("|gg10⟩".parse::<BasisState>().unwrap(), GG10);
        assert_eq!("ee00".parse::<BasisState>().unwrap(), EE00);
        assert_eq!("|gg01>".parse::<BasisState>().unwrap(), GG01);
        assert_eq!(
            "ge120".parse::<BasisState>().unwrap(),
            BasisState::local(G, E, 12)
        );
        assert!("gx10".parse::<BasisState>().is_err());
        assert!("gg1".parse::<BasisState>().is_err());
        assert!(matches!(
            "gg12".parse::<BasisState>(),
            Err(ParseStateError::WaveguideOccupation(_))
        ));
    }

    proptest! {
        #[test]
        fn fock_prefix(n in 0usize..20) {
            let small = fock_basis(n);
            let big = fock_basis(n + 1);
            prop_assert_eq!(small.states(), &big.states()[..small.len()]);
        }

        #[test]
        fn label_roundtrip(q1 in any::<bool>(), q2 in any::<bool>(), n in 0u32..1000, wg in 0u8..2) {
            let q = |b| if b { E } else { G };
            let s = BasisState::new(q(q1), q(q2), n, wg);
            prop_assert_eq!(s.to_string().parse::<BasisState>().unwrap(), s);
        }
    }
}

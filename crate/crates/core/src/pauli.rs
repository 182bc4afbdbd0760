//! Single-qubit Pauli labels (phase-free, used for byproduct frames) and
//! multi-qubit Pauli strings with exact phase bookkeeping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A single-qubit Pauli operator modulo global phase, stored as `X^x Z^z`.
///
/// `XZ` stands in for `Y` (they differ only by a phase).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Pauli {
    pub x: bool,
    pub z: bool,
}

impl Pauli {
    pub const I: Pauli = Pauli { x: false, z: false };
    pub const X: Pauli = Pauli { x: true, z: false };
    pub const Z: Pauli = Pauli { x: false, z: true };
    pub const XZ: Pauli = Pauli { x: true, z: true };

    pub fn new(x: bool, z: bool) -> Self {
        Pauli { x, z }
    }

    pub fn is_identity(self) -> bool {
        !self.x && !self.z
    }

    /// Product up to phase.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Pauli) -> Pauli {
        Pauli {
            x: self.x ^ other.x,
            z: self.z ^ other.z,
        }
    }

    /// Whether the two operators anticommute.
    pub fn anticommutes(self, other: Pauli) -> bool {
        (self.x & other.z) ^ (self.z & other.x)
    }

    pub fn label(self) -> &'static str {
        match (self.x, self.z) {
            (false, false) => "I",
            (true, false) => "X",
            (false, true) => "Z",
            (true, true) => "XZ",
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid Pauli label `{0}`")]
pub struct ParsePauliError(pub String);

impl FromStr for Pauli {
    type Err = ParsePauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" => Ok(Pauli::I),
            "X" => Ok(Pauli::X),
            "Z" => Ok(Pauli::Z),
            "XZ" | "Y" => Ok(Pauli::XZ),
            other => Err(ParsePauliError(other.to_string())),
        }
    }
}

impl Serialize for Pauli {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Pauli {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An n-qubit Pauli operator `i^phase * prod_q X_q^{x_q} Z_q^{z_q}`.
///
/// The X factor is ordered before the Z factor on every qubit, so a `Y` on
/// qubit q is stored as `x_q = z_q = 1` with one extra unit of phase.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    phase: u8,
    x: Vec<bool>,
    z: Vec<bool>,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString {
            phase: 0,
            x: vec![false; n],
            z: vec![false; n],
        }
    }

    pub fn from_parts(phase: u8, x: Vec<bool>, z: Vec<bool>) -> Self {
        assert_eq!(x.len(), z.len());
        PauliString { phase: phase % 4, x, z }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_bits(&self) -> &[bool] {
        &self.x
    }

    pub fn z_bits(&self) -> &[bool] {
        &self.z
    }

    pub fn raw_phase(&self) -> u8 {
        self.phase
    }

    /// Letter on qubit `q` as one of `I`, `X`, `Y`, `Z`.
    pub fn letter(&self, q: usize) -> char {
        match (self.x[q], self.z[q]) {
            (false, false) => 'I',
            (true, false) => 'X',
            (false, true) => 'Z',
            (true, true) => 'Y',
        }
    }

    /// Phase in front of the letter form, as a power of `i`.
    ///
    /// `X Z = -i Y`, so every Y contributes a factor `-i`.
    pub fn letter_phase(&self) -> u8 {
        let ny = self.x.iter().zip(&self.z).filter(|(x, z)| **x && **z).count() as u8;
        (self.phase + 4 - (ny % 4)) % 4
    }

    /// Real sign of a Hermitian string in letter form, `None` when the
    /// coefficient is `±i`.
    pub fn sign(&self) -> Option<f64> {
        match self.letter_phase() {
            0 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }

    /// Letters without the sign, e.g. `"XZIY"`.
    pub fn letters(&self) -> String {
        (0..self.len()).map(|q| self.letter(q)).collect()
    }

    pub fn weight(&self) -> usize {
        self.x.iter().zip(&self.z).filter(|(x, z)| **x || **z).count()
    }

    pub fn mul(&self, other: &PauliString) -> PauliString {
        assert_eq!(self.len(), other.len());
        // (X^a Z^b)(X^c Z^d) = (-1)^{b.c} X^{a+c} Z^{b+d}
        let flips = self.z.iter().zip(&other.x).filter(|(b, c)| **b && **c).count();
        let phase = (self.phase + other.phase + 2 * (flips % 2) as u8) % 4;
        PauliString {
            phase,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect(),
        }
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let mut parity = false;
        for q in 0..self.len() {
            parity ^= (self.x[q] & other.z[q]) ^ (self.z[q] & other.x[q]);
        }
        !parity
    }

    /// Single-qubit factor on qubit `q`, phase dropped.
    pub fn factor(&self, q: usize) -> Pauli {
        Pauli::new(self.x[q], self.z[q])
    }

    /// Negate the operator.
    pub fn negated(&self) -> PauliString {
        PauliString {
            phase: (self.phase + 2) % 4,
            x: self.x.clone(),
            z: self.z.clone(),
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.letter_phase() {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{}{}", prefix, self.letters())
    }
}

impl FromStr for PauliString {
    type Err = ParsePauliError;

    /// Parses strings such as `"XZ"`, `"+XZ"`, `"-YY"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (neg, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let mut x = Vec::with_capacity(body.len());
        let mut z = Vec::with_capacity(body.len());
        let mut ny = 0u8;
        for c in body.chars() {
            let (a, b) = match c {
                'I' => (false, false),
                'X' => (true, false),
                'Z' => (false, true),
                'Y' => {
                    ny += 1;
                    (true, true)
                }
                _ => return Err(ParsePauliError(s.to_string())),
            };
            x.push(a);
            z.push(b);
        }
        // letter form coefficient c = i^{letter_phase}; raw phase = letter + #Y
        let letter = if neg { 2 } else { 0 };
        Ok(PauliString {
            phase: (letter + ny) % 4,
            x,
            z,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xz_is_minus_i_y() {
        let x: PauliString = "X".parse().unwrap();
        let z: PauliString = "Z".parse().unwrap();
        let xz = x.mul(&z);
        assert_eq!(xz.letters(), "Y");
        assert_eq!(xz.letter_phase(), 3);
        let zx = z.mul(&x);
        assert_eq!(zx.letter_phase(), 1);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["+XZ", "-YY", "+IXYZ", "-Y"] {
            let p: PauliString = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
    }

    #[test]
    fn graph_pair_stabilizer_product_is_yy() {
        let a: PauliString = "XZ".parse().unwrap();
        let b: PauliString = "ZX".parse().unwrap();
        let p = a.mul(&b);
        assert_eq!(p.to_string(), "+YY");
        assert!(a.commutes_with(&b));
    }

    #[test]
    fn frame_labels() {
        assert_eq!(Pauli::X.mul(Pauli::Z), Pauli::XZ);
        assert!(Pauli::X.anticommutes(Pauli::Z));
        assert!(!Pauli::XZ.anticommutes(Pauli::XZ));
        assert_eq!("XZ".parse::<Pauli>().unwrap(), Pauli::XZ);
        assert!("Q".parse::<Pauli>().is_err());
    }
}

//! Lobar and segmental region codes.
//!
//! Label maps store codes as integers: 0 is unassigned (hilum, background),
//! 1..=18 are the bronchopulmonary segments and 19..=23 the five lobes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Label value for voxels outside every region.
pub const UNASSIGNED: u16 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RegionCode {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
    L1_2,
    L3,
    L4,
    L5,
    L6,
    L7_8,
    L9,
    L10,
    Rul,
    Rml,
    Rll,
    Lul,
    Lll,
}

use RegionCode::*;

impl RegionCode {
    pub const SEGMENTS: [RegionCode; 18] = [
        R1, R2, R3, R4, R5, R6, R7, R8, R9, R10, L1_2, L3, L4, L5, L6, L7_8, L9, L10,
    ];
    pub const RIGHT_SEGMENTS: [RegionCode; 10] = [R1, R2, R3, R4, R5, R6, R7, R8, R9, R10];
    pub const LEFT_SEGMENTS: [RegionCode; 8] = [L1_2, L3, L4, L5, L6, L7_8, L9, L10];
    pub const LOBES: [RegionCode; 5] = [Rul, Rml, Rll, Lul, Lll];

    /// Lobes first, then segments: the 23 columns of a subject row.
    pub fn all() -> impl Iterator<Item = RegionCode> {
        Self::LOBES.into_iter().chain(Self::SEGMENTS)
    }

    pub fn code(self) -> u16 {
        match self {
            Rul => 19,
            Rml => 20,
            Rll => 21,
            Lul => 22,
            Lll => 23,
            seg => Self::SEGMENTS.iter().position(|&s| s == seg).unwrap() as u16 + 1,
        }
    }

    pub fn from_code(code: u16) -> Option<RegionCode> {
        match code {
            1..=18 => Some(Self::SEGMENTS[code as usize - 1]),
            19..=23 => Some(Self::LOBES[code as usize - 19]),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            R1 => "R1",
            R2 => "R2",
            R3 => "R3",
            R4 => "R4",
            R5 => "R5",
            R6 => "R6",
            R7 => "R7",
            R8 => "R8",
            R9 => "R9",
            R10 => "R10",
            L1_2 => "L1-2",
            L3 => "L3",
            L4 => "L4",
            L5 => "L5",
            L6 => "L6",
            L7_8 => "L7-8",
            L9 => "L9",
            L10 => "L10",
            Rul => "RUL",
            Rml => "RML",
            Rll => "RLL",
            Lul => "LUL",
            Lll => "LLL",
        }
    }

    pub fn is_lobe(self) -> bool {
        Self::LOBES.contains(&self)
    }

    /// Lobe containing a segment; a lobe maps to itself.
    pub fn lobe(self) -> RegionCode {
        match self {
            R1 | R2 | R3 => Rul,
            R4 | R5 => Rml,
            R6 | R7 | R8 | R9 | R10 => Rll,
            L1_2 | L3 | L4 | L5 => Lul,
            L6 | L7_8 | L9 | L10 => Lll,
            lobe => lobe,
        }
    }

    /// Segments belonging to a lobe (empty for segments).
    pub fn members(self) -> &'static [RegionCode] {
        match self {
            Rul => &[R1, R2, R3],
            Rml => &[R4, R5],
            Rll => &[R6, R7, R8, R9, R10],
            Lul => &[L1_2, L3, L4, L5],
            Lll => &[L6, L7_8, L9, L10],
            _ => &[],
        }
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("unknown region code {0:?}")]
pub struct UnknownRegion(pub String);

impl FromStr for RegionCode {
    type Err = UnknownRegion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let norm = t
            .to_ascii_uppercase()
            .replace('+', "-")
            .replace("L1-L2", "L1-2")
            .replace("L7-L8", "L7-8");
        Self::all()
            .find(|c| c.name() == norm)
            .ok_or_else(|| UnknownRegion(t.to_string()))
    }
}

impl From<RegionCode> for String {
    fn from(c: RegionCode) -> String {
        c.name().to_string()
    }
}

impl TryFrom<String> for RegionCode {
    type Error = UnknownRegion;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_roundtrip() {
        let all: Vec<_> = RegionCode::all().collect();
        assert_eq!(all.len(), 23);
        for c in all {
            assert_eq!(RegionCode::from_code(c.code()), Some(c));
            assert_eq!(c.name().parse::<RegionCode>().unwrap(), c);
        }
        assert_eq!(RegionCode::from_code(0), None);
        assert_eq!(RegionCode::from_code(24), None);
    }

    #[test]
    fn lobe_membership_partitions_segments() {
        let mut n = 0;
        for lobe in RegionCode::LOBES {
            for &s in lobe.members() {
                assert_eq!(s.lobe(), lobe);
                n += 1;
            }
        }
        assert_eq!(n, 18);
    }

    #[test]
    fn parses_alternate_spellings() {
        assert_eq!("l1-l2".parse::<RegionCode>().unwrap(), L1_2);
        assert_eq!("L7+L8".parse::<RegionCode>().unwrap(), L7_8);
        assert!("R11".parse::<RegionCode>().is_err());
    }
}

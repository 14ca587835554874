//! Compass approach directions and the per-intersection conflict relation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Widest intersection supported; also the observation padding width.
pub const MAX_DIRECTIONS: usize = 4;

/// Approach direction of an incoming road, named by where traffic comes
/// from. Declaration order is the canonical clockwise-from-north order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    pub const ALL: [Dir; MAX_DIRECTIONS] = [Dir::N, Dir::E, Dir::S, Dir::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Dir> {
        Dir::ALL.get(i).copied()
    }

    pub fn opposite(self) -> Dir {
        Dir::ALL[(self.index() + 2) % MAX_DIRECTIONS]
    }

    /// Direction of an approach whose upstream node lies at offset
    /// `(dx, dy)` from the intersection (y grows northward).
    pub fn from_offset(dx: f64, dy: f64) -> Dir {
        let bearing = dx.atan2(dy).to_degrees().rem_euclid(360.0);
        let sector = ((bearing + 45.0) / 90.0).floor() as usize % MAX_DIRECTIONS;
        Dir::ALL[sector]
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dir::N => "N",
            Dir::E => "E",
            Dir::S => "S",
            Dir::W => "W",
        };
        f.write_str(s)
    }
}

impl FromStr for Dir {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" => Ok(Dir::N),
            "E" => Ok(Dir::E),
            "S" => Ok(Dir::S),
            "W" => Ok(Dir::W),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Symmetric, irreflexive conflict relation over approach directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConflictMatrix([[bool; MAX_DIRECTIONS]; MAX_DIRECTIONS]);

impl ConflictMatrix {
    /// Crossing (perpendicular) approaches conflict; opposing ones do not.
    pub fn crossing() -> Self {
        let mut m = [[false; MAX_DIRECTIONS]; MAX_DIRECTIONS];
        for a in Dir::ALL {
            for b in Dir::ALL {
                m[a.index()][b.index()] = a != b && b != a.opposite();
            }
        }
        ConflictMatrix(m)
    }

    pub fn from_pairs(pairs: &[(Dir, Dir)]) -> Result<Self, String> {
        let mut m = [[false; MAX_DIRECTIONS]; MAX_DIRECTIONS];
        for &(a, b) in pairs {
            if a == b {
                return Err(format!("direction {a} cannot conflict with itself"));
            }
            m[a.index()][b.index()] = true;
            m[b.index()][a.index()] = true;
        }
        Ok(ConflictMatrix(m))
    }

    pub fn conflicts(&self, a: Dir, b: Dir) -> bool {
        self.0[a.index()][b.index()]
    }

    pub fn pairs(&self) -> Vec<(Dir, Dir)> {
        let mut out = Vec::new();
        for a in Dir::ALL {
            for b in Dir::ALL {
                if a < b && self.conflicts(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn is_symmetric_irreflexive(&self) -> bool {
        Dir::ALL.iter().all(|&a| {
            !self.conflicts(a, a) && Dir::ALL.iter().all(|&b| self.conflicts(a, b) == self.conflicts(b, a))
        })
    }
}

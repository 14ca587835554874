//! Fixed-time signal programs.

use serde::{Deserialize, Serialize};

use crate::direction::{ConflictMatrix, Dir, MAX_DIRECTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalColor {
    Green,
    Yellow,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub green: Vec<Dir>,
    pub green_s: f64,
    pub yellow_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalProgram {
    pub id: String,
    #[serde(default)]
    pub offset_s: f64,
    pub phases: Vec<Phase>,
}

pub const DEFAULT_PROGRAM_ID: &str = "default";

impl SignalProgram {
    /// Two phases, N-S then E-W, 30 s green and 3 s yellow each.
    pub fn two_phase_default() -> Self {
        SignalProgram {
            id: DEFAULT_PROGRAM_ID.to_string(),
            offset_s: 0.0,
            phases: vec![
                Phase {
                    green: vec![Dir::N, Dir::S],
                    green_s: 30.0,
                    yellow_s: 3.0,
                },
                Phase {
                    green: vec![Dir::E, Dir::W],
                    green_s: 30.0,
                    yellow_s: 3.0,
                },
            ],
        }
    }

    pub fn cycle_length(&self) -> f64 {
        self.phases.iter().map(|p| p.green_s + p.yellow_s).sum()
    }

    /// Checks the program against the approaches present at one
    /// intersection. Directions named in a phase but absent from the
    /// intersection are ignored there.
    pub fn validate_for(&self, present: &[Dir], conflicts: &ConflictMatrix) -> Result<(), String> {
        if self.phases.is_empty() {
            return Err(format!("program {:?} has no phases", self.id));
        }
        if !self.offset_s.is_finite() {
            return Err(format!("program {:?} offset is not finite", self.id));
        }
        for (i, phase) in self.phases.iter().enumerate() {
            if !(phase.green_s > 0.0 && phase.yellow_s > 0.0)
                || !phase.green_s.is_finite()
                || !phase.yellow_s.is_finite()
            {
                return Err(format!("program {:?} phase {i}: durations must be positive", self.id));
            }
            for &a in &phase.green {
                for &b in &phase.green {
                    if present.contains(&a) && present.contains(&b) && conflicts.conflicts(a, b) {
                        return Err(format!(
                            "program {:?} phase {i}: conflicting directions {a} and {b} share a green",
                            self.id
                        ));
                    }
                }
            }
        }
        for d in present {
            if !self.phases.iter().any(|p| p.green.contains(d)) {
                return Err(format!("program {:?} never serves direction {d}", self.id));
            }
        }
        Ok(())
    }

    /// Per-direction colors at time `t`, indexed by [`Dir::index`].
    pub fn state_at(&self, t: f64) -> [SignalColor; MAX_DIRECTIONS] {
        let mut out = [SignalColor::Red; MAX_DIRECTIONS];
        let cycle = self.cycle_length();
        let mut tau = (t + self.offset_s).rem_euclid(cycle);
        for phase in &self.phases {
            let span = phase.green_s + phase.yellow_s;
            if tau < span {
                let color = if tau < phase.green_s {
                    SignalColor::Green
                } else {
                    SignalColor::Yellow
                };
                for d in &phase.green {
                    out[d.index()] = color;
                }
                return out;
            }
            tau -= span;
        }
        // Rounding can leave tau a hair past the last boundary.
        if let Some(last) = self.phases.last() {
            for d in &last.green {
                out[d.index()] = SignalColor::Yellow;
            }
        }
        out
    }
}

/// Whether a vehicle approaching the stop line must treat it as a
/// stationary obstacle. Yellow only holds a vehicle that can still stop at
/// the comfortable deceleration.
pub fn stop_line_applies(color: SignalColor, v: f64, dist_to_line: f64, comfort_decel: f64) -> bool {
    match color {
        SignalColor::Green => false,
        SignalColor::Red => true,
        SignalColor::Yellow => {
            if dist_to_line <= 0.0 {
                return v <= 0.0;
            }
            v * v / (2.0 * dist_to_line) <= comfort_decel
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SignalColor::*;

    #[test]
    fn default_program_timeline() {
        let p = SignalProgram::two_phase_default();
        assert_eq!(p.cycle_length(), 66.0);
        assert_eq!(p.state_at(0.0), [Green, Red, Green, Red]);
        assert_eq!(p.state_at(66.0), p.state_at(0.0));
        // 31 s is inside the first 3 s yellow that starts at 30 s
        assert_eq!(p.state_at(31.0), [Yellow, Red, Yellow, Red]);
        assert_eq!(p.state_at(33.0), [Red, Green, Red, Green]);
        assert_eq!(p.state_at(64.0), [Red, Yellow, Red, Yellow]);
    }

    #[test]
    fn offset_shifts_timeline() {
        let mut p = SignalProgram::two_phase_default();
        p.offset_s = 33.0;
        assert_eq!(p.state_at(0.0), [Red, Green, Red, Green]);
    }

    #[test]
    fn never_two_conflicting_non_red() {
        let p = SignalProgram::two_phase_default();
        let m = ConflictMatrix::crossing();
        let mut t = 0.0;
        while t < 2.0 * p.cycle_length() {
            let s = p.state_at(t);
            for a in Dir::ALL {
                for b in Dir::ALL {
                    if m.conflicts(a, b) {
                        assert!(s[a.index()] == Red || s[b.index()] == Red, "t={t}");
                    }
                }
            }
            assert_eq!(s, p.state_at(t + p.cycle_length()));
            t += 0.25;
        }
    }

    #[test]
    fn validation_rejects_conflicting_green_and_unserved_direction() {
        let m = ConflictMatrix::crossing();
        let mut p = SignalProgram::two_phase_default();
        assert!(p.validate_for(&Dir::ALL, &m).is_ok());
        p.phases[0].green.push(Dir::E);
        assert!(p.validate_for(&Dir::ALL, &m).is_err());
        let mut p = SignalProgram::two_phase_default();
        p.phases.pop();
        assert!(p.validate_for(&Dir::ALL, &m).is_err());
        assert!(p.validate_for(&[Dir::N, Dir::S], &m).is_ok());
    }

    #[test]
    fn stop_line_rules() {
        assert!(stop_line_applies(Red, 13.0, 1.0, 2.0));
        assert!(!stop_line_applies(Yellow, 10.0, 5.0, 2.0));
        assert!(stop_line_applies(Yellow, 10.0, 30.0, 2.0));
        assert!(!stop_line_applies(Green, 0.0, 1.0, 2.0));
    }
}

//! Control-zone bookkeeping for unsignalized intersections: observations,
//! conflicts, priority arbitration, rewards, and the human-driver head rule.

use serde::{Deserialize, Serialize};

use crate::direction::{ConflictMatrix, Dir, MAX_DIRECTIONS};
use crate::dynamics::RvDecision;

/// Observation width: a (queue, wait) pair and an occupancy flag per
/// direction slot.
pub const OBS_LEN: usize = 3 * MAX_DIRECTIONS;

/// Queue length that saturates the normalized queue feature.
pub const QUEUE_SCALE: f64 = 20.0;
/// Waiting time, s, that saturates the normalized wait feature.
pub const WAIT_SCALE: f64 = 60.0;

pub fn normalize_queue(q: u32) -> f64 {
    (f64::from(q) / QUEUE_SCALE).clamp(0.0, 1.0)
}

pub fn normalize_wait(tau: f64) -> f64 {
    (tau / WAIT_SCALE).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RvAction {
    Stop = 0,
    Go = 1,
}

impl RvAction {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> RvAction {
        if i == 0 {
            RvAction::Stop
        } else {
            RvAction::Go
        }
    }
}

impl From<RvAction> for RvDecision {
    fn from(a: RvAction) -> Self {
        match a {
            RvAction::Stop => RvDecision::Stop,
            RvAction::Go => RvDecision::Go,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_LEN]);

impl Observation {
    pub fn zeros() -> Self {
        Observation([0.0; OBS_LEN])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A vehicle inside the zone: on an incoming edge within the zone radius of
/// the stop line. `wait` is its waiting time accrued in this zone so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneMember {
    pub direction: Dir,
    pub speed: f64,
    pub wait: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneState {
    /// q_d: members with speed below the stop threshold.
    pub queue: [u32; MAX_DIRECTIONS],
    /// tau_d: mean zone wait of the members from d, s.
    pub avg_wait: [f64; MAX_DIRECTIONS],
    /// sigma_d: a vehicle from d is inside the intersection interior.
    pub occupied: [bool; MAX_DIRECTIONS],
    pub members: [u32; MAX_DIRECTIONS],
    pub conflict: bool,
}

impl Default for ZoneState {
    fn default() -> Self {
        ZoneState {
            queue: [0; MAX_DIRECTIONS],
            avg_wait: [0.0; MAX_DIRECTIONS],
            occupied: [false; MAX_DIRECTIONS],
            members: [0; MAX_DIRECTIONS],
            conflict: false,
        }
    }
}

/// Accrues `dt` of waiting to every motionless member, then recomputes the
/// per-direction aggregates. `occupants` lists the approach direction of
/// each vehicle currently in the interior.
pub fn update_zone(
    zone: &mut ZoneState,
    members: &mut [ZoneMember],
    occupants: &[Dir],
    dt: f64,
    stop_speed: f64,
) {
    let mut queue = [0u32; MAX_DIRECTIONS];
    let mut wait_sum = [0.0f64; MAX_DIRECTIONS];
    let mut count = [0u32; MAX_DIRECTIONS];
    for m in members.iter_mut() {
        let d = m.direction.index();
        if m.speed < stop_speed {
            m.wait += dt;
            queue[d] += 1;
        }
        wait_sum[d] += m.wait;
        count[d] += 1;
    }
    let mut occupied = [false; MAX_DIRECTIONS];
    for d in occupants {
        occupied[d.index()] = true;
    }
    for d in 0..MAX_DIRECTIONS {
        zone.avg_wait[d] = if count[d] == 0 {
            0.0
        } else {
            wait_sum[d] / f64::from(count[d])
        };
    }
    zone.queue = queue;
    zone.members = count;
    zone.occupied = occupied;
}

/// `[q_N/20, tau_N/60, q_E/20, tau_E/60, ..., sigma_N, sigma_E, sigma_S, sigma_W]`
/// with absent directions left at zero.
pub fn build_observation(zone: &ZoneState) -> Observation {
    let mut o = [0.0; OBS_LEN];
    for d in 0..MAX_DIRECTIONS {
        o[2 * d] = normalize_queue(zone.queue[d]);
        o[2 * d + 1] = normalize_wait(zone.avg_wait[d]);
        o[2 * MAX_DIRECTIONS + d] = if zone.occupied[d] { 1.0 } else { 0.0 };
    }
    Observation(o)
}

/// True when vehicles from two conflicting directions share the interior.
pub fn detect_conflict(occupants: &[Dir], conflicts: &ConflictMatrix) -> bool {
    occupants
        .iter()
        .enumerate()
        .any(|(i, &a)| occupants[i + 1..].iter().any(|&b| conflicts.conflicts(a, b)))
}

/// `beta * (+tau if Go, -tau if Stop) - (1 if conflict)`.
pub fn compute_reward(action: RvAction, tau: f64, conflict: bool, beta: f64) -> f64 {
    let local = match action {
        RvAction::Go => tau,
        RvAction::Stop => -tau,
    };
    let penalty = if conflict { -1.0 } else { 0.0 };
    beta * local + penalty
}

/// Priority score of a direction: `lambda * q_hat + (1 - lambda) * tau_hat`.
pub fn priority_score(zone: &ZoneState, d: Dir, lambda: f64) -> f64 {
    lambda * normalize_queue(zone.queue[d.index()])
        + (1.0 - lambda) * normalize_wait(zone.avg_wait[d.index()])
}

/// Grants entry among the heads that want to enter this step.
///
/// `committed` directions (already too close to stop) are granted first.
/// Remaining demanders are taken by descending score, ties in canonical
/// order, and granted when they conflict with nothing granted so far.
pub fn arbitrate_priority(
    zone: &ZoneState,
    demanders: &[Dir],
    committed: &[Dir],
    conflicts: &ConflictMatrix,
    lambda: f64,
) -> [bool; MAX_DIRECTIONS] {
    let mut granted = [false; MAX_DIRECTIONS];
    let mut chosen: Vec<Dir> = Vec::new();
    let mut committed: Vec<Dir> = committed.to_vec();
    committed.sort();
    for d in committed {
        if !chosen.contains(&d) {
            granted[d.index()] = true;
            chosen.push(d);
        }
    }
    let mut rest: Vec<(f64, Dir)> = demanders
        .iter()
        .filter(|d| !chosen.contains(d))
        .map(|&d| (priority_score(zone, d, lambda), d))
        .collect();
    rest.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    rest.dedup_by_key(|x| x.1);
    for (_, d) in rest {
        if chosen.iter().all(|&c| !conflicts.conflicts(c, d)) {
            granted[d.index()] = true;
            chosen.push(d);
        }
    }
    granted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadRule {
    Proceed,
    Hold,
}

/// Gap acceptance for a human driver at the head of its approach.
///
/// `time_to_line[d]` is the time the nearest vehicle on approach `d` needs
/// to reach the stop line (`None` when the approach is empty, infinite when
/// it is stopped).
pub fn hv_head_rule(
    own: Dir,
    zone: &ZoneState,
    time_to_line: &[Option<f64>; MAX_DIRECTIONS],
    conflicts: &ConflictMatrix,
    t_gap: f64,
) -> HeadRule {
    for d in Dir::ALL {
        if !conflicts.conflicts(own, d) {
            continue;
        }
        if zone.occupied[d.index()] {
            return HeadRule::Hold;
        }
        if let Some(t) = time_to_line[d.index()] {
            if t <= t_gap {
                return HeadRule::Hold;
            }
        }
    }
    HeadRule::Proceed
}

use std::fmt;
use std::io::{self, Write};

use crate::direction::Dir;
use crate::scenario::IntersectionId;
use crate::zone::RvAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Vehicle drawn from the demand process (joins the entrance backlog).
    Spawn,
    /// Vehicle released from the backlog onto its entrance edge.
    Enter,
    Decision,
    InteriorEnter,
    InteriorExit,
    Conflict,
    /// Transfer refused because the downstream edge had no room.
    Blocked,
    Arrive,
    /// Two vehicles on one edge closer than zero bumper gap.
    Overlap,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::Enter => "enter",
            EventKind::Decision => "decision",
            EventKind::InteriorEnter => "interior_enter",
            EventKind::InteriorExit => "interior_exit",
            EventKind::Conflict => "conflict",
            EventKind::Blocked => "blocked",
            EventKind::Arrive => "arrive",
            EventKind::Overlap => "overlap",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub vehicle: Option<u64>,
    pub intersection: Option<IntersectionId>,
    pub detail: String,
}

/// Writes `t,kind,vehicle_id,intersection_id,detail` lines with a header.
/// Missing ids are empty fields; intersection ids are scenario node ids.
pub fn write_event_log<W: Write>(
    mut out: W,
    events: &[Event],
    node_of: impl Fn(IntersectionId) -> u32,
) -> io::Result<()> {
    writeln!(out, "t,kind,vehicle_id,intersection_id,detail")?;
    for e in events {
        let vehicle = e.vehicle.map(|v| v.to_string()).unwrap_or_default();
        let ix = e.intersection.map(|i| node_of(i).to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", e.t, e.kind, vehicle, ix, e.detail)?;
    }
    Ok(())
}

/// One closed RV decision: what was chosen, whether a Go survived
/// arbitration, and the reward the transition finally carried.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub t: f64,
    pub intersection: IntersectionId,
    pub vehicle: u64,
    pub direction: Dir,
    pub action: RvAction,
    pub granted: bool,
    pub reward: f64,
}

/// Writes `t,intersection,vehicle,direction,action,granted,reward`.
pub fn write_decision_trace<W: Write>(
    mut out: W,
    records: &[DecisionRecord],
    node_of: impl Fn(IntersectionId) -> u32,
) -> io::Result<()> {
    writeln!(out, "t,intersection,vehicle,direction,action,granted,reward")?;
    for r in records {
        let action = match r.action {
            RvAction::Stop => "stop",
            RvAction::Go => "go",
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t,
            node_of(r.intersection),
            r.vehicle,
            r.direction,
            action,
            u8::from(r.granted),
            r.reward
        )?;
    }
    Ok(())
}

/// 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::default();
    h.write(bytes);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn event_csv_layout() {
        let ev = [
            Event { t: 1.5, kind: EventKind::Arrive, vehicle: Some(7), intersection: None, detail: String::new() },
            Event {
                t: 2.0,
                kind: EventKind::Conflict,
                vehicle: None,
                intersection: Some(IntersectionId(0)),
                detail: "N+E".into(),
            },
        ];
        let mut buf = Vec::new();
        write_event_log(&mut buf, &ev, |_| 42).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,kind,vehicle_id,intersection_id,detail\n1.5,arrive,7,,\n2,conflict,,42,N+E\n"
        );
    }
}

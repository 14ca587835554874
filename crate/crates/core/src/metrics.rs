//! Average waiting time and throughput at direction, intersection and
//! network scope, plus the CSV tables built from them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::direction::Dir;
use crate::error::{Error, Result};
use crate::scenario::{IntersectionId, RoadNetwork};
use crate::sim::{Event, EventKind};

/// Motionless time one vehicle accumulated in one control zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitRecord {
    pub vehicle: u64,
    pub intersection: IntersectionId,
    pub direction: Dir,
    /// Whole-episode wait, s.
    pub wait: f64,
    /// Wait accrued inside the evaluation window only, s.
    pub window_wait: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scope {
    Direction(IntersectionId, Dir),
    Intersection(IntersectionId),
    Network,
}

/// `[T/2, T)`.
pub fn evaluation_window(horizon: f64) -> (f64, f64) {
    (0.5 * horizon, horizon)
}

/// Summed wait divided by the number of distinct vehicles in scope; 0 for
/// an empty scope.
pub fn avg_waiting_time(records: &[WaitRecord], scope: Scope, windowed: bool) -> f64 {
    let mut vehicles = BTreeSet::new();
    let mut waits = Vec::new();
    for r in records {
        let inside = match scope {
            Scope::Direction(ix, d) => r.intersection == ix && r.direction == d,
            Scope::Intersection(ix) => r.intersection == ix,
            Scope::Network => true,
        };
        if inside {
            vehicles.insert(r.vehicle);
            waits.push(if windowed { r.window_wait } else { r.wait });
        }
    }
    if vehicles.is_empty() {
        return 0.0;
    }
    stable_sum(&mut waits) / vehicles.len() as f64
}

/// Interior exits at an intersection (intersection and direction scope) or
/// arrivals (network scope) with time stamps in `[window.0, window.1)`.
/// Direction scope is counted from the exit's interior-entry event.
pub fn throughput(events: &[Event], scope: Scope, window: (f64, f64)) -> usize {
    let in_window = |e: &Event| e.t >= window.0 && e.t < window.1;
    match scope {
        Scope::Network => events
            .iter()
            .filter(|e| e.kind == EventKind::Arrive && in_window(e))
            .count(),
        Scope::Intersection(ix) => events
            .iter()
            .filter(|e| e.kind == EventKind::InteriorExit && e.intersection == Some(ix) && in_window(e))
            .count(),
        Scope::Direction(ix, d) => {
            let label = d.to_string();
            let from_d: BTreeSet<u64> = events
                .iter()
                .filter(|e| {
                    e.kind == EventKind::InteriorEnter && e.intersection == Some(ix) && e.detail == label
                })
                .filter_map(|e| e.vehicle)
                .collect();
            events
                .iter()
                .filter(|e| {
                    e.kind == EventKind::InteriorExit
                        && e.intersection == Some(ix)
                        && in_window(e)
                        && e.vehicle.is_some_and(|v| from_d.contains(&v))
                })
                .count()
        }
    }
}

/// Sum in ascending order so the result does not depend on input order.
fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    stable_sum(&mut v) / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionMetrics {
    pub intersection: IntersectionId,
    /// Scenario node id, used as the row label.
    pub node: u32,
    pub avg_wait: f64,
    pub throughput: usize,
    pub vehicles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_intersection: Vec<IntersectionMetrics>,
    pub network_wait: f64,
    pub network_throughput: usize,
    /// Vehicles with at least one zone record.
    pub vehicles: usize,
    pub spawned: usize,
    pub arrived: usize,
    pub window: (f64, f64),
}

impl MetricsReport {
    pub fn from_episode(
        network: &RoadNetwork,
        records: &[WaitRecord],
        events: &[Event],
        horizon: f64,
        windowed: bool,
    ) -> Self {
        let window = evaluation_window(horizon);
        let per_intersection = network
            .intersections
            .iter()
            .map(|ix| IntersectionMetrics {
                intersection: ix.id,
                node: ix.node.0,
                avg_wait: avg_waiting_time(records, Scope::Intersection(ix.id), windowed),
                throughput: throughput(events, Scope::Intersection(ix.id), window),
                vehicles: records
                    .iter()
                    .filter(|r| r.intersection == ix.id)
                    .map(|r| r.vehicle)
                    .collect::<BTreeSet<_>>()
                    .len(),
            })
            .collect();
        let count = |kind| events.iter().filter(|e| e.kind == kind).count();
        MetricsReport {
            per_intersection,
            network_wait: avg_waiting_time(records, Scope::Network, windowed),
            network_throughput: throughput(events, Scope::Network, window),
            vehicles: records.iter().map(|r| r.vehicle).collect::<BTreeSet<_>>().len(),
            spawned: count(EventKind::Spawn),
            arrived: count(EventKind::Arrive),
            window,
        }
    }
}

/// Means over evaluation runs of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanReport {
    /// `(node, mean W, mean Q)` per intersection, in intersection order.
    pub per_intersection: Vec<(u32, f64, f64)>,
    pub network_wait: f64,
    pub network_throughput: f64,
    pub runs: usize,
}

impl MeanReport {
    /// # Panics
    /// When `reports` is empty or the reports disagree on intersections.
    pub fn of(reports: &[MetricsReport]) -> Self {
        assert!(!reports.is_empty(), "at least one report");
        let first = &reports[0];
        let per_intersection = first
            .per_intersection
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let w = mean(reports.iter().map(|r| r.per_intersection[i].avg_wait));
                let q = mean(reports.iter().map(|r| r.per_intersection[i].throughput as f64));
                (m.node, w, q)
            })
            .collect();
        MeanReport {
            per_intersection,
            network_wait: mean(reports.iter().map(|r| r.network_wait)),
            network_throughput: mean(reports.iter().map(|r| r.network_throughput as f64)),
            runs: reports.len(),
        }
    }
}

/// A labelled column of results (one configuration, or one configuration at
/// one RV rate).
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub label: String,
    pub report: MeanReport,
}

fn header(first: &str, columns: &[Column]) -> String {
    let mut h = first.to_string();
    for c in columns {
        write!(h, ",{0}_W,{0}_Q", c.label).unwrap();
    }
    h.push('\n');
    h
}

fn cells(out: &mut String, w: f64, q: f64) {
    write!(out, ",{w:.2},{q:.0}").unwrap();
}

/// Per-intersection table: one row per intersection.
pub fn per_intersection_csv(columns: &[Column]) -> String {
    let mut out = header("intersection", columns);
    let Some(first) = columns.first() else { return out };
    for (i, &(node, _, _)) in first.report.per_intersection.iter().enumerate() {
        write!(out, "{node}").unwrap();
        for c in columns {
            let (_, w, q) = c.report.per_intersection[i];
            cells(&mut out, w, q);
        }
        out.push('\n');
    }
    out
}

/// Network table: a single aggregated row.
pub fn network_csv(columns: &[Column]) -> String {
    let mut out = header("scope", columns);
    out.push_str("network");
    for c in columns {
        cells(&mut out, c.report.network_wait, c.report.network_throughput);
    }
    out.push('\n');
    out
}

/// Intersections followed by a final `network` row.
pub fn combined_csv(columns: &[Column]) -> String {
    let mut out = per_intersection_csv(columns);
    let network = network_csv(columns);
    out.push_str(network.lines().nth(1).unwrap_or("network"));
    out.push('\n');
    out
}

/// Writes `per_intersection.csv` and `network.csv` into `dir`.
pub fn write_report(columns: &[Column], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("per_intersection.csv", per_intersection_csv(columns)),
        ("network.csv", network_csv(columns)),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

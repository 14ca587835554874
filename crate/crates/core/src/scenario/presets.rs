//! Desk-scale stand-in networks.
//!
//! * `single`: one 4-way unsignalized intersection, four entrances.
//! * `grid2x2`: four 4-way intersections, eight entrances, all signalized.
//! * `grid14`: a 4x4 grid with two opposite corners removed: 14
//!   intersections (four of them 3-way) and 12 peripheral entrances.
//!
//! The JSON under `scenarios/` is the canonical serialization of these.

use super::{
    ControlDoc, DemandDoc, EdgeDoc, IntersectionControlDoc, ModeDoc, NetworkDoc, NodeDoc, NodeKind,
    OdDoc, Scenario, ScenarioDoc, SimParams, FORMAT_VERSION,
};
use crate::rl::TrainConfig;
use crate::signal::DEFAULT_PROGRAM_ID;

pub const SPEED_LIMIT: f64 = 13.89;
const BLOCK: f64 = 200.0;
const ARM: f64 = 150.0;

pub fn names() -> &'static [&'static str] {
    &["single", "grid2x2", "grid14"]
}

pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "single" => Some(single_intersection()),
        "grid2x2" => Some(grid2x2()),
        "grid14" => Some(grid14()),
        _ => None,
    }
}

/// Training settings for laptop-sized runs: three 64-unit layers and a
/// reduced iteration count.
pub fn desk_train(iterations: u32) -> TrainConfig {
    TrainConfig {
        hidden: vec![64, 64, 64],
        iterations,
        ..TrainConfig::default()
    }
}

struct Builder {
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

impl Builder {
    fn new() -> Self {
        Builder { nodes: Vec::new(), edges: Vec::new() }
    }

    fn node(&mut self, id: u32, x: f64, y: f64, kind: NodeKind) {
        self.nodes.push(NodeDoc { id, x, y, kind });
    }

    fn road(&mut self, a: u32, b: u32) {
        for (from, to) in [(a, b), (b, a)] {
            let id = self.edges.len() as u32;
            self.edges.push(EdgeDoc { id, from, to, length: None, speed_limit: SPEED_LIMIT });
        }
    }

    fn boundary_ids(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Boundary)
            .map(|n| n.id)
            .collect()
    }

    fn finish(
        self,
        modes: &[(u32, ModeDoc)],
        rate: f64,
        rv_penetration: f64,
        sim: SimParams,
        train: TrainConfig,
    ) -> Scenario {
        let boundaries = self.boundary_ids();
        let mut od = Vec::new();
        for &from in &boundaries {
            for &to in &boundaries {
                if from != to {
                    od.push(OdDoc { from, to, rate });
                }
            }
        }
        let intersections = modes
            .iter()
            .map(|&(node, mode)| IntersectionControlDoc {
                node,
                mode,
                program: (mode == ModeDoc::Signalized).then(|| DEFAULT_PROGRAM_ID.to_string()),
                conflicts: None,
            })
            .collect();
        let doc = ScenarioDoc {
            format_version: FORMAT_VERSION,
            network: NetworkDoc { nodes: self.nodes, edges: self.edges },
            control: ControlDoc {
                config: None,
                programs: Vec::new(),
                intersections,
                unsignalized_order: None,
            },
            demand: DemandDoc { od, rv_penetration, seed: 0 },
            sim,
            train,
        };
        let mut s = Scenario::from_doc(doc).expect("preset is valid");
        let label = s.label();
        s = s.with_config(label).expect("preset is valid");
        s
    }
}

pub fn single_intersection() -> Scenario {
    let mut b = Builder::new();
    b.node(0, 0.0, 0.0, NodeKind::Intersection);
    let arms = [(1, 0.0, BLOCK), (2, BLOCK, 0.0), (3, 0.0, -BLOCK), (4, -BLOCK, 0.0)];
    for (id, x, y) in arms {
        b.node(id, x, y, NodeKind::Boundary);
        b.road(id, 0);
    }
    let sim = SimParams { horizon: 300.0, ..SimParams::default() };
    b.finish(&[(0, ModeDoc::Unsignalized)], 0.04, 1.0, sim, desk_train(200))
}

/// Grid of intersections at `BLOCK` spacing, row 0 at the top, with the
/// listed cells left empty. Every open side of the perimeter gets an
/// entrance `ARM` metres out.
fn grid(rows: u32, cols: u32, skip: &[(u32, u32)]) -> Builder {
    let mut b = Builder::new();
    let present = |r: i64, c: i64| {
        r >= 0 && c >= 0 && r < rows as i64 && c < cols as i64 && !skip.contains(&(r as u32, c as u32))
    };
    let id = |r: u32, c: u32| r * cols + c;
    for r in 0..rows {
        for c in 0..cols {
            if present(r as i64, c as i64) {
                b.node(id(r, c), c as f64 * BLOCK, -(r as f64) * BLOCK, NodeKind::Intersection);
            }
        }
    }
    let mut next_boundary = 100;
    for r in 0..rows {
        for c in 0..cols {
            if !present(r as i64, c as i64) {
                continue;
            }
            let (x, y) = (c as f64 * BLOCK, -(r as f64) * BLOCK);
            // N, E, S, W neighbours
            let sides = [(-1i64, 0i64, 0.0, ARM), (0, 1, ARM, 0.0), (1, 0, 0.0, -ARM), (0, -1, -ARM, 0.0)];
            for (dr, dc, ox, oy) in sides {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if present(nr, nc) {
                    // each internal road once, from the lower id
                    let other = id(nr as u32, nc as u32);
                    if id(r, c) < other {
                        b.road(id(r, c), other);
                    }
                } else if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                    b.node(next_boundary, x + ox, y + oy, NodeKind::Boundary);
                    b.road(next_boundary, id(r, c));
                    next_boundary += 1;
                }
            }
        }
    }
    b
}

pub fn grid2x2() -> Scenario {
    let b = grid(2, 2, &[]);
    let modes: Vec<(u32, ModeDoc)> = (0..4).map(|i| (i, ModeDoc::Signalized)).collect();
    let sim = SimParams { horizon: 1000.0, ..SimParams::default() };
    let train = TrainConfig { episode_horizon: Some(300.0), ..desk_train(60) };
    b.finish(&modes, 0.006, 0.8, sim, train)
}

pub fn grid14() -> Scenario {
    let b = grid(4, 4, &[(0, 0), (3, 3)]);
    let modes: Vec<(u32, ModeDoc)> = b
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Intersection)
        .map(|n| (n.id, ModeDoc::Signalized))
        .collect();
    let sim = SimParams { horizon: 1000.0, ..SimParams::default() };
    let train = TrainConfig { episode_horizon: Some(300.0), ..desk_train(60) };
    b.finish(&modes, 0.002, 0.8, sim, train)
}

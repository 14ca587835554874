//! Scenario documents: network, control assignment, demand and parameters.
//!
//! A scenario is a JSON document with the top-level keys `format_version`,
//! `network`, `control`, `demand`, `sim` and `train`. [`load_scenario`]
//! parses and validates it into an immutable [`Scenario`]. The field-level
//! grammar is documented in `docs/scenario-format.md`.

mod demand;
mod network;
pub mod presets;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::direction::{ConflictMatrix, Dir};
use crate::dynamics::IdmParams;
use crate::error::{Error, Result};
use crate::rl::TrainConfig;
use crate::signal::{SignalProgram, DEFAULT_PROGRAM_ID};

pub use demand::{spawn_vehicles, SpawnedVehicle, VehicleKind};
pub use network::{
    Edge, EdgeId, Intersection, IntersectionId, Node, NodeId, NodeKind, RoadNetwork, Route,
};

pub const FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Document grammar

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub format_version: u32,
    pub network: NetworkDoc,
    pub control: ControlDoc,
    pub demand: DemandDoc,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    /// Defaults to the straight-line distance between the endpoints.
    #[serde(default)]
    pub length: Option<f64>,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeDoc {
    Signalized,
    Unsignalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionControlDoc {
    pub node: u32,
    pub mode: ModeDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    /// Conflicting approach pairs; crossing approaches conflict by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflicts: Option<Vec<(Dir, Dir)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlDoc {
    /// Declared `xU+yS` split; must agree with the listed modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default)]
    pub programs: Vec<SignalProgram>,
    pub intersections: Vec<IntersectionControlDoc>,
    /// Order in which intersections become unsignalized when a `xU+yS`
    /// configuration is applied. Defaults to ascending node id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unsignalized_order: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdDoc {
    pub from: u32,
    pub to: u32,
    /// Vehicles per second.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandDoc {
    pub od: Vec<OdDoc>,
    pub rv_penetration: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmDoc {
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub min_gap: f64,
    pub time_headway: f64,
    pub exponent: f64,
}

impl Default for IdmDoc {
    fn default() -> Self {
        let p = IdmParams::<f64>::default();
        Self {
            max_accel: p.max_accel,
            comfort_decel: p.comfort_decel,
            min_gap: p.min_gap,
            time_headway: p.time_headway,
            exponent: p.exponent,
        }
    }
}

impl IdmDoc {
    /// IDM parameters for a road with the given speed limit.
    pub fn params(&self, desired_speed: f64) -> IdmParams<f64> {
        IdmParams {
            desired_speed,
            max_accel: self.max_accel,
            comfort_decel: self.comfort_decel,
            min_gap: self.min_gap,
            time_headway: self.time_headway,
            exponent: self.exponent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Step size, s.
    pub dt: f64,
    /// Episode length, s.
    pub horizon: f64,
    /// Control zone radius measured back from the stop line, m.
    pub zone_radius: f64,
    /// Speeds below this count as motionless, m/s.
    pub stop_speed: f64,
    /// Length of the crossing segment inside an intersection, m.
    pub interior_length: f64,
    pub vehicle_length: f64,
    /// How far past the end of an edge a leader is searched for, m.
    pub lookahead: f64,
    /// Seconds between policy queries of one robot vehicle.
    pub decision_interval: f64,
    /// Time-to-stop-line a human driver needs on conflicting approaches, s.
    pub hv_gap: f64,
    /// Reward scale on the local term.
    pub beta: f64,
    /// Queue weight in the priority score; waiting gets `1 - lambda`.
    pub lambda: f64,
    /// Reward uses raw seconds of waiting instead of the normalized value.
    pub raw_wait_reward: bool,
    /// Average waiting time counts only waits accrued in the second half.
    pub windowed_wait: bool,
    pub idm: IdmDoc,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.5,
            horizon: 1000.0,
            zone_radius: 30.0,
            stop_speed: 0.1,
            interior_length: 15.0,
            vehicle_length: 5.0,
            lookahead: 100.0,
            decision_interval: 1.0,
            hv_gap: 4.0,
            beta: 1.0,
            lambda: 0.5,
            raw_wait_reward: false,
            windowed_wait: false,
            idm: IdmDoc::default(),
        }
    }
}

impl SimParams {
    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    /// Simulation steps between two policy queries of one vehicle.
    pub fn decision_steps(&self) -> u64 {
        ((self.decision_interval / self.dt).round() as u64).max(1)
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::validation(format!("sim.{field}"), msg));
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.dt) {
            return bad("dt", "must be positive");
        }
        if !positive(self.horizon) {
            return bad("horizon", "must be positive");
        }
        let ratio = self.horizon / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad("horizon", "must be a multiple of dt");
        }
        if !positive(self.zone_radius) {
            return bad("zone_radius", "must be positive");
        }
        if !(self.stop_speed >= 0.0) {
            return bad("stop_speed", "must be non-negative");
        }
        for (name, v) in [
            ("interior_length", self.interior_length),
            ("vehicle_length", self.vehicle_length),
            ("lookahead", self.lookahead),
            ("decision_interval", self.decision_interval),
            ("hv_gap", self.hv_gap),
        ] {
            if !positive(v) {
                return bad(name, "must be positive");
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", "must lie in [0, 1]");
        }
        if !self.idm.params(1.0).is_valid() {
            return bad("idm", "parameters must be positive with exponent >= 1");
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Validated scenario

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlMode {
    Signalized,
    Unsignalized,
}

/// A `xU+yS` split: `x` RV-controlled, `y` signalized intersections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConfigLabel {
    pub unsignalized: usize,
    pub signalized: usize,
}

impl ConfigLabel {
    pub fn total(&self) -> usize {
        self.unsignalized + self.signalized
    }
}

impl fmt::Display for ConfigLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}U+{}S", self.unsignalized, self.signalized)
    }
}

impl FromStr for ConfigLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::validation("config", format!("expected xU+yS, got {s:?}"));
        let (u, rest) = s.trim().split_once('U').ok_or_else(err)?;
        let rest = rest.strip_prefix('+').ok_or_else(err)?;
        let sig = rest.strip_suffix('S').ok_or_else(err)?;
        Ok(ConfigLabel {
            unsignalized: u.parse().map_err(|_| err())?,
            signalized: sig.parse().map_err(|_| err())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlAssignment {
    /// Mode per intersection, indexed like [`RoadNetwork::intersections`].
    pub modes: Vec<ControlMode>,
    /// Program per intersection; `None` for unsignalized ones.
    pub programs: Vec<Option<SignalProgram>>,
}

impl ControlAssignment {
    pub fn label(&self) -> ConfigLabel {
        let x = self
            .modes
            .iter()
            .filter(|m| **m == ControlMode::Unsignalized)
            .count();
        ConfigLabel {
            unsignalized: x,
            signalized: self.modes.len() - x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdPair {
    pub from: NodeId,
    pub to: NodeId,
    pub rate: f64,
    pub route: Route,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandSpec {
    pub od: Vec<OdPair>,
    pub rv_penetration: f64,
    pub seed: u64,
}

/// A validated, immutable scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    doc: ScenarioDoc,
    pub network: RoadNetwork,
    pub control: ControlAssignment,
    pub demand: DemandSpec,
}

pub fn load_scenario(document: &str) -> Result<Scenario> {
    let doc: ScenarioDoc =
        serde_json::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    Scenario::from_doc(doc)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scenario(&text)
}

impl Scenario {
    pub fn from_doc(mut doc: ScenarioDoc) -> Result<Scenario> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::validation(
                "format_version",
                format!("expected {FORMAT_VERSION}, found {}", doc.format_version),
            ));
        }
        doc.sim.validate()?;
        doc.train.validate()?;

        let mut network = RoadNetwork::build(&doc.network)?;
        // Record derived lengths so the canonical form is explicit.
        for e in &mut doc.network.edges {
            let edge = network.edge_by_doc_id(e.id).expect("edge validated");
            e.length = Some(network.edges[edge.index()].length);
        }
        if doc.network.edges.iter().any(|e| e.length.unwrap() <= doc.sim.vehicle_length) {
            return Err(Error::validation(
                "network.edges",
                "every edge must be longer than one vehicle",
            ));
        }

        let control = build_control(&mut doc.control, &mut network)?;
        let demand = build_demand(&doc.demand, &network)?;

        Ok(Scenario {
            doc,
            network,
            control,
            demand,
        })
    }

    pub fn doc(&self) -> &ScenarioDoc {
        &self.doc
    }

    pub fn sim(&self) -> &SimParams {
        &self.doc.sim
    }

    pub fn train(&self) -> &TrainConfig {
        &self.doc.train
    }

    /// Canonical serialization: the normalized document with every default
    /// made explicit, as pretty-printed JSON.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.doc).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn label(&self) -> ConfigLabel {
        self.control.label()
    }

    /// Re-partitions the intersections into `x` unsignalized (taken in
    /// `control.unsignalized_order`) and the rest signalized.
    pub fn with_config(&self, label: ConfigLabel) -> Result<Scenario> {
        let n = self.network.intersections.len();
        if label.total() != n {
            return Err(Error::validation(
                "control.config",
                format!("{label} does not cover the {n} intersections"),
            ));
        }
        let mut doc = self.doc.clone();
        let order: Vec<u32> = match &doc.control.unsignalized_order {
            Some(o) => o.clone(),
            None => {
                let mut ids: Vec<u32> = self.network.intersections.iter().map(|i| i.node.0).collect();
                ids.sort_unstable();
                ids
            }
        };
        let chosen: BTreeSet<u32> = order.iter().take(label.unsignalized).copied().collect();
        for ic in &mut doc.control.intersections {
            if chosen.contains(&ic.node) {
                ic.mode = ModeDoc::Unsignalized;
                ic.program = None;
            } else {
                ic.mode = ModeDoc::Signalized;
                if ic.program.is_none() {
                    ic.program = Some(DEFAULT_PROGRAM_ID.to_string());
                }
            }
        }
        doc.control.config = Some(label.to_string());
        Scenario::from_doc(doc)
    }

    pub fn with_rv_penetration(&self, rate: f64) -> Result<Scenario> {
        let mut doc = self.doc.clone();
        doc.demand.rv_penetration = rate;
        Scenario::from_doc(doc)
    }

    pub fn with_train(&self, train: TrainConfig) -> Result<Scenario> {
        let mut doc = self.doc.clone();
        doc.train = train;
        Scenario::from_doc(doc)
    }

    pub fn with_sim(&self, sim: SimParams) -> Result<Scenario> {
        let mut doc = self.doc.clone();
        doc.sim = sim;
        Scenario::from_doc(doc)
    }

    pub fn with_demand_seed(&self, seed: u64) -> Result<Scenario> {
        let mut doc = self.doc.clone();
        doc.demand.seed = seed;
        Scenario::from_doc(doc)
    }
}

fn build_control(control: &mut ControlDoc, network: &mut RoadNetwork) -> Result<ControlAssignment> {
    if !control
        .programs
        .iter()
        .any(|p| p.id == DEFAULT_PROGRAM_ID)
    {
        control.programs.push(SignalProgram::two_phase_default());
    }
    let mut program_ids = BTreeSet::new();
    for p in &control.programs {
        if !program_ids.insert(p.id.clone()) {
            return Err(Error::validation(
                "control.programs",
                format!("duplicate program id {:?}", p.id),
            ));
        }
    }

    let n = network.intersections.len();
    let mut modes = vec![None; n];
    let mut programs = vec![None; n];
    let mut conflicts = vec![ConflictMatrix::crossing(); n];
    for ic in &mut control.intersections {
        let Some(idx) = network.intersection_at(NodeId(ic.node)) else {
            return Err(Error::validation(
                "control.intersections",
                format!("node {} is not an intersection", ic.node),
            ));
        };
        if modes[idx.index()].is_some() {
            return Err(Error::validation(
                "control.intersections",
                format!("node {} listed twice", ic.node),
            ));
        }
        let matrix = match &ic.conflicts {
            Some(pairs) => ConflictMatrix::from_pairs(pairs)
                .map_err(|m| Error::validation("control.intersections.conflicts", m))?,
            None => ConflictMatrix::crossing(),
        };
        conflicts[idx.index()] = matrix;
        match ic.mode {
            ModeDoc::Unsignalized => {
                if ic.program.is_some() {
                    return Err(Error::validation(
                        "control.intersections",
                        format!("unsignalized node {} names a program", ic.node),
                    ));
                }
                modes[idx.index()] = Some(ControlMode::Unsignalized);
            }
            ModeDoc::Signalized => {
                let id = ic
                    .program
                    .get_or_insert_with(|| DEFAULT_PROGRAM_ID.to_string())
                    .clone();
                let program = control
                    .programs
                    .iter()
                    .find(|p| p.id == id)
                    .ok_or_else(|| {
                        Error::validation(
                            "control.programs",
                            format!("node {} references unknown program {id:?}", ic.node),
                        )
                    })?;
                let present = network.intersections[idx.index()].directions();
                program
                    .validate_for(&present, &matrix)
                    .map_err(|m| Error::validation("control.programs", m))?;
                modes[idx.index()] = Some(ControlMode::Signalized);
                programs[idx.index()] = Some(program.clone());
            }
        }
    }
    let mut resolved = Vec::with_capacity(n);
    for (i, m) in modes.into_iter().enumerate() {
        match m {
            Some(m) => resolved.push(m),
            None => {
                return Err(Error::validation(
                    "control.intersections",
                    format!(
                        "intersection node {} has no control mode",
                        network.intersections[i].node.0
                    ),
                ))
            }
        }
    }
    let assignment = ControlAssignment {
        modes: resolved,
        programs,
    };

    if let Some(cfg) = &control.config {
        let declared: ConfigLabel = cfg
            .parse()
            .map_err(|_| Error::validation("ControlAssignment", format!("bad config label {cfg:?}")))?;
        let actual = assignment.label();
        if declared != actual {
            return Err(Error::validation(
                "ControlAssignment",
                format!("declared {declared} but the listed modes give {actual}"),
            ));
        }
    }
    if let Some(order) = &control.unsignalized_order {
        let listed: BTreeSet<u32> = order.iter().copied().collect();
        let all: BTreeSet<u32> = network.intersections.iter().map(|i| i.node.0).collect();
        if listed != all || order.len() != all.len() {
            return Err(Error::validation(
                "control.unsignalized_order",
                "must list every intersection exactly once",
            ));
        }
    }
    // Conflict matrices live on the network view used by the simulator.
    for (i, m) in conflicts.into_iter().enumerate() {
        if !m.is_symmetric_irreflexive() {
            return Err(Error::validation(
                "control.intersections.conflicts",
                "conflict matrix must be symmetric with an empty diagonal",
            ));
        }
        network.set_conflicts(IntersectionId(i as u32), m);
    }
    Ok(assignment)
}

fn build_demand(demand: &DemandDoc, network: &RoadNetwork) -> Result<DemandSpec> {
    if !(0.0..=1.0).contains(&demand.rv_penetration) {
        return Err(Error::validation(
            "demand.rv_penetration",
            format!("{} is outside [0, 1]", demand.rv_penetration),
        ));
    }
    let mut seen = BTreeMap::new();
    let mut od = Vec::with_capacity(demand.od.len());
    for (i, pair) in demand.od.iter().enumerate() {
        if !(pair.rate >= 0.0 && pair.rate.is_finite()) {
            return Err(Error::validation(
                format!("demand.od[{i}].rate"),
                format!("rate {} must be a non-negative number", pair.rate),
            ));
        }
        if seen.insert((pair.from, pair.to), i).is_some() {
            return Err(Error::validation(
                format!("demand.od[{i}]"),
                format!("duplicate pair {} -> {}", pair.from, pair.to),
            ));
        }
        let (from, to) = (NodeId(pair.from), NodeId(pair.to));
        for (end, node) in [("from", from), ("to", to)] {
            match network.node(node) {
                Some(n) if n.kind == NodeKind::Boundary => {}
                _ => {
                    return Err(Error::validation(
                        format!("demand.od[{i}].{end}"),
                        format!("node {} is not a boundary node", node.0),
                    ))
                }
            }
        }
        let route = network.route_for(from, to).map_err(|e| {
            Error::validation(format!("demand.od[{i}]"), e.to_string())
        })?;
        od.push(OdPair {
            from,
            to,
            rate: pair.rate,
            route,
        });
    }
    Ok(DemandSpec {
        od,
        rv_penetration: demand.rv_penetration,
        seed: demand.seed,
    })
}

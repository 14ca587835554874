//! Fixed-step simulation engine.
//!
//! Each step runs, in order: spawning and backlog release, signal update,
//! zone update with RV decisions and priority arbitration, acceleration,
//! kinematic update, edge transfer and arrival, and metric bookkeeping.
//! A [`World`] is single-writer; run independent episodes on independent
//! worlds to parallelize.

mod events;

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::direction::{ConflictMatrix, Dir, MAX_DIRECTIONS};
use crate::dynamics::{
    idm_accel, rv_longitudinal, step_kinematics, stop_decel_discrete, Gap, IdmParams, RvDecision,
};
use crate::metrics::{MetricsReport, WaitRecord};
use crate::rl::Transition;
use crate::scenario::{
    spawn_vehicles, ControlMode, EdgeId, IntersectionId, Scenario, VehicleKind,
};
use crate::signal::{stop_line_applies, SignalColor};
use crate::zone::{
    arbitrate_priority, build_observation, compute_reward, detect_conflict, hv_head_rule,
    normalize_wait, update_zone, HeadRule, Observation, RvAction, ZoneMember, ZoneState,
};

pub use events::{
    fnv1a, write_decision_trace, write_event_log, DecisionRecord, Event, EventKind, Fnv1a,
};

/// Gaps across a node are floored here before they reach the IDM, m.
const MIN_CROSS_GAP: f64 = 0.01;
/// Clearance kept behind the tail vehicle when entering an edge, m.
const ENTRY_CLEARANCE: f64 = 0.1;

/// What a robot vehicle sees when asked for a decision.
pub struct DecisionContext<'a> {
    pub t: f64,
    pub intersection: IntersectionId,
    pub vehicle: u64,
    pub direction: Dir,
    pub observation: &'a Observation,
    pub zone: &'a ZoneState,
    pub conflicts: &'a ConflictMatrix,
}

/// The decision function shared by every robot vehicle.
pub trait Controller {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> RvAction;

    /// Called once per closed transition, in closing order.
    fn record(&mut self, _transition: &Transition) {}
}

impl<C: Controller + ?Sized> Controller for &mut C {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> RvAction {
        (**self).decide(ctx)
    }

    fn record(&mut self, transition: &Transition) {
        (**self).record(transition)
    }
}

/// Go unless a conflicting approach currently occupies the interior.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompliantController;

impl Controller for CompliantController {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> RvAction {
        let blocked = Dir::ALL
            .iter()
            .any(|&d| ctx.zone.occupied[d.index()] && ctx.conflicts.conflicts(ctx.direction, d));
        if blocked {
            RvAction::Stop
        } else {
            RvAction::Go
        }
    }
}

/// Uniformly random Stop/Go.
#[derive(Debug, Clone)]
pub struct RandomController {
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        RandomController { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Controller for RandomController {
    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> RvAction {
        use rand::Rng;
        if self.rng.random::<bool>() {
            RvAction::Go
        } else {
            RvAction::Stop
        }
    }
}

/// Always the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantController(pub RvAction);

impl Controller for ConstantController {
    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> RvAction {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Backlog,
    Active,
    Arrived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    pub kind: VehicleKind,
    pub od: usize,
    pub status: Status,
    /// Index into the route of the vehicle's OD pair.
    pub cursor: usize,
    pub edge: EdgeId,
    /// Front bumper position along the current edge, m.
    pub pos: f64,
    pub speed: f64,
    pub spawn_time: f64,
    pub arrival_time: Option<f64>,
    /// Motionless time summed over all control zones, s.
    pub total_wait: f64,
    /// Motionless time in the zone the vehicle is currently in, s.
    pub zone_wait: f64,
    zone_wait_window: f64,
    zone: Option<(IntersectionId, Dir)>,
    decision: Option<RvAction>,
    last_query: u64,
    granted_last: bool,
}

/// Longitudinal control state of one vehicle for the current step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Directive {
    /// Plain IDM; a signal may still impose a stop line.
    Free,
    /// Human held at an unsignalized stop line.
    Hold,
    Rv(RvAction),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Occupant {
    vehicle: u64,
    direction: Dir,
    /// Distance still to travel before the rear clears the interior, m.
    remaining: f64,
}

#[derive(Debug, Clone)]
struct OpenTransition {
    t: f64,
    obs: Observation,
    chosen: RvAction,
    executed: RvAction,
    granted: bool,
    tau: f64,
    direction: Dir,
    conflict: bool,
}

/// The nearest obstacle ahead of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leader {
    Vehicle { id: u64, gap: f64, approach_rate: f64 },
    /// Stationary stop line (red signal or a held control line).
    StopLine { gap: f64, approach_rate: f64 },
}

impl Leader {
    pub fn gap(&self) -> Gap<f64> {
        match *self {
            Leader::Vehicle { gap, approach_rate, .. } | Leader::StopLine { gap, approach_rate } => {
                Gap::new(gap.max(MIN_CROSS_GAP), approach_rate)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub metrics: MetricsReport,
    pub events: Vec<Event>,
    pub decisions: Vec<DecisionRecord>,
    /// Sum of the rewards of all closed transitions.
    pub episode_return: f64,
    pub transitions: usize,
    pub snapshot_hash: u64,
    pub spawned: usize,
    pub active: usize,
    pub arrived: usize,
    pub backlog: usize,
    pub conflicts: usize,
    pub overlaps: usize,
    pub steps: u64,
}

impl EpisodeResult {
    pub fn is_conserved(&self) -> bool {
        self.spawned == self.active + self.arrived + self.backlog
    }
}

pub struct World<'a> {
    scenario: &'a Scenario,
    horizon: f64,
    step: u64,
    vehicles: Vec<Vehicle>,
    lanes: Vec<VecDeque<u64>>,
    backlog: Vec<VecDeque<u64>>,
    zones: Vec<ZoneState>,
    interior: Vec<Vec<Occupant>>,
    signals: Vec<[SignalColor; MAX_DIRECTIONS]>,
    directives: BTreeMap<u64, Directive>,
    open: BTreeMap<(u64, IntersectionId), OpenTransition>,
    rng: ChaCha8Rng,
    next_id: u64,
    events: Vec<Event>,
    decisions: Vec<DecisionRecord>,
    wait_records: Vec<WaitRecord>,
    episode_return: f64,
    transitions: usize,
    counts: Counts,
    edge_params: Vec<IdmParams<f64>>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    active: usize,
    arrived: usize,
    backlog: usize,
    conflicts: usize,
    overlaps: usize,
}

impl<'a> World<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64, horizon: Option<f64>) -> Self {
        let n_edges = scenario.network.edges.len();
        let n_ix = scenario.network.intersections.len();
        let sim = scenario.sim();
        let edge_params = scenario
            .network
            .edges
            .iter()
            .map(|e| sim.idm.params(e.speed_limit))
            .collect();
        World {
            scenario,
            horizon: horizon.unwrap_or(sim.horizon),
            step: 0,
            vehicles: Vec::new(),
            lanes: vec![VecDeque::new(); n_edges],
            backlog: vec![VecDeque::new(); n_edges],
            zones: vec![ZoneState::default(); n_ix],
            interior: vec![Vec::new(); n_ix],
            signals: vec![[SignalColor::Red; MAX_DIRECTIONS]; n_ix],
            directives: BTreeMap::new(),
            open: BTreeMap::new(),
            // demand.seed 0 leaves the episode seed unchanged
            rng: ChaCha8Rng::seed_from_u64(seed ^ scenario.demand.seed.rotate_left(32)),
            next_id: 0,
            events: Vec::new(),
            decisions: Vec::new(),
            wait_records: Vec::new(),
            episode_return: 0.0,
            transitions: 0,
            counts: Counts::default(),
            edge_params,
        }
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.scenario.sim().dt
    }

    pub fn total_steps(&self) -> u64 {
        (self.horizon / self.scenario.sim().dt).round() as u64
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: u64) -> &Vehicle {
        &self.vehicles[id as usize]
    }

    /// Vehicle ids on an edge, front first.
    pub fn lane(&self, edge: EdgeId) -> &VecDeque<u64> {
        &self.lanes[edge.index()]
    }

    pub fn zone(&self, ix: IntersectionId) -> &ZoneState {
        &self.zones[ix.index()]
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn spawned(&self) -> usize {
        self.vehicles.len()
    }

    /// `(active, arrived, backlog)`.
    pub fn population(&self) -> (usize, usize, usize) {
        (self.counts.active, self.counts.arrived, self.counts.backlog)
    }

    fn log(&mut self, kind: EventKind, vehicle: Option<u64>, ix: Option<IntersectionId>, detail: String) {
        self.events.push(Event { t: self.time(), kind, vehicle, intersection: ix, detail });
    }

    fn route(&self, v: &Vehicle) -> &[EdgeId] {
        &self.scenario.demand.od[v.od].route.edges
    }

    fn next_edge(&self, v: &Vehicle) -> Option<EdgeId> {
        self.route(v).get(v.cursor + 1).copied()
    }

    fn dist_to_end(&self, v: &Vehicle) -> f64 {
        self.scenario.network.edge(v.edge).length - v.pos
    }

    /// Inserts an already-built vehicle at a position on an edge, keeping
    /// the lane ordered. Intended for fixtures and tests.
    pub fn place_vehicle(&mut self, kind: VehicleKind, od: usize, cursor: usize, pos: f64, speed: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let edge = self.scenario.demand.od[od].route.edges[cursor];
        self.vehicles.push(Vehicle {
            id,
            kind,
            od,
            status: Status::Active,
            cursor,
            edge,
            pos,
            speed,
            spawn_time: self.time(),
            arrival_time: None,
            total_wait: 0.0,
            zone_wait: 0.0,
            zone_wait_window: 0.0,
            zone: None,
            decision: None,
            last_query: 0,
            granted_last: false,
        });
        let lane = &mut self.lanes[edge.index()];
        let at = lane
            .iter()
            .position(|&o| self.vehicles[o as usize].pos < pos)
            .unwrap_or(lane.len());
        lane.insert(at, id);
        self.counts.active += 1;
        id
    }

    /// Nearest obstacle ahead: the vehicle in front on this edge, else a
    /// stop line when one applies, else the tail of the next route edge if
    /// it lies within the lookahead.
    pub fn leader_of(&self, id: u64) -> Option<Leader> {
        self.leader_with(id, self.stop_line_applies(id))
    }

    fn leader_with(&self, id: u64, stop_line: bool) -> Option<Leader> {
        let v = &self.vehicles[id as usize];
        let len = self.scenario.sim().vehicle_length;
        let lane = &self.lanes[v.edge.index()];
        let idx = lane.iter().position(|&o| o == id).expect("vehicle on its lane");
        if idx > 0 {
            let ahead = &self.vehicles[lane[idx - 1] as usize];
            return Some(Leader::Vehicle {
                id: ahead.id,
                gap: ahead.pos - len - v.pos,
                approach_rate: v.speed - ahead.speed,
            });
        }
        let to_end = self.dist_to_end(v);
        if stop_line {
            return Some(Leader::StopLine { gap: to_end, approach_rate: v.speed });
        }
        let next = self.next_edge(v)?;
        let &tail = self.lanes[next.index()].back()?;
        let tail = &self.vehicles[tail as usize];
        let gap = to_end + tail.pos - len;
        (gap <= self.scenario.sim().lookahead).then_some(Leader::Vehicle {
            id: tail.id,
            gap,
            approach_rate: v.speed - tail.speed,
        })
    }

    fn stop_line_applies(&self, id: u64) -> bool {
        let v = &self.vehicles[id as usize];
        let Some((ix, dir)) = self.scenario.network.edge(v.edge).approach else {
            return false;
        };
        match self.scenario.control.modes[ix.index()] {
            ControlMode::Signalized => {
                let color = self.signals[ix.index()][dir.index()];
                let b = self.edge_params[v.edge.index()].comfort_decel;
                stop_line_applies(color, v.speed, self.dist_to_end(v), b)
            }
            ControlMode::Unsignalized => self.directives.get(&id) == Some(&Directive::Hold),
        }
    }

    /// Advances the world by one step.
    pub fn step(&mut self, controller: &mut dyn Controller) {
        self.spawn_and_release();
        self.update_signals();
        self.update_zones_and_decide(controller);
        let accels = self.accelerations();
        self.integrate(&accels);
        self.transfer_and_arrive(controller);
        self.check_no_overlap();
        self.step += 1;
        debug_assert_eq!(
            self.vehicles.len(),
            self.counts.active + self.counts.arrived + self.counts.backlog,
            "vehicle conservation"
        );
    }

    fn spawn_and_release(&mut self) {
        let sim = self.scenario.sim();
        let t = self.time();
        let fresh = spawn_vehicles(&self.scenario.demand, &mut self.rng, t, sim.dt, &mut self.next_id);
        for s in fresh {
            let entry = self.scenario.demand.od[s.od].route.edges[0];
            debug_assert_eq!(s.id as usize, self.vehicles.len());
            self.vehicles.push(Vehicle {
                id: s.id,
                kind: s.kind,
                od: s.od,
                status: Status::Backlog,
                cursor: 0,
                edge: entry,
                pos: 0.0,
                speed: 0.0,
                spawn_time: s.spawn_time,
                arrival_time: None,
                total_wait: 0.0,
                zone_wait: 0.0,
                zone_wait_window: 0.0,
                zone: None,
                decision: None,
                last_query: 0,
                granted_last: false,
            });
            self.backlog[entry.index()].push_back(s.id);
            self.counts.backlog += 1;
            let kind = match s.kind {
                VehicleKind::Human => "hv",
                VehicleKind::Robot => "rv",
            };
            self.log(EventKind::Spawn, Some(s.id), None, kind.to_string());
        }

        let len = sim.vehicle_length;
        for e in 0..self.backlog.len() {
            let Some(&id) = self.backlog[e].front() else { continue };
            // Entry speed is zero, so the safe gap reduces to s0.
            let needed = self.edge_params[e].min_gap;
            let room = match self.lanes[e].back() {
                None => true,
                Some(&tail) => self.vehicles[tail as usize].pos - len >= needed,
            };
            if room {
                self.backlog[e].pop_front();
                self.lanes[e].push_back(id);
                self.vehicles[id as usize].status = Status::Active;
                self.counts.backlog -= 1;
                self.counts.active += 1;
                self.log(EventKind::Enter, Some(id), None, String::new());
            }
        }
    }

    fn update_signals(&mut self) {
        let t = self.time();
        for (i, program) in self.scenario.control.programs.iter().enumerate() {
            if let Some(p) = program {
                self.signals[i] = p.state_at(t);
            }
        }
    }

    fn update_zones_and_decide(&mut self, controller: &mut dyn Controller) {
        let scenario = self.scenario;
        let sim = scenario.sim();
        let t = self.time();
        let second_half = t >= 0.5 * self.horizon;
        self.directives.clear();

        for ix in &scenario.network.intersections {
            let i = ix.id.index();
            // membership and waiting accrual
            let mut ids = Vec::new();
            let mut members = Vec::new();
            for d in Dir::ALL {
                let Some(edge) = ix.approaches[d.index()] else { continue };
                let length = scenario.network.edge(edge).length;
                for &vid in &self.lanes[edge.index()] {
                    let v = &self.vehicles[vid as usize];
                    if length - v.pos <= sim.zone_radius {
                        ids.push(vid);
                        members.push(ZoneMember { direction: d, speed: v.speed, wait: v.zone_wait });
                    }
                }
            }
            let occupants: Vec<Dir> = self.interior[i].iter().map(|o| o.direction).collect();
            update_zone(&mut self.zones[i], &mut members, &occupants, sim.dt, sim.stop_speed);
            for (vid, m) in ids.iter().zip(&members) {
                let v = &mut self.vehicles[*vid as usize];
                let accrued = m.wait - v.zone_wait;
                v.zone_wait = m.wait;
                v.total_wait += accrued;
                if second_half {
                    v.zone_wait_window += accrued;
                }
                v.zone = Some((ix.id, m.direction));
            }

            if scenario.control.modes[i] != ControlMode::Unsignalized {
                continue;
            }

            // robot decisions
            let obs = build_observation(&self.zones[i]);
            let mut fresh = Vec::new();
            for (vid, m) in ids.iter().zip(&members) {
                let v = &self.vehicles[*vid as usize];
                if v.kind != VehicleKind::Robot {
                    continue;
                }
                let due = v.decision.is_none() || self.step - v.last_query >= sim.decision_steps();
                if !due {
                    continue;
                }
                let ctx = DecisionContext {
                    t,
                    intersection: ix.id,
                    vehicle: *vid,
                    direction: m.direction,
                    observation: &obs,
                    zone: &self.zones[i],
                    conflicts: &ix.conflicts,
                };
                let action = controller.decide(&ctx);
                let v = &mut self.vehicles[*vid as usize];
                v.decision = Some(action);
                v.last_query = self.step;
                fresh.push((*vid, m.direction, action));
            }

            // head intents and arbitration
            let mut time_to_line = [None; MAX_DIRECTIONS];
            let mut heads = [None; MAX_DIRECTIONS];
            for d in ix.directions() {
                let edge = ix.approaches[d.index()].unwrap();
                let Some(&front) = self.lanes[edge.index()].front() else { continue };
                let v = &self.vehicles[front as usize];
                let dist = self.dist_to_end(v);
                time_to_line[d.index()] = Some(if v.speed < sim.stop_speed {
                    f64::INFINITY
                } else {
                    dist / v.speed
                });
                if dist <= sim.zone_radius {
                    heads[d.index()] = Some(front);
                }
            }
            let mut demanders = Vec::new();
            let mut committed = Vec::new();
            for d in Dir::ALL {
                let Some(vid) = heads[d.index()] else { continue };
                let v = &self.vehicles[vid as usize];
                let wants = match v.kind {
                    VehicleKind::Robot => v.decision == Some(RvAction::Go),
                    VehicleKind::Human => {
                        hv_head_rule(d, &self.zones[i], &time_to_line, &ix.conflicts, sim.hv_gap)
                            == HeadRule::Proceed
                    }
                };
                // a grant holds until the head enters, unless a robot
                // changes its own mind
                let holds_grant = v.granted_last && (v.kind == VehicleKind::Human || wants);
                if holds_grant {
                    committed.push(d);
                }
                if wants || holds_grant {
                    demanders.push(d);
                }
            }
            let granted = arbitrate_priority(&self.zones[i], &demanders, &committed, &ix.conflicts, sim.lambda);

            let mut denied = Vec::new();
            for (vid, m) in ids.iter().zip(&members) {
                let is_head = heads[m.direction.index()] == Some(*vid);
                let v = &mut self.vehicles[*vid as usize];
                let directive = match v.kind {
                    VehicleKind::Robot => {
                        let chosen = v.decision.unwrap_or(RvAction::Go);
                        if is_head && chosen == RvAction::Go && !granted[m.direction.index()] {
                            // a refused Go stays Stop until the next query
                            v.decision = Some(RvAction::Stop);
                            denied.push(*vid);
                            Directive::Rv(RvAction::Stop)
                        } else {
                            Directive::Rv(chosen)
                        }
                    }
                    VehicleKind::Human => {
                        if is_head && !granted[m.direction.index()] {
                            Directive::Hold
                        } else {
                            Directive::Free
                        }
                    }
                };
                v.granted_last = is_head && granted[m.direction.index()];
                self.directives.insert(*vid, directive);
            }
            for vid in denied {
                if fresh.iter().any(|f| f.0 == vid) {
                    continue;
                }
                if let Some(open) = self.open.get_mut(&(vid, ix.id)) {
                    open.executed = RvAction::Stop;
                    open.granted = false;
                }
            }

            // open transitions for this step's decisions
            for (vid, dir, chosen) in fresh {
                let executed = match self.directives[&vid] {
                    Directive::Rv(a) => a,
                    _ => chosen,
                };
                let tau = if sim.raw_wait_reward {
                    self.zones[i].avg_wait[dir.index()]
                } else {
                    normalize_wait(self.zones[i].avg_wait[dir.index()])
                };
                self.close_transition(vid, ix.id, Some(obs), false, controller);
                self.open.insert(
                    (vid, ix.id),
                    OpenTransition {
                        t,
                        obs,
                        chosen,
                        executed,
                        granted: chosen == executed,
                        tau,
                        direction: dir,
                        conflict: false,
                    },
                );
                let detail = match executed {
                    RvAction::Go => "go",
                    RvAction::Stop if chosen == RvAction::Go => "stop(denied)",
                    RvAction::Stop => "stop",
                };
                self.log(EventKind::Decision, Some(vid), Some(ix.id), detail.to_string());
            }
        }
    }

    fn close_transition(
        &mut self,
        vehicle: u64,
        ix: IntersectionId,
        next_obs: Option<Observation>,
        terminal: bool,
        controller: &mut dyn Controller,
    ) {
        let Some(open) = self.open.remove(&(vehicle, ix)) else { return };
        let beta = self.scenario.sim().beta;
        let reward = compute_reward(open.executed, open.tau, open.conflict, beta);
        let transition = Transition {
            obs: open.obs,
            action: open.executed,
            reward,
            next_obs: next_obs.unwrap_or_else(Observation::zeros),
            terminal,
        };
        controller.record(&transition);
        self.episode_return += reward;
        self.transitions += 1;
        self.decisions.push(DecisionRecord {
            t: open.t,
            intersection: ix,
            vehicle,
            direction: open.direction,
            action: open.chosen,
            granted: open.granted,
            reward,
        });
    }

    fn accelerations(&self) -> Vec<(u64, f64)> {
        let dt = self.scenario.sim().dt;
        let mut out = Vec::with_capacity(self.counts.active);
        for lane in &self.lanes {
            for &id in lane {
                let v = &self.vehicles[id as usize];
                let params = &self.edge_params[v.edge.index()];
                let directive = self.directives.get(&id).copied().unwrap_or(Directive::Free);
                let accel = match directive {
                    Directive::Free | Directive::Hold => {
                        let leader = self.leader_of(id).map(|l| l.gap());
                        idm_accel(v.speed, leader, params)
                    }
                    Directive::Rv(action) => {
                        let leader = self.leader_with(id, false).map(|l| l.gap());
                        let d_int = self.dist_to_end(v);
                        match action {
                            RvAction::Go => rv_longitudinal(RvDecision::Go, v.speed, d_int, leader, params),
                            RvAction::Stop => {
                                let stop = stop_decel_discrete(v.speed, d_int, dt);
                                match leader {
                                    Some(_) => stop.min(idm_accel(v.speed, leader, params)),
                                    None => stop,
                                }
                            }
                        }
                    }
                };
                out.push((id, accel));
            }
        }
        out
    }

    fn integrate(&mut self, accels: &[(u64, f64)]) {
        let dt = self.scenario.sim().dt;
        for &(id, a) in accels {
            let v = &mut self.vehicles[id as usize];
            let (speed, pos) = step_kinematics(v.speed, v.pos, a, dt);
            v.speed = speed;
            v.pos = pos;
        }
        // interior progress
        for occupants in &mut self.interior {
            for o in occupants.iter_mut() {
                o.remaining -= self.vehicles[o.vehicle as usize].speed * dt;
            }
        }
    }

    fn transfer_and_arrive(&mut self, controller: &mut dyn Controller) {
        let scenario = self.scenario;
        let sim = scenario.sim();
        let len = sim.vehicle_length;

        // interior exits from progress made this step
        let mut exits = Vec::new();
        for (i, occupants) in self.interior.iter_mut().enumerate() {
            occupants.retain(|o| {
                if o.remaining <= 0.0 {
                    exits.push((o.vehicle, IntersectionId(i as u32)));
                    false
                } else {
                    true
                }
            });
        }
        self.finish_exits(exits, controller);

        for e in 0..self.lanes.len() {
            let edge = scenario.network.edge(EdgeId(e as u32));
            while let Some(&id) = self.lanes[e].front() {
                if self.vehicles[id as usize].pos < edge.length {
                    break;
                }
                let v = &self.vehicles[id as usize];
                let overshoot = v.pos - edge.length;
                let Some(next) = self.next_edge(v) else {
                    // route complete
                    self.lanes[e].pop_front();
                    self.leave_zone(id);
                    let exits = self.clear_interior_of(id);
                    self.finish_exits(exits, controller);
                    let t = self.time();
                    let v = &mut self.vehicles[id as usize];
                    v.status = Status::Arrived;
                    v.arrival_time = Some(t);
                    v.pos = edge.length;
                    self.counts.active -= 1;
                    self.counts.arrived += 1;
                    self.log(EventKind::Arrive, Some(id), None, String::new());
                    continue;
                };
                let tail_room = self.lanes[next.index()]
                    .back()
                    .map(|&t| self.vehicles[t as usize].pos - len - ENTRY_CLEARANCE);
                let new_pos = match tail_room {
                    Some(room) => overshoot.min(room),
                    None => overshoot,
                };
                if new_pos < 0.0 {
                    let v = &mut self.vehicles[id as usize];
                    v.pos = edge.length;
                    v.speed = 0.0;
                    let ix = edge.approach.map(|(ix, _)| ix);
                    self.log(EventKind::Blocked, Some(id), ix, String::new());
                    break;
                }
                self.lanes[e].pop_front();
                self.lanes[next.index()].push_back(id);
                let left_zone = self.leave_zone(id);
                let exits = self.clear_interior_of(id);
                self.finish_exits(exits, controller);
                {
                    let v = &mut self.vehicles[id as usize];
                    v.edge = next;
                    v.cursor += 1;
                    v.pos = new_pos;
                    v.decision = None;
                    v.granted_last = false;
                }
                if let Some((ix, dir)) = edge.approach {
                    debug_assert!(left_zone.is_none_or(|(z, _)| z == ix));
                    self.interior[ix.index()].push(Occupant {
                        vehicle: id,
                        direction: dir,
                        remaining: sim.interior_length + len - new_pos,
                    });
                    self.log(EventKind::InteriorEnter, Some(id), Some(ix), dir.to_string());
                }
            }
        }

        // conflicts among current occupants
        for ix in &scenario.network.intersections {
            let i = ix.id.index();
            if scenario.control.modes[i] != ControlMode::Unsignalized {
                continue;
            }
            let dirs: Vec<Dir> = self.interior[i].iter().map(|o| o.direction).collect();
            let conflict = detect_conflict(&dirs, &ix.conflicts);
            self.zones[i].conflict = conflict;
            if conflict {
                self.counts.conflicts += 1;
                let mut detail: Vec<String> = dirs.iter().map(|d| d.to_string()).collect();
                detail.dedup();
                self.log(EventKind::Conflict, None, Some(ix.id), detail.join("+"));
                let robots: Vec<u64> = self.interior[i].iter().map(|o| o.vehicle).collect();
                for vid in robots {
                    if let Some(open) = self.open.get_mut(&(vid, ix.id)) {
                        let involved = self.interior[i].iter().any(|o| {
                            o.vehicle != vid && ix.conflicts.conflicts(o.direction, open.direction)
                        });
                        if involved && open.executed == RvAction::Go {
                            open.conflict = true;
                        }
                    }
                }
            }
        }
    }

    fn finish_exits(&mut self, exits: Vec<(u64, IntersectionId)>, controller: &mut dyn Controller) {
        for (vid, ix) in exits {
            self.log(EventKind::InteriorExit, Some(vid), Some(ix), String::new());
            self.close_transition(vid, ix, None, true, controller);
        }
    }

    fn clear_interior_of(&mut self, vehicle: u64) -> Vec<(u64, IntersectionId)> {
        let mut exits = Vec::new();
        for (i, occupants) in self.interior.iter_mut().enumerate() {
            let before = occupants.len();
            occupants.retain(|o| o.vehicle != vehicle);
            if occupants.len() != before {
                exits.push((vehicle, IntersectionId(i as u32)));
            }
        }
        exits
    }

    /// Finalizes the vehicle's waiting record for the zone it is leaving.
    fn leave_zone(&mut self, vehicle: u64) -> Option<(IntersectionId, Dir)> {
        let v = &mut self.vehicles[vehicle as usize];
        let zone = v.zone.take()?;
        self.wait_records.push(WaitRecord {
            vehicle,
            intersection: zone.0,
            direction: zone.1,
            wait: v.zone_wait,
            window_wait: v.zone_wait_window,
        });
        v.zone_wait = 0.0;
        v.zone_wait_window = 0.0;
        Some(zone)
    }

    fn check_no_overlap(&mut self) {
        let len = self.scenario.sim().vehicle_length;
        let mut bad = Vec::new();
        for lane in &self.lanes {
            for pair in lane.iter().collect::<Vec<_>>().windows(2) {
                let (front, back) = (&self.vehicles[*pair[0] as usize], &self.vehicles[*pair[1] as usize]);
                if front.pos - len - back.pos < 0.0 {
                    bad.push((back.id, format!("gap={}", front.pos - len - back.pos)));
                }
            }
        }
        for (id, detail) in bad {
            self.counts.overlaps += 1;
            self.log(EventKind::Overlap, Some(id), None, detail);
        }
    }

    /// Runs the remaining steps of the episode.
    pub fn run(&mut self, controller: &mut dyn Controller) {
        let total = self.total_steps();
        while self.step < total {
            self.step(controller);
        }
    }

    /// Closes open zone records and transitions and assembles the result.
    pub fn finish(mut self, controller: &mut dyn Controller) -> EpisodeResult {
        let scenario = self.scenario;
        let zone_ids: Vec<u64> = self
            .vehicles
            .iter()
            .filter(|v| v.zone.is_some())
            .map(|v| v.id)
            .collect();
        for id in zone_ids {
            self.leave_zone(id);
        }
        let pending: Vec<(u64, IntersectionId)> = self.open.keys().copied().collect();
        for (vid, ix) in pending {
            let obs = build_observation(&self.zones[ix.index()]);
            self.close_transition(vid, ix, Some(obs), false, controller);
        }

        let metrics = MetricsReport::from_episode(
            &scenario.network,
            &self.wait_records,
            &self.events,
            self.horizon,
            scenario.sim().windowed_wait,
        );
        EpisodeResult {
            metrics,
            snapshot_hash: self.snapshot_hash(),
            events: self.events,
            decisions: self.decisions,
            episode_return: self.episode_return,
            transitions: self.transitions,
            spawned: self.vehicles.len(),
            active: self.counts.active,
            arrived: self.counts.arrived,
            backlog: self.counts.backlog,
            conflicts: self.counts.conflicts,
            overlaps: self.counts.overlaps,
            steps: self.step,
        }
    }

    /// FNV-1a over every vehicle in id order: id (u64), kind (u8, 0 human,
    /// 1 robot), status (u8, 0 backlog, 1 active, 2 arrived), edge (u32),
    /// position and speed (f64 bits), route cursor (u32), total wait (f64
    /// bits) and arrival time (f64 bits, -1 when absent). All little-endian.
    pub fn snapshot_hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        for v in &self.vehicles {
            h.write(&v.id.to_le_bytes());
            h.write(&[match v.kind {
                VehicleKind::Human => 0,
                VehicleKind::Robot => 1,
            }]);
            h.write(&[match v.status {
                Status::Backlog => 0,
                Status::Active => 1,
                Status::Arrived => 2,
            }]);
            h.write(&v.edge.0.to_le_bytes());
            h.write(&v.pos.to_bits().to_le_bytes());
            h.write(&v.speed.to_bits().to_le_bytes());
            h.write(&(v.cursor as u32).to_le_bytes());
            h.write(&v.total_wait.to_bits().to_le_bytes());
            h.write(&v.arrival_time.unwrap_or(-1.0).to_bits().to_le_bytes());
        }
        h.finish()
    }
}

/// Runs one full episode of `scenario` under `controller`.
pub fn simulate_episode(scenario: &Scenario, controller: &mut dyn Controller, seed: u64) -> EpisodeResult {
    simulate_episode_for(scenario, controller, seed, None)
}

/// As [`simulate_episode`] with the horizon optionally overridden.
pub fn simulate_episode_for(
    scenario: &Scenario,
    controller: &mut dyn Controller,
    seed: u64,
    horizon: Option<f64>,
) -> EpisodeResult {
    let mut world = World::new(scenario, seed, horizon);
    world.run(controller);
    world.finish(controller)
}

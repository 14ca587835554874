use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::NetworkDoc;
use crate::direction::{ConflictMatrix, Dir, MAX_DIRECTIONS};
use crate::error::{Error, Result};

/// Node id as written in the scenario document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

/// Dense edge index; edges are ordered by their document id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

/// Dense intersection index; intersections are ordered by node id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntersectionId(pub u32);

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl IntersectionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Boundary,
    Intersection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
    pub incoming: Vec<EdgeId>,
    pub outgoing: Vec<EdgeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub doc_id: u32,
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
    pub speed_limit: f64,
    /// Set when the edge ends at an intersection: which one and from where.
    pub approach: Option<(IntersectionId, Dir)>,
}

impl Edge {
    pub fn travel_time(&self) -> f64 {
        self.length / self.speed_limit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: IntersectionId,
    pub node: NodeId,
    /// Incoming edge per approach direction.
    pub approaches: [Option<EdgeId>; MAX_DIRECTIONS],
    pub conflicts: ConflictMatrix,
}

impl Intersection {
    pub fn directions(&self) -> Vec<Dir> {
        Dir::ALL
            .into_iter()
            .filter(|d| self.approaches[d.index()].is_some())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub edges: Vec<EdgeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    nodes: BTreeMap<NodeId, Node>,
    pub edges: Vec<Edge>,
    pub intersections: Vec<Intersection>,
    node_to_intersection: BTreeMap<NodeId, IntersectionId>,
}

impl RoadNetwork {
    pub(crate) fn build(doc: &NetworkDoc) -> Result<Self> {
        let mut nodes = BTreeMap::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(Error::validation(
                    format!("network.nodes[{i}]"),
                    "coordinates must be finite",
                ));
            }
            let node = Node {
                id: NodeId(n.id),
                x: n.x,
                y: n.y,
                kind: n.kind,
                incoming: Vec::new(),
                outgoing: Vec::new(),
            };
            if nodes.insert(node.id, node).is_some() {
                return Err(Error::validation(
                    format!("network.nodes[{i}]"),
                    format!("duplicate node id {}", n.id),
                ));
            }
        }

        let mut order: Vec<usize> = (0..doc.edges.len()).collect();
        order.sort_by_key(|&i| doc.edges[i].id);
        let mut edges: Vec<Edge> = Vec::with_capacity(order.len());
        for (dense, &i) in order.iter().enumerate() {
            let e = &doc.edges[i];
            let field = format!("network.edges[{i}]");
            if let Some(prev) = edges.last() {
                if prev.doc_id == e.id {
                    return Err(Error::validation(field, format!("duplicate edge id {}", e.id)));
                }
            }
            let (Some(a), Some(b)) = (nodes.get(&NodeId(e.from)), nodes.get(&NodeId(e.to))) else {
                return Err(Error::validation(
                    field,
                    format!("edge {} references a missing node ({} -> {})", e.id, e.from, e.to),
                ));
            };
            if e.from == e.to {
                return Err(Error::validation(field, format!("edge {} is a self loop", e.id)));
            }
            let length = e.length.unwrap_or_else(|| (b.x - a.x).hypot(b.y - a.y));
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::validation(field, format!("edge {} has non-positive length", e.id)));
            }
            if !(e.speed_limit > 0.0 && e.speed_limit.is_finite()) {
                return Err(Error::validation(field, format!("edge {} has non-positive speed limit", e.id)));
            }
            if edges.iter().any(|x| x.from.0 == e.from && x.to.0 == e.to) {
                return Err(Error::validation(
                    field,
                    format!("parallel edges {} -> {} are not supported", e.from, e.to),
                ));
            }
            edges.push(Edge {
                id: EdgeId(dense as u32),
                doc_id: e.id,
                from: NodeId(e.from),
                to: NodeId(e.to),
                length,
                speed_limit: e.speed_limit,
                approach: None,
            });
        }
        for e in &edges {
            nodes.get_mut(&e.from).unwrap().outgoing.push(e.id);
            nodes.get_mut(&e.to).unwrap().incoming.push(e.id);
        }

        let mut intersections = Vec::new();
        let mut node_to_intersection = BTreeMap::new();
        for node in nodes.values() {
            match node.kind {
                NodeKind::Boundary => {
                    if node.incoming.len() != 1 || node.outgoing.len() != 1 {
                        return Err(Error::validation(
                            "network.nodes",
                            format!(
                                "boundary node {} needs exactly one incoming and one outgoing edge",
                                node.id.0
                            ),
                        ));
                    }
                }
                NodeKind::Intersection => {
                    let n_in = node.incoming.len();
                    if !(2..=MAX_DIRECTIONS).contains(&n_in) {
                        return Err(Error::validation(
                            "network.nodes",
                            format!("intersection {} has {n_in} incoming edges (need 2-4)", node.id.0),
                        ));
                    }
                    let id = IntersectionId(intersections.len() as u32);
                    let mut approaches = [None; MAX_DIRECTIONS];
                    for &eid in &node.incoming {
                        let up = &nodes[&edges[eid.index()].from];
                        let dir = Dir::from_offset(up.x - node.x, up.y - node.y);
                        if approaches[dir.index()].replace(eid).is_some() {
                            return Err(Error::validation(
                                "network.nodes",
                                format!("intersection {} has two approaches from {dir}", node.id.0),
                            ));
                        }
                    }
                    intersections.push(Intersection {
                        id,
                        node: node.id,
                        approaches,
                        conflicts: ConflictMatrix::crossing(),
                    });
                    node_to_intersection.insert(node.id, id);
                }
            }
        }
        for ix in &intersections {
            for d in Dir::ALL {
                if let Some(e) = ix.approaches[d.index()] {
                    edges[e.index()].approach = Some((ix.id, d));
                }
            }
        }
        Ok(RoadNetwork {
            nodes,
            edges,
            intersections,
            node_to_intersection,
        })
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Boundary)
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.index()]
    }

    pub fn edge_by_doc_id(&self, doc_id: u32) -> Option<EdgeId> {
        self.edges
            .binary_search_by_key(&doc_id, |e| e.doc_id)
            .ok()
            .map(|i| EdgeId(i as u32))
    }

    pub fn intersection_at(&self, node: NodeId) -> Option<IntersectionId> {
        self.node_to_intersection.get(&node).copied()
    }

    pub(crate) fn set_conflicts(&mut self, id: IntersectionId, m: ConflictMatrix) {
        self.intersections[id.index()].conflicts = m;
    }

    /// Fastest path by free-flow travel time. Equal-time paths are broken by
    /// the lexicographically smallest edge id sequence. Boundary nodes are
    /// only used as the two endpoints.
    pub fn route_for(&self, from: NodeId, to: NodeId) -> Result<Route> {
        let no_path = || Error::NoPath { from: from.0, to: to.0 };
        if from == to || self.node(from).is_none() || self.node(to).is_none() {
            return Err(no_path());
        }

        struct Label {
            cost: f64,
            path: Vec<EdgeId>,
        }
        #[derive(PartialEq)]
        struct Item {
            cost: f64,
            path: Vec<EdgeId>,
            node: NodeId,
        }
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                // min-heap on (cost, path)
                other
                    .cost
                    .total_cmp(&self.cost)
                    .then_with(|| other.path.cmp(&self.path))
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        let better = |cost: f64, path: &[EdgeId], best: &Label| {
            let tol = 1e-9 * best.cost.abs().max(1.0);
            if cost < best.cost - tol {
                true
            } else if cost <= best.cost + tol {
                path < best.path.as_slice()
            } else {
                false
            }
        };

        let mut best: BTreeMap<NodeId, Label> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(from, Label { cost: 0.0, path: Vec::new() });
        heap.push(Item { cost: 0.0, path: Vec::new(), node: from });
        while let Some(Item { cost, path, node }) = heap.pop() {
            let current = &best[&node];
            if current.path != path {
                continue;
            }
            if node == to {
                return Ok(Route { edges: path });
            }
            if node != from && self.nodes[&node].kind == NodeKind::Boundary {
                continue;
            }
            for &eid in &self.nodes[&node].outgoing {
                let e = &self.edges[eid.index()];
                let next_cost = cost + e.travel_time();
                let mut next_path = path.clone();
                next_path.push(eid);
                let improve = match best.get(&e.to) {
                    None => true,
                    Some(label) => better(next_cost, &next_path, label),
                };
                if improve {
                    best.insert(e.to, Label { cost: next_cost, path: next_path.clone() });
                    heap.push(Item { cost: next_cost, path: next_path, node: e.to });
                }
            }
        }
        Err(no_path())
    }
}

//! Network data model: nodes, pipes and pumps of a tree-structured water
//! distribution system, plus validation and derived pipe quantities.
//!
//! Sign convention: an edge's declared `from -> to` direction is its
//! positive-flow direction. Row `e` of the incidence matrix carries `+1` at
//! `from(e)` and `-1` at `to(e)`, so `(Aᵀf)_n` is outflow minus inflow at
//! node `n`.
//!
//! Units: lengths and heads in metres. Flow-like quantities (demands,
//! injections, flow bounds) are held in L/s, the unit of the network files;
//! hydraulic evaluation converts to m³/s with [`LPS_PER_CMS`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard gravity used when a network does not override it.
pub const DEFAULT_GRAVITY: f64 = 9.81;
/// Friction factor applied to pipes that do not carry their own.
pub const DEFAULT_FRICTION_FACTOR: f64 = 0.02;
/// Litres per second in one cubic metre per second.
pub const LPS_PER_CMS: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("duplicate {kind} id '{id}'")]
    DuplicateId { kind: &'static str, id: String },
    #[error("edge '{edge}' references unknown node '{node}'")]
    UnknownNode { edge: String, node: String },
    #[error("network failed validation: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Junction,
    /// Reservoir or tank with a bounded head range.
    Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub elevation_m: f64,
    pub head_min_m: f64,
    pub head_max_m: f64,
    pub demand_min_lps: f64,
    pub demand_max_lps: f64,
    /// Demand for nodes that are not varied by the region computation.
    /// `None` marks a candidate variable node (nominal demand 0).
    pub fixed_demand_lps: Option<f64>,
    pub inject_min_lps: Option<f64>,
    pub inject_max_lps: Option<f64>,
}

impl Node {
    pub fn is_source(&self) -> bool {
        self.kind == NodeKind::Source
    }

    /// Nominal demand: the fixed value, or 0 for candidate variable nodes.
    pub fn nominal_demand_lps(&self) -> f64 {
        self.fixed_demand_lps.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Pipe,
    Pump,
}

/// Reduced pump curve `gain = a1 * flow + a0`, flow in L/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpCurve {
    pub a1_m_per_lps: f64,
    pub a0_m: f64,
}

impl PumpCurve {
    pub fn gain(&self, flow_lps: f64) -> f64 {
        self.a1_m_per_lps * flow_lps + self.a0_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PumpParams {
    /// When absent, the gain is a free operating variable within the bounds.
    pub curve: Option<PumpCurve>,
    pub gain_min_m: f64,
    pub gain_max_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
    /// Pipe geometry. Required for pipes; a pump without geometry has no
    /// friction loss of its own.
    pub length_m: Option<f64>,
    pub diameter_m: Option<f64>,
    pub friction_factor: Option<f64>,
    pub flow_min_lps: f64,
    pub flow_max_lps: f64,
    pub pump: Option<PumpParams>,
}

impl Edge {
    pub fn is_pump(&self) -> bool {
        self.kind == EdgeKind::Pump
    }
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `node <id>`, `edge <id>` or `network`.
    pub element: String,
    pub rule: String,
}

impl Violation {
    fn node(id: &str, rule: impl Into<String>) -> Self {
        Self { element: format!("node {id}"), rule: rule.into() }
    }

    fn edge(id: &str, rule: impl Into<String>) -> Self {
        Self { element: format!("edge {id}"), rule: rule.into() }
    }

    fn network(rule: impl Into<String>) -> Self {
        Self { element: "network".into(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.rule)
    }
}

/// Dense signed edge-node incidence matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incidence {
    pub rows: usize,
    pub cols: usize,
    data: Vec<i8>,
}

impl Incidence {
    pub fn get(&self, edge: usize, node: usize) -> i8 {
        self.data[edge * self.cols + node]
    }

    pub fn row(&self, edge: usize) -> &[i8] {
        &self.data[edge * self.cols..(edge + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<i8>> {
        (0..self.rows).map(|e| self.row(e).to_vec()).collect()
    }

    /// Rank by Gaussian elimination with partial pivoting.
    pub fn rank(&self) -> usize {
        let mut m: Vec<Vec<f64>> =
            (0..self.rows).map(|r| self.row(r).iter().map(|&v| f64::from(v)).collect()).collect();
        let mut rank = 0;
        for col in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let pivot = (rank..self.rows).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            if m[pivot][col].abs() < 1e-12 {
                continue;
            }
            m.swap(rank, pivot);
            let pivot_row = m[rank].clone();
            for (r, row) in m.iter_mut().enumerate() {
                if r != rank {
                    let factor = row[col] / pivot_row[col];
                    if factor != 0.0 {
                        for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                            *x -= factor * p;
                        }
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}

/// Darcy–Weisbach head-loss coefficient `8 f L / (π² g D⁵)` in s²/m⁵.
///
/// The coefficient multiplies `f·|f|` with `f` in m³/s; callers holding
/// flows in L/s divide by [`LPS_PER_CMS`] before squaring.
pub fn headloss_coefficient(
    length_m: f64,
    diameter_m: f64,
    friction_factor: f64,
    gravity: f64,
) -> Result<f64, NetworkError> {
    for (name, v) in
        [("length", length_m), ("diameter", diameter_m), ("friction factor", friction_factor), ("gravity", gravity)]
    {
        if !(v.is_finite() && v > 0.0) {
            return Err(NetworkError::Parameter(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(8.0 * friction_factor * length_m / (PI * PI * gravity * diameter_m.powi(5)))
}

/// An immutable network with resolved node references.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    gravity: f64,
    default_friction_factor: f64,
    node_index: HashMap<String, usize>,
    endpoints: Vec<(usize, usize)>,
    resistance: Vec<f64>,
}

impl Network {
    /// Build a network and reject it unless [`validate`] finds nothing.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, NetworkError> {
        Self::with_constants(nodes, edges, DEFAULT_GRAVITY, DEFAULT_FRICTION_FACTOR)
    }

    pub fn with_constants(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        gravity: f64,
        default_friction_factor: f64,
    ) -> Result<Self, NetworkError> {
        let net = Self::from_parts(nodes, edges, gravity, default_friction_factor)?;
        let violations = validate(&net);
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(NetworkError::Invalid(violations))
        }
    }

    /// Resolve references without checking the numeric and topological
    /// invariants; see [`validate`].
    pub fn from_parts(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        gravity: f64,
        default_friction_factor: f64,
    ) -> Result<Self, NetworkError> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateId { kind: "node", id: n.id.clone() });
            }
        }
        let mut seen = HashMap::new();
        let mut endpoints = Vec::with_capacity(edges.len());
        for e in &edges {
            if seen.insert(e.id.clone(), ()).is_some() {
                return Err(NetworkError::DuplicateId { kind: "edge", id: e.id.clone() });
            }
            let lookup = |id: &str| {
                node_index
                    .get(id)
                    .copied()
                    .ok_or_else(|| NetworkError::UnknownNode { edge: e.id.clone(), node: id.to_string() })
            };
            endpoints.push((lookup(&e.from)?, lookup(&e.to)?));
        }
        let resistance = edges
            .iter()
            .map(|e| match (e.length_m, e.diameter_m) {
                (Some(l), Some(d)) => {
                    let fs = e.friction_factor.unwrap_or(default_friction_factor);
                    headloss_coefficient(l, d, fs, gravity).unwrap_or(f64::NAN)
                }
                _ => 0.0,
            })
            .collect();
        Ok(Self { nodes, edges, gravity, default_friction_factor, node_index, endpoints, resistance })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn default_friction_factor(&self) -> f64 {
        self.default_friction_factor
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    /// `(from, to)` node indices of edge `e`.
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        self.endpoints[e]
    }

    /// Head-loss coefficient of edge `e` in s²/m⁵ (0 for pumps without geometry).
    pub fn resistance(&self, e: usize) -> f64 {
        self.resistance[e]
    }

    pub fn pump_edges(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].is_pump()).collect()
    }

    pub fn source_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_source()).collect()
    }

    /// Nominal demand vector in L/s (0 at sources and candidate variable nodes).
    pub fn nominal_demands_lps(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| if n.is_source() { 0.0 } else { n.nominal_demand_lps() }).collect()
    }

    pub fn incidence(&self) -> Incidence {
        incidence_matrix(self)
    }
}

pub fn incidence_matrix(net: &Network) -> Incidence {
    let (rows, cols) = (net.edge_count(), net.node_count());
    let mut data = vec![0i8; rows * cols];
    for e in 0..rows {
        let (from, to) = net.endpoints(e);
        data[e * cols + from] = 1;
        data[e * cols + to] = -1;
    }
    Incidence { rows, cols, data }
}

fn finite_positive(v: Option<f64>) -> bool {
    matches!(v, Some(x) if x.is_finite() && x > 0.0)
}

/// Check every node, edge and topology invariant. An empty list means valid.
pub fn validate(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();

    for n in net.nodes() {
        if !n.elevation_m.is_finite() {
            out.push(Violation::node(&n.id, "elevation must be finite"));
        }
        if !(n.head_min_m.is_finite() && n.head_max_m.is_finite()) {
            out.push(Violation::node(&n.id, "head bounds must be finite"));
        } else if n.head_min_m > n.head_max_m {
            out.push(Violation::node(&n.id, "head_min_m exceeds head_max_m"));
        }
        if !(n.demand_min_lps.is_finite() && n.demand_max_lps.is_finite()) {
            out.push(Violation::node(&n.id, "demand bounds must be finite"));
        } else {
            if n.demand_min_lps < 0.0 {
                out.push(Violation::node(&n.id, "demand bounds must be nonnegative"));
            }
            if n.demand_min_lps > n.demand_max_lps {
                out.push(Violation::node(&n.id, "demand_min exceeds demand_max"));
            }
        }
        if let Some(d) = n.fixed_demand_lps {
            if !d.is_finite() || d < 0.0 {
                out.push(Violation::node(&n.id, "fixed demand must be finite and nonnegative"));
            }
        }
        match n.kind {
            NodeKind::Junction => {
                if n.inject_min_lps.is_some() || n.inject_max_lps.is_some() {
                    out.push(Violation::node(&n.id, "junction must not carry injection bounds"));
                }
            }
            NodeKind::Source => match (n.inject_min_lps, n.inject_max_lps) {
                (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() => {
                    if lo > hi {
                        out.push(Violation::node(&n.id, "inject_min exceeds inject_max"));
                    }
                }
                _ => out.push(Violation::node(&n.id, "source requires finite injection bounds")),
            },
        }
    }

    for (e, edge) in net.edges().iter().enumerate() {
        let geometry = [edge.length_m, edge.diameter_m];
        match edge.kind {
            EdgeKind::Pipe => {
                if !finite_positive(edge.length_m) {
                    out.push(Violation::edge(&edge.id, "pipe length must be positive"));
                }
                if !finite_positive(edge.diameter_m) {
                    out.push(Violation::edge(&edge.id, "pipe diameter must be positive"));
                }
                if edge.pump.is_some() {
                    out.push(Violation::edge(&edge.id, "pipe must not carry pump parameters"));
                }
            }
            EdgeKind::Pump => {
                match geometry {
                    [None, None] => {}
                    [Some(_), Some(_)] => {
                        if !finite_positive(edge.length_m) || !finite_positive(edge.diameter_m) {
                            out.push(Violation::edge(&edge.id, "pump pipe geometry must be positive"));
                        }
                    }
                    _ => out.push(Violation::edge(&edge.id, "pump geometry needs both length and diameter or neither")),
                }
                match &edge.pump {
                    None => out.push(Violation::edge(&edge.id, "pump requires pump parameters")),
                    Some(p) => {
                        if !(p.gain_min_m.is_finite() && p.gain_max_m.is_finite()) {
                            out.push(Violation::edge(&edge.id, "pump gain bounds must be finite"));
                        } else if p.gain_min_m > p.gain_max_m {
                            out.push(Violation::edge(&edge.id, "pump_gain_min exceeds pump_gain_max"));
                        }
                        if let Some(c) = p.curve {
                            if !(c.a0_m.is_finite() && c.a1_m_per_lps.is_finite()) {
                                out.push(Violation::edge(&edge.id, "pump curve must be finite"));
                            }
                        }
                    }
                }
            }
        }
        if let Some(fs) = edge.friction_factor {
            if !(fs.is_finite() && fs > 0.0) {
                out.push(Violation::edge(&edge.id, "friction factor must be positive"));
            }
        }
        if !(edge.flow_min_lps.is_finite() && edge.flow_max_lps.is_finite()) {
            out.push(Violation::edge(&edge.id, "flow bounds must be finite"));
        } else if edge.flow_min_lps > edge.flow_max_lps {
            out.push(Violation::edge(&edge.id, "flow_min exceeds flow_max"));
        }
        let r = net.resistance(e);
        let geometry_ok = finite_positive(edge.length_m) && finite_positive(edge.diameter_m);
        let fs_ok = edge.friction_factor.is_none_or(|fs| fs.is_finite() && fs > 0.0);
        if edge.kind == EdgeKind::Pipe && geometry_ok && fs_ok && !(r.is_finite() && r > 0.0) {
            out.push(Violation::edge(&edge.id, "head-loss coefficient must be positive"));
        }
        let (a, b) = net.endpoints(e);
        if a == b {
            out.push(Violation::edge(&edge.id, "edge must connect two distinct nodes"));
        }
    }

    if !(net.gravity().is_finite() && net.gravity() > 0.0) {
        out.push(Violation::network("gravity must be positive"));
    }
    if net.node_count() == 0 {
        out.push(Violation::network("network has no nodes"));
        return out;
    }
    if net.source_nodes().is_empty() {
        out.push(Violation::network("at least one source node is required"));
    }
    if !is_tree(net) {
        out.push(Violation::network(format!(
            "not a tree: {} edges on {} nodes must be connected and acyclic",
            net.edge_count(),
            net.node_count()
        )));
    }
    out
}

/// Union-find tree check: `|E| = |N| - 1` and no edge closes a cycle.
fn is_tree(net: &Network) -> bool {
    if net.edge_count() + 1 != net.node_count() {
        return false;
    }
    let mut parent: Vec<usize> = (0..net.node_count()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for e in 0..net.edge_count() {
        let (a, b) = net.endpoints(e);
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn junction(id: &str, elevation: f64, demand: Option<f64>) -> Node {
        Node {
            id: id.into(),
            kind: NodeKind::Junction,
            elevation_m: elevation,
            head_min_m: 0.0,
            head_max_m: 1000.0,
            demand_min_lps: 0.0,
            demand_max_lps: 1000.0,
            fixed_demand_lps: demand,
            inject_min_lps: None,
            inject_max_lps: None,
        }
    }

    pub fn source(id: &str, elevation: f64, head: (f64, f64)) -> Node {
        Node {
            id: id.into(),
            kind: NodeKind::Source,
            elevation_m: elevation,
            head_min_m: head.0,
            head_max_m: head.1,
            demand_min_lps: 0.0,
            demand_max_lps: 0.0,
            fixed_demand_lps: Some(0.0),
            inject_min_lps: Some(0.0),
            inject_max_lps: Some(1.0e6),
        }
    }

    pub fn pipe(id: &str, from: &str, to: &str, length: f64, diameter: f64) -> Edge {
        Edge {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            kind: EdgeKind::Pipe,
            length_m: Some(length),
            diameter_m: Some(diameter),
            friction_factor: None,
            flow_min_lps: -1.0e6,
            flow_max_lps: 1.0e6,
            pump: None,
        }
    }

    pub fn pump(id: &str, from: &str, to: &str, curve: Option<PumpCurve>, gain: (f64, f64)) -> Edge {
        Edge {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            kind: EdgeKind::Pump,
            length_m: None,
            diameter_m: None,
            friction_factor: None,
            flow_min_lps: 0.0,
            flow_max_lps: 1.0e6,
            pump: Some(PumpParams { curve, gain_min_m: gain.0, gain_max_m: gain.1 }),
        }
    }
}

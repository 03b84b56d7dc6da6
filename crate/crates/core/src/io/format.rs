//! TOML network files.
//!
//! ```toml
//! schema_version = 1
//! name = "demo"
//!
//! [defaults]
//! friction_factor = 0.02
//!
//! [sir]
//! variable_nodes = ["j"]
//!
//! [[nodes]]
//! id = "s"
//! kind = "source"
//! elevation_m = 0.0
//! head_min_m = 40.0
//! head_max_m = 60.0
//! inject_min_lps = 0.0
//! inject_max_lps = 500.0
//!
//! [[nodes]]
//! id = "j"
//! kind = "junction"
//! elevation_m = 0.0
//! head_min_m = 20.0
//! head_max_m = 100.0
//! demand_max_lps = 50.0
//!
//! [[edges]]
//! id = "p"
//! from = "s"
//! to = "j"
//! length_m = 500.0
//! diameter_m = 0.2
//! flow_min_lps = 0.0
//! flow_max_lps = 100.0
//! ```
//!
//! Unknown keys are rejected. Every error carries a 1-based line and column.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::network::{
    validate, Edge, EdgeKind, Network, NetworkError, Node, NodeKind, PumpCurve, PumpParams, DEFAULT_FRICTION_FACTOR,
    DEFAULT_GRAVITY,
};
use crate::polytope::DEFAULT_ROUNDS;
use crate::scheduler::CostParams;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_GRID_K: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("{at}: {message}")]
    Syntax { at: Location, message: String },
    #[error("{}", .0.iter().map(|(at, m)| format!("{at}: {m}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<(Location, String)>),
}

impl FormatError {
    pub fn location(&self) -> Location {
        match self {
            Self::Syntax { at, .. } => *at,
            Self::Invalid(v) => v.first().map(|(at, _)| *at).unwrap_or(Location { line: 1, column: 1 }),
        }
    }
}

/// Region settings carried by a network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirSettings {
    pub variable_nodes: Vec<String>,
    pub grid_k: usize,
    pub rounds: usize,
}

impl Default for SirSettings {
    fn default() -> Self {
        Self { variable_nodes: Vec::new(), grid_k: DEFAULT_GRID_K, rounds: DEFAULT_ROUNDS }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkFile {
    pub name: Option<String>,
    pub description: Option<String>,
    pub network: Network,
    pub cost: CostParams,
    pub sir: SirSettings,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRepr {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default)]
    defaults: DefaultsRepr,
    #[serde(default)]
    sir: SirRepr,
    nodes: Vec<NodeRepr>,
    #[serde(default)]
    edges: Vec<EdgeRepr>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DefaultsRepr {
    friction_factor: f64,
    gravity: f64,
    efficiency: f64,
    tariff: f64,
    slot_seconds: f64,
}

impl Default for DefaultsRepr {
    fn default() -> Self {
        let c = CostParams::default();
        Self {
            friction_factor: DEFAULT_FRICTION_FACTOR,
            gravity: DEFAULT_GRAVITY,
            efficiency: c.efficiency,
            tariff: c.tariff,
            slot_seconds: c.slot_seconds,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SirRepr {
    #[serde(default)]
    variable_nodes: Vec<Spanned<String>>,
    #[serde(default = "default_k")]
    grid_k: usize,
    #[serde(default = "default_rounds")]
    rounds: usize,
}

fn default_k() -> usize {
    DEFAULT_GRID_K
}

fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}

impl Default for SirRepr {
    fn default() -> Self {
        Self { variable_nodes: Vec::new(), grid_k: DEFAULT_GRID_K, rounds: DEFAULT_ROUNDS }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRepr {
    id: Spanned<String>,
    kind: NodeKind,
    elevation_m: f64,
    head_min_m: f64,
    head_max_m: f64,
    #[serde(default)]
    demand_min_lps: f64,
    #[serde(default)]
    demand_max_lps: f64,
    /// Fixed demand; omitted for candidate variable nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    demand_lps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inject_min_lps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inject_max_lps: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRepr {
    id: Spanned<String>,
    from: Spanned<String>,
    to: Spanned<String>,
    #[serde(default = "pipe_kind")]
    kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diameter_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    friction_factor: Option<f64>,
    flow_min_lps: f64,
    flow_max_lps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pump: Option<PumpRepr>,
}

fn pipe_kind() -> EdgeKind {
    EdgeKind::Pipe
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PumpRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    curve: Option<PumpCurve>,
    gain_min_m: f64,
    gain_max_m: f64,
}

/// 1-based line and column of a byte offset.
fn locate(text: &str, offset: usize) -> Location {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    Location { line, column }
}

fn span_of(text: &str, span: Range<usize>) -> Location {
    locate(text, span.start)
}

pub fn parse_network(text: &str) -> Result<NetworkFile, FormatError> {
    if text.trim().is_empty() {
        return Err(FormatError::Syntax { at: Location { line: 1, column: 1 }, message: "empty network file".into() });
    }
    let repr: FileRepr = toml::from_str(text).map_err(|e| FormatError::Syntax {
        at: e.span().map_or(Location { line: 1, column: 1 }, |s| span_of(text, s)),
        message: e.message().to_string(),
    })?;
    let origin = Location { line: 1, column: 1 };
    if repr.schema_version != SCHEMA_VERSION {
        return Err(FormatError::Syntax {
            at: origin,
            message: format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", repr.schema_version),
        });
    }

    let node_at = |id: &str| {
        repr.nodes.iter().rev().find(|n| n.id.get_ref() == id).map_or(origin, |n| span_of(text, n.id.span()))
    };
    let edge_at = |id: &str| {
        repr.edges.iter().rev().find(|e| e.id.get_ref() == id).map_or(origin, |e| span_of(text, e.id.span()))
    };

    let nodes: Vec<Node> = repr
        .nodes
        .iter()
        .map(|n| Node {
            id: n.id.get_ref().clone(),
            kind: n.kind,
            elevation_m: n.elevation_m,
            head_min_m: n.head_min_m,
            head_max_m: n.head_max_m,
            demand_min_lps: n.demand_min_lps,
            demand_max_lps: n.demand_max_lps,
            fixed_demand_lps: n.demand_lps,
            inject_min_lps: n.inject_min_lps,
            inject_max_lps: n.inject_max_lps,
        })
        .collect();
    let edges: Vec<Edge> = repr
        .edges
        .iter()
        .map(|e| Edge {
            id: e.id.get_ref().clone(),
            from: e.from.get_ref().clone(),
            to: e.to.get_ref().clone(),
            kind: e.kind,
            length_m: e.length_m,
            diameter_m: e.diameter_m,
            friction_factor: e.friction_factor,
            flow_min_lps: e.flow_min_lps,
            flow_max_lps: e.flow_max_lps,
            pump: e.pump.as_ref().map(|p| PumpParams {
                curve: p.curve,
                gain_min_m: p.gain_min_m,
                gain_max_m: p.gain_max_m,
            }),
        })
        .collect();

    let d = &repr.defaults;
    let net = Network::from_parts(nodes, edges, d.gravity, d.friction_factor).map_err(|e| {
        let at = match &e {
            NetworkError::DuplicateId { kind: "node", id } => node_at(id),
            NetworkError::DuplicateId { id, .. } => edge_at(id),
            NetworkError::UnknownNode { edge, node } => repr
                .edges
                .iter()
                .find(|x| x.id.get_ref() == edge)
                .map(|x| if x.from.get_ref() == node { x.from.span() } else { x.to.span() })
                .map_or(origin, |s| span_of(text, s)),
            _ => origin,
        };
        FormatError::Invalid(vec![(at, e.to_string())])
    })?;

    let mut problems: Vec<(Location, String)> = validate(&net)
        .into_iter()
        .map(|v| {
            let at = if let Some(id) = v.element.strip_prefix("node ") {
                node_at(id)
            } else if let Some(id) = v.element.strip_prefix("edge ") {
                edge_at(id)
            } else {
                origin
            };
            (at, v.to_string())
        })
        .collect();
    if !(d.gravity.is_finite() && d.gravity > 0.0) {
        problems.push((origin, format!("defaults: gravity {} must be positive", d.gravity)));
    }
    let cost = CostParams { efficiency: d.efficiency, tariff: d.tariff, slot_seconds: d.slot_seconds };
    if !(cost.efficiency > 0.0 && cost.efficiency <= 1.0) {
        problems.push((origin, format!("defaults: efficiency {} not in (0, 1]", cost.efficiency)));
    }
    if !(cost.tariff >= 0.0 && cost.slot_seconds > 0.0) {
        problems.push((origin, "defaults: tariff must be nonnegative and slot_seconds positive".into()));
    }
    let mut variable_nodes = Vec::new();
    for v in &repr.sir.variable_nodes {
        let at = span_of(text, v.span());
        match net.node_index(v.get_ref()) {
            None => problems.push((at, format!("sir: unknown variable node '{}'", v.get_ref()))),
            Some(i) if net.node(i).is_source() => {
                problems.push((at, format!("sir: variable node '{}' is a source", v.get_ref())))
            }
            Some(_) if variable_nodes.contains(v.get_ref()) => {
                problems.push((at, format!("sir: variable node '{}' listed twice", v.get_ref())))
            }
            Some(_) => variable_nodes.push(v.get_ref().clone()),
        }
    }
    if repr.sir.grid_k < 2 {
        problems.push((origin, "sir: grid_k must be at least 2".into()));
    }
    if !problems.is_empty() {
        problems.sort_by_key(|(at, _)| (at.line, at.column));
        return Err(FormatError::Invalid(problems));
    }
    Ok(NetworkFile {
        name: repr.name,
        description: repr.description,
        network: net,
        cost,
        sir: SirSettings { variable_nodes, grid_k: repr.sir.grid_k, rounds: repr.sir.rounds },
    })
}

pub fn serialize_network(file: &NetworkFile) -> String {
    let net = &file.network;
    let repr = FileRepr {
        schema_version: SCHEMA_VERSION,
        name: file.name.clone(),
        description: file.description.clone(),
        defaults: DefaultsRepr {
            friction_factor: net.default_friction_factor(),
            gravity: net.gravity(),
            efficiency: file.cost.efficiency,
            tariff: file.cost.tariff,
            slot_seconds: file.cost.slot_seconds,
        },
        sir: SirRepr {
            variable_nodes: file.sir.variable_nodes.iter().map(|v| Spanned::new(0..0, v.clone())).collect(),
            grid_k: file.sir.grid_k,
            rounds: file.sir.rounds,
        },
        nodes: net
            .nodes()
            .iter()
            .map(|n| NodeRepr {
                id: Spanned::new(0..0, n.id.clone()),
                kind: n.kind,
                elevation_m: n.elevation_m,
                head_min_m: n.head_min_m,
                head_max_m: n.head_max_m,
                demand_min_lps: n.demand_min_lps,
                demand_max_lps: n.demand_max_lps,
                demand_lps: n.fixed_demand_lps,
                inject_min_lps: n.inject_min_lps,
                inject_max_lps: n.inject_max_lps,
            })
            .collect(),
        edges: net
            .edges()
            .iter()
            .map(|e| EdgeRepr {
                id: Spanned::new(0..0, e.id.clone()),
                from: Spanned::new(0..0, e.from.clone()),
                to: Spanned::new(0..0, e.to.clone()),
                kind: e.kind,
                length_m: e.length_m,
                diameter_m: e.diameter_m,
                friction_factor: e.friction_factor,
                flow_min_lps: e.flow_min_lps,
                flow_max_lps: e.flow_max_lps,
                pump: e.pump.as_ref().map(|p| PumpRepr {
                    curve: p.curve,
                    gain_min_m: p.gain_min_m,
                    gain_max_m: p.gain_max_m,
                }),
            })
            .collect(),
    };
    toml::to_string(&repr).expect("network files always serialize")
}

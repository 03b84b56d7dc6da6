//! Steady-state hydraulics on a tree: flows from demands, heads from flows,
//! and the feasibility verdict for a frozen pump/sign regime.
//!
//! On a tree every active component has exactly one source, so flows follow
//! from demands by subtree accumulation. Heads are then affine in a small
//! set of free offsets: the source head, shifted by the gain of every pump
//! that has no curve. Grouping nodes by offset ("segments") turns the head
//! bounds into interval constraints that are intersected leaf-to-root.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, LPS_PER_CMS};

/// Normalized residual at or below which a constraint counts as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicsError {
    #[error("node '{0}' has demand but no active path to a source")]
    Disconnected(String),
    #[error("sources {0:?} share one active component; flows are not unique")]
    MultipleSources(Vec<String>),
    #[error("expected {expected} {what}, got {got}")]
    Length { what: &'static str, expected: usize, got: usize },
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), HydraulicsError> {
    if expected == got {
        Ok(())
    } else {
        Err(HydraulicsError::Length { what, expected, got })
    }
}

/// Diagonal of the status matrix `S`, one entry per edge: pipes are always
/// active, pumps are active when on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PumpStatus(Vec<bool>);

impl PumpStatus {
    pub fn all_on(net: &Network) -> Self {
        Self(vec![true; net.edge_count()])
    }

    /// Build from on/off flags listed in [`Network::pump_edges`] order.
    pub fn from_pumps(net: &Network, pumps_on: &[bool]) -> Result<Self, HydraulicsError> {
        let pumps = net.pump_edges();
        check_len("pump states", pumps.len(), pumps_on.len())?;
        let mut active = vec![true; net.edge_count()];
        for (&e, &on) in pumps.iter().zip(pumps_on) {
            active[e] = on;
        }
        Ok(Self(active))
    }

    pub fn is_active(&self, edge: usize) -> bool {
        self.0[edge]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// On/off flags of the pumps in [`Network::pump_edges`] order.
    pub fn pump_states(&self, net: &Network) -> Vec<bool> {
        net.pump_edges().into_iter().map(|e| self.0[e]).collect()
    }

    pub fn pumps_on(&self, net: &Network) -> usize {
        self.pump_states(net).into_iter().filter(|&b| b).count()
    }
}

/// Diagonal of `Sgn(f)`: −1, 0 or +1 per edge, relative to the declared direction.
pub type SignPattern = Vec<i8>;

pub fn sign_of(flow: f64) -> i8 {
    if flow > 0.0 {
        1
    } else if flow < 0.0 {
        -1
    } else {
        0
    }
}

/// Rooted view of the active subgraph: every reachable node knows its
/// parent edge and whether that edge is declared parent→child.
#[derive(Debug, Clone)]
pub struct ActiveTree {
    /// Reachable nodes, each after its parent.
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub parent_edge: Vec<Option<usize>>,
    /// +1 when the parent edge is declared parent→child, −1 otherwise.
    pub orientation: Vec<f64>,
    /// Source feeding each node; `None` for nodes cut off from every source.
    pub root: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl ActiveTree {
    pub fn build(net: &Network, status: &PumpStatus) -> Result<Self, HydraulicsError> {
        let n = net.node_count();
        check_len("edge statuses", net.edge_count(), status.0.len())?;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for e in 0..net.edge_count() {
            if status.is_active(e) {
                let (a, b) = net.endpoints(e);
                adj[a].push((b, e));
                adj[b].push((a, e));
            }
        }
        let mut tree = Self {
            order: Vec::with_capacity(n),
            parent: vec![None; n],
            parent_edge: vec![None; n],
            orientation: vec![1.0; n],
            root: vec![None; n],
            children: vec![Vec::new(); n],
        };
        for s in net.source_nodes() {
            if let Some(other) = tree.root[s] {
                return Err(HydraulicsError::MultipleSources(vec![net.node(other).id.clone(), net.node(s).id.clone()]));
            }
            tree.root[s] = Some(s);
            tree.order.push(s);
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &(v, e) in &adj[u] {
                    if Some(e) == tree.parent_edge[u] {
                        continue;
                    }
                    if tree.root[v].is_some() {
                        // Only reachable through the tree: another source.
                        return Err(HydraulicsError::MultipleSources(vec![
                            net.node(s).id.clone(),
                            net.node(v).id.clone(),
                        ]));
                    }
                    tree.root[v] = Some(s);
                    tree.parent[v] = Some(u);
                    tree.parent_edge[v] = Some(e);
                    tree.orientation[v] = if net.endpoints(e).0 == u { 1.0 } else { -1.0 };
                    tree.children[u].push(v);
                    tree.order.push(v);
                    queue.push_back(v);
                }
            }
        }
        Ok(tree)
    }

    /// Downstream flow of each node's parent edge (L/s), i.e. the total
    /// demand of the node's subtree. Sources get their total injection.
    pub fn subtree_flows(&self, demands_lps: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = demands_lps.to_vec();
        for &v in self.order.iter().rev() {
            if let Some(p) = self.parent[v] {
                q[p] += q[v];
            }
        }
        q
    }

    pub fn is_reachable(&self, node: usize) -> bool {
        self.root[node].is_some()
    }
}

/// Flows and injections resolved from demands.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeFlows {
    /// Per edge, m³/s, signed w.r.t. the declared direction; 0 on inactive edges.
    pub flows_cms: Vec<f64>,
    /// Per node, m³/s; nonzero only at sources.
    pub injections_cms: Vec<f64>,
}

impl TreeFlows {
    pub fn flows_lps(&self) -> Vec<f64> {
        self.flows_cms.iter().map(|f| f * LPS_PER_CMS).collect()
    }
}

fn tree_flows(net: &Network, tree: &ActiveTree, demands_lps: &[f64]) -> Result<TreeFlows, HydraulicsError> {
    check_len("demands", net.node_count(), demands_lps.len())?;
    for (i, &d) in demands_lps.iter().enumerate() {
        if !tree.is_reachable(i) && d != 0.0 {
            return Err(HydraulicsError::Disconnected(net.node(i).id.clone()));
        }
    }
    let q = tree.subtree_flows(demands_lps);
    let mut flows_cms = vec![0.0; net.edge_count()];
    let mut injections_cms = vec![0.0; net.node_count()];
    for &v in &tree.order {
        match tree.parent_edge[v] {
            Some(e) => flows_cms[e] = tree.orientation[v] * q[v] / LPS_PER_CMS,
            None => injections_cms[v] = q[v] / LPS_PER_CMS,
        }
    }
    Ok(TreeFlows { flows_cms, injections_cms })
}

/// Unique flows satisfying `Aᵀf = F^G − d` on the active forest.
///
/// Demands are per node in L/s. Off pumps carry no flow; a node with nonzero
/// demand that they cut off from every source is a structural error.
pub fn solve_tree_flows(net: &Network, demands_lps: &[f64], status: &PumpStatus) -> Result<TreeFlows, HydraulicsError> {
    let tree = ActiveTree::build(net, status)?;
    tree_flows(net, &tree, demands_lps)
}

/// Head gain of an active pump: the curve value, an explicit override, or
/// the lower gain bound for curve-less pumps without an override.
fn pump_gain(net: &Network, e: usize, flow_lps: f64, explicit: Option<f64>) -> f64 {
    let edge = net.edge(e);
    let Some(p) = &edge.pump else { return 0.0 };
    explicit.unwrap_or_else(|| p.curve.map_or(p.gain_min_m, |c| c.gain(flow_lps)))
}

/// Heads from flows, root to leaf.
///
/// Across edge `i→j`: `y_j = y_i + h_i − h_j − R·f·|f| + G`, with `f` in m³/s
/// and `G` the pump gain (zero for pipes). `pump_gains` and `source_heads`
/// are per edge and per node; `None` gains fall back to the pump curve.
/// Nodes with no active path to a source get `NaN`.
pub fn propagate_heads(
    net: &Network,
    flows_cms: &[f64],
    status: &PumpStatus,
    pump_gains: &[Option<f64>],
    source_heads: &[Option<f64>],
) -> Result<Vec<f64>, HydraulicsError> {
    check_len("flows", net.edge_count(), flows_cms.len())?;
    check_len("pump gains", net.edge_count(), pump_gains.len())?;
    check_len("source heads", net.node_count(), source_heads.len())?;
    let tree = ActiveTree::build(net, status)?;
    let mut heads = vec![f64::NAN; net.node_count()];
    for &v in &tree.order {
        match (tree.parent[v], tree.parent_edge[v]) {
            (None, _) => heads[v] = source_heads[v].unwrap_or(net.node(v).head_min_m),
            (Some(p), Some(e)) => {
                let f = flows_cms[e];
                let gain = if net.edge(e).is_pump() { pump_gain(net, e, f * LPS_PER_CMS, pump_gains[e]) } else { 0.0 };
                let drop = net.resistance(e) * f * f.abs() - gain;
                let (h_p, h_v) = (net.node(p).elevation_m, net.node(v).elevation_m);
                // Rearranged head equation for the declared direction.
                heads[v] =
                    if tree.orientation[v] > 0.0 { heads[p] + h_p - h_v - drop } else { heads[p] + h_p - h_v + drop };
            }
            (Some(_), None) => unreachable!("non-root node without parent edge"),
        }
    }
    Ok(heads)
}

/// Which constraint a residual belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintId {
    None,
    /// Pump head-gain bounds.
    PumpGain {
        edge: String,
        upper: bool,
    },
    /// Nodal head bounds, reported as the lower bound of one node against
    /// the upper bound of another (equal ids for a single node's own range).
    Head {
        lower_node: String,
        upper_node: String,
    },
    /// Source injection bounds.
    Injection {
        node: String,
        upper: bool,
    },
    /// Demand bounds.
    Demand {
        node: String,
        upper: bool,
    },
    /// Edge flow bounds.
    Flow {
        edge: String,
        upper: bool,
    },
    /// Flow reversed against the frozen sign pattern.
    Sign {
        edge: String,
    },
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |upper: &bool| if *upper { "max" } else { "min" };
        match self {
            Self::None => write!(f, "none"),
            Self::PumpGain { edge, upper } => write!(f, "pump gain {} of {edge}", side(upper)),
            Self::Head { lower_node, upper_node } if lower_node == upper_node => {
                write!(f, "head range of {lower_node}")
            }
            Self::Head { lower_node, upper_node } => {
                write!(f, "head min of {lower_node} vs head max of {upper_node}")
            }
            Self::Injection { node, upper } => write!(f, "injection {} of {node}", side(upper)),
            Self::Demand { node, upper } => write!(f, "demand {} of {node}", side(upper)),
            Self::Flow { edge, upper } => write!(f, "flow {} of {edge}", side(upper)),
            Self::Sign { edge } => write!(f, "flow direction of {edge}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    /// Largest normalized violation, 0 when nothing is violated.
    pub worst_residual: f64,
    /// The tightest constraint (the violated one when infeasible).
    pub worst_constraint: ConstraintId,
}

/// One steady-state operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydraulicState {
    pub flows_cms: Vec<f64>,
    pub heads_m: Vec<f64>,
    /// Per edge; 0 for pipes and off pumps.
    pub pump_gains_m: Vec<f64>,
    pub pump_status: PumpStatus,
    pub source_injections_cms: Vec<f64>,
    pub sign_pattern: SignPattern,
}

struct Worst {
    value: f64,
    id: ConstraintId,
}

impl Worst {
    fn offer(&mut self, value: f64, id: impl FnOnce() -> ConstraintId) {
        if value > self.value {
            self.value = value;
            self.id = id();
        }
    }
}

fn range_scale(lo: f64, hi: f64) -> f64 {
    let r = hi - lo;
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// Offset group: nodes whose head is `z + φ` for a shared free offset `z`.
#[derive(Debug, Clone)]
struct Segment {
    parent: Option<usize>,
    /// Range of `z_self − z_parent`.
    diff: (f64, f64),
    /// Pump edge that opens the segment and its orientation.
    pump: Option<(usize, f64)>,
}

/// Precomputed evaluator for one frozen regime (statuses and sign pattern),
/// reused across many demand vectors.
#[derive(Debug, Clone)]
pub struct RegimeEvaluator<'a> {
    net: &'a Network,
    status: PumpStatus,
    signs: SignPattern,
    tree: ActiveTree,
    segment_of: Vec<usize>,
    segments: Vec<Segment>,
}

/// Internal evaluation result shared by the verdict and the witness state.
struct Evaluation {
    worst: Worst,
    flows: TreeFlows,
    phi: Vec<f64>,
    lo: Vec<(f64, usize)>,
    hi: Vec<(f64, usize)>,
    curve_gains: Vec<f64>,
}

impl<'a> RegimeEvaluator<'a> {
    pub fn new(net: &'a Network, status: &PumpStatus, signs: &[i8]) -> Result<Self, HydraulicsError> {
        check_len("sign entries", net.edge_count(), signs.len())?;
        let tree = ActiveTree::build(net, status)?;
        let mut segment_of = vec![usize::MAX; net.node_count()];
        let mut segments = Vec::new();
        for &v in &tree.order {
            match tree.parent_edge[v] {
                None => {
                    segment_of[v] = segments.len();
                    segments.push(Segment { parent: None, diff: (0.0, 0.0), pump: None });
                }
                Some(e) => {
                    let p = tree.parent[v].unwrap();
                    let free =
                        net.edge(e).pump.as_ref().filter(|p| p.curve.is_none()).map(|p| (p.gain_min_m, p.gain_max_m));
                    match free {
                        Some((gmin, gmax)) => {
                            let sigma = tree.orientation[v];
                            let diff = if sigma > 0.0 { (gmin, gmax) } else { (-gmax, -gmin) };
                            segment_of[v] = segments.len();
                            segments.push(Segment { parent: Some(segment_of[p]), diff, pump: Some((e, sigma)) });
                        }
                        None => segment_of[v] = segment_of[p],
                    }
                }
            }
        }
        Ok(Self { net, status: status.clone(), signs: signs.to_vec(), tree, segment_of, segments })
    }

    pub fn tree(&self) -> &ActiveTree {
        &self.tree
    }

    pub fn flows(&self, demands_lps: &[f64]) -> Result<TreeFlows, HydraulicsError> {
        tree_flows(self.net, &self.tree, demands_lps)
    }

    fn evaluate(&self, demands_lps: &[f64]) -> Result<Evaluation, HydraulicsError> {
        let net = self.net;
        let flows = self.flows(demands_lps)?;
        let mut worst = Worst { value: f64::NEG_INFINITY, id: ConstraintId::None };

        for (i, node) in net.nodes().iter().enumerate() {
            if node.is_source() {
                continue;
            }
            let s = range_scale(node.demand_min_lps, node.demand_max_lps);
            let d = demands_lps[i];
            worst.offer((node.demand_min_lps - d) / s, || ConstraintId::Demand { node: node.id.clone(), upper: false });
            worst.offer((d - node.demand_max_lps) / s, || ConstraintId::Demand { node: node.id.clone(), upper: true });
        }
        for i in net.source_nodes() {
            let node = net.node(i);
            let (lo, hi) = (node.inject_min_lps.unwrap_or(0.0), node.inject_max_lps.unwrap_or(f64::INFINITY));
            let s = range_scale(lo, hi);
            let inj = flows.injections_cms[i] * LPS_PER_CMS;
            worst.offer((lo - inj) / s, || ConstraintId::Injection { node: node.id.clone(), upper: false });
            worst.offer((inj - hi) / s, || ConstraintId::Injection { node: node.id.clone(), upper: true });
        }

        let mut curve_gains = vec![0.0; net.edge_count()];
        for (e, edge) in net.edges().iter().enumerate() {
            if !self.status.is_active(e) {
                continue;
            }
            let f = flows.flows_cms[e] * LPS_PER_CMS;
            let s = range_scale(edge.flow_min_lps, edge.flow_max_lps);
            worst.offer((edge.flow_min_lps - f) / s, || ConstraintId::Flow { edge: edge.id.clone(), upper: false });
            worst.offer((f - edge.flow_max_lps) / s, || ConstraintId::Flow { edge: edge.id.clone(), upper: true });
            let sign = self.signs[e];
            if sign != 0 && f * f64::from(sign) < 0.0 {
                worst.offer(f.abs(), || ConstraintId::Sign { edge: edge.id.clone() });
            }
            if let Some(p) = &edge.pump {
                if let Some(c) = p.curve {
                    let g = c.gain(f);
                    curve_gains[e] = g;
                    let gs = range_scale(p.gain_min_m, p.gain_max_m);
                    worst.offer((p.gain_min_m - g) / gs, || ConstraintId::PumpGain {
                        edge: edge.id.clone(),
                        upper: false,
                    });
                    worst.offer((g - p.gain_max_m) / gs, || ConstraintId::PumpGain {
                        edge: edge.id.clone(),
                        upper: true,
                    });
                }
            }
        }

        // Head offsets: y_v = z_seg(v) + φ_v.
        let q = self.tree.subtree_flows(demands_lps);
        let mut phi = vec![f64::NAN; net.node_count()];
        for &v in &self.tree.order {
            match (self.tree.parent[v], self.tree.parent_edge[v]) {
                (None, _) => phi[v] = 0.0,
                (Some(p), Some(e)) => {
                    let sigma = self.tree.orientation[v];
                    let qc = q[v] / LPS_PER_CMS;
                    let mut step =
                        net.node(p).elevation_m - net.node(v).elevation_m - net.resistance(e) * qc * qc.abs();
                    if net.edge(e).pump.as_ref().is_some_and(|p| p.curve.is_some()) {
                        step += sigma * curve_gains[e];
                    }
                    phi[v] = phi[p] + step;
                }
                _ => unreachable!(),
            }
        }

        let nseg = self.segments.len();
        let mut lo = vec![(f64::NEG_INFINITY, usize::MAX); nseg];
        let mut hi = vec![(f64::INFINITY, usize::MAX); nseg];
        for &v in &self.tree.order {
            let s = self.segment_of[v];
            let node = net.node(v);
            let (l, h) = (node.head_min_m - phi[v], node.head_max_m - phi[v]);
            if l > lo[s].0 {
                lo[s] = (l, v);
            }
            if h < hi[s].0 {
                hi[s] = (h, v);
            }
        }
        for s in (0..nseg).rev() {
            let seg = &self.segments[s];
            let gap = lo[s].0 - hi[s].0;
            worst.offer(gap, || ConstraintId::Head {
                lower_node: net.node(lo[s].1).id.clone(),
                upper_node: net.node(hi[s].1).id.clone(),
            });
            if let Some(p) = seg.parent {
                let cand_lo = lo[s].0 - seg.diff.1;
                if cand_lo > lo[p].0 {
                    lo[p] = (cand_lo, lo[s].1);
                }
                let cand_hi = hi[s].0 - seg.diff.0;
                if cand_hi < hi[p].0 {
                    hi[p] = (cand_hi, hi[s].1);
                }
            }
        }
        Ok(Evaluation { worst, flows, phi, lo, hi, curve_gains })
    }

    pub fn verdict(&self, demands_lps: &[f64]) -> Result<FeasibilityVerdict, HydraulicsError> {
        let ev = self.evaluate(demands_lps)?;
        Ok(verdict_from(ev.worst))
    }

    /// Verdict plus a witness operating point. Free offsets take the lowest
    /// admissible value top-down, i.e. the lowest source head and pump gains.
    pub fn operating_point(
        &self,
        demands_lps: &[f64],
    ) -> Result<(FeasibilityVerdict, HydraulicState), HydraulicsError> {
        let ev = self.evaluate(demands_lps)?;
        let net = self.net;
        let mut z = vec![0.0; self.segments.len()];
        let mut gains = ev.curve_gains.clone();
        for (s, seg) in self.segments.iter().enumerate() {
            let (lo, hi) = (ev.lo[s].0, ev.hi[s].0);
            z[s] = match seg.parent {
                None => {
                    if lo.is_finite() {
                        lo
                    } else {
                        hi
                    }
                }
                Some(p) => {
                    let low = lo.max(z[p] + seg.diff.0);
                    let high = hi.min(z[p] + seg.diff.1);
                    low.min(high)
                }
            };
            if let (Some(p), Some((e, sigma))) = (seg.parent, seg.pump) {
                gains[e] = sigma * (z[s] - z[p]);
            }
        }
        let heads_m = (0..net.node_count())
            .map(|v| if self.tree.is_reachable(v) { z[self.segment_of[v]] + ev.phi[v] } else { f64::NAN })
            .collect();
        for (e, g) in gains.iter_mut().enumerate() {
            if !self.status.is_active(e) {
                *g = 0.0;
            }
        }
        let state = HydraulicState {
            sign_pattern: ev.flows.flows_cms.iter().map(|&f| sign_of(f)).collect(),
            flows_cms: ev.flows.flows_cms,
            heads_m,
            pump_gains_m: gains,
            pump_status: self.status.clone(),
            source_injections_cms: ev.flows.injections_cms,
        };
        Ok((verdict_from(ev.worst), state))
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
}

fn verdict_from(worst: Worst) -> FeasibilityVerdict {
    let residual = worst.value.max(0.0);
    FeasibilityVerdict { feasible: residual <= FEASIBILITY_TOL, worst_residual: residual, worst_constraint: worst.id }
}

/// Decide whether some source heads and free pump gains make the demand
/// vector hydraulically admissible under the frozen regime.
pub fn check_feasibility(
    net: &Network,
    demands_lps: &[f64],
    status: &PumpStatus,
    signs: &[i8],
) -> Result<FeasibilityVerdict, HydraulicsError> {
    RegimeEvaluator::new(net, status, signs)?.verdict(demands_lps)
}

/// Per-node mass balance residual `(Aᵀf)_n − (F^G_n − d_n)` in m³/s.
pub fn conservation_residuals(net: &Network, state: &HydraulicState, demands_lps: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> =
        (0..net.node_count()).map(|n| demands_lps[n] / LPS_PER_CMS - state.source_injections_cms[n]).collect();
    for e in 0..net.edge_count() {
        let (a, b) = net.endpoints(e);
        r[a] += state.flows_cms[e];
        r[b] -= state.flows_cms[e];
    }
    r
}

/// Per-edge head-equation residual in metres for active edges between
/// reachable nodes, `None` elsewhere.
pub fn head_equation_residuals(net: &Network, state: &HydraulicState) -> Vec<Option<f64>> {
    (0..net.edge_count())
        .map(|e| {
            let (i, j) = net.endpoints(e);
            if !state.pump_status.is_active(e) || state.heads_m[i].is_nan() || state.heads_m[j].is_nan() {
                return None;
            }
            let f = state.flows_cms[e];
            let lhs = state.heads_m[i] - state.heads_m[j] + net.node(i).elevation_m - net.node(j).elevation_m
                + state.pump_gains_m[e];
            Some(lhs - net.resistance(e) * f * f.abs())
        })
        .collect()
}

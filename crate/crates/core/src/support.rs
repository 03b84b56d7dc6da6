//! Support-function maximization over the security injection region.
//!
//! The region lives in the space of the variable demands (L/s). Under a
//! frozen regime it is cut out by smooth constraints `g_k(x) ≤ 0`:
//!
//! * linear ones: edge flow bounds, source injection bounds, pump-curve gain
//!   bounds and flow directions, all affine in the demands;
//! * head ones: for every ordered pair of nodes `(i, j)` in one component,
//!   the lower head requirement of `i` must be reachable from the upper head
//!   limit of `j` given the free offsets between their segments. With
//!   `y = z + φ(x)` this reads
//!   `ymin_i − ymax_j + min(z_j − z_i) + φ_j(x) − φ_i(x) ≤ 0`,
//!   which is exactly the emptiness test of the interval check in
//!   [`crate::hydraulics`] written pair by pair.
//!
//! [`maximize_support`] ascends `n·x` from the nominal point by successive
//! linear programs inside a trust region, keeping every iterate feasible.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulics::{
    ActiveTree, FeasibilityVerdict, HydraulicsError, PumpStatus, RegimeEvaluator, SignPattern, FEASIBILITY_TOL,
};
use crate::network::{Network, LPS_PER_CMS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupportError {
    #[error("invalid region problem: {0}")]
    InvalidProblem(String),
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("direction must be a finite nonzero vector")]
    BadDirection,
    #[error("nominal point is infeasible ({0})")]
    NominalInfeasible(String),
    #[error("linear subproblem failed: {0}")]
    Lp(String),
    #[error(transparent)]
    Hydraulics(#[from] HydraulicsError),
}

/// The frozen post-scheduling region problem.
#[derive(Debug, Clone)]
pub struct SirProblem {
    net: Network,
    status: PumpStatus,
    signs: SignPattern,
    variable_nodes: Vec<usize>,
    /// Full demand vector (L/s) with variable entries at their nominal values.
    base_demands: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    nominal: Vec<f64>,
}

impl SirProblem {
    pub fn new(
        net: Network,
        status: PumpStatus,
        signs: SignPattern,
        variable_ids: &[&str],
    ) -> Result<Self, SupportError> {
        if variable_ids.is_empty() {
            return Err(SupportError::InvalidProblem("no variable nodes".into()));
        }
        if signs.len() != net.edge_count() || status.as_slice().len() != net.edge_count() {
            return Err(SupportError::InvalidProblem("regime does not match the network".into()));
        }
        let mut variable_nodes = Vec::with_capacity(variable_ids.len());
        for id in variable_ids {
            let i = net
                .node_index(id)
                .ok_or_else(|| SupportError::InvalidProblem(format!("unknown variable node '{id}'")))?;
            if net.node(i).is_source() {
                return Err(SupportError::InvalidProblem(format!("variable node '{id}' is a source")));
            }
            if variable_nodes.contains(&i) {
                return Err(SupportError::InvalidProblem(format!("variable node '{id}' listed twice")));
            }
            variable_nodes.push(i);
        }
        let base_demands = net.nominal_demands_lps();
        for (i, node) in net.nodes().iter().enumerate() {
            if node.is_source() || variable_nodes.contains(&i) {
                continue;
            }
            let d = base_demands[i];
            if d < node.demand_min_lps || d > node.demand_max_lps {
                return Err(SupportError::InvalidProblem(format!(
                    "fixed demand {d} of node '{}' outside [{}, {}]",
                    node.id, node.demand_min_lps, node.demand_max_lps
                )));
            }
        }
        let lower: Vec<f64> = variable_nodes.iter().map(|&i| net.node(i).demand_min_lps).collect();
        let upper: Vec<f64> = variable_nodes.iter().map(|&i| net.node(i).demand_max_lps).collect();
        let nominal = variable_nodes
            .iter()
            .zip(lower.iter().zip(&upper))
            .map(|(&i, (&lo, &hi))| base_demands[i].clamp(lo, hi))
            .collect();
        Ok(Self { net, status, signs, variable_nodes, base_demands, lower, upper, nominal })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn status(&self) -> &PumpStatus {
        &self.status
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Number of variable demands.
    pub fn dimension(&self) -> usize {
        self.variable_nodes.len()
    }

    pub fn variable_nodes(&self) -> &[usize] {
        &self.variable_nodes
    }

    pub fn variable_ids(&self) -> Vec<String> {
        self.variable_nodes.iter().map(|&i| self.net.node(i).id.clone()).collect()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    /// Euclidean length of the demand box diagonal.
    pub fn box_diagonal(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l) * (u - l)).sum::<f64>().sqrt()
    }

    pub fn evaluator(&self) -> Result<RegimeEvaluator<'_>, HydraulicsError> {
        RegimeEvaluator::new(&self.net, &self.status, &self.signs)
    }

    /// Feasibility verdict of a point in variable space.
    pub fn check(&self, values: &[f64]) -> Result<FeasibilityVerdict, SupportError> {
        let d = embed_demands(self, values)?;
        Ok(self.evaluator()?.verdict(&d)?)
    }
}

/// Full per-node demand vector (L/s): fixed demands everywhere, the given
/// values at the variable nodes, 0 at sources.
pub fn embed_demands(prob: &SirProblem, values: &[f64]) -> Result<Vec<f64>, SupportError> {
    if values.len() != prob.dimension() {
        return Err(SupportError::Dimension { expected: prob.dimension(), got: values.len() });
    }
    let mut d = prob.base_demands.clone();
    for (&i, &v) in prob.variable_nodes.iter().zip(values) {
        d[i] = v;
    }
    Ok(d)
}

/// A constraint of the smooth model: value and gradient in variable space.
#[derive(Debug, Clone)]
struct Row {
    value: f64,
    grad: Vec<f64>,
    /// Head rows are the curved ones.
    curved: bool,
}

#[derive(Debug, Clone)]
struct SegmentInfo {
    parent: Option<usize>,
    diff: (f64, f64),
    depth: usize,
}

/// Smooth constraint model of one region problem.
pub struct RegionModel<'a> {
    prob: &'a SirProblem,
    tree: ActiveTree,
    /// `inside[v][k]`: variable `k` lies in the subtree of node `v`.
    inside: Vec<Vec<bool>>,
    segment_of: Vec<usize>,
    /// Head pairs `(i, j, constant part)`.
    pairs: Vec<(usize, usize, f64)>,
}

impl<'a> RegionModel<'a> {
    pub fn new(prob: &'a SirProblem) -> Result<Self, SupportError> {
        let net = &prob.net;
        let tree = ActiveTree::build(net, &prob.status)?;
        let nd = prob.dimension();
        let mut inside = vec![vec![false; nd]; net.node_count()];
        for (k, &v) in prob.variable_nodes.iter().enumerate() {
            if !tree.is_reachable(v) {
                return Err(HydraulicsError::Disconnected(net.node(v).id.clone()).into());
            }
            let mut cur = Some(v);
            while let Some(u) = cur {
                inside[u][k] = true;
                cur = tree.parent[u];
            }
        }

        let mut segment_of = vec![usize::MAX; net.node_count()];
        let mut segs: Vec<SegmentInfo> = Vec::new();
        for &v in &tree.order {
            match tree.parent_edge[v] {
                None => {
                    segment_of[v] = segs.len();
                    segs.push(SegmentInfo { parent: None, diff: (0.0, 0.0), depth: 0 });
                }
                Some(e) => {
                    let p = tree.parent[v].unwrap();
                    let free = net.edge(e).pump.as_ref().filter(|p| p.curve.is_none());
                    if let Some(pp) = free {
                        let diff = if tree.orientation[v] > 0.0 {
                            (pp.gain_min_m, pp.gain_max_m)
                        } else {
                            (-pp.gain_max_m, -pp.gain_min_m)
                        };
                        let parent = segment_of[p];
                        segment_of[v] = segs.len();
                        segs.push(SegmentInfo { parent: Some(parent), diff, depth: segs[parent].depth + 1 });
                    } else {
                        segment_of[v] = segment_of[p];
                    }
                }
            }
        }

        // Smallest value of z_b − z_a along the segment tree.
        let min_shift = |a: usize, b: usize| -> f64 {
            let (mut a, mut b) = (a, b);
            let mut shift = 0.0;
            while a != b {
                if segs[a].depth >= segs[b].depth {
                    shift -= segs[a].diff.1;
                    a = segs[a].parent.unwrap();
                } else {
                    shift += segs[b].diff.0;
                    b = segs[b].parent.unwrap();
                }
            }
            shift
        };

        let mut pairs = Vec::new();
        for &i in &tree.order {
            for &j in &tree.order {
                if i == j || tree.root[i] != tree.root[j] {
                    continue;
                }
                let c = net.node(i).head_min_m - net.node(j).head_max_m + min_shift(segment_of[i], segment_of[j]);
                pairs.push((i, j, c));
            }
        }
        Ok(Self { prob, tree, inside, segment_of, pairs })
    }

    /// Segment index of each reachable node (free head offset group).
    pub fn segment_of(&self, node: usize) -> usize {
        self.segment_of[node]
    }

    fn rows(&self, x: &[f64]) -> Vec<Row> {
        let prob = self.prob;
        let net = &prob.net;
        let nd = prob.dimension();
        let mut demands = prob.base_demands.clone();
        for (&i, &v) in prob.variable_nodes.iter().zip(x) {
            demands[i] = v;
        }
        let q = self.tree.subtree_flows(&demands);
        let mut rows = Vec::new();
        let scale = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
        let indicator =
            |v: usize, s: f64| -> Vec<f64> { (0..nd).map(|k| if self.inside[v][k] { s } else { 0.0 }).collect() };

        for &s in &self.tree.order {
            if self.tree.parent[s].is_some() {
                continue;
            }
            let node = net.node(s);
            let (lo, hi) = (node.inject_min_lps.unwrap_or(0.0), node.inject_max_lps.unwrap_or(f64::INFINITY));
            let sc = scale(lo, hi);
            rows.push(Row { value: (lo - q[s]) / sc, grad: indicator(s, -1.0 / sc), curved: false });
            if hi.is_finite() {
                rows.push(Row { value: (q[s] - hi) / sc, grad: indicator(s, 1.0 / sc), curved: false });
            }
        }

        let mut phi = vec![0.0; net.node_count()];
        let mut dphi = vec![vec![0.0; nd]; net.node_count()];
        for &v in &self.tree.order {
            let (Some(p), Some(e)) = (self.tree.parent[v], self.tree.parent_edge[v]) else {
                continue;
            };
            let edge = net.edge(e);
            let sigma = self.tree.orientation[v];
            let flow = sigma * q[v];
            let sc = scale(edge.flow_min_lps, edge.flow_max_lps);
            rows.push(Row { value: (edge.flow_min_lps - flow) / sc, grad: indicator(v, -sigma / sc), curved: false });
            rows.push(Row { value: (flow - edge.flow_max_lps) / sc, grad: indicator(v, sigma / sc), curved: false });
            let sign = f64::from(prob.signs[e]);
            if sign != 0.0 {
                rows.push(Row { value: -sign * flow, grad: indicator(v, -sign * sigma), curved: false });
            }

            // dφ_v/dx_k = dφ_p/dx_k + [k below v]·(−2R|q|/c² + a1)
            let qc = q[v] / LPS_PER_CMS;
            let r = net.resistance(e);
            let mut step = net.node(p).elevation_m - net.node(v).elevation_m - r * qc * qc.abs();
            let mut slope = -2.0 * r * qc.abs() / LPS_PER_CMS;
            if let Some(curve) = edge.pump.as_ref().and_then(|pp| pp.curve.map(|c| (c, pp))) {
                let (c, pp) = curve;
                let gain = c.gain(flow);
                let gs = scale(pp.gain_min_m, pp.gain_max_m);
                let dg = c.a1_m_per_lps * sigma;
                rows.push(Row { value: (pp.gain_min_m - gain) / gs, grad: indicator(v, -dg / gs), curved: false });
                rows.push(Row { value: (gain - pp.gain_max_m) / gs, grad: indicator(v, dg / gs), curved: false });
                step += sigma * gain;
                slope += sigma * dg;
            }
            phi[v] = phi[p] + step;
            let mut g = dphi[p].clone();
            for (gk, &inside) in g.iter_mut().zip(&self.inside[v]) {
                if inside {
                    *gk += slope;
                }
            }
            dphi[v] = g;
        }

        for &(i, j, c) in &self.pairs {
            let grad: Vec<f64> = (0..nd).map(|k| dphi[j][k] - dphi[i][k]).collect();
            rows.push(Row { value: c + phi[j] - phi[i], grad, curved: true });
        }
        rows
    }

    /// Largest constraint value at `x` (≤ 0 means inside the region).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows(x).iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max)
    }

    fn max_curved(&self, x: &[f64]) -> f64 {
        self.rows(x).iter().filter(|r| r.curved).map(|r| r.value).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Constraint values and gradients at `x`, exposed for derivative checks.
    pub fn jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        self.rows(x).into_iter().map(|r| (r.value, r.grad)).unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportResult {
    /// Maximizing demand vector over the variable nodes (L/s).
    pub vertex: Vec<f64>,
    /// `n·vertex` for the direction as given.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportOptions {
    pub max_iter: usize,
    /// Objective tolerance relative to the box diagonal.
    pub objective_tol: f64,
    /// Trust-region collapse threshold relative to the box diagonal.
    pub step_tol: f64,
    /// Weight of the preference for low demands orthogonal to the direction,
    /// which picks a definite point on flat optimal faces.
    pub tie_break: f64,
    /// Strictly feasible point used to pull infeasible trial steps back
    /// onto the boundary; defaults to the nominal point.
    pub center: Option<Vec<f64>>,
}

impl Default for SupportOptions {
    fn default() -> Self {
        Self { max_iter: 200, objective_tol: 1e-6, step_tol: 1e-8, tie_break: 1e-6, center: None }
    }
}

/// Maximize `n·x` over the region, starting from the nominal point.
pub fn maximize_support(prob: &SirProblem, direction: &[f64]) -> Result<SupportResult, SupportError> {
    maximize_support_with(prob, direction, &SupportOptions::default())
}

pub fn maximize_support_with(
    prob: &SirProblem,
    direction: &[f64],
    opts: &SupportOptions,
) -> Result<SupportResult, SupportError> {
    let nd = prob.dimension();
    if direction.len() != nd {
        return Err(SupportError::Dimension { expected: nd, got: direction.len() });
    }
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(SupportError::BadDirection);
    }
    let model = RegionModel::new(prob)?;
    let start = prob.nominal().to_vec();
    let verdict = prob.check(&start)?;
    if !verdict.feasible {
        return Err(SupportError::NominalInfeasible(verdict.worst_constraint.to_string()));
    }

    let unit: Vec<f64> = direction.iter().map(|v| v / norm).collect();
    let cost = objective_vector(&unit, opts.tie_break);
    let diag = prob.box_diagonal().max(1e-12);
    let eps_obj = opts.objective_tol * diag;
    let step_floor = opts.step_tol * diag;
    let threshold = model.max_violation(&start).max(0.0);
    let feasible = |x: &[f64]| model.max_violation(x) <= threshold;

    let center = opts.center.clone().unwrap_or_else(|| start.clone());
    if center.len() != nd {
        return Err(SupportError::Dimension { expected: nd, got: center.len() });
    }
    let center_ok = model.max_curved(&center) < 0.0 && feasible(&center);

    let mut x = start;
    let mut radius = 0.25 * diag;
    let mut converged = false;
    let mut widened_at: Option<f64> = None;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let rows = model.rows(&x);
        let (step, predicted) = solve_step(prob, &rows, &x, &cost, Some(radius))?;
        if predicted <= eps_obj {
            // The untrusted linearization over the whole box bounds the
            // remaining gain from above on a convex region.
            let (_, bound) = solve_step(prob, &rows, &x, &cost, None)?;
            // Widen again only if the last widening paid off.
            let here = dot(&cost, &x);
            if bound <= eps_obj || widened_at.is_some_and(|prev| here - prev <= eps_obj) {
                converged = true;
                break;
            }
            widened_at = Some(here);
            radius = (radius * 4.0).min(diag);
            continue;
        }
        let trial = clamp_to_box(prob, &add(&x, &step));
        let step_len = inf_norm(&sub(&trial, &x));
        if feasible(&trial) {
            x = trial;
            if step_len >= 0.9 * radius {
                radius = (radius * 2.0).min(diag);
            }
        } else {
            let mut best = boundary_point(&x, &trial, &feasible);
            if let Some(projected) = project_back(&model, prob, &trial, threshold) {
                if dot(&cost, &projected) > dot(&cost, &best) {
                    best = projected;
                }
            }
            if center_ok {
                let radial = boundary_point(&center, &trial, &feasible);
                if dot(&cost, &radial) > dot(&cost, &best) {
                    best = radial;
                }
            }
            let gain = dot(&cost, &sub(&best, &x));
            if gain > 0.0 {
                x = best;
            }
            if gain < 0.25 * predicted {
                radius = 0.5 * step_len;
            }
        }
        if radius < step_floor {
            converged = true;
            break;
        }
    }
    let objective = dot(direction, &x);
    Ok(SupportResult { vertex: x, objective, converged, iterations })
}

/// Unit direction plus a small push toward lower demands in the
/// orthogonal complement.
fn objective_vector(unit: &[f64], weight: f64) -> Vec<f64> {
    let ones_along: f64 = unit.iter().sum();
    let mut w: Vec<f64> = unit.iter().map(|u| -(1.0 - ones_along * u)).collect();
    let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if wn > 1e-12 {
        for v in &mut w {
            *v *= weight / wn;
        }
    } else {
        w.iter_mut().for_each(|v| *v = 0.0);
    }
    unit.iter().zip(&w).map(|(u, v)| u + v).collect()
}

/// Linearized step: maximize `c·Δ` subject to `g + ∇g·Δ ≤ 0` and the box,
/// optionally inside `‖Δ‖∞ ≤ radius`.
fn solve_step(
    prob: &SirProblem,
    rows: &[Row],
    x: &[f64],
    cost: &[f64],
    radius: Option<f64>,
) -> Result<(Vec<f64>, f64), SupportError> {
    let nd = x.len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let r = radius.unwrap_or(f64::INFINITY);
    let mut bounds = Vec::with_capacity(nd);
    let vars: Vec<_> = (0..nd)
        .map(|k| {
            let lo = (prob.lower[k] - x[k]).max(-r).min(0.0);
            let hi = (prob.upper[k] - x[k]).min(r).max(0.0);
            bounds.push((lo, hi));
            lp.add_var(cost[k], (lo, hi))
        })
        .collect();
    for row in rows {
        // Skip rows that cannot bind anywhere in the step box.
        let reach: f64 = row.grad.iter().zip(&bounds).map(|(g, (lo, hi))| (g * lo).max(g * hi)).sum();
        if row.value + reach <= 0.0 || row.grad.iter().all(|g| *g == 0.0) {
            continue;
        }
        let expr: Vec<_> = vars.iter().zip(&row.grad).map(|(&v, &g)| (v, g)).collect();
        lp.add_constraint(&expr[..], ComparisonOp::Le, (-row.value).max(0.0));
    }
    let sol = lp
        .solve()
        .map_err(|e| SupportError::Lp(e.to_string()))?
        .into_solution()
        .map_err(|_| SupportError::Lp("interrupted".into()))?;
    let step: Vec<f64> = vars.iter().zip(&bounds).map(|(&v, &(lo, hi))| sol.var_value(v).clamp(lo, hi)).collect();
    let predicted = dot(cost, &step);
    Ok((step, predicted))
}

/// Newton projection of an infeasible trial point onto the most violated
/// constraint, repeated until it is feasible.
fn project_back(model: &RegionModel<'_>, prob: &SirProblem, trial: &[f64], threshold: f64) -> Option<Vec<f64>> {
    let mut y = trial.to_vec();
    for _ in 0..30 {
        let rows = model.rows(&y);
        let worst = rows.iter().max_by(|a, b| a.value.total_cmp(&b.value))?;
        if worst.value <= threshold {
            return Some(y);
        }
        let g2: f64 = worst.grad.iter().map(|g| g * g).sum();
        if g2 == 0.0 {
            return None;
        }
        // Aim slightly inside so rounding does not leave us just outside.
        let target = worst.value + 1e-12 * (1.0 + worst.value.abs());
        let next: Vec<f64> = y.iter().zip(&worst.grad).map(|(v, g)| v - target * g / g2).collect();
        y = clamp_to_box(prob, &next);
    }
    None
}

/// Last feasible point on the segment from feasible `a` toward `b`.
fn boundary_point(a: &[f64], b: &[f64], feasible: &impl Fn(&[f64]) -> bool) -> Vec<f64> {
    let lerp = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(&lerp(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lerp(lo)
}

fn clamp_to_box(prob: &SirProblem, x: &[f64]) -> Vec<f64> {
    x.iter().enumerate().map(|(k, v)| v.clamp(prob.lower[k], prob.upper[k])).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Constraint residual threshold used to accept solver output.
pub const VERTEX_TOL: f64 = FEASIBILITY_TOL;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;
    use crate::network::headloss_coefficient;

    /// Single pipe from a source with head in [ys_min, ys_max] to a flat
    /// junction with head floor `y_min`; coefficient `r` in s²/m⁵.
    pub(crate) fn single_pipe_problem(ys: (f64, f64), y_min: f64, r: f64) -> SirProblem {
        let mut j = junction("j", 0.0, None);
        j.head_min_m = y_min;
        j.demand_max_lps = 200.0;
        let mut p = pipe("p", "s", "j", 1000.0, 0.2);
        p.friction_factor = Some(r / headloss_coefficient(1000.0, 0.2, 1.0, 9.81).unwrap());
        let net = Network::new(vec![source("s", 0.0, ys), j], vec![p]).unwrap();
        let status = PumpStatus::all_on(&net);
        SirProblem::new(net, status, vec![1], &["j"]).unwrap()
    }

    fn bisect_axis_max(prob: &SirProblem) -> f64 {
        // Feasibility is monotone in the single demand on this instance.
        let (mut lo, mut hi) = (0.0, prob.upper()[0]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if prob.check(&[mid]).unwrap().worst_residual <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn single_pipe_closed_form() {
        let prob = single_pipe_problem((40.0, 60.0), 20.0, 5.0e4);
        let closed = ((60.0f64 - 20.0) / 5.0e4).sqrt() * LPS_PER_CMS;
        let oracle = bisect_axis_max(&prob);
        assert!((oracle - closed).abs() / closed < 1e-9, "{oracle} vs {closed}");
        let res = maximize_support(&prob, &[1.0]).unwrap();
        assert!(res.converged);
        assert!((res.vertex[0] - closed).abs() / closed < 1e-6, "{:?} vs {closed}", res);
        assert!(prob.check(&res.vertex).unwrap().feasible);
    }

    #[test]
    fn negative_axis_hits_lower_bound() {
        let prob = single_pipe_problem((40.0, 60.0), 20.0, 5.0e4);
        let res = maximize_support(&prob, &[-1.0]).unwrap();
        assert_eq!(res.vertex, vec![0.0]);
        assert!(res.converged);
    }

    #[test]
    fn scaling_direction_does_not_move_the_argmax() {
        let prob = single_pipe_problem((40.0, 60.0), 20.0, 5.0e4);
        let a = maximize_support(&prob, &[1.0]).unwrap();
        let b = maximize_support(&prob, &[7.5]).unwrap();
        assert_eq!(a.vertex, b.vertex);
        assert!((b.objective - 7.5 * a.objective).abs() < 1e-9);
    }

    #[test]
    fn embedding_keeps_fixed_demands() {
        let nodes = vec![
            source("s", 0.0, (0.0, 50.0)),
            junction("a", 0.0, Some(2.0)),
            junction("b", 0.0, None),
            junction("c", 0.0, Some(3.5)),
        ];
        let edges =
            vec![pipe("1", "s", "a", 100.0, 0.2), pipe("2", "a", "b", 100.0, 0.2), pipe("3", "a", "c", 100.0, 0.2)];
        let net = Network::new(nodes, edges).unwrap();
        let st = PumpStatus::all_on(&net);
        let prob = SirProblem::new(net, st, vec![1, 1, 1], &["b"]).unwrap();
        assert_eq!(embed_demands(&prob, &[0.0]).unwrap(), vec![0.0, 2.0, 0.0, 3.5]);
        assert_eq!(embed_demands(&prob, &[4.25]).unwrap(), vec![0.0, 2.0, 4.25, 3.5]);
        assert_eq!(embed_demands(&prob, &[1.0, 2.0]), Err(SupportError::Dimension { expected: 1, got: 2 }));
    }

    #[test]
    fn identity_embedding_without_fixed_nodes() {
        let nodes = vec![source("s", 0.0, (0.0, 50.0)), junction("a", 0.0, None), junction("b", 0.0, None)];
        let edges = vec![pipe("1", "s", "a", 100.0, 0.2), pipe("2", "a", "b", 100.0, 0.2)];
        let net = Network::new(nodes, edges).unwrap();
        let st = PumpStatus::all_on(&net);
        let prob = SirProblem::new(net, st, vec![1, 1], &["a", "b"]).unwrap();
        assert_eq!(embed_demands(&prob, &[1.5, 2.5]).unwrap(), vec![0.0, 1.5, 2.5]);
    }

    #[test]
    fn problem_rejects_bad_variables() {
        let prob = single_pipe_problem((40.0, 60.0), 20.0, 5.0e4);
        let net = prob.network().clone();
        let st = prob.status().clone();
        assert!(SirProblem::new(net.clone(), st.clone(), vec![1], &[]).is_err());
        assert!(SirProblem::new(net.clone(), st.clone(), vec![1], &["s"]).is_err());
        assert!(SirProblem::new(net.clone(), st.clone(), vec![1], &["nope"]).is_err());
        assert!(SirProblem::new(net, st, vec![1], &["j", "j"]).is_err());
    }

    #[test]
    fn nominal_infeasible_is_an_error() {
        let prob = single_pipe_problem((10.0, 15.0), 20.0, 5.0e4);
        assert!(matches!(maximize_support(&prob, &[1.0]), Err(SupportError::NominalInfeasible(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let nodes = vec![
            source("s", 5.0, (0.0, 30.0)),
            junction("a", 0.0, Some(2.0)),
            junction("b", 1.0, None),
            junction("c", 0.5, None),
        ];
        let mut e =
            vec![pipe("1", "s", "a", 500.0, 0.15), pipe("2", "b", "a", 400.0, 0.1), pipe("3", "a", "c", 300.0, 0.08)];
        e[1].flow_min_lps = -100.0;
        let net = Network::new(nodes, e).unwrap();
        let st = PumpStatus::all_on(&net);
        let prob = SirProblem::new(net, st, vec![1, -1, 1], &["b", "c"]).unwrap();
        let model = RegionModel::new(&prob).unwrap();
        let x = [3.0, 1.7];
        let (v0, g0) = model.jacobian(&x);
        let h = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            let (vp, _) = model.jacobian(&xp);
            let (vm, _) = model.jacobian(&xm);
            for r in 0..v0.len() {
                let fd = (vp[r] - vm[r]) / (2.0 * h);
                assert!((fd - g0[r][k]).abs() < 1e-6 * (1.0 + fd.abs()), "row {r} var {k}: {fd} vs {}", g0[r][k]);
            }
        }
    }
}

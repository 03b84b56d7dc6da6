//! Single-slot optimal pump scheduling by exhaustive enumeration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulics::{HydraulicState, HydraulicsError, PumpStatus, RegimeEvaluator, SignPattern};
use crate::network::Network;

pub const WATER_DENSITY: f64 = 1000.0;
pub const DEFAULT_EFFICIENCY: f64 = 0.75;
pub const DEFAULT_TARIFF: f64 = 1.0;
/// Enumeration is capped; 2^MAX_PUMPS combinations at most.
pub const MAX_PUMPS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("invalid cost parameter: {0}")]
    Parameter(String),
    #[error("too many pumps for enumeration ({0} > {MAX_PUMPS})")]
    TooManyPumps(usize),
    #[error("no feasible pump status; least violated combination {states:?} ({reason})")]
    Infeasible { states: Vec<bool>, reason: String },
    #[error(transparent)]
    Hydraulics(#[from] HydraulicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub efficiency: f64,
    /// Price per joule.
    pub tariff: f64,
    pub slot_seconds: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { efficiency: DEFAULT_EFFICIENCY, tariff: DEFAULT_TARIFF, slot_seconds: 1.0 }
    }
}

/// Energy price of running one pump for a slot: `tariff·ρ·g·f·G/η·t`.
/// Flow in m³/s, gain in metres.
pub fn pump_energy_cost(flow_cms: f64, gain_m: f64, gravity: f64, params: &CostParams) -> Result<f64, SchedulerError> {
    if !(params.efficiency > 0.0 && params.efficiency <= 1.0) {
        return Err(SchedulerError::Parameter(format!("efficiency {} not in (0, 1]", params.efficiency)));
    }
    if !(params.tariff >= 0.0 && params.slot_seconds > 0.0) {
        return Err(SchedulerError::Parameter("tariff and slot length must be nonnegative".into()));
    }
    if flow_cms < 0.0 || gain_m < 0.0 {
        return Err(SchedulerError::Parameter(format!("pump flow {flow_cms} and gain {gain_m} must be nonnegative")));
    }
    Ok(params.tariff * WATER_DENSITY * gravity * flow_cms * gain_m / params.efficiency * params.slot_seconds)
}

/// Outcome for one status combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsCandidate {
    pub pump_states: Vec<bool>,
    pub feasible: bool,
    /// `None` when infeasible.
    pub energy_cost: Option<f64>,
    /// Worst normalized residual; infinite for structural failures.
    pub worst_residual: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsSolution {
    pub pump_status: PumpStatus,
    /// On/off per pump, in [`Network::pump_edges`] order.
    pub pump_states: Vec<bool>,
    pub sign_pattern: SignPattern,
    pub nominal_state: HydraulicState,
    pub energy_cost: f64,
    pub candidates: Vec<OpsCandidate>,
}

/// Evaluate one combination at the forecast demands.
pub fn evaluate_status(
    net: &Network,
    forecast_lps: &[f64],
    pump_states: &[bool],
    params: &CostParams,
) -> Result<(OpsCandidate, Option<HydraulicState>), SchedulerError> {
    let status = PumpStatus::from_pumps(net, pump_states)?;
    let structural = |reason: String| OpsCandidate {
        pump_states: pump_states.to_vec(),
        feasible: false,
        energy_cost: None,
        worst_residual: f64::INFINITY,
        reason,
    };
    let unconstrained = vec![0i8; net.edge_count()];
    let ev = match RegimeEvaluator::new(net, &status, &unconstrained) {
        Ok(ev) => ev,
        Err(HydraulicsError::Length { .. }) => unreachable!("lengths derive from the network"),
        Err(e) => return Ok((structural(e.to_string()), None)),
    };
    let (verdict, state) = match ev.operating_point(forecast_lps) {
        Ok(r) => r,
        Err(e @ HydraulicsError::Length { .. }) => return Err(e.into()),
        Err(e) => return Ok((structural(e.to_string()), None)),
    };
    if !verdict.feasible {
        let reason = format!("{} violated by {:.3e}", verdict.worst_constraint, verdict.worst_residual);
        let cand = OpsCandidate {
            pump_states: pump_states.to_vec(),
            feasible: false,
            energy_cost: None,
            worst_residual: verdict.worst_residual,
            reason,
        };
        return Ok((cand, None));
    }
    let mut cost = 0.0;
    for e in net.pump_edges() {
        if !status.is_active(e) {
            continue;
        }
        let f = state.flows_cms[e];
        if f < 0.0 {
            return Ok((structural(format!("pump {} runs backwards", net.edge(e).id)), None));
        }
        cost += pump_energy_cost(f, state.pump_gains_m[e].max(0.0), net.gravity(), params)?;
    }
    let cand = OpsCandidate {
        pump_states: pump_states.to_vec(),
        feasible: true,
        energy_cost: Some(cost),
        worst_residual: verdict.worst_residual,
        reason: String::new(),
    };
    Ok((cand, Some(state)))
}

/// All on/off combinations in lexicographic order (off before on).
pub fn status_combinations(pumps: usize) -> Result<Vec<Vec<bool>>, SchedulerError> {
    if pumps > MAX_PUMPS {
        return Err(SchedulerError::TooManyPumps(pumps));
    }
    Ok((0..1usize << pumps).map(|m| (0..pumps).map(|k| m >> (pumps - 1 - k) & 1 == 1).collect()).collect())
}

/// Cheapest feasible status; ties go to fewer pumps on, then lexicographic order.
pub fn solve_ops(net: &Network, forecast_lps: &[f64], params: &CostParams) -> Result<OpsSolution, SchedulerError> {
    let mut candidates = Vec::new();
    let mut best: Option<(f64, usize, Vec<bool>, HydraulicState)> = None;
    for states in status_combinations(net.pump_edges().len())? {
        let (cand, state) = evaluate_status(net, forecast_lps, &states, params)?;
        if let (Some(cost), Some(state)) = (cand.energy_cost, state) {
            let on = states.iter().filter(|&&b| b).count();
            let better = match &best {
                None => true,
                Some((bc, bon, bs, _)) => (cost, on, &states) < (*bc, *bon, bs),
            };
            if better {
                best = Some((cost, on, states.clone(), state));
            }
        }
        candidates.push(cand);
    }
    match best {
        Some((energy_cost, _, pump_states, nominal_state)) => Ok(OpsSolution {
            pump_status: nominal_state.pump_status.clone(),
            pump_states,
            sign_pattern: nominal_state.sign_pattern.clone(),
            nominal_state,
            energy_cost,
            candidates,
        }),
        None => {
            let least = candidates
                .iter()
                .min_by(|a, b| a.worst_residual.total_cmp(&b.worst_residual))
                .expect("at least one combination");
            Err(SchedulerError::Infeasible { states: least.pump_states.clone(), reason: least.reason.clone() })
        }
    }
}

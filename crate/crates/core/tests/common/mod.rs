#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wds_sir::hydraulics::{check_feasibility, solve_tree_flows, PumpStatus, RegimeEvaluator};
use wds_sir::io::{load_bundled, NetworkFile};
use wds_sir::scheduler::{pump_energy_cost, status_combinations, OpsSolution};
use wds_sir::support::SirProblem;

pub const SYSTEMS: [&str; 2] = ["system1", "system2"];

pub fn bundled(name: &str) -> (NetworkFile, OpsSolution, SirProblem) {
    let file = load_bundled(name).expect("bundled name").expect("bundled file parses");
    let (ops, prob) = wds_sir::problem_from_file(&file, None).expect("region problem");
    (file, ops, prob)
}

/// Cheapest feasible pump states at the nominal demands by direct scan:
/// flows from the tree, verdict with free signs, cost from the witness gains,
/// ties to fewer pumps on.
pub fn brute_force_ops(file: &NetworkFile) -> Option<(Vec<bool>, f64)> {
    let net = &file.network;
    let demands = net.nominal_demands_lps();
    let signs = vec![0i8; net.edge_count()];
    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    for states in status_combinations(net.pump_edges().len()).unwrap() {
        let status = PumpStatus::from_pumps(net, &states).unwrap();
        let Ok(flows) = solve_tree_flows(net, &demands, &status) else { continue };
        if !check_feasibility(net, &demands, &status, &signs).map(|v| v.feasible).unwrap_or(false) {
            continue;
        }
        let (_, state) = RegimeEvaluator::new(net, &status, &signs).unwrap().operating_point(&demands).unwrap();
        let cost: f64 = net
            .pump_edges()
            .into_iter()
            .filter(|&e| status.is_active(e))
            .map(|e| pump_energy_cost(flows.flows_cms[e], state.pump_gains_m[e], net.gravity(), &file.cost).unwrap())
            .sum();
        let on = states.iter().filter(|&&b| b).count();
        let better = match &best {
            None => true,
            Some((bon, bcost, _)) => cost < *bcost || (cost == *bcost && on < *bon),
        };
        if better {
            best = Some((on, cost, states));
        }
    }
    best.map(|(_, cost, states)| (states, cost))
}

/// Uniform points of the variable box that pass the oracle.
pub fn feasible_points(prob: &SirProblem, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count * 1000 {
        if out.len() == count {
            break;
        }
        let x: Vec<f64> = prob.lower().iter().zip(prob.upper()).map(|(&l, &u)| rng.gen_range(l..=u)).collect();
        if prob.check(&x).unwrap().feasible {
            out.push(x);
        }
    }
    assert_eq!(out.len(), count, "feasible set too thin to sample");
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest entrywise gap relative to the largest magnitude in `b`.
pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// One pipe from a source with pressure head `ys` to a junction whose
/// pressure must stay above `y_min`.
pub const SINGLE_PIPE: &str = r#"
schema_version = 1
name = "single-pipe"

[defaults]
friction_factor = 0.02

[sir]
variable_nodes = ["j"]

[[nodes]]
id = "s"
kind = "source"
elevation_m = 0.0
head_min_m = 40.0
head_max_m = 60.0
inject_min_lps = 0.0
inject_max_lps = 1000.0

[[nodes]]
id = "j"
kind = "junction"
elevation_m = 0.0
head_min_m = 20.0
head_max_m = 100.0
demand_min_lps = 0.0
demand_max_lps = 200.0

[[edges]]
id = "p"
from = "s"
to = "j"
length_m = 1000.0
diameter_m = 0.2
flow_min_lps = 0.0
flow_max_lps = 1000.0
"#;

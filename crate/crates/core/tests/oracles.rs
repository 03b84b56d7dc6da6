//! Fixed reference values, each checked against an independent computation.

mod common;

use std::collections::HashMap;

use approx::assert_relative_eq;
use wds_sir::hydraulics::{check_feasibility, propagate_heads, solve_tree_flows, PumpStatus};
use wds_sir::io::{export, parse_network, Artifact, Format, NetworkFile, SequenceDocument};
use wds_sir::network::{headloss_coefficient, validate, NodeKind, LPS_PER_CMS};
use wds_sir::oracle::{agreement, grid_screen};
use wds_sir::polytope::{build_sequence, expand_once, starting_polytope, Polytope};
use wds_sir::scheduler::{pump_energy_cost, solve_ops, CostParams};
use wds_sir::support::{embed_demands, maximize_support};

use common::{bundled, dot};

/// Source `s` and junction `j` joined by one pipe; flat, generous boxes.
fn one_pipe(source_head: (f64, f64), floor: f64, friction: f64, demand_max: f64) -> NetworkFile {
    let text = format!(
        r#"
schema_version = 1
[defaults]
friction_factor = {friction:e}
[sir]
variable_nodes = ["j"]
[[nodes]]
id = "s"
kind = "source"
elevation_m = 0.0
head_min_m = {}
head_max_m = {}
inject_min_lps = 0.0
inject_max_lps = 1.0e6
[[nodes]]
id = "j"
kind = "junction"
elevation_m = 0.0
head_min_m = {floor}
head_max_m = 1000.0
demand_min_lps = 0.0
demand_max_lps = {demand_max}
[[edges]]
id = "p"
from = "s"
to = "j"
length_m = 1000.0
diameter_m = 0.15
flow_min_lps = -1.0e6
flow_max_lps = 1.0e6
"#,
        source_head.0, source_head.1
    );
    parse_network(&text).unwrap()
}

/// Friction factor giving coefficient `r` on the one-pipe geometry.
fn friction_for(r: f64) -> f64 {
    r / headloss_coefficient(1000.0, 0.15, 1.0, 9.81).unwrap()
}

#[test]
fn headloss_coefficient_by_hand() {
    let r = headloss_coefficient(1000.0, 0.15, 0.02, 9.81).unwrap();
    // 8·0.02·1000 / (π²·9.81·0.15⁵)
    let hand = 160.0 / (9.869_604_401_089_358 * 9.81 * 7.59375e-5);
    assert_relative_eq!(r, hand, max_relative = 1e-12);
    assert_relative_eq!(r, 2.176e4, max_relative = 1e-3);
}

#[test]
fn single_pipe_head_drop() {
    let file = one_pipe((0.0, 100.0), 0.0, friction_for(100.0), 100.0);
    let net = &file.network;
    assert_relative_eq!(net.resistance(0), 100.0, max_relative = 1e-12);
    let heads = propagate_heads(net, &[0.01], &PumpStatus::all_on(net), &[None], &[Some(50.0), None]).unwrap();
    assert_relative_eq!(heads[0] - heads[1], 0.01, max_relative = 1e-12);
}

#[test]
fn single_pipe_interval_verdict() {
    // R·f² = 6 m at 10 L/s; best head at the node is 100 − 6 = 94 < 95.
    let file = one_pipe((90.0, 100.0), 95.0, friction_for(6.0 / 1e-4), 100.0);
    let net = &file.network;
    let v = check_feasibility(net, &[0.0, 10.0], &PumpStatus::all_on(net), &[1]).unwrap();
    assert!(!v.feasible);
    assert_relative_eq!(v.worst_residual, 1.0, max_relative = 1e-9);
}

#[test]
fn single_pipe_support_matches_inversion() {
    let (ys, y_min, r) = ((40.0, 60.0), 20.0, 5.0e4);
    let file = one_pipe(ys, y_min, friction_for(r), 200.0);
    let (_, prob) = wds_sir::problem_from_file(&file, None).unwrap();
    let closed = ((ys.1 - y_min) / r).sqrt() * LPS_PER_CMS;
    // Bisection on the oracle as the independent check.
    let (mut lo, mut hi) = (0.0, 200.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if prob.check(&[mid]).unwrap().worst_residual <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert_relative_eq!(lo, closed, max_relative = 1e-9);
    let res = maximize_support(&prob, &[1.0]).unwrap();
    assert!(res.converged);
    assert_relative_eq!(res.vertex[0], closed, max_relative = 1e-6);
}

#[test]
fn pump_cost_by_hand() {
    let params = CostParams { efficiency: 1.0, tariff: 1.0, slot_seconds: 1.0 };
    let cost = pump_energy_cost(0.01, 10.0, 9.81, &params).unwrap();
    assert_relative_eq!(cost, 1000.0 * 9.81 * 0.01 * 10.0, max_relative = 1e-12);
    assert_relative_eq!(cost, 981.0, max_relative = 1e-12);
}

#[test]
fn bundled_networks_validate() {
    for name in common::SYSTEMS {
        let (file, _, _) = bundled(name);
        assert!(validate(&file.network).is_empty());
        let net = &file.network;
        assert_eq!(net.incidence().rank(), net.edge_count());
    }
}

#[test]
fn system1_structure() {
    let (file, _, _) = bundled("system1");
    let net = &file.network;
    // Nine network nodes plus the reservoir that refills the tank.
    assert_eq!(net.node_count(), 10);
    assert_eq!(net.pump_edges().len(), 1);
    assert_eq!(net.edge_count() - net.pump_edges().len(), 8);
    let tank = net.node(net.node_index("1").unwrap());
    assert_eq!(tank.kind, NodeKind::Source);
    let pump = net.edge(net.pump_edges()[0]);
    assert_eq!(pump.to, "1");
    let demands: HashMap<&str, f64> = [("2", 4.0), ("4", 4.75), ("6", 6.0), ("7", 5.0), ("8", 3.0)].into();
    for (id, d) in &demands {
        let n = net.node(net.node_index(id).unwrap());
        assert_eq!(n.fixed_demand_lps, Some(*d), "node {id}");
    }
    for e in net.edges().iter().filter(|e| !e.is_pump()) {
        let (l, d) = (e.length_m.unwrap(), e.diameter_m.unwrap());
        assert!((500.0..=1000.0).contains(&l) && (0.08..=0.15).contains(&d), "pipe {}", e.id);
    }
}

#[test]
fn system2_structure() {
    let (file, _, _) = bundled("system2");
    let net = &file.network;
    assert_eq!(net.node_count(), 9);
    assert_eq!(net.edge_count(), 8);
    assert_eq!(net.pump_edges().len(), 1);
    let lengths: Vec<f64> = net.edges().iter().map(|e| e.length_m.unwrap()).collect();
    let diameters: Vec<f64> = net.edges().iter().map(|e| e.diameter_m.unwrap()).collect();
    let (lmin, lmax) = lengths.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let (dmin, dmax) = diameters.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert_relative_eq!(lmin, 914.0, max_relative = 1e-3);
    assert_relative_eq!(lmax, 2438.0, max_relative = 1e-3);
    assert_relative_eq!(dmin, 0.1016, max_relative = 1e-3);
    assert_relative_eq!(dmax, 0.3556, max_relative = 1e-3);
}

/// Downstream demand of every edge by recursion over the undirected tree.
fn subtree_sums(file: &NetworkFile, status: &PumpStatus, root: &str, demands: &[f64]) -> HashMap<String, f64> {
    let net = &file.network;
    fn walk(
        net: &wds_sir::network::Network,
        status: &PumpStatus,
        v: usize,
        from: Option<usize>,
        demands: &[f64],
        out: &mut HashMap<String, f64>,
    ) -> f64 {
        let mut total = demands[v];
        for e in 0..net.edge_count() {
            if Some(e) == from || !status.is_active(e) {
                continue;
            }
            let (a, b) = net.endpoints(e);
            let next = if a == v {
                b
            } else if b == v {
                a
            } else {
                continue;
            };
            let below = walk(net, status, next, Some(e), demands, out);
            out.insert(net.edge(e).id.clone(), below);
            total += below;
        }
        total
    }
    let mut out = HashMap::new();
    walk(net, status, net.node_index(root).unwrap(), None, demands, &mut out);
    out
}

#[test]
fn root_pipe_flow() {
    let (file, ops, _) = bundled("system1");
    let net = &file.network;
    let demands = net.nominal_demands_lps();
    let flows = solve_tree_flows(net, &demands, &ops.pump_status).unwrap().flows_lps();
    let sums = subtree_sums(&file, &ops.pump_status, "1", &demands);
    assert_relative_eq!(sums["1"], 22.75, max_relative = 1e-12);
    for (e, edge) in net.edges().iter().enumerate() {
        if let Some(s) = sums.get(&edge.id) {
            assert_relative_eq!(flows[e].abs(), s, max_relative = 1e-12);
        }
    }
    assert_relative_eq!(flows[net.edges().iter().position(|e| e.id == "1").unwrap()], 22.75, max_relative = 1e-12);
}

#[test]
fn scheduling_matches_reference_statuses() {
    let (file, ops, _) = bundled("system1");
    assert_eq!(ops.pump_states, vec![false]);
    assert_eq!(ops.energy_cost, 0.0);
    let net = &file.network;
    assert!(check_feasibility(net, &net.nominal_demands_lps(), &ops.pump_status, &ops.sign_pattern).unwrap().feasible);

    let (file, ops, _) = bundled("system2");
    assert_eq!(ops.pump_states, vec![true]);
    let off = ops.candidates.iter().find(|c| c.pump_states == vec![false]).unwrap();
    assert!(!off.feasible && off.worst_residual.is_infinite());
    let net = &file.network;
    let again = solve_ops(net, &net.nominal_demands_lps(), &file.cost).unwrap();
    assert_eq!(again, ops);
}

#[test]
fn embedding_keeps_fixed_demands() {
    let (_, _, prob) = bundled("system1");
    let d = embed_demands(&prob, &[4.2, 1.1, 0.3]).unwrap();
    let net = prob.network();
    let at = |id: &str| d[net.node_index(id).unwrap()];
    for (id, v) in [("2", 4.0), ("4", 4.75), ("6", 6.0), ("7", 5.0), ("8", 3.0), ("3", 4.2), ("5", 1.1), ("9", 0.3)] {
        assert_eq!(at(id), v, "node {id}");
    }
}

#[test]
fn axis_maxima_inside_the_boxes() {
    for name in common::SYSTEMS {
        let (_, _, prob) = bundled(name);
        for axis in 0..3 {
            let mut dir = [0.0; 3];
            dir[axis] = 1.0;
            let res = maximize_support(&prob, &dir).unwrap();
            let top = res.vertex[axis];
            assert!(top > prob.lower()[axis] && top < prob.upper()[axis], "{name} axis {axis}: {top}");
        }
    }
}

#[test]
fn first_expansion_has_one_oblique_facet() {
    for name in common::SYSTEMS {
        let (_, _, prob) = bundled(name);
        let (start, _) = starting_polytope(&prob).unwrap();
        assert_eq!(start.vertices.len(), 4);
        let (next, info) = expand_once(&prob, &start, 1).unwrap();
        assert_eq!(info.facets_considered, 1);
        assert!(info.new_vertices <= 1 && next.vertices.len() <= 5);

        // Exhaustive facet enumeration over the five points.
        let pts = &next.vertices;
        let mut planes = 0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                for k in j + 1..pts.len() {
                    let u: Vec<f64> = (0..3).map(|a| pts[j][a] - pts[i][a]).collect();
                    let w: Vec<f64> = (0..3).map(|a| pts[k][a] - pts[i][a]).collect();
                    let n = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
                    let side: Vec<f64> = pts.iter().map(|p| dot(&n, p) - dot(&n, &pts[i])).collect();
                    let scale = n.iter().map(|x| x * x).sum::<f64>().sqrt() * 1e-7;
                    if side.iter().all(|s| *s <= scale) || side.iter().all(|s| *s >= -scale) {
                        planes += 1;
                    }
                }
            }
        }
        let triangles: usize = next.facets.iter().map(|f| f.vertices.len() - 2).sum();
        assert_eq!(planes, triangles, "{name}");
    }
}

#[test]
fn planar_start_spawns_one_vertex() {
    let (file, _, _) = bundled("system1");
    let vars = vec!["3".to_string(), "5".to_string()];
    let (_, prob) = wds_sir::problem_from_file(&file, Some(&vars)).unwrap();
    let (start, _) = starting_polytope(&prob).unwrap();
    assert_eq!(start.vertices.len(), 3);
    let (next, info) = expand_once(&prob, &start, 1).unwrap();
    assert_eq!(info.new_vertices, 1);
    assert_eq!(next.vertices.len(), 4);
    assert!(next.volume().unwrap() > start.volume().unwrap());
}

#[test]
fn point_past_a_facet_is_outside() {
    let (_, _, prob) = bundled("system2");
    let seq = build_sequence(&prob, 3).unwrap();
    let eps = 1e-3 * prob.box_diagonal();
    for poly in &seq.polytopes {
        for f in &poly.facets {
            let v = &poly.vertices[f.vertices[0]];
            let out: Vec<f64> = v.iter().zip(&f.normal).map(|(x, n)| x + eps * n).collect();
            assert!(!poly.contains(&out).unwrap());
        }
    }
}

#[test]
fn sequence_has_four_polytopes_and_chart_ends_at_one() {
    let (_, _, prob) = bundled("system1");
    let seq = build_sequence(&prob, 3).unwrap();
    assert_eq!(seq.polytopes.len(), 4);
    let doc = SequenceDocument::new(prob.variable_ids(), seq).unwrap();
    assert_eq!(*doc.relative_volumes.last().unwrap(), 1.0);
    let svg = String::from_utf8(export(&Artifact::Sequence(&doc), Format::Svg).unwrap()).unwrap();
    assert_eq!(svg.matches("<rect x=").count(), 4);
    assert!(svg.contains("data-value=\"1.000000\""));
}

#[test]
fn grid_of_nine_has_729_points() {
    let (_, _, prob) = bundled("system1");
    let screen = grid_screen(&prob, 9, &[(0.0, 20.0), (0.0, 13.0), (0.0, 7.0)]).unwrap();
    assert_eq!(screen.total, 729);
    assert_eq!(screen.verdicts.len(), 729);
}

#[test]
fn box_shaped_region_is_fully_covered() {
    // Heads far above any loss: every demand in the box is feasible.
    let mut text = String::from(
        "schema_version = 1\n[sir]\nvariable_nodes = [\"a\", \"b\"]\n\
         [[nodes]]\nid = \"s\"\nkind = \"source\"\nelevation_m = 0.0\nhead_min_m = 500.0\nhead_max_m = 500.0\n\
         inject_min_lps = 0.0\ninject_max_lps = 1000.0\n",
    );
    for id in ["a", "b"] {
        text += &format!(
            "[[nodes]]\nid = \"{id}\"\nkind = \"junction\"\nelevation_m = 0.0\nhead_min_m = 0.0\nhead_max_m = 1000.0\n\
             demand_min_lps = 0.0\ndemand_max_lps = 5.0\n"
        );
    }
    for (id, to) in [("pa", "a"), ("pb", "b")] {
        text += &format!(
            "[[edges]]\nid = \"{id}\"\nfrom = \"s\"\nto = \"{to}\"\nlength_m = 100.0\ndiameter_m = 0.3\n\
             flow_min_lps = 0.0\nflow_max_lps = 100.0\n"
        );
    }
    let file = parse_network(&text).unwrap();
    let (_, prob) = wds_sir::problem_from_file(&file, None).unwrap();
    let seq = build_sequence(&prob, 3).unwrap();
    let screen = grid_screen(&prob, 9, &[(0.0, 5.0), (0.0, 5.0)]).unwrap();
    assert_eq!(screen.feasible, 81);
    let report = agreement(&seq, &screen).unwrap();
    assert_eq!(report.polytopes.last().unwrap().coverage, 1.0);
    let last: &Polytope = seq.last().unwrap();
    assert_relative_eq!(last.volume().unwrap(), 25.0, max_relative = 1e-12);
}

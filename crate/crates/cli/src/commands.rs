use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use wds_sir::io::export::{to_json, EXPORT_SCHEMA_VERSION};
use wds_sir::io::{export, Artifact, ExportError, Format, FormatError, GridDocument, SequenceDocument};
use wds_sir::network::NodeKind;
use wds_sir::oracle::{agreement, axis_ranges, convexity_probe, grid_screen};
use wds_sir::polytope::{build_sequence, starting_polytope, PolytopeSequence};
use wds_sir::scheduler::{solve_ops, OpsSolution, SchedulerError};
use wds_sir::support::SirProblem;

use crate::input::{self, LoadError, Loaded};
use crate::rundir::{self, Settings};
use crate::{Cli, Command, Failure, Region, What};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate { input } => validate(cli, input),
        Command::Ops { input } => ops(cli, input),
        Command::Sir { input, region, out } => sir(cli, input, region, out.as_deref()),
        Command::Check { input, demand, region } => check(cli, input, region, demand),
        Command::Grid { input, k, ranges, region, out } => {
            grid(cli, input, region, *k, ranges.as_deref(), out.as_deref())
        }
        Command::Probe { input, trials, seed, ranges, region } => {
            probe(cli, input, region, *trials, *seed, ranges.as_deref())
        }
        Command::Export { run_dir, what, format, index, output } => {
            export_cmd(run_dir, *what, *format, *index, output.as_deref())
        }
    }
}

// Output stops quietly when the reader goes away.
macro_rules! out {
    ($($t:tt)*) => {{
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn emit<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = to_json(value).map_err(|e| Failure::Error(e.to_string()))?;
    out!("{text}");
    Ok(())
}

fn fail<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Error(e.to_string())
}

fn on_off(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

struct Setup {
    loaded: Loaded,
    ops: OpsSolution,
    prob: SirProblem,
    rounds: usize,
}

fn setup(input: &str, region: &Region) -> Result<Setup, Failure> {
    let loaded = input::load(input)?;
    let vars = region.vars.clone().unwrap_or_else(|| loaded.file.sir.variable_nodes.clone());
    if vars.is_empty() {
        return Err(Failure::Usage(format!("{input}: no variable nodes; pass --vars")));
    }
    let rounds = region.rounds.unwrap_or(loaded.file.sir.rounds);
    let (ops, prob) = wds_sir::problem_from_file(&loaded.file, Some(&vars))?;
    Ok(Setup { loaded, ops, prob, rounds })
}

impl Setup {
    fn pump_ids(&self) -> Vec<String> {
        let net = self.prob.network();
        net.pump_edges().into_iter().map(|e| net.edge(e).id.clone()).collect()
    }

    fn pump_label(&self) -> String {
        let ids = self.pump_ids();
        if ids.is_empty() {
            return "none".into();
        }
        ids.iter()
            .zip(&self.ops.pump_states)
            .map(|(id, on)| format!("{id}={}", on_off(*on)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

// validate

#[derive(Serialize)]
struct LocatedMessage {
    line: usize,
    column: usize,
    message: String,
}

#[derive(Serialize)]
struct ValidateReport {
    input: String,
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    nodes: usize,
    sources: usize,
    pipes: usize,
    pumps: Vec<String>,
    variable_nodes: Vec<String>,
    errors: Vec<LocatedMessage>,
}

fn validate(cli: &Cli, input: &str) -> Result<(), Failure> {
    let loaded = match input::load(input) {
        Ok(l) => l,
        Err(LoadError::Format(label, err)) => {
            let errors: Vec<LocatedMessage> = match err {
                FormatError::Syntax { at, message } => vec![(at, message)],
                FormatError::Invalid(list) => list,
            }
            .into_iter()
            .map(|(at, message)| LocatedMessage { line: at.line, column: at.column, message })
            .collect();
            for e in &errors {
                eprintln!("{label}:{}:{}: {}", e.line, e.column, e.message);
            }
            if cli.json {
                emit(&ValidateReport {
                    input: label,
                    valid: false,
                    name: None,
                    nodes: 0,
                    sources: 0,
                    pipes: 0,
                    pumps: Vec::new(),
                    variable_nodes: Vec::new(),
                    errors,
                })?;
            } else {
                outln!("{label}: invalid ({} error(s))", errors.len());
            }
            return Err(Failure::Finding);
        }
        Err(LoadError::Failure(f)) => return Err(f),
    };
    let net = &loaded.file.network;
    let vars = loaded.file.sir.variable_nodes.clone();
    let mut errors = Vec::new();
    for v in &vars {
        match net.node_index(v) {
            None => errors.push(format!("variable node '{v}' does not exist")),
            Some(i) if net.node(i).kind == NodeKind::Source => errors.push(format!("variable node '{v}' is a source")),
            Some(_) => {}
        }
    }
    let pumps: Vec<String> = net.pump_edges().into_iter().map(|e| net.edge(e).id.clone()).collect();
    let report = ValidateReport {
        input: loaded.label.clone(),
        valid: errors.is_empty(),
        name: loaded.file.name.clone(),
        nodes: net.node_count(),
        sources: net.source_nodes().len(),
        pipes: net.edge_count() - pumps.len(),
        pumps,
        variable_nodes: vars,
        errors: errors.iter().map(|m| LocatedMessage { line: 0, column: 0, message: m.clone() }).collect(),
    };
    if cli.json {
        emit(&report)?;
    } else {
        outln!("{}: {}", report.input, if report.valid { "valid" } else { "invalid" });
        outln!("  nodes      {} ({} sources)", report.nodes, report.sources);
        outln!("  pipes      {}", report.pipes);
        outln!("  pumps      {}", if report.pumps.is_empty() { "none".into() } else { report.pumps.join(", ") });
        let vars = report.variable_nodes.join(", ");
        outln!("  variables  {}", if vars.is_empty() { "none" } else { &vars });
    }
    for e in &errors {
        eprintln!("{}: {e}", report.input);
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Finding)
    }
}

// ops

#[derive(Serialize)]
struct OpsReport<'a> {
    input: &'a str,
    pump_ids: Vec<String>,
    node_ids: Vec<String>,
    edge_ids: Vec<String>,
    solution: &'a OpsSolution,
}

fn ops(cli: &Cli, input: &str) -> Result<(), Failure> {
    let loaded = input::load(input)?;
    let net = &loaded.file.network;
    let sol = match solve_ops(net, &net.nominal_demands_lps(), &loaded.file.cost) {
        Ok(s) => s,
        Err(SchedulerError::Infeasible { states, reason }) => {
            eprintln!(
                "{input}: no pump status is feasible at the nominal demands; least violated {states:?}: {reason}"
            );
            if cli.json {
                emit(
                    &serde_json::json!({ "input": input, "feasible": false, "least_violated": states, "reason": reason }),
                )?;
            }
            return Err(Failure::Finding);
        }
        Err(e) => return Err(fail(e)),
    };
    let pump_ids: Vec<String> = net.pump_edges().into_iter().map(|e| net.edge(e).id.clone()).collect();
    if cli.json {
        return emit(&OpsReport {
            input,
            pump_ids,
            node_ids: net.nodes().iter().map(|n| n.id.clone()).collect(),
            edge_ids: net.edges().iter().map(|e| e.id.clone()).collect(),
            solution: &sol,
        });
    }
    let states = |s: &[bool]| {
        if s.is_empty() {
            return "(no pumps)".to_string();
        }
        pump_ids.iter().zip(s).map(|(id, on)| format!("{id}={}", on_off(*on))).collect::<Vec<_>>().join(" ")
    };
    outln!("status       {}", states(&sol.pump_states));
    outln!("energy cost  {:.6}", sol.energy_cost);
    outln!();
    outln!("candidates");
    for c in &sol.candidates {
        let verdict = if c.feasible { "feasible" } else { "infeasible" };
        let cost = c.energy_cost.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        out!("  {:<16} {:<10} cost {:>14}  residual {:.6e}", states(&c.pump_states), verdict, cost, c.worst_residual);
        if c.reason.is_empty() {
            outln!();
        } else {
            outln!("  {}", c.reason);
        }
    }
    let st = &sol.nominal_state;
    outln!();
    outln!("{:<10} {:>5} {:>12} {:>10}", "edge", "sign", "flow_lps", "gain_m");
    for (e, edge) in net.edges().iter().enumerate() {
        outln!(
            "{:<10} {:>5} {:>12.6} {:>10.6}",
            edge.id,
            sol.sign_pattern[e],
            st.flows_cms[e] * 1000.0,
            st.pump_gains_m[e]
        );
    }
    outln!();
    outln!("{:<10} {:>12} {:>12}", "node", "demand_lps", "pressure_m");
    let demands = net.nominal_demands_lps();
    for (i, node) in net.nodes().iter().enumerate() {
        outln!("{:<10} {:>12.6} {:>12.6}", node.id, demands[i], st.heads_m[i]);
    }
    Ok(())
}

// sir

#[derive(Serialize)]
struct PolytopeSummary<'a> {
    index: usize,
    volume: f64,
    relative_volume: f64,
    facets: usize,
    vertices: &'a [Vec<f64>],
}

#[derive(Serialize)]
struct StepSummary<'a> {
    round: usize,
    facets_considered: usize,
    supports: usize,
    unconverged: usize,
    new_vertices: usize,
    volume: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_s: Option<f64>,
    errors: &'a [String],
}

#[derive(Serialize)]
struct SirReport<'a> {
    input: &'a str,
    variable_nodes: &'a [String],
    pump_states: &'a [bool],
    rounds: usize,
    polytopes: Vec<PolytopeSummary<'a>>,
    steps: Vec<StepSummary<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    run_dir: Option<String>,
}

fn sequence_document(s: &Setup, seq: PolytopeSequence, no_timing: bool) -> Result<SequenceDocument, Failure> {
    let mut doc = SequenceDocument::new(s.prob.variable_ids(), seq).map_err(fail)?;
    if no_timing {
        for st in &mut doc.sequence.steps {
            st.elapsed_s = 0.0;
        }
    }
    Ok(doc)
}

fn sir(cli: &Cli, input: &str, region: &Region, out: Option<&Path>) -> Result<(), Failure> {
    let s = setup(input, region)?;
    let started = Instant::now();
    let seq = build_sequence(&s.prob, s.rounds).map_err(fail)?;
    let elapsed = started.elapsed().as_secs_f64();
    let doc = sequence_document(&s, seq, cli.no_timing)?;
    for st in &doc.sequence.steps {
        for e in &st.errors {
            eprintln!("warning: round {}: {e}", st.round);
        }
    }
    if let Some(dir) = out {
        write_run(dir, &s, &doc)?;
    }
    let steps: Vec<StepSummary> = doc
        .sequence
        .steps
        .iter()
        .map(|st| StepSummary {
            round: st.round,
            facets_considered: st.facets_considered,
            supports: st.supports.len(),
            unconverged: st.supports.iter().filter(|r| !r.result.converged).count(),
            new_vertices: st.new_vertices,
            volume: st.volume,
            elapsed_s: (!cli.no_timing).then_some(st.elapsed_s),
            errors: &st.errors,
        })
        .collect();
    let polytopes: Vec<PolytopeSummary> = doc
        .sequence
        .polytopes
        .iter()
        .enumerate()
        .map(|(i, p)| PolytopeSummary {
            index: i,
            volume: doc.sequence.steps[i].volume,
            relative_volume: doc.relative_volumes[i],
            facets: p.facets.len(),
            vertices: &p.vertices,
        })
        .collect();
    if cli.json {
        return emit(&SirReport {
            input,
            variable_nodes: &doc.variable_nodes,
            pump_states: &s.ops.pump_states,
            rounds: s.rounds,
            polytopes,
            steps,
            run_dir: out.map(|d| d.display().to_string()),
        });
    }
    outln!("variable nodes  {}", doc.variable_nodes.join(", "));
    outln!("pumps           {}", s.pump_label());
    outln!();
    out!("{:>4} {:>9} {:>7} {:>5} {:>14} {:>9}", "step", "vertices", "facets", "new", "volume", "relative");
    outln!("{}", if cli.no_timing { String::new() } else { format!(" {:>9}", "time_s") });
    for (p, st) in polytopes.iter().zip(&steps) {
        out!(
            "{:>4} {:>9} {:>7} {:>5} {:>14.6} {:>9.6}",
            p.index,
            p.vertices.len(),
            p.facets,
            st.new_vertices,
            p.volume,
            p.relative_volume
        );
        outln!("{}", st.elapsed_s.map(|t| format!(" {t:>9.3}")).unwrap_or_default());
    }
    if !cli.no_timing {
        outln!();
        outln!("total time  {elapsed:.3} s");
    }
    if let Some(dir) = out {
        outln!("run directory  {}", dir.display());
    }
    Ok(())
}

fn write_run(dir: &Path, s: &Setup, doc: &SequenceDocument) -> Result<(), Failure> {
    rundir::create(dir)?;
    let input_name = if s.loaded.inp { "input.inp" } else { "input.toml" };
    rundir::write_atomic(&dir.join(input_name), s.loaded.text.as_bytes())?;
    let hash = rundir::sha256_hex(&[s.loaded.text.as_bytes()]);
    rundir::write_atomic(&dir.join(rundir::HASH), format!("{hash}  {input_name}\n").as_bytes())?;
    let settings = Settings {
        schema_version: EXPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        input: s.loaded.label.clone(),
        variable_nodes: doc.variable_nodes.clone(),
        rounds: s.rounds,
        grid_k: s.loaded.file.sir.grid_k,
        pump_ids: s.pump_ids(),
        pump_states: s.ops.pump_states.clone(),
        sign_pattern: s.ops.sign_pattern.clone(),
        energy_cost: s.ops.energy_cost,
    };
    rundir::write_atomic(&dir.join(rundir::SETTINGS), to_json(&settings).map_err(fail)?.as_bytes())?;
    rundir::write_atomic(&dir.join(rundir::SEQUENCE), to_json(doc).map_err(fail)?.as_bytes())?;
    let last = doc.sequence.polytopes.last().ok_or_else(|| fail(ExportError::Empty))?;
    let artifacts: [(&str, Artifact, Format); 5] = [
        ("vertices.csv", Artifact::Sequence(doc), Format::Csv),
        ("relative_volume.svg", Artifact::Sequence(doc), Format::Svg),
        ("timing.json", Artifact::Timing(&doc.sequence.steps), Format::Json),
        ("timing.svg", Artifact::Timing(&doc.sequence.steps), Format::Svg),
        ("final.off", Artifact::Polytope { poly: last, labels: &doc.variable_nodes }, Format::Off),
    ];
    for (name, artifact, format) in &artifacts {
        match export(artifact, *format) {
            Ok(bytes) => rundir::write_atomic(&dir.join(name), &bytes)?,
            Err(ExportError::Unsupported { .. }) => {}
            Err(e) => return Err(fail(e)),
        }
    }
    Ok(())
}

// check

#[derive(Serialize)]
struct CheckReport<'a> {
    input: &'a str,
    variable_nodes: Vec<String>,
    demand: &'a [f64],
    feasible: bool,
    worst_residual: f64,
    worst_constraint: String,
    inside: Vec<usize>,
}

fn check(cli: &Cli, input: &str, region: &Region, demand: &[f64]) -> Result<(), Failure> {
    let s = setup(input, region)?;
    let dim = s.prob.dimension();
    if demand.len() != dim {
        return Err(Failure::Usage(format!("--demand needs {dim} values, got {}", demand.len())));
    }
    let verdict = s.prob.check(demand).map_err(fail)?;
    let seq = build_sequence(&s.prob, s.rounds).map_err(fail)?;
    let mut inside = Vec::new();
    for (i, p) in seq.polytopes.iter().enumerate() {
        if p.contains(demand).map_err(fail)? {
            inside.push(i);
        }
    }
    let report = CheckReport {
        input,
        variable_nodes: s.prob.variable_ids(),
        demand,
        feasible: verdict.feasible,
        worst_residual: verdict.worst_residual,
        worst_constraint: verdict.worst_constraint.to_string(),
        inside,
    };
    if cli.json {
        emit(&report)?;
    } else {
        let pairs: Vec<String> =
            report.variable_nodes.iter().zip(demand).map(|(id, d)| format!("{id}={d:.6}")).collect();
        outln!("demand   {}", pairs.join(" "));
        outln!(
            "verdict  {} (worst residual {:.6e}, tightest: {})",
            if report.feasible { "feasible" } else { "infeasible" },
            report.worst_residual,
            report.worst_constraint
        );
        let inside: Vec<String> = report.inside.iter().map(|i| format!("C{i}")).collect();
        outln!("inside   {}", if inside.is_empty() { "none".into() } else { inside.join(" ") });
    }
    if report.feasible {
        Ok(())
    } else {
        Err(Failure::Finding)
    }
}

// grid

fn check_ranges(ranges: &[(f64, f64)], dim: usize) -> Result<(), Failure> {
    if ranges.len() == dim {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--ranges needs {dim} entries, got {}", ranges.len())))
    }
}

fn grid(
    cli: &Cli,
    input: &str,
    region: &Region,
    k: Option<usize>,
    ranges: Option<&[(f64, f64)]>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let s = setup(input, region)?;
    let k = k.unwrap_or(s.loaded.file.sir.grid_k);
    if k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let seq = build_sequence(&s.prob, s.rounds).map_err(fail)?;
    let ranges = match ranges {
        Some(r) => {
            check_ranges(r, s.prob.dimension())?;
            r.to_vec()
        }
        None => axis_ranges(&s.prob, &seq),
    };
    let started = Instant::now();
    let screen = grid_screen(&s.prob, k, &ranges).map_err(fail)?;
    let elapsed = started.elapsed().as_secs_f64();
    let report = agreement(&seq, &screen).map_err(fail)?;
    let false_positives: usize = report.polytopes.iter().map(|p| p.false_positives).sum();
    let doc = GridDocument {
        schema_version: EXPORT_SCHEMA_VERSION,
        variable_nodes: s.prob.variable_ids(),
        screen,
        agreement: Some(report),
    };
    if let Some(dir) = out {
        rundir::create(dir)?;
        rundir::write_atomic(&dir.join(rundir::GRID), to_json(&doc).map_err(fail)?.as_bytes())?;
    }
    if cli.json {
        emit(&doc)?;
    } else {
        let screen = &doc.screen;
        out!("{:>6}", "index");
        for id in &doc.variable_nodes {
            out!(" {:>12}", format!("d{id}"));
        }
        outln!(" {:>10} {:>14}  constraint", "verdict", "residual");
        for (i, (p, v)) in screen.points().enumerate() {
            out!("{i:>6}");
            for x in &p {
                out!(" {x:>12.6}");
            }
            let verdict = if v.feasible { "feasible" } else { "infeasible" };
            outln!(" {verdict:>10} {:>14.6e}  {}", v.worst_residual, v.worst_constraint);
        }
        outln!();
        outln!("feasible  {} of {}", screen.feasible, screen.total);
        if !cli.no_timing {
            outln!("time      {elapsed:.3} s");
        }
        if let Some(a) = &doc.agreement {
            for p in &a.polytopes {
                outln!(
                    "C{}  inside {:>5}  false positives {:>3}  coverage {:.4}",
                    p.index,
                    p.inside,
                    p.false_positives,
                    p.coverage
                );
            }
        }
    }
    if false_positives > 0 {
        eprintln!("{input}: {false_positives} grid point(s) inside a polytope are infeasible");
        return Err(Failure::Finding);
    }
    Ok(())
}

// probe

fn probe(
    cli: &Cli,
    input: &str,
    region: &Region,
    trials: usize,
    seed: u64,
    ranges: Option<&[(f64, f64)]>,
) -> Result<(), Failure> {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let s = setup(input, region)?;
    let ranges = match ranges {
        Some(r) => {
            check_ranges(r, s.prob.dimension())?;
            r.to_vec()
        }
        None => {
            let (start, _) = starting_polytope(&s.prob).map_err(fail)?;
            let (_, hi) = start.bounds();
            s.prob.lower().iter().zip(hi).map(|(&l, h)| (l, h)).collect()
        }
    };
    let report = convexity_probe(&s.prob, trials, seed, &ranges).map_err(fail)?;
    if cli.json {
        emit(&report)?;
    } else {
        outln!("seed          {}", report.seed);
        outln!("pairs         {}", report.pairs);
        outln!("combinations  {}", report.combinations);
        outln!("attempts      {}", report.attempts);
        outln!("violations    {}", report.violations.len());
        outln!("worst         {:.6e}", report.worst_residual);
        for v in &report.violations {
            outln!("  weight {:.2}  residual {:.6e}  a {:?}  b {:?}", v.weight, v.residual, v.a, v.b);
        }
    }
    if report.violations.is_empty() {
        Ok(())
    } else {
        eprintln!("{input}: convex combinations of feasible demands were infeasible");
        Err(Failure::Finding)
    }
}

// export

fn export_cmd(
    dir: &Path,
    what: What,
    format: Format,
    index: Option<usize>,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let result = match what {
        What::Grid => {
            let doc: GridDocument = rundir::read(dir, rundir::GRID)?;
            export(&Artifact::Grid(&doc), format)
        }
        _ => {
            let doc: SequenceDocument = rundir::read(dir, rundir::SEQUENCE)?;
            match what {
                What::Sequence => export(&Artifact::Sequence(&doc), format),
                What::Timing => export(&Artifact::Timing(&doc.sequence.steps), format),
                _ => {
                    let count = doc.sequence.polytopes.len();
                    let i = index.unwrap_or(count.saturating_sub(1));
                    let poly = doc
                        .sequence
                        .polytopes
                        .get(i)
                        .ok_or_else(|| Failure::Usage(format!("--index {i} out of range ({count} polytopes)")))?;
                    export(&Artifact::Polytope { poly, labels: &doc.variable_nodes }, format)
                }
            }
        }
    };
    let bytes = match result {
        Ok(b) => b,
        Err(e @ ExportError::Unsupported { .. }) => return Err(Failure::Usage(e.to_string())),
        Err(e) => return Err(fail(e)),
    };
    match output {
        Some(path) => rundir::write_atomic(path, &bytes),
        None => match std::io::stdout().write_all(&bytes) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(fail(e)),
            _ => Ok(()),
        },
    }
}

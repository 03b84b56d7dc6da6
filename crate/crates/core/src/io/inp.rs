//! Import of a small subset of EPANET INP text.
//!
//! Supported sections: `[TITLE]`, `[JUNCTIONS]`, `[RESERVOIRS]`, `[TANKS]`,
//! `[PIPES]`, `[PUMPS]`, `[CURVES]`, `[COORDINATES]` (ignored) and `[END]`.
//! Values are read as SI with flows in L/s: lengths and elevations in m,
//! pipe diameters in mm. Roughness is ignored in favour of the friction
//! factor. Limits that INP does not carry come from [`InpOptions`].

use std::collections::HashMap;

use thiserror::Error;

use crate::network::{Edge, EdgeKind, Network, NetworkError, Node, NodeKind, PumpCurve, PumpParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InpError {
    #[error("line {line}: unsupported section [{section}]")]
    UnsupportedSection { line: usize, section: String },
    #[error("line {line}: [{section}] row needs a {column} column")]
    MissingColumn { line: usize, section: String, column: &'static str },
    #[error("line {line}: bad number '{text}'")]
    Number { line: usize, text: String },
    #[error("line {line}: {message}")]
    Unsupported { line: usize, message: String },
    #[error("line {line}: data outside any section")]
    NoSection { line: usize },
    #[error("imported network is invalid: {0}")]
    Network(#[from] NetworkError),
}

/// Limits applied to imported elements.
#[derive(Debug, Clone, PartialEq)]
pub struct InpOptions {
    pub friction_factor: f64,
    pub gravity: f64,
    pub pressure_min_m: f64,
    pub pressure_max_m: f64,
    /// Upper demand limit is `max(demand_cap, 2·demand)`.
    pub demand_cap_lps: f64,
    pub flow_limit_lps: f64,
    pub inject_max_lps: f64,
    /// Gain limits for pumps, and the gain range of pumps without a usable curve.
    pub gain_min_m: f64,
    pub gain_max_m: f64,
}

impl Default for InpOptions {
    fn default() -> Self {
        Self {
            friction_factor: crate::network::DEFAULT_FRICTION_FACTOR,
            gravity: crate::network::DEFAULT_GRAVITY,
            pressure_min_m: 0.0,
            pressure_max_m: 100.0,
            demand_cap_lps: 50.0,
            flow_limit_lps: 1000.0,
            inject_max_lps: 1000.0,
            gain_min_m: 0.0,
            gain_max_m: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InpImport {
    pub network: Network,
    pub title: Option<String>,
    pub warnings: Vec<String>,
}

struct Row<'a> {
    line: usize,
    section: &'a str,
    cols: Vec<&'a str>,
}

impl<'a> Row<'a> {
    fn text(&self, i: usize, column: &'static str) -> Result<&'a str, InpError> {
        self.cols.get(i).copied().ok_or_else(|| InpError::MissingColumn {
            line: self.line,
            section: self.section.to_string(),
            column,
        })
    }

    fn num(&self, i: usize, column: &'static str) -> Result<f64, InpError> {
        let t = self.text(i, column)?;
        t.parse::<f64>().map_err(|_| InpError::Number { line: self.line, text: t.to_string() })
    }
}

const KNOWN: [&str; 9] =
    ["TITLE", "JUNCTIONS", "RESERVOIRS", "TANKS", "PIPES", "PUMPS", "CURVES", "COORDINATES", "END"];

pub fn parse_inp(text: &str, opts: &InpOptions) -> Result<InpImport, InpError> {
    let mut rows: Vec<Row> = Vec::new();
    let mut section: Option<&str> = None;
    let mut title = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split(';').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let upper = name.trim().to_ascii_uppercase();
            let Some(known) = KNOWN.iter().find(|s| **s == upper) else {
                return Err(InpError::UnsupportedSection { line, section: name.trim().to_string() });
            };
            if *known == "END" {
                break;
            }
            section = Some(known);
            continue;
        }
        let Some(sec) = section else { return Err(InpError::NoSection { line }) };
        match sec {
            "TITLE" => title.push(body.to_string()),
            "COORDINATES" => {}
            _ => rows.push(Row { line, section: sec, cols: body.split_whitespace().collect() }),
        }
    }

    let mut warnings = Vec::new();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut curves: HashMap<String, Vec<(f64, f64)>> = HashMap::new();
    for r in rows.iter().filter(|r| r.section == "CURVES") {
        curves.entry(r.text(0, "id")?.to_string()).or_default().push((r.num(1, "x")?, r.num(2, "y")?));
    }
    let mut roughness_warned = false;
    for r in &rows {
        match r.section {
            "JUNCTIONS" => {
                let demand = if r.cols.len() > 2 { r.num(2, "demand")? } else { 0.0 };
                nodes.push(Node {
                    id: r.text(0, "id")?.to_string(),
                    kind: NodeKind::Junction,
                    elevation_m: r.num(1, "elevation")?,
                    head_min_m: opts.pressure_min_m,
                    head_max_m: opts.pressure_max_m,
                    demand_min_lps: 0.0,
                    demand_max_lps: opts.demand_cap_lps.max(2.0 * demand),
                    fixed_demand_lps: Some(demand),
                    inject_min_lps: None,
                    inject_max_lps: None,
                });
            }
            "RESERVOIRS" => nodes.push(Node {
                id: r.text(0, "id")?.to_string(),
                kind: NodeKind::Source,
                elevation_m: r.num(1, "head")?,
                head_min_m: 0.0,
                head_max_m: 0.0,
                demand_min_lps: 0.0,
                demand_max_lps: 0.0,
                fixed_demand_lps: None,
                inject_min_lps: Some(0.0),
                inject_max_lps: Some(opts.inject_max_lps),
            }),
            "TANKS" => {
                let (min_level, max_level) = (r.num(3, "min level")?, r.num(4, "max level")?);
                nodes.push(Node {
                    id: r.text(0, "id")?.to_string(),
                    kind: NodeKind::Source,
                    elevation_m: r.num(1, "elevation")?,
                    head_min_m: min_level,
                    head_max_m: max_level,
                    demand_min_lps: 0.0,
                    demand_max_lps: 0.0,
                    fixed_demand_lps: None,
                    inject_min_lps: Some(0.0),
                    inject_max_lps: Some(opts.inject_max_lps),
                });
            }
            "PIPES" => {
                if let Some(status) = r.cols.get(7) {
                    if status.eq_ignore_ascii_case("closed") || status.eq_ignore_ascii_case("cv") {
                        return Err(InpError::Unsupported { line: r.line, message: format!("pipe status {status}") });
                    }
                }
                let (length, diameter) = (r.num(3, "length")?, r.num(4, "diameter")?);
                r.num(5, "roughness")?;
                if !roughness_warned {
                    warnings.push("pipe roughness ignored; using the configured friction factor".to_string());
                    roughness_warned = true;
                }
                edges.push(Edge {
                    id: r.text(0, "id")?.to_string(),
                    from: r.text(1, "node1")?.to_string(),
                    to: r.text(2, "node2")?.to_string(),
                    kind: EdgeKind::Pipe,
                    length_m: Some(length),
                    diameter_m: Some(diameter / 1000.0),
                    friction_factor: None,
                    flow_min_lps: -opts.flow_limit_lps,
                    flow_max_lps: opts.flow_limit_lps,
                    pump: None,
                });
            }
            "PUMPS" => {
                let id = r.text(0, "id")?.to_string();
                let mut curve = None;
                let mut i = 3;
                while i < r.cols.len() {
                    let key = r.cols[i].to_ascii_uppercase();
                    let value = r.text(i + 1, "property value")?;
                    if key == "HEAD" {
                        match curves.get(value).map(Vec::as_slice) {
                            Some(&[(q, h)]) if q > 0.0 && h > 0.0 => {
                                // One-point curve: shutoff at 4/3 of the design head.
                                curve = Some(PumpCurve { a1_m_per_lps: -h / (3.0 * q), a0_m: 4.0 * h / 3.0 });
                            }
                            Some(_) => warnings
                                .push(format!("pump {id}: curve {value} is not a one-point curve; gain left free")),
                            None => {
                                return Err(InpError::Unsupported {
                                    line: r.line,
                                    message: format!("unknown curve {value}"),
                                })
                            }
                        }
                    } else {
                        warnings.push(format!("pump {id}: {key} ignored; gain left free"));
                    }
                    i += 2;
                }
                edges.push(Edge {
                    id,
                    from: r.text(1, "node1")?.to_string(),
                    to: r.text(2, "node2")?.to_string(),
                    kind: EdgeKind::Pump,
                    length_m: None,
                    diameter_m: None,
                    friction_factor: None,
                    flow_min_lps: 0.0,
                    flow_max_lps: opts.flow_limit_lps,
                    pump: Some(PumpParams { curve, gain_min_m: opts.gain_min_m, gain_max_m: opts.gain_max_m }),
                });
            }
            _ => {}
        }
    }
    let network = Network::with_constants(nodes, edges, opts.gravity, opts.friction_factor)?;
    let title = if title.is_empty() { None } else { Some(title.join(" ")) };
    Ok(InpImport { network, title, warnings })
}

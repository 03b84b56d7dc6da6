//! Deterministic JSON, CSV, OFF and SVG renderings of run artifacts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{AgreementReport, GridScreen};
use crate::polytope::{relative_volumes, Polytope, PolytopeError, PolytopeSequence, StepInfo};

pub const EXPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("cannot export {artifact} as {format}")]
    Unsupported { artifact: &'static str, format: &'static str },
    #[error("nothing to export")]
    Empty,
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error("{0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Off,
    Svg,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Off => "off",
            Self::Svg => "svg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Some(Self::Json),
            "csv" => Some(Self::Csv),
            "off" => Some(Self::Off),
            "svg" => Some(Self::Svg),
            _ => None,
        }
    }
}

/// Stored form of a polytope sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDocument {
    pub schema_version: u32,
    pub variable_nodes: Vec<String>,
    pub relative_volumes: Vec<f64>,
    pub sequence: PolytopeSequence,
}

impl SequenceDocument {
    pub fn new(variable_nodes: Vec<String>, sequence: PolytopeSequence) -> Result<Self, ExportError> {
        if sequence.polytopes.is_empty() {
            return Err(ExportError::Empty);
        }
        let relative_volumes = relative_volumes(&sequence)?;
        Ok(Self { schema_version: EXPORT_SCHEMA_VERSION, variable_nodes, relative_volumes, sequence })
    }
}

/// Stored form of a grid screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDocument {
    pub schema_version: u32,
    pub variable_nodes: Vec<String>,
    pub screen: GridScreen,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementReport>,
}

pub enum Artifact<'a> {
    Polytope { poly: &'a Polytope, labels: &'a [String] },
    Sequence(&'a SequenceDocument),
    Grid(&'a GridDocument),
    Timing(&'a [StepInfo]),
}

impl Artifact<'_> {
    fn name(&self) -> &'static str {
        match self {
            Self::Polytope { .. } => "polytope",
            Self::Sequence(_) => "sequence",
            Self::Grid(_) => "grid",
            Self::Timing(_) => "timing",
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, ExportError> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| ExportError::Json(e.to_string()))
}

pub fn export(artifact: &Artifact<'_>, format: Format) -> Result<Vec<u8>, ExportError> {
    let unsupported = || ExportError::Unsupported { artifact: artifact.name(), format: format.name() };
    let text = match (artifact, format) {
        (Artifact::Polytope { poly, .. }, Format::Json) => to_json(poly)?,
        (Artifact::Polytope { poly, labels }, Format::Csv) => vertices_csv(labels, std::iter::once((None, *poly))),
        (Artifact::Polytope { poly, .. }, Format::Off) => off(poly).ok_or_else(unsupported)?,
        (Artifact::Polytope { poly, labels }, Format::Svg) => projection_svg(poly, labels),
        (Artifact::Sequence(doc), f) => {
            if doc.sequence.polytopes.is_empty() {
                return Err(ExportError::Empty);
            }
            match f {
                Format::Json => to_json(doc)?,
                Format::Csv => vertices_csv(
                    &doc.variable_nodes,
                    doc.sequence.polytopes.iter().enumerate().map(|(i, p)| (Some(i), p)),
                ),
                Format::Svg => bar_chart(
                    "Relative volume",
                    &doc.relative_volumes.iter().enumerate().map(|(i, v)| (format!("C{i}"), *v)).collect::<Vec<_>>(),
                ),
                Format::Off => return Err(unsupported()),
            }
        }
        (Artifact::Grid(doc), Format::Json) => to_json(doc)?,
        (Artifact::Grid(doc), Format::Csv) => grid_csv(doc),
        (Artifact::Timing(steps), f) => {
            if steps.is_empty() {
                return Err(ExportError::Empty);
            }
            match f {
                Format::Json => to_json(steps)?,
                Format::Csv => {
                    let mut s = String::from("round,new_vertices,volume,elapsed_s\n");
                    for st in *steps {
                        let _ = writeln!(s, "{},{},{:.9},{:.6}", st.round, st.new_vertices, st.volume, st.elapsed_s);
                    }
                    s
                }
                Format::Svg => bar_chart(
                    "Time per step (s)",
                    &steps.iter().map(|st| (format!("step {}", st.round), st.elapsed_s)).collect::<Vec<_>>(),
                ),
                Format::Off => return Err(unsupported()),
            }
        }
        _ => return Err(unsupported()),
    };
    Ok(text.into_bytes())
}

fn vertices_csv<'a>(labels: &[String], polys: impl Iterator<Item = (Option<usize>, &'a Polytope)>) -> String {
    let mut polys = polys.peekable();
    let indexed = polys.peek().is_some_and(|(i, _)| i.is_some());
    let mut s = String::new();
    if indexed {
        s.push_str("polytope,");
    }
    s.push_str(&labels.iter().map(|l| format!("d{l}")).collect::<Vec<_>>().join(","));
    s.push('\n');
    for (i, p) in polys {
        for v in &p.vertices {
            if let Some(i) = i {
                let _ = write!(s, "{i},");
            }
            s.push_str(&v.iter().map(|x| format!("{x:.9}")).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
    }
    s
}

fn grid_csv(doc: &GridDocument) -> String {
    let mut s = doc.variable_nodes.iter().map(|l| format!("d{l}")).collect::<Vec<_>>().join(",");
    s.push_str(",feasible,residual,constraint\n");
    for (p, v) in doc.screen.points() {
        for x in &p {
            let _ = write!(s, "{x:.9},");
        }
        let _ = writeln!(s, "{},{:.3e},{}", v.feasible, v.worst_residual, v.worst_constraint);
    }
    s
}

/// Triangulated OFF mesh; only for three-dimensional polytopes.
fn off(poly: &Polytope) -> Option<String> {
    if poly.dimension != 3 {
        return None;
    }
    let tris: Vec<[usize; 3]> = poly
        .facets
        .iter()
        .flat_map(|f| (1..f.vertices.len() - 1).map(move |k| [f.vertices[0], f.vertices[k], f.vertices[k + 1]]))
        .collect();
    let mut s = format!("OFF\n{} {} 0\n", poly.vertices.len(), tris.len());
    for v in &poly.vertices {
        let _ = writeln!(s, "{:.9} {:.9} {:.9}", v[0], v[1], v[2]);
    }
    for t in tris {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    Some(s)
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut s = svg_open(title);
    let top = bars.iter().map(|b| b.1).fold(0.0f64, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    let slot = (W - 2.0 * PAD) / bars.len().max(1) as f64;
    let base = H - PAD;
    let _ = writeln!(s, "<line x1=\"{PAD}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\" stroke=\"black\"/>", W - PAD);
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = (H - 2.0 * PAD - 16.0) * v / top;
        let x = PAD + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"steelblue\" data-value=\"{v:.6}\"/>",
            base - h,
            slot * 0.7
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(
            s,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{v:.4}</text>",
            base - h - 4.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            base + 16.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Outline of the projection onto the first two coordinates.
fn projection_svg(poly: &Polytope, labels: &[String]) -> String {
    let title = match labels {
        [a, b, ..] => format!("Projection on d{a}, d{b}"),
        [a] => format!("Range of d{a}"),
        [] => "Projection".to_string(),
    };
    let mut s = svg_open(&title);
    let pts: Vec<[f64; 2]> = poly.vertices.iter().map(|v| [v[0], if v.len() > 1 { v[1] } else { 0.0 }]).collect();
    let outline: Vec<[f64; 2]> = if poly.dimension == 1 {
        pts.clone()
    } else {
        let as_vec: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
        match Polytope::hull(&as_vec, 0.0) {
            Ok(h) => h.facets.iter().map(|f| [h.vertices[f.vertices[0]][0], h.vertices[f.vertices[0]][1]]).collect(),
            Err(_) => pts.clone(),
        }
    };
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = |k: usize| if hi[k] > lo[k] { hi[k] - lo[k] } else { 1.0 };
    let map = |p: &[f64; 2]| {
        (PAD + (p[0] - lo[0]) / span(0) * (W - 2.0 * PAD), H - PAD - (p[1] - lo[1]) / span(1) * (H - 2.0 * PAD - 16.0))
    };
    let path: Vec<String> = outline.iter().map(map).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(s, "<polygon points=\"{}\" fill=\"lightsteelblue\" stroke=\"navy\"/>", path.join(" "));
    for p in &pts {
        let (x, y) = map(p);
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"navy\"/>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> Polytope {
        let mut v = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    v.push(vec![x, y, z]);
                }
            }
        }
        Polytope::hull(&v, 1e-12).unwrap()
    }

    #[test]
    fn cube_off_is_triangulated() {
        let p = cube();
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let bytes = export(&Artifact::Polytope { poly: &p, labels: &labels }, Format::Off).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("OFF"));
        assert_eq!(lines.next(), Some("8 12 0"));
        assert_eq!(text.lines().filter(|l| l.starts_with("3 ")).count(), 12);
    }

    #[test]
    fn empty_sequence_has_nothing_to_export() {
        let seq = PolytopeSequence { polytopes: vec![], steps: vec![] };
        assert_eq!(SequenceDocument::new(vec![], seq.clone()), Err(ExportError::Empty));
        let doc =
            SequenceDocument { schema_version: 1, variable_nodes: vec![], relative_volumes: vec![], sequence: seq };
        assert_eq!(export(&Artifact::Sequence(&doc), Format::Json), Err(ExportError::Empty));
        assert_eq!(export(&Artifact::Timing(&[]), Format::Svg), Err(ExportError::Empty));
    }

    #[test]
    fn relative_volume_chart_has_one_bar_per_polytope() {
        let a = Polytope::hull(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], 1e-12).unwrap();
        let b = Polytope::hull(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], 1e-12).unwrap();
        let seq = PolytopeSequence { polytopes: vec![a.clone(), b], steps: vec![] };
        let doc = SequenceDocument::new(vec!["x".into(), "y".into()], seq).unwrap();
        let svg = String::from_utf8(export(&Artifact::Sequence(&doc), Format::Svg).unwrap()).unwrap();
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert!(svg.contains("data-value=\"1.000000\""));
        assert_eq!(
            export(&Artifact::Sequence(&doc), Format::Off),
            Err(ExportError::Unsupported { artifact: "sequence", format: "off" })
        );
        let labels = vec!["x".to_string(), "y".to_string()];
        assert!(export(&Artifact::Polytope { poly: &a, labels: &labels }, Format::Off).is_err());
    }

    #[test]
    fn exports_are_deterministic() {
        let p = cube();
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        for f in [Format::Json, Format::Csv, Format::Off, Format::Svg] {
            let x = export(&Artifact::Polytope { poly: &p, labels: &labels }, f).unwrap();
            let y = export(&Artifact::Polytope { poly: &p, labels: &labels }, f).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn sequence_json_round_trips() {
        let a = Polytope::hull(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], 1e-12).unwrap();
        let doc =
            SequenceDocument::new(vec!["x".into(), "y".into()], PolytopeSequence { polytopes: vec![a], steps: vec![] })
                .unwrap();
        let bytes = export(&Artifact::Sequence(&doc), Format::Json).unwrap();
        let back: SequenceDocument = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, doc);
    }
}

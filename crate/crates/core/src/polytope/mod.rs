//! Inner polytopes of the security injection region.
//!
//! The starting polytope is the simplex spanned by the box lower corner and
//! the axis maxima. Each expansion round pushes every facet outward along
//! its normal by a support solve and re-hulls. All vertices are feasible
//! points and the region is convex, so every polytope is an inner
//! approximation and the sequence grows monotonically.

mod hull;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::support::{maximize_support, SirProblem, SupportError, SupportResult};
use hull::{hull_1d, hull_2d, hull_3d, HullError};

/// Slack allowed in half-space membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Minimum support gain, relative to the box diagonal, that earns a vertex.
pub const GAIN_TOL_REL: f64 = 1e-3;
/// Vertices closer than this, relative to the box diagonal, are merged.
pub const DEDUP_TOL_REL: f64 = 1e-7;
/// Default number of expansion rounds.
pub const DEFAULT_ROUNDS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolytopeError {
    #[error("dimension {0} is not supported (1 to 3)")]
    UnsupportedDimension(usize),
    #[error("expected a point of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("points do not span the space")]
    Degenerate,
    #[error("axis maxima affinely dependent")]
    DegenerateStart,
    #[error("support along axis {axis} did not converge")]
    AxisNotConverged { axis: usize, partial: Vec<SupportResult> },
    #[error("anchor at the demand lower bounds is infeasible ({0})")]
    AnchorInfeasible(String),
    #[error("nothing to export")]
    Empty,
    #[error(transparent)]
    Support(#[from] SupportError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    /// Outward unit normal.
    pub normal: Vec<f64>,
    pub offset: f64,
    /// Vertex indices, in boundary order for 3-D facets.
    pub vertices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub dimension: usize,
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<Facet>,
}

fn check_dim(d: usize) -> Result<(), PolytopeError> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(PolytopeError::UnsupportedDimension(d))
    }
}

/// Drop points within `tol` (Euclidean) of an earlier one.
pub fn dedup_points(points: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !kept.iter().any(|q| dist(p, q) <= tol) {
            kept.push(p.clone());
        }
    }
    kept
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rings_of(points: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<usize>>, PolytopeError> {
    let rings = match dim {
        1 => hull_1d(&points.iter().map(|p| p[0]).collect::<Vec<_>>()),
        2 => hull_2d(&points.iter().map(|p| [p[0], p[1]]).collect::<Vec<_>>()),
        3 => hull_3d(&points.iter().map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>()),
        d => return Err(PolytopeError::UnsupportedDimension(d)),
    };
    rings.map_err(|HullError::Flat| PolytopeError::Degenerate)
}

fn facet_plane(points: &[Vec<f64>], ring: &[usize], dim: usize, first: bool) -> (Vec<f64>, f64) {
    let normal = match dim {
        1 => vec![if first { -1.0 } else { 1.0 }],
        2 => {
            let (a, b) = (&points[ring[0]], &points[ring[1]]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            vec![dy / len, -dx / len]
        }
        _ => {
            // Newell's method over the ring.
            let mut n = [0.0; 3];
            for k in 0..ring.len() {
                let (a, b) = (&points[ring[k]], &points[ring[(k + 1) % ring.len()]]);
                n[0] += (a[1] - b[1]) * (a[2] + b[2]);
                n[1] += (a[2] - b[2]) * (a[0] + b[0]);
                n[2] += (a[0] - b[0]) * (a[1] + b[1]);
            }
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            n.iter().map(|v| v / len).collect()
        }
    };
    let offset = ring.iter().map(|&i| dot(&normal, &points[i])).fold(f64::NEG_INFINITY, f64::max);
    (normal, offset)
}

impl Polytope {
    /// Convex hull of the points, keeping only extreme points as vertices.
    pub fn hull(points: &[Vec<f64>], dedup_tol: f64) -> Result<Self, PolytopeError> {
        let dim = points.first().map(Vec::len).ok_or(PolytopeError::Degenerate)?;
        check_dim(dim)?;
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(PolytopeError::Dimension { expected: dim, got: bad.len() });
        }
        let mut pts = dedup_points(points, dedup_tol);
        loop {
            let rings = rings_of(&pts, dim)?;
            // A point is a vertex iff it lies on at least `dim` facets.
            let mut count = vec![0usize; pts.len()];
            for r in &rings {
                let mut seen = r.clone();
                seen.sort_unstable();
                seen.dedup();
                for v in seen {
                    count[v] += 1;
                }
            }
            let extreme: Vec<usize> = (0..pts.len()).filter(|&i| count[i] >= dim).collect();
            if extreme.len() < pts.len() {
                pts = extreme.iter().map(|&i| pts[i].clone()).collect();
                continue;
            }
            let facets = rings
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let (normal, offset) = facet_plane(&pts, r, dim, k == 0);
                    Facet { normal, offset, vertices: r.clone() }
                })
                .collect();
            return Ok(Self { dimension: dim, vertices: pts, facets });
        }
    }

    pub fn contains(&self, point: &[f64]) -> Result<bool, PolytopeError> {
        if point.len() != self.dimension {
            return Err(PolytopeError::Dimension { expected: self.dimension, got: point.len() });
        }
        Ok(self.facets.iter().all(|f| dot(&f.normal, point) <= f.offset + MEMBERSHIP_TOL))
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.vertices.len() as f64;
        (0..self.dimension).map(|k| self.vertices.iter().map(|v| v[k]).sum::<f64>() / n).collect()
    }

    /// Componentwise min and max over the vertices.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo =
            (0..self.dimension).map(|k| self.vertices.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min)).collect();
        let hi =
            (0..self.dimension).map(|k| self.vertices.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
        (lo, hi)
    }

    /// Exact volume by a fan from the vertex centroid.
    pub fn volume(&self) -> Result<f64, PolytopeError> {
        check_dim(self.dimension)?;
        let c = self.centroid();
        let v = &self.vertices;
        Ok(match self.dimension {
            1 => {
                let (lo, hi) = self.bounds();
                hi[0] - lo[0]
            }
            2 => self
                .facets
                .iter()
                .map(|f| {
                    let (a, b) = (&v[f.vertices[0]], &v[f.vertices[1]]);
                    ((a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0])).abs() / 2.0
                })
                .sum(),
            _ => {
                let mut total = 0.0;
                for f in &self.facets {
                    let r = &f.vertices;
                    let a = sub(&v[r[0]], &c);
                    for k in 1..r.len() - 1 {
                        let (b, d) = (sub(&v[r[k]], &c), sub(&v[r[k + 1]], &c));
                        let det = a[0] * (b[1] * d[2] - b[2] * d[1]) - a[1] * (b[0] * d[2] - b[2] * d[0])
                            + a[2] * (b[0] * d[1] - b[1] * d[0]);
                        total += det.abs() / 6.0;
                    }
                }
                total
            }
        })
    }

    /// Uniform samples from the interior by rejection from the bounding box.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let p: Vec<f64> = lo.iter().zip(&hi).map(|(&l, &h)| if h > l { rng.gen_range(l..h) } else { l }).collect();
            if self.contains(&p).unwrap_or(false) {
                out.push(p);
            }
        }
        out
    }

    /// Facet lies on the plane `x_k = lower_k` of the demand box.
    fn on_lower_face(&self, facet: &Facet, lower: &[f64], tol: f64) -> bool {
        (0..self.dimension).any(|k| {
            (facet.normal[k] + 1.0).abs() < 1e-9
                && facet.vertices.iter().all(|&i| (self.vertices[i][k] - lower[k]).abs() <= tol)
        })
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// One support solve of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRecord {
    pub direction: Vec<f64>,
    /// Support value of the polytope before the solve (facet offset; for
    /// axis solves, the anchor coordinate).
    pub offset: f64,
    pub result: SupportResult,
    pub gain: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// 0 for the starting polytope.
    pub round: usize,
    pub facets_considered: usize,
    pub new_vertices: usize,
    pub volume: f64,
    pub supports: Vec<SupportRecord>,
    pub errors: Vec<String>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeSequence {
    pub polytopes: Vec<Polytope>,
    pub steps: Vec<StepInfo>,
}

impl PolytopeSequence {
    pub fn last(&self) -> Option<&Polytope> {
        self.polytopes.last()
    }

    /// Every support direction solved during the run with its result.
    pub fn supports(&self) -> impl Iterator<Item = &SupportRecord> {
        self.steps.iter().flat_map(|s| s.supports.iter())
    }
}

/// Volumes divided by the final polytope's volume.
pub fn relative_volumes(seq: &PolytopeSequence) -> Result<Vec<f64>, PolytopeError> {
    let vols = seq.polytopes.iter().map(Polytope::volume).collect::<Result<Vec<_>, _>>()?;
    let last = *vols.last().ok_or(PolytopeError::Empty)?;
    Ok(vols.iter().map(|v| v / last).collect())
}

/// Simplex of the box lower corner and the axis maxima.
pub fn starting_polytope(prob: &SirProblem) -> Result<(Polytope, StepInfo), PolytopeError> {
    let t0 = Instant::now();
    let nd = prob.dimension();
    check_dim(nd)?;
    let anchor = prob.lower().to_vec();
    let verdict = prob.check(&anchor)?;
    if !verdict.feasible {
        return Err(PolytopeError::AnchorInfeasible(verdict.worst_constraint.to_string()));
    }
    let results: Vec<Result<SupportResult, SupportError>> = (0..nd)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![0.0; nd];
            e[k] = 1.0;
            maximize_support(prob, &e)
        })
        .collect();
    let mut solved = Vec::with_capacity(nd);
    for r in results {
        solved.push(r?);
    }
    if let Some(axis) = solved.iter().position(|r| !r.converged) {
        return Err(PolytopeError::AxisNotConverged { axis, partial: solved });
    }
    let mut points = vec![anchor.clone()];
    let mut supports = Vec::with_capacity(nd);
    for (k, r) in solved.into_iter().enumerate() {
        let mut e = vec![0.0; nd];
        e[k] = 1.0;
        points.push(r.vertex.clone());
        supports.push(SupportRecord {
            direction: e,
            offset: anchor[k],
            gain: r.objective - anchor[k],
            result: r,
            accepted: true,
        });
    }
    let poly = Polytope::hull(&points, DEDUP_TOL_REL * prob.box_diagonal()).map_err(|e| match e {
        PolytopeError::Degenerate => PolytopeError::DegenerateStart,
        other => other,
    })?;
    if poly.vertices.len() != nd + 1 {
        return Err(PolytopeError::DegenerateStart);
    }
    let volume = poly.volume()?;
    let info = StepInfo {
        round: 0,
        facets_considered: 0,
        new_vertices: nd + 1,
        volume,
        supports,
        errors: Vec::new(),
        elapsed_s: t0.elapsed().as_secs_f64(),
    };
    Ok((poly, info))
}

/// Push every facet not on a lower box face out to the region boundary.
pub fn expand_once(prob: &SirProblem, current: &Polytope, round: usize) -> Result<(Polytope, StepInfo), PolytopeError> {
    let t0 = Instant::now();
    let diag = prob.box_diagonal();
    let dedup = DEDUP_TOL_REL * diag;
    let eps_gain = GAIN_TOL_REL * diag;
    let candidates: Vec<&Facet> =
        current.facets.iter().filter(|f| !current.on_lower_face(f, prob.lower(), dedup)).collect();
    let solved: Vec<(&Facet, Result<SupportResult, SupportError>)> =
        candidates.par_iter().map(|f| (*f, maximize_support(prob, &f.normal))).collect();

    let mut points = current.vertices.clone();
    let mut supports = Vec::new();
    let mut errors = Vec::new();
    let mut added = 0;
    for (f, res) in solved {
        match res {
            Ok(r) => {
                let gain = r.objective - f.offset;
                let feasible = prob.check(&r.vertex).map(|v| v.feasible).unwrap_or(false);
                let fresh = !points.iter().any(|q| dist(q, &r.vertex) <= dedup);
                let accepted = gain > eps_gain && feasible && fresh;
                if accepted {
                    points.push(r.vertex.clone());
                    added += 1;
                }
                supports.push(SupportRecord {
                    direction: f.normal.clone(),
                    offset: f.offset,
                    result: r,
                    gain,
                    accepted,
                });
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let poly = if added == 0 { current.clone() } else { Polytope::hull(&points, dedup)? };
    let info = StepInfo {
        round,
        facets_considered: candidates.len(),
        new_vertices: added,
        volume: poly.volume()?,
        supports,
        errors,
        elapsed_s: t0.elapsed().as_secs_f64(),
    };
    Ok((poly, info))
}

/// Starting polytope plus up to `rounds` expansions; stops early once a
/// round adds nothing.
pub fn build_sequence(prob: &SirProblem, rounds: usize) -> Result<PolytopeSequence, PolytopeError> {
    let (start, info) = starting_polytope(prob)?;
    let mut seq = PolytopeSequence { polytopes: vec![start], steps: vec![info] };
    for round in 1..=rounds {
        let (next, info) = expand_once(prob, seq.polytopes.last().unwrap(), round)?;
        let stop = info.new_vertices == 0;
        if stop {
            break;
        }
        seq.polytopes.push(next);
        seq.steps.push(info);
    }
    Ok(seq)
}

//! Brute-force checks: grid screening, polytope agreement, convexity probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulics::FeasibilityVerdict;
use crate::polytope::{PolytopeError, PolytopeSequence};
use crate::support::{embed_demands, SirProblem, SupportError};

/// Combination weights tested on each probe pair.
pub const PROBE_WEIGHTS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("found only {found} feasible samples in {attempts} attempts")]
    InsufficientSamples { found: usize, attempts: usize },
    #[error(transparent)]
    Support(#[from] SupportError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScreen {
    pub axes: Vec<Vec<f64>>,
    /// Lexicographic order, last axis fastest.
    pub verdicts: Vec<FeasibilityVerdict>,
    pub feasible: usize,
    pub infeasible: usize,
    pub total: usize,
}

impl GridScreen {
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut p = vec![0.0; self.axes.len()];
        for k in (0..self.axes.len()).rev() {
            let n = self.axes[k].len();
            p[k] = self.axes[k][rem % n];
            rem /= n;
        }
        p
    }

    pub fn points(&self) -> impl Iterator<Item = (Vec<f64>, &FeasibilityVerdict)> + '_ {
        self.verdicts.iter().enumerate().map(|(i, v)| (self.point(i), v))
    }

    pub fn feasible_points(&self) -> Vec<Vec<f64>> {
        self.points().filter(|(_, v)| v.feasible).map(|(p, _)| p).collect()
    }
}

/// `k` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| if i + 1 == k { hi } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 }).collect()
}

/// Evaluate feasibility on the tensor grid over `ranges`.
pub fn grid_screen(prob: &SirProblem, k: usize, ranges: &[(f64, f64)]) -> Result<GridScreen, OracleError> {
    if k < 2 {
        return Err(OracleError::Argument(format!("points per axis must be at least 2, got {k}")));
    }
    if ranges.len() != prob.dimension() {
        return Err(OracleError::Dimension { expected: prob.dimension(), got: ranges.len() });
    }
    let total = k
        .checked_pow(ranges.len() as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| OracleError::Argument("grid too large".into()))?;
    let axes: Vec<Vec<f64>> = ranges.iter().map(|&(lo, hi)| linspace(lo, hi, k)).collect();
    let mut screen = GridScreen { axes, verdicts: Vec::new(), feasible: 0, infeasible: 0, total };
    let ev = prob.evaluator().map_err(SupportError::from)?;
    let verdicts = (0..total)
        .into_par_iter()
        .map(|i| {
            let d = embed_demands(prob, &screen.point(i))?;
            Ok(ev.verdict(&d).map_err(SupportError::from)?)
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    screen.feasible = verdicts.iter().filter(|v| v.feasible).count();
    screen.infeasible = total - screen.feasible;
    screen.verdicts = verdicts;
    Ok(screen)
}

/// Grid ranges from the box lower bounds to the axis maxima of a run.
pub fn axis_ranges(prob: &SirProblem, seq: &PolytopeSequence) -> Vec<(f64, f64)> {
    let start = &seq.polytopes[0];
    let (_, hi) = start.bounds();
    prob.lower().iter().zip(hi).map(|(&l, h)| (l, h)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeAgreement {
    pub index: usize,
    pub inside: usize,
    /// Inside the polytope but infeasible.
    pub false_positives: usize,
    /// Feasible and inside.
    pub covered: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub grid_points: usize,
    pub feasible_points: usize,
    pub polytopes: Vec<PolytopeAgreement>,
}

pub fn agreement(seq: &PolytopeSequence, screen: &GridScreen) -> Result<AgreementReport, OracleError> {
    let mut polytopes = Vec::with_capacity(seq.polytopes.len());
    for (index, poly) in seq.polytopes.iter().enumerate() {
        if poly.dimension != screen.axes.len() {
            return Err(OracleError::Dimension { expected: poly.dimension, got: screen.axes.len() });
        }
        let (mut inside, mut fp, mut covered) = (0, 0, 0);
        for (p, v) in screen.points() {
            if poly.contains(&p)? {
                inside += 1;
                if v.feasible {
                    covered += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let coverage = if screen.feasible == 0 { 1.0 } else { covered as f64 / screen.feasible as f64 };
        polytopes.push(PolytopeAgreement { index, inside, false_positives: fp, covered, coverage });
    }
    Ok(AgreementReport { grid_points: screen.total, feasible_points: screen.feasible, polytopes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeViolation {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub weight: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub seed: u64,
    pub pairs: usize,
    pub combinations: usize,
    pub attempts: usize,
    pub violations: Vec<ProbeViolation>,
    pub worst_residual: f64,
}

/// Sample feasible pairs uniformly in `ranges` and test convex combinations.
pub fn convexity_probe(
    prob: &SirProblem,
    trials: usize,
    seed: u64,
    ranges: &[(f64, f64)],
) -> Result<ConvexityReport, OracleError> {
    if trials == 0 {
        return Err(OracleError::Argument("trials must be at least 1".into()));
    }
    if ranges.len() != prob.dimension() {
        return Err(OracleError::Dimension { expected: prob.dimension(), got: ranges.len() });
    }
    let ev = prob.evaluator().map_err(SupportError::from)?;
    let verdict = |x: &[f64]| -> Result<FeasibilityVerdict, OracleError> {
        let d = embed_demands(prob, x)?;
        Ok(ev.verdict(&d).map_err(SupportError::from)?)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 100 * 2 * trials;
    let mut samples = Vec::with_capacity(2 * trials);
    let mut attempts = 0;
    while samples.len() < 2 * trials && attempts < budget {
        attempts += 1;
        let x: Vec<f64> = ranges.iter().map(|&(l, h)| if h > l { rng.gen_range(l..=h) } else { l }).collect();
        if verdict(&x)?.feasible {
            samples.push(x);
        }
    }
    if samples.len() < 2 * trials {
        return Err(OracleError::InsufficientSamples { found: samples.len(), attempts });
    }
    let results = samples
        .par_chunks(2)
        .map(|pair| {
            let mut out = Vec::new();
            let mut worst = 0.0f64;
            for &mu in &PROBE_WEIGHTS {
                let x: Vec<f64> = pair[0].iter().zip(&pair[1]).map(|(a, b)| (1.0 - mu) * a + mu * b).collect();
                let v = verdict(&x)?;
                worst = worst.max(v.worst_residual);
                if !v.feasible {
                    out.push(ProbeViolation {
                        a: pair[0].clone(),
                        b: pair[1].clone(),
                        weight: mu,
                        residual: v.worst_residual,
                    });
                }
            }
            Ok((out, worst))
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    let mut violations = Vec::new();
    let mut worst_residual = 0.0f64;
    for (v, w) in results {
        violations.extend(v);
        worst_residual = worst_residual.max(w);
    }
    Ok(ConvexityReport {
        seed,
        pairs: trials,
        combinations: trials * PROBE_WEIGHTS.len(),
        attempts,
        violations,
        worst_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydraulics::PumpStatus;
    use crate::network::fixtures::*;
    use crate::network::Network;
    use crate::polytope::{build_sequence, Polytope, StepInfo};

    fn two_leaf_problem() -> SirProblem {
        let mut a = junction("a", 0.0, None);
        a.head_min_m = 10.0;
        a.demand_max_lps = 30.0;
        let mut b = junction("b", 0.0, None);
        b.head_min_m = 10.0;
        b.demand_max_lps = 30.0;
        let nodes = vec![source("s", 0.0, (0.0, 40.0)), junction("m", 0.0, Some(1.0)), a, b];
        let edges =
            vec![pipe("1", "s", "m", 800.0, 0.2), pipe("2", "m", "a", 600.0, 0.12), pipe("3", "m", "b", 600.0, 0.12)];
        let net = Network::new(nodes, edges).unwrap();
        let st = PumpStatus::all_on(&net);
        SirProblem::new(net, st, vec![1, 1, 1], &["a", "b"]).unwrap()
    }

    #[test]
    fn grid_is_lexicographic_and_counts_add_up() {
        let prob = two_leaf_problem();
        let g = grid_screen(&prob, 3, &[(0.0, 2.0), (0.0, 4.0)]).unwrap();
        assert_eq!(g.total, 9);
        assert_eq!(g.point(0), vec![0.0, 0.0]);
        assert_eq!(g.point(1), vec![0.0, 2.0]);
        assert_eq!(g.point(3), vec![1.0, 0.0]);
        assert_eq!(g.feasible + g.infeasible, g.total);
        assert!(g.verdicts[0].feasible);
        assert!(grid_screen(&prob, 1, &[(0.0, 1.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn grid_is_reproducible() {
        let prob = two_leaf_problem();
        let a = grid_screen(&prob, 7, &[(0.0, 30.0), (0.0, 30.0)]).unwrap();
        let b = grid_screen(&prob, 7, &[(0.0, 30.0), (0.0, 30.0)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_polytope_agreement() {
        let prob = two_leaf_problem();
        let g = grid_screen(&prob, 5, &[(0.0, 30.0), (0.0, 30.0)]).unwrap();
        let tiny = Polytope::hull(&[vec![0.0, 0.0], vec![1e-6, 0.0], vec![0.0, 1e-6]], 1e-12).unwrap();
        let seq = PolytopeSequence { polytopes: vec![tiny], steps: Vec::<StepInfo>::new() };
        let r = agreement(&seq, &g).unwrap();
        assert_eq!(r.polytopes[0].false_positives, 0);
        assert!(r.polytopes[0].coverage >= 0.0);
    }

    #[test]
    fn sequence_has_no_false_positives_and_monotone_coverage() {
        let prob = two_leaf_problem();
        let seq = build_sequence(&prob, 3).unwrap();
        let g = grid_screen(&prob, 9, &axis_ranges(&prob, &seq)).unwrap();
        let r = agreement(&seq, &g).unwrap();
        for w in r.polytopes.windows(2) {
            assert!(w[0].coverage <= w[1].coverage);
        }
        assert!(r.polytopes.iter().all(|p| p.false_positives == 0));
    }

    #[test]
    fn probe_is_seeded_and_clean_on_a_tree() {
        let prob = two_leaf_problem();
        let ranges = [(0.0, 30.0), (0.0, 30.0)];
        let a = convexity_probe(&prob, 50, 7, &ranges).unwrap();
        let b = convexity_probe(&prob, 50, 7, &ranges).unwrap();
        assert_eq!(a, b);
        assert!(a.violations.is_empty());
        assert_eq!(a.combinations, 250);
        assert!(convexity_probe(&prob, 0, 7, &ranges).is_err());
    }

    #[test]
    fn probe_reports_insufficient_samples() {
        let prob = two_leaf_problem();
        // Far outside any feasible demand level.
        let r = convexity_probe(&prob, 3, 1, &[(29.9, 30.0), (29.9, 30.0)]);
        assert!(matches!(r, Err(OracleError::InsufficientSamples { .. })));
    }
}

//! Security injection regions of tree-structured water distribution
//! systems.
//!
//! The region is the set of demand vectors, over a chosen subset of nodes,
//! that the network can serve under the pump statuses and flow directions
//! fixed by an optimal pump schedule. It is convex on trees and is
//! approximated from inside by a growing sequence of polytopes whose
//! vertices are support points of the region.
//!
//! Typical flow:
//!
//! 1. build or load a [`network::Network`] ([`io::parse_network`],
//!    [`io::load_bundled`]);
//! 2. fix the regime with [`scheduler::solve_ops`];
//! 3. set up a [`support::SirProblem`] over the variable nodes;
//! 4. run [`polytope::build_sequence`] and check it with [`oracle`].

pub mod hydraulics;
pub mod io;
pub mod network;
pub mod oracle;
pub mod polytope;
pub mod scheduler;
pub mod support;

use thiserror::Error;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Network(#[from] network::NetworkError),
    #[error(transparent)]
    Hydraulics(#[from] hydraulics::HydraulicsError),
    #[error(transparent)]
    Scheduler(#[from] scheduler::SchedulerError),
    #[error(transparent)]
    Support(#[from] support::SupportError),
    #[error(transparent)]
    Polytope(#[from] polytope::PolytopeError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error(transparent)]
    Format(#[from] io::FormatError),
    #[error(transparent)]
    Inp(#[from] io::InpError),
    #[error(transparent)]
    Export(#[from] io::ExportError),
}

/// Region problem of a loaded network file: schedule at the nominal
/// demands, then freeze that regime over the file's variable nodes.
pub fn problem_from_file(
    file: &io::NetworkFile,
    variable_nodes: Option<&[String]>,
) -> Result<(scheduler::OpsSolution, support::SirProblem), Error> {
    let net = &file.network;
    let ops = scheduler::solve_ops(net, &net.nominal_demands_lps(), &file.cost)?;
    let vars: Vec<&str> = variable_nodes.unwrap_or(&file.sir.variable_nodes).iter().map(String::as_str).collect();
    let prob = support::SirProblem::new(net.clone(), ops.pump_status.clone(), ops.sign_pattern.clone(), &vars)?;
    Ok((ops, prob))
}

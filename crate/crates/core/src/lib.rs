//! Branch-and-bound for the mixed-integer quadratic programs that arise in
//! hybrid model predictive control.
//!
//! The solver works on the block-structured optimal control problem
//! ([`ocp::OcpMiqp`]), condenses it once into a dense control-space QP
//! ([`ocp::Condenser`]), and explores binary assignments with
//!
//! * a dual active-set QP solver for the node relaxations ([`qp`]),
//! * domain propagation on the condensed rows ([`presolve`]),
//! * reliability branching on pseudo-costs and strong branching ([`branching`]),
//! * a depth-first then best-first tree search ([`bnb`]),
//! * tree propagation that warm-starts the next MPC step ([`tree`]).
//!
//! [`mpc::run_closed_loop`] wires these into a receding-horizon loop, and
//! [`bench`] hosts the case-study generators, a brute-force oracle and the
//! benchmark harness. [`problem_file`] reads and writes problems as TOML,
//! and [`cli`] backs the `mimpc` binary.

pub mod bench;
pub mod bnb;
pub mod branching;
pub mod cli;
mod error;
pub(crate) mod linalg;
pub mod mpc;
pub mod ocp;
pub mod presolve;
pub mod problem_file;
pub mod qp;
pub mod tree;

pub use bnb::{solve_miqp, MiqpOutcome, MiqpSolver, SolveStats, SolverConfig, Termination};
pub use error::{Error, Result};
pub use ocp::{CondensedQp, Condenser, OcpMiqp, Stage, Terminal, TrajectorySolution};

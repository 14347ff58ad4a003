//! Loads a TOML problem file and solves it once at its initial state.
//!
//! ```text
//! cargo run --example solve_problem_file -- [path/to/problem.toml]
//! ```

use std::path::{Path, PathBuf};

use mimpc::problem_file::ProblemFile;
use mimpc::{solve_miqp, SolverConfig};

pub fn toy_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy.prob")
}

pub fn run(path: &Path) -> mimpc::Result<f64> {
    let file = ProblemFile::load(path)?;
    println!(
        "{}: horizon {}, {} inputs per stage, {} binaries",
        path.display(),
        file.prob.horizon(),
        file.prob.nu,
        file.prob.n_binaries()
    );
    let out = solve_miqp(&file.prob, &file.x0, None, &SolverConfig::default())?;
    let Some(sol) = &out.solution else {
        println!("infeasible ({} nodes)", out.stats.nodes);
        return Ok(f64::INFINITY);
    };
    for (i, (u, x)) in sol.inputs.iter().zip(&sol.states).enumerate() {
        println!("stage {i}: x = {:?}  u = {:?}", x.as_slice(), u.as_slice());
    }
    let s = &out.stats;
    println!(
        "objective {:.6}  nodes {}  QP solves {}  {}",
        sol.objective, s.nodes, s.qp_solves, s.termination
    );
    Ok(sol.objective)
}

fn main() -> mimpc::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(toy_path);
    run(&path).map(|_| ())
}

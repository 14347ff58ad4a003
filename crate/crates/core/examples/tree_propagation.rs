//! One receding-horizon step by hand: solve, shift the branching path and
//! pseudo-costs, and warm-start the next problem.

use mimpc::bench::satellite::{initial_state, make_satellite, SatelliteConfig};
use mimpc::tree::WarmStart;
use mimpc::{MiqpSolver, SolverConfig};

pub fn run() -> mimpc::Result<(usize, usize)> {
    let sat = SatelliteConfig::default();
    let (prob, plant) = make_satellite(&sat)?;
    let solver = MiqpSolver::new(&prob, SolverConfig::default())?;

    let x0 = initial_state(&sat);
    let first = solver.solve(&x0, None)?;
    let u0 = first
        .first_input()
        .expect("the drifting state is feasible")
        .clone();
    println!(
        "step 0: {} nodes, path of {} branchings",
        first.stats.nodes,
        first.artifacts.path.len()
    );
    println!(
        "{}",
        first
            .artifacts
            .path
            .to_toml()?
            .lines()
            .take(12)
            .collect::<Vec<_>>()
            .join("\n")
    );

    let x1 = plant.step(&x0, &u0);
    let pc = first
        .artifacts
        .pseudo_costs
        .as_ref()
        .expect("a finished solve keeps its pseudo-costs");
    let warm = WarmStart::shifted(&first.artifacts.path, pc, 1);
    let cold = solver.solve(&x1, None)?;
    let hot = solver.solve(&x1, Some(&warm))?;
    println!(
        "step 1: cold {} nodes / {} QPs, warm {} nodes / {} QPs",
        cold.stats.nodes, cold.stats.qp_solves, hot.stats.nodes, hot.stats.qp_solves
    );
    println!(
        "objectives cold {:.9} warm {:.9}",
        cold.objective().unwrap_or(f64::NAN),
        hot.objective().unwrap_or(f64::NAN)
    );
    Ok((cold.stats.qp_solves, hot.stats.qp_solves))
}

fn main() -> mimpc::Result<()> {
    run().map(|_| ())
}

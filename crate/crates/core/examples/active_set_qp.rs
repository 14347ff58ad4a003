//! The node QP solver on its own: a box-constrained least-squares problem,
//! re-solved after fixing a variable, with and without the previous active
//! set as a hint.

use mimpc::ocp::{condense, OcpMiqp, Stage, Terminal};
use mimpc::qp::{self, BoundOverride, QpInstance, QpOptions, QpStatus, WarmStartHint};
use nalgebra::{dmatrix, dvector};

pub fn run() -> mimpc::Result<(usize, usize)> {
    // min ½|u - (0.7, -0.4, 1.6)|² + coupling, 0 <= u <= 1, u0 + u2 <= 1.2.
    let mut s = Stage::new(1, 3);
    s.input_cost = dmatrix![2.0, 0.5, 0.0; 0.5, 2.0, 0.5; 0.0, 0.5, 2.0];
    s.input_lin = dvector![-1.4, 0.8, -3.2];
    s.input_lo = dvector![0.0, 0.0, 0.0];
    s.input_hi = dvector![1.0, 1.0, 1.0];
    s.push_row(&[0.0], &[1.0, 0.0, 1.0], f64::NEG_INFINITY, 1.2);
    let qp = condense(&OcpMiqp::repeated(s, 1, Terminal::new(1)), &dvector![0.0])?;
    let opts = QpOptions::default();

    let inst = QpInstance::new(&qp);
    let root = qp::solve(&inst, &WarmStartHint::none(), &opts);
    println!(
        "relaxation: u = {:.4?}, objective {:.6}, {} iterations, active {:?}",
        root.u, root.objective, root.iterations, root.active_set
    );

    let child = inst.update_bounds(&[BoundOverride::fix(2, 0.0)])?;
    let cold = qp::solve(&child, &WarmStartHint::none(), &opts);
    let warm = qp::solve(&child, &WarmStartHint::from_result(&root), &opts);
    println!(
        "u2 = 0: objective {:.6}, {} iterations cold, {} with the parent's active set",
        warm.objective, cold.iterations, warm.iterations
    );

    let clash = inst.update_bounds(&[BoundOverride::fix(0, 1.0), BoundOverride::fix(2, 1.0)])?;
    let res = qp::solve(&clash, &WarmStartHint::none(), &opts);
    assert_eq!(res.status, QpStatus::Infeasible);
    println!("u0 = u2 = 1: infeasible, certificate {:?}", res.certificate);
    Ok((cold.iterations, warm.iterations))
}

fn main() -> mimpc::Result<()> {
    run().map(|_| ())
}

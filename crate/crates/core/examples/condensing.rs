//! Eliminates the states of a small double-integrator problem and checks
//! that the dense control-space QP reproduces the structured objective.

use mimpc::ocp::{condense, OcpMiqp, Stage, Terminal};
use nalgebra::{dmatrix, dvector, DVector};

fn double_integrator(horizon: usize) -> OcpMiqp {
    let mut s = Stage::new(2, 1);
    s.dynamics = dmatrix![1.0, 0.1; 0.0, 1.0];
    s.input_map = dmatrix![0.005; 0.1];
    s.state_cost = dmatrix![1.0, 0.0; 0.0, 0.1];
    s.input_cost = dmatrix![0.01];
    s.input_lo = dvector![-1.0];
    s.input_hi = dvector![1.0];
    // Velocity limit on the next state.
    s.push_row(&[0.0, 1.0], &[0.1], -0.5, 0.5);
    let mut t = Terminal::new(2);
    t.cost = dmatrix![10.0, 0.0; 0.0, 1.0];
    OcpMiqp::repeated(s, horizon, t)
}

pub fn run() -> mimpc::Result<f64> {
    let prob = double_integrator(4);
    let x0 = dvector![1.0, 0.0];
    let qp = condense(&prob, &x0)?;
    println!("{} variables, {} rows", qp.n_vars(), qp.n_rows());
    println!("Hessian {:.4}", qp.hessian());
    println!("gradient {:.4}", qp.gradient().transpose());
    println!("constant {:.4}", qp.constant());

    let u: Vec<f64> = (0..qp.n_vars()).map(|k| 0.3 - 0.2 * k as f64).collect();
    let states = prob.simulate(&x0, &u);
    let structured = prob.objective(&states, &u);
    let dense = qp.objective(&u);
    println!("objective structured {structured:.12} dense {dense:.12}");
    let traj = qp.expand(&u);
    let last: &DVector<f64> = traj.states.last().expect("horizon is positive");
    println!("final state {:?}", last.as_slice());
    Ok((structured - dense).abs())
}

fn main() -> mimpc::Result<()> {
    run().map(|_| ())
}

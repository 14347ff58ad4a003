//! Bound tightening on a one-stage problem with a cardinality row and a
//! gated continuous input.

use mimpc::ocp::{condense, OcpMiqp, Stage, Terminal};
use mimpc::presolve::{propagate, BoundState, PropagationConfig};
use nalgebra::{dvector, DMatrix, DVector};

fn show(label: &str, b: &BoundState) {
    let pairs: Vec<String> =
        b.lo.iter()
            .zip(&b.hi)
            .map(|(l, h)| format!("[{l}, {h}]"))
            .collect();
    println!(
        "{label:<28} {}  ({:?}, {} passes)",
        pairs.join(" "),
        b.status,
        b.passes
    );
}

pub fn run() -> mimpc::Result<bool> {
    // Inputs: three binaries z0..z2 and a continuous v in [-5, 5].
    let mut s = Stage::new(1, 4);
    s.input_cost = DMatrix::identity(4, 4);
    s.input_lo = dvector![0.0, 0.0, 0.0, -5.0];
    s.input_hi = dvector![1.0, 1.0, 1.0, 5.0];
    s.binaries = vec![0, 1, 2];
    // At most one binary on, and z0 + z1 >= 1.
    s.push_row(&[0.0], &[1.0, 1.0, 1.0, 0.0], f64::NEG_INFINITY, 1.0);
    s.push_row(&[0.0], &[1.0, 1.0, 0.0, 0.0], 1.0, f64::INFINITY);
    // v <= 2 + 1.5 z0.
    s.push_row(&[0.0], &[-1.5, 0.0, 0.0, 1.0], f64::NEG_INFINITY, 2.0);
    let prob = OcpMiqp::repeated(s, 1, Terminal::new(1));
    let qp = condense(&prob, &DVector::zeros(1))?;
    let cfg = PropagationConfig::default();

    let root = BoundState::from_qp(&qp);
    show("original", &root);
    let root = propagate(&qp, root, &cfg);
    show("root propagation", &root);

    let mut down = root.clone();
    down.clear_changed();
    down.fix(0, 0.0);
    let down = propagate(&qp, down, &cfg);
    show("after z0 = 0", &down);

    let mut clash = root.clone();
    clash.clear_changed();
    clash.fix(0, 1.0);
    clash.fix(1, 1.0);
    let clash = propagate(&qp, clash, &cfg);
    show("after z0 = z1 = 1", &clash);
    Ok(down.is_fixed(1) && !clash.is_consistent())
}

fn main() -> mimpc::Result<()> {
    run().map(|_| ())
}

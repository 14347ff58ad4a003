//! Every example runs through its `run` entry point with small sizes.

#[allow(dead_code)]
#[path = "../examples/active_set_qp.rs"]
mod active_set_qp;
#[allow(dead_code)]
#[path = "../examples/benchmark_sweep.rs"]
mod benchmark_sweep;
#[allow(dead_code)]
#[path = "../examples/condensing.rs"]
mod condensing;
#[allow(dead_code)]
#[path = "../examples/domain_propagation.rs"]
mod domain_propagation;
#[allow(dead_code)]
#[path = "../examples/oracle_check.rs"]
mod oracle_check;
#[allow(dead_code)]
#[path = "../examples/reliability_branching.rs"]
mod reliability_branching;
#[allow(dead_code)]
#[path = "../examples/satellite_closed_loop.rs"]
mod satellite_closed_loop;
#[allow(dead_code)]
#[path = "../examples/solve_problem_file.rs"]
mod solve_problem_file;
#[allow(dead_code)]
#[path = "../examples/tree_propagation.rs"]
mod tree_propagation;

#[test]
fn active_set_qp_runs() {
    active_set_qp::run().unwrap();
}

#[test]
fn benchmark_sweep_runs() {
    assert_eq!(benchmark_sweep::run(vec![2, 3], 3).unwrap(), 4);
}

#[test]
fn condensing_matches() {
    assert!(condensing::run().unwrap() <= 1e-9);
}

#[test]
fn domain_propagation_fixes_and_detects() {
    assert!(domain_propagation::run().unwrap());
}

#[test]
fn oracle_check_agrees() {
    assert_eq!(oracle_check::run(20).unwrap(), 0);
}

#[test]
fn reliability_branching_runs() {
    let nodes = reliability_branching::run(17).unwrap();
    assert_eq!(nodes.len(), 6);
}

#[test]
fn satellite_closed_loop_stays_out_of_the_zone() {
    let (_, in_zone) = satellite_closed_loop::run(10, None).unwrap();
    assert_eq!(in_zone, 0);
}

#[test]
fn solve_problem_file_solves_the_toy() {
    let obj = solve_problem_file::run(&solve_problem_file::toy_path()).unwrap();
    assert!(obj.is_finite());
}

#[test]
fn tree_propagation_saves_qps() {
    let (cold, warm) = tree_propagation::run().unwrap();
    assert!(warm <= cold);
}

//! Compares the branching rules and a few reliability thresholds on one
//! random hybrid instance.

use mimpc::bench::random::RandomHybridFamily;
use mimpc::branching::BranchRule;
use mimpc::{solve_miqp, SolverConfig};

pub fn run(seed: u64) -> mimpc::Result<Vec<(String, usize)>> {
    let family = RandomHybridFamily {
        nx: 3,
        n_binary: 3,
        n_continuous: 2,
        horizon: 5,
        rows_per_stage: 3,
        ..Default::default()
    };
    let inst = family.generate(seed);
    let settings = [
        ("pseudo-cost", BranchRule::PseudoCost, 0),
        ("reliability eta=1", BranchRule::Reliability, 1),
        ("reliability eta=2", BranchRule::Reliability, 2),
        ("reliability eta=4", BranchRule::Reliability, 4),
        ("reliability eta=inf", BranchRule::Reliability, u32::MAX),
        ("strong", BranchRule::Strong, u32::MAX),
    ];
    let mut nodes = Vec::new();
    println!(
        "{:<20} {:>7} {:>9} {:>10} {:>12}",
        "rule", "nodes", "QP solves", "strong QPs", "objective"
    );
    for (name, rule, eta) in settings {
        let mut cfg = SolverConfig::default();
        cfg.branching.rule = rule;
        cfg.branching.eta_rel = eta;
        let out = solve_miqp(&inst.prob, &inst.x0, None, &cfg)?;
        let s = &out.stats;
        let obj = out
            .objective()
            .map_or("infeasible".to_string(), |j| format!("{j:.6}"));
        println!(
            "{name:<20} {:>7} {:>9} {:>10} {obj:>12}",
            s.nodes, s.qp_solves, s.strong_branch_qps
        );
        nodes.push((name.to_string(), s.nodes));
    }
    Ok(nodes)
}

fn main() -> mimpc::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(17);
    run(seed).map(|_| ())
}

//! Cross-checks the branch-and-bound result against exhaustive enumeration
//! on a batch of small random instances.

use mimpc::bench::oracle::brute_force_oracle;
use mimpc::bench::random::small_corpus;
use mimpc::{solve_miqp, SolverConfig};

pub fn run(count: usize) -> mimpc::Result<usize> {
    let cfg = SolverConfig::default();
    let mut mismatches = 0;
    let (mut nodes, mut enumerated) = (0, 0);
    for inst in small_corpus(count, 1, 6) {
        let oracle = brute_force_oracle(&inst.prob, &inst.x0)?;
        let out = solve_miqp(&inst.prob, &inst.x0, None, &cfg)?;
        nodes += out.stats.nodes;
        enumerated += oracle.enumerated;
        let agree = match (oracle.objective, out.objective()) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-6,
            (None, None) => true,
            _ => false,
        };
        if !agree {
            mismatches += 1;
            println!(
                "seed {}: oracle {:?} solver {:?}",
                inst.seed,
                oracle.objective,
                out.objective()
            );
        }
    }
    println!("{count} instances: {nodes} B&B nodes vs {enumerated} enumerated assignments, {mismatches} mismatches");
    Ok(mismatches)
}

fn main() -> mimpc::Result<()> {
    let count = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    run(count).map(|_| ())
}

//! Horizon sweep on a random hybrid system with warm start on and off,
//! written as CSV to stdout.

use mimpc::bench::harness::{run_benchmark, warm_cold_configs, write_report, BenchmarkSpec, Suite};
use mimpc::bench::random::RandomHybridFamily;
use mimpc::mpc::ClosedLoopConfig;

pub fn run(horizons: Vec<usize>, steps: usize) -> mimpc::Result<usize> {
    let spec = BenchmarkSpec {
        suite: Suite::Random {
            family: RandomHybridFamily {
                nx: 3,
                n_binary: 2,
                n_continuous: 2,
                ..Default::default()
            },
            seed: 1,
        },
        horizons,
        configs: warm_cold_configs(ClosedLoopConfig::default()),
        steps,
        repetitions: 1,
    };
    let rows = run_benchmark(&spec)?;
    write_report(&rows, std::io::stdout().lock())?;
    Ok(rows.len())
}

fn main() -> mimpc::Result<()> {
    run((2..=6).collect(), 20).map(|_| ())
}

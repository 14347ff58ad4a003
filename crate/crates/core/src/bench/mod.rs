//! Case studies, the brute-force oracle and the benchmark harness.

pub mod harness;
pub mod oracle;
pub mod random;
pub mod satellite;

pub use harness::{run_benchmark, write_report, BenchRow, BenchmarkSpec, Suite};
pub use oracle::{brute_force_oracle, separable_optimum, OracleResult};
pub use random::{small_corpus, RandomHybridFamily, RandomInstance};
pub use satellite::{make_satellite, SatelliteConfig};

//! Closed-loop timing sweeps over the horizon length.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bench::random::RandomHybridFamily;
use crate::bench::satellite::{initial_state, make_satellite, SatelliteConfig};
use crate::error::Result;
use crate::mpc::{run_closed_loop, ClosedLoopConfig, ClosedLoopTrace, FailurePolicy, PlantModel};
use crate::ocp::OcpMiqp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Suite {
    Satellite(SatelliteConfig),
    /// Time-invariant random hybrid system; the family's horizon is
    /// overridden by the sweep.
    Random {
        family: RandomHybridFamily,
        seed: u64,
    },
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Satellite(_) => "satellite",
            Suite::Random { .. } => "random",
        }
    }

    /// The problem, plant and initial state for one horizon length.
    pub fn instance(&self, horizon: usize) -> Result<(OcpMiqp, PlantModel, DVector<f64>)> {
        match self {
            Suite::Satellite(base) => {
                let cfg = SatelliteConfig {
                    horizon,
                    ..base.clone()
                };
                let (prob, plant) = make_satellite(&cfg)?;
                Ok((prob, plant, initial_state(&cfg)))
            }
            Suite::Random { family, seed } => {
                let fam = RandomHybridFamily { horizon, ..*family };
                let inst = fam.time_invariant(*seed);
                let plant = PlantModel::nominal(&inst.prob);
                Ok((inst.prob, plant, inst.x0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub suite: Suite,
    pub horizons: Vec<usize>,
    /// Named closed-loop configurations; their `steps` field is ignored in
    /// favour of [`BenchmarkSpec::steps`].
    pub configs: Vec<(String, ClosedLoopConfig)>,
    pub steps: usize,
    pub repetitions: usize,
}

/// One cell of the sweep: suite × horizon × config × repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub suite: String,
    pub horizon: usize,
    pub config: String,
    pub repetition: usize,
    pub steps: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub mean_nodes: f64,
    pub max_nodes: usize,
    pub total_nodes: usize,
    pub total_qp_solves: usize,
    pub total_qp_iters: usize,
}

impl BenchRow {
    fn from_trace(
        suite: &str,
        horizon: usize,
        config: &str,
        repetition: usize,
        trace: &ClosedLoopTrace,
    ) -> Self {
        let steps = trace.len();
        let times: Vec<f64> = trace.records.iter().map(|r| r.time_ms).collect();
        let nodes: Vec<usize> = trace.records.iter().map(|r| r.stats.nodes).collect();
        let total_nodes: usize = nodes.iter().sum();
        Self {
            suite: suite.to_string(),
            horizon,
            config: config.to_string(),
            repetition,
            steps,
            mean_ms: times.iter().sum::<f64>() / steps.max(1) as f64,
            max_ms: times.iter().copied().fold(0.0, f64::max),
            mean_nodes: total_nodes as f64 / steps.max(1) as f64,
            max_nodes: nodes.iter().copied().max().unwrap_or(0),
            total_nodes,
            total_qp_solves: trace.total_qp_solves(),
            total_qp_iters: trace.records.iter().map(|r| r.stats.qp_iterations).sum(),
        }
    }
}

/// Runs every cell sequentially, in the order horizon, config, repetition.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &horizon in &spec.horizons {
        let (prob, plant, x0) = spec.suite.instance(horizon)?;
        for (name, config) in &spec.configs {
            let cfg = ClosedLoopConfig {
                steps: spec.steps,
                policy: match spec.suite {
                    Suite::Random { .. } => FailurePolicy::HoldShifted,
                    Suite::Satellite(_) => config.policy,
                },
                ..*config
            };
            for rep in 0..spec.repetitions.max(1) {
                let trace = run_closed_loop(&prob, &plant, &x0, &cfg)?;
                rows.push(BenchRow::from_trace(
                    spec.suite.name(),
                    horizon,
                    name,
                    rep,
                    &trace,
                ));
            }
        }
    }
    Ok(rows)
}

/// Writes rows with a header; column order follows [`BenchRow`].
pub fn write_report<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Warm and cold closed-loop configurations sharing `base`.
pub fn warm_cold_configs(base: ClosedLoopConfig) -> Vec<(String, ClosedLoopConfig)> {
    vec![
        (
            "cold".into(),
            ClosedLoopConfig {
                warm_start: false,
                ..base
            },
        ),
        (
            "warm".into(),
            ClosedLoopConfig {
                warm_start: true,
                ..base
            },
        ),
    ]
}

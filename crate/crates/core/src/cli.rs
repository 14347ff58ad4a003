//! Command-line front end. The binary only forwards to [`main`].
//!
//! Every flag can also be set through an environment variable with the
//! `MIMPC_` prefix, e.g. `MIMPC_ETA_REL=4`. Each run writes its resolved
//! configuration to `run.toml` in the output directory; `mimpc replay
//! out/run.toml` repeats it.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bench::harness::{run_benchmark, warm_cold_configs, write_report, BenchmarkSpec, Suite};
use crate::bench::random::RandomHybridFamily;
use crate::bench::satellite::SatelliteConfig;
use crate::bnb::{solve_miqp, SolverConfig, Termination};
use crate::error::{Error, Result};
use crate::mpc::{run_closed_loop, ClosedLoopConfig, FailurePolicy, PlantModel};
use crate::ocp::OcpMiqp;
use crate::problem_file::ProblemFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "mimpc",
    version,
    about = "Branch-and-bound for mixed-integer MPC"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Solve one problem at its initial state.
    Solve(RunArgs),
    /// Run the receding-horizon loop.
    Simulate(RunArgs),
    /// Sweep horizons with warm start on and off.
    Bench(RunArgs),
    /// Repeat a run from its `run.toml`.
    Replay { config: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Simulate,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Satellite,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

fn parse_eta(s: &str) -> std::result::Result<u32, String> {
    match s {
        "inf" | "infinity" => Ok(u32::MAX),
        _ => s
            .parse()
            .map_err(|e| format!("{e}; expected a count or `inf`")),
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be positive and finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Problem file (TOML).
    #[arg(long, env = "MIMPC_PROBLEM", conflicts_with = "scenario")]
    problem: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, env = "MIMPC_SCENARIO", value_enum)]
    scenario: Option<Scenario>,
    /// Prediction horizon of a built-in scenario.
    #[arg(long, env = "MIMPC_HORIZON", value_parser = clap::value_parser!(u64).range(1..))]
    horizon: Option<u64>,
    /// Horizons swept by `bench`, comma separated; `--horizon` overrides.
    #[arg(
        long,
        env = "MIMPC_HORIZONS",
        value_delimiter = ',',
        default_value = "2,3,4,5,6"
    )]
    horizons: Vec<usize>,
    /// Reliability threshold; `inf` gives strong branching everywhere.
    #[arg(long, env = "MIMPC_ETA_REL", value_parser = parse_eta)]
    eta_rel: Option<u32>,
    #[arg(long, env = "MIMPC_EPS_GAP", value_parser = parse_positive)]
    eps_gap: Option<f64>,
    #[arg(long, env = "MIMPC_INT_TOL", value_parser = parse_positive)]
    int_tol: Option<f64>,
    /// Node limit per solve.
    #[arg(long, env = "MIMPC_MAX_ITERS")]
    max_iters: Option<usize>,
    #[arg(long, env = "MIMPC_WARM_START", value_enum, default_value = "on")]
    warm_start: OnOff,
    #[arg(long, env = "MIMPC_SEED", default_value_t = 0)]
    seed: u64,
    /// Closed-loop steps for `simulate` and `bench`.
    #[arg(long, env = "MIMPC_STEPS", default_value_t = 50)]
    steps: usize,
    #[arg(long, env = "MIMPC_REPETITIONS", default_value_t = 1)]
    repetitions: usize,
    /// Output directory for CSV files and the configuration echo.
    #[arg(long, env = "MIMPC_OUT")]
    out: Option<PathBuf>,
}

/// Fully resolved run, as echoed to `run.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub horizons: Vec<usize>,
    pub seed: u64,
    pub steps: usize,
    pub repetitions: usize,
    pub warm_start: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub solver: SolverConfig,
}

impl RunConfig {
    fn from_args(command: Command, a: RunArgs) -> Result<Self> {
        let mut solver = SolverConfig::default();
        if let Some(eta) = a.eta_rel {
            solver.branching.eta_rel = eta;
        }
        if let Some(eps) = a.eps_gap {
            solver.eps_gap = eps;
        }
        if let Some(tol) = a.int_tol {
            solver.branching.int_tol = tol;
        }
        solver.max_iters = a.max_iters;
        let scenario = match (&a.problem, a.scenario) {
            (None, None) => Some(Scenario::Satellite),
            (_, s) => s,
        };
        if a.problem.is_some() && command == Command::Bench {
            return Err(Error::Scenario("bench runs on a built-in scenario".into()));
        }
        if a.horizons.contains(&0) {
            return Err(Error::Scenario("horizons must be positive".into()));
        }
        Ok(Self {
            command,
            problem: a.problem,
            scenario,
            horizon: a.horizon.map(|h| h as usize),
            horizons: match a.horizon {
                Some(h) if command == Command::Bench => vec![h as usize],
                _ => a.horizons,
            },
            seed: a.seed,
            steps: a.steps,
            repetitions: a.repetitions,
            warm_start: a.warm_start == OnOff::On,
            out: a.out,
            solver,
        })
    }

    fn suite(&self) -> Suite {
        match self.scenario.unwrap_or(Scenario::Satellite) {
            Scenario::Satellite => Suite::Satellite(SatelliteConfig::default()),
            Scenario::Random => Suite::Random {
                family: RandomHybridFamily {
                    nx: 3,
                    n_binary: 2,
                    n_continuous: 2,
                    ..Default::default()
                },
                seed: self.seed,
            },
        }
    }

    fn default_horizon(&self) -> usize {
        match self.scenario {
            Some(Scenario::Random) => RandomHybridFamily::default().horizon,
            _ => SatelliteConfig::default().horizon,
        }
    }

    /// Problem, plant and initial state for `solve` and `simulate`.
    fn instance(&self) -> Result<(OcpMiqp, PlantModel, DVector<f64>)> {
        match &self.problem {
            Some(path) => {
                let f = ProblemFile::load(path)?;
                let plant = PlantModel::nominal(&f.prob);
                Ok((f.prob, plant, f.x0))
            }
            None => self
                .suite()
                .instance(self.horizon.unwrap_or_else(|| self.default_horizon())),
        }
    }

    fn closed_loop(&self) -> ClosedLoopConfig {
        ClosedLoopConfig {
            steps: self.steps,
            warm_start: self.warm_start,
            policy: match self.scenario {
                Some(Scenario::Random) => FailurePolicy::HoldShifted,
                _ => FailurePolicy::Abort,
            },
            solver: self.solver,
            ..Default::default()
        }
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(
                    dir.join("run.toml"),
                    toml::to_string(self).map_err(|e| Error::InvalidProblem(e.to_string()))?,
                )?;
                Ok(Some(dir))
            }
            None => Ok(None),
        }
    }

    /// Executes the run, printing summary lines on stdout.
    pub fn execute(&self) -> Result<()> {
        let out = self.out_dir()?;
        match self.command {
            Command::Solve => self.solve(out),
            Command::Simulate => self.simulate(out),
            Command::Bench => self.bench(out),
        }
    }

    fn solve(&self, out: Option<&Path>) -> Result<()> {
        let (prob, _, x0) = self.instance()?;
        let start = Instant::now();
        let res = solve_miqp(&prob, &x0, None, &self.solver)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let s = &res.stats;
        match res.objective() {
            Some(j) => println!(
                "objective {j:.9} nodes {} qp_solves {} time_ms {ms:.3} termination {}",
                s.nodes, s.qp_solves, s.termination
            ),
            None => println!(
                "objective none nodes {} time_ms {ms:.3} termination {}",
                s.nodes, s.termination
            ),
        }
        if let (Some(dir), Some(sol)) = (out, &res.solution) {
            let mut w = csv::Writer::from_path(dir.join("solution.csv"))?;
            let header: Vec<String> = std::iter::once("stage".to_string())
                .chain((0..prob.nu).map(|k| format!("u_{k}")))
                .collect();
            w.write_record(&header)?;
            for (i, u) in sol.inputs.iter().enumerate() {
                let row: Vec<String> = std::iter::once(i.to_string())
                    .chain(u.iter().map(|v| v.to_string()))
                    .collect();
                w.write_record(&row)?;
            }
            w.flush()?;
            fs::write(
                dir.join("warm_start_path.toml"),
                res.artifacts.path.to_toml()?,
            )?;
        }
        if s.termination == Termination::Infeasible {
            return Err(Error::Infeasible(
                "no binary assignment admits a feasible solution".into(),
            ));
        }
        Ok(())
    }

    fn simulate(&self, out: Option<&Path>) -> Result<()> {
        let (prob, plant, x0) = self.instance()?;
        let trace = run_closed_loop(&prob, &plant, &x0, &self.closed_loop())?;
        for r in &trace.records {
            println!(
                "step {} objective {:.9} nodes {} time_ms {:.3}{}",
                r.step,
                r.objective,
                r.stats.nodes,
                r.time_ms,
                if r.held { " held" } else { "" }
            );
        }
        let x = &trace.final_state;
        println!(
            "steps {} total_nodes {} total_qp_solves {} final_state {:?}",
            trace.len(),
            trace.total_nodes(),
            trace.total_qp_solves(),
            x.as_slice()
        );
        if let Some(dir) = out {
            trace.save_csv(&dir.join("trace.csv"))?;
        }
        Ok(())
    }

    fn bench(&self, out: Option<&Path>) -> Result<()> {
        let suite = self.suite();
        if let Some(dir) = out {
            for &h in &self.horizons {
                let (prob, _, x0) = suite.instance(h)?;
                ProblemFile { prob, x0 }.save(&dir.join(format!("{}_n{h}.toml", suite.name())))?;
            }
        }
        let spec = BenchmarkSpec {
            suite,
            horizons: self.horizons.clone(),
            configs: warm_cold_configs(self.closed_loop()),
            steps: self.steps,
            repetitions: self.repetitions,
        };
        let rows = run_benchmark(&spec)?;
        for r in &rows {
            println!(
                "{} N={} {} rep {}: mean_ms {:.3} max_ms {:.3} total_nodes {}",
                r.suite, r.horizon, r.config, r.repetition, r.mean_ms, r.max_ms, r.total_nodes
            );
        }
        match out {
            Some(dir) => write_report(&rows, fs::File::create(dir.join("bench.csv"))?),
            None => Ok(()),
        }
    }
}

/// Exit code and one-line diagnostic for an error.
fn report(e: &Error) -> i32 {
    let (code, kind) = match e {
        Error::Parse { .. } | Error::InvalidProblem(_) | Error::LooseningOverride { .. } => {
            (EXIT_PARSE, "parse")
        }
        Error::Infeasible(_) | Error::ClosedLoop { .. } => (EXIT_INFEASIBLE, "infeasible"),
        Error::Scenario(_) => (EXIT_USAGE, "usage"),
        _ => (EXIT_OTHER, "other"),
    };
    eprintln!("error[{kind}]: {e}");
    code
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let config =
        match cli.command {
            CliCommand::Solve(a) => RunConfig::from_args(Command::Solve, a),
            CliCommand::Simulate(a) => RunConfig::from_args(Command::Simulate, a),
            CliCommand::Bench(a) => RunConfig::from_args(Command::Bench, a),
            CliCommand::Replay { config } => fs::read_to_string(&config)
                .map_err(Error::from)
                .and_then(|text| {
                    toml::from_str(&text).map_err(|e| Error::Parse {
                        line: e
                            .span()
                            .map_or(1, |s| text[..s.start].matches('\n').count() + 1),
                        message: e.message().trim().to_string(),
                    })
                }),
        };
    match config.and_then(|c| c.execute()) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

//! Receding-horizon loop: solve, apply the first input, advance the plant,
//! shift the search tree.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bnb::{MiqpSolver, SolveStats, SolverConfig, Termination};
use crate::error::{Error, Result};
use crate::ocp::OcpMiqp;
use crate::tree::{WarmStart, WarmStartPath};

type StepFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// The system the loop controls.
pub struct PlantModel {
    nx: usize,
    step: Box<StepFn>,
}

impl std::fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlantModel")
            .field("nx", &self.nx)
            .finish_non_exhaustive()
    }
}

impl PlantModel {
    /// `x⁺ = A x + B u + a`.
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>, offset: DVector<f64>) -> Self {
        let nx = a.nrows();
        Self {
            nx,
            step: Box::new(move |x, u| &a * x + &b * u + &offset),
        }
    }

    /// The first-stage dynamics of the prediction model.
    pub fn nominal(prob: &OcpMiqp) -> Self {
        let s = &prob.stages[0];
        Self::linear(s.dynamics.clone(), s.input_map.clone(), s.offset.clone())
    }

    pub fn custom(
        nx: usize,
        step: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            nx,
            step: Box::new(step),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.step)(x, u)
    }
}

/// What to do when a step yields no usable input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    /// Apply the second stage of the previous plan and flag the step.
    HoldShifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedLoopConfig {
    pub steps: usize,
    pub warm_start: bool,
    /// Observations removed from every pseudo-cost counter per step.
    pub rel_decay: u32,
    pub policy: FailurePolicy,
    pub solver: SolverConfig,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            warm_start: true,
            rel_decay: 1,
            policy: FailurePolicy::Abort,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    /// State at which the problem was solved.
    pub x0: DVector<f64>,
    pub u0: DVector<f64>,
    pub objective: f64,
    pub stats: SolveStats,
    pub time_ms: f64,
    /// The input came from the failure policy, not from a solve.
    pub held: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ClosedLoopTrace {
    pub records: Vec<StepRecord>,
    /// State after the last applied input.
    pub final_state: DVector<f64>,
}

impl ClosedLoopTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `x̂0(0), …, x̂0(T−1)` followed by the final state.
    pub fn states(&self) -> Vec<DVector<f64>> {
        let mut xs: Vec<DVector<f64>> = self.records.iter().map(|r| r.x0.clone()).collect();
        xs.push(self.final_state.clone());
        xs
    }

    pub fn inputs(&self) -> Vec<DVector<f64>> {
        self.records.iter().map(|r| r.u0.clone()).collect()
    }

    pub fn total_qp_solves(&self) -> usize {
        self.records.iter().map(|r| r.stats.qp_solves).sum()
    }

    pub fn total_nodes(&self) -> usize {
        self.records.iter().map(|r| r.stats.nodes).sum()
    }

    /// Columns: step, time_ms, nodes, qp_iters, objective, lb, ub, u0_0..,
    /// x_0.. (the state at which the step was solved), termination, held.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let (nu, nx) = match self.records.first() {
            Some(r) => (r.u0.len(), r.x0.len()),
            None => (0, 0),
        };
        let mut header: Vec<String> = [
            "step",
            "time_ms",
            "nodes",
            "qp_iters",
            "objective",
            "lb",
            "ub",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..nu).map(|k| format!("u0_{k}")));
        header.extend((0..nx).map(|k| format!("x_{k}")));
        header.push("termination".into());
        header.push("held".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.step.to_string(),
                format!("{:.3}", r.time_ms),
                r.stats.nodes.to_string(),
                r.stats.qp_iterations.to_string(),
                r.objective.to_string(),
                r.stats.lower_bound.to_string(),
                r.stats.upper_bound.to_string(),
            ];
            row.extend(r.u0.iter().map(|v| v.to_string()));
            row.extend(r.x0.iter().map(|v| v.to_string()));
            row.push(r.stats.termination.to_string());
            row.push(u8::from(r.held).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Runs `cfg.steps` receding-horizon steps from `x_init`.
pub fn run_closed_loop(
    prob: &OcpMiqp,
    plant: &PlantModel,
    x_init: &DVector<f64>,
    cfg: &ClosedLoopConfig,
) -> Result<ClosedLoopTrace> {
    if cfg.steps == 0 {
        return Err(Error::InvalidProblem(
            "closed loop needs at least one step".into(),
        ));
    }
    if plant.nx() != prob.nx {
        return Err(Error::InvalidProblem(format!(
            "plant has {} states, model has {}",
            plant.nx(),
            prob.nx
        )));
    }
    let solver = MiqpSolver::new(prob, cfg.solver)?;
    let nu = prob.nu;
    let mut x = x_init.clone();
    let mut warm: Option<WarmStart> = None;
    let mut previous_plan: Option<Vec<f64>> = None;
    let mut records = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let t0 = Instant::now();
        let outcome = solver.solve(&x, if cfg.warm_start { warm.as_ref() } else { None })?;
        let time_ms = t0.elapsed().as_secs_f64() * 1e3;

        let (u0, objective, held) = match (&outcome.solution, outcome.stats.termination) {
            (Some(sol), _) => (sol.inputs[0].clone(), sol.objective, false),
            (None, term) => {
                let reason = match term {
                    Termination::Infeasible => "problem infeasible",
                    _ => "iteration cap reached without an incumbent",
                };
                match (cfg.policy, &previous_plan) {
                    (FailurePolicy::HoldShifted, Some(plan)) if plan.len() >= 2 * nu => (
                        DVector::from_column_slice(&plan[nu..2 * nu]),
                        f64::NAN,
                        true,
                    ),
                    _ => {
                        return Err(Error::ClosedLoop {
                            step,
                            reason: reason.into(),
                        })
                    }
                }
            }
        };

        let next = plant.step(&x, &u0);
        records.push(StepRecord {
            step,
            x0: x.clone(),
            u0: u0.clone(),
            objective,
            stats: outcome.stats.clone(),
            time_ms,
            held,
        });
        x = next;

        match (
            &outcome.artifacts.incumbent,
            outcome.artifacts.pseudo_costs.as_ref(),
        ) {
            (Some(u), Some(pc)) => {
                previous_plan = Some(u.clone());
                warm = Some(WarmStart::shifted(
                    &outcome.artifacts.path,
                    pc,
                    cfg.rel_decay,
                ));
            }
            (None, Some(pc)) => {
                // Keep the pseudo-costs; shift the held plan so it stays aligned.
                previous_plan = previous_plan.map(|p| {
                    let mut s = p[nu.min(p.len())..].to_vec();
                    s.extend_from_slice(&p[p.len().saturating_sub(nu)..]);
                    s
                });
                let path = WarmStartPath {
                    nu,
                    ..WarmStartPath::default()
                };
                warm = Some(WarmStart::shifted(&path, pc, cfg.rel_decay));
            }
            _ => warm = None,
        }
    }
    Ok(ClosedLoopTrace {
        records,
        final_state: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::solve_miqp;
    use crate::ocp::{Stage, Terminal};
    use nalgebra::{dmatrix, dvector};

    /// Scalar integrator driven by a binary push and a bounded continuous input.
    fn integrator() -> OcpMiqp {
        let mut s = Stage::new(1, 2);
        s.state_cost = dmatrix![1.0];
        s.input_cost = dmatrix![0.1, 0.0; 0.0, 0.1];
        s.dynamics = dmatrix![1.0];
        s.input_map = dmatrix![-1.0, -0.3];
        s.input_lo = dvector![0.0, -1.0];
        s.input_hi = dvector![1.0, 1.0];
        s.binaries = vec![0];
        let mut t = Terminal::new(1);
        t.cost = dmatrix![1.0];
        OcpMiqp::repeated(s, 3, t)
    }

    #[test]
    fn one_step_equals_one_solve() {
        let p = integrator();
        let x0 = dvector![2.5];
        let cfg = ClosedLoopConfig {
            steps: 1,
            ..Default::default()
        };
        let trace = run_closed_loop(&p, &PlantModel::nominal(&p), &x0, &cfg).unwrap();
        let single = solve_miqp(&p, &x0, None, &cfg.solver).unwrap();
        let u0 = single.first_input().unwrap();
        assert_eq!(&trace.records[0].u0, u0);
        let expected = PlantModel::nominal(&p).step(&x0, u0);
        assert_eq!(trace.final_state, expected);
    }

    #[test]
    fn states_follow_the_plant() {
        let p = integrator();
        let plant = PlantModel::nominal(&p);
        let trace = run_closed_loop(
            &p,
            &plant,
            &dvector![3.0],
            &ClosedLoopConfig {
                steps: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let xs = trace.states();
        for (k, r) in trace.records.iter().enumerate() {
            assert_eq!(plant.step(&xs[k], &r.u0), xs[k + 1]);
        }
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "step,time_ms,nodes,qp_iters,objective,lb,ub,u0_0,u0_1,x_0,termination,held"
        ));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn infeasible_step_aborts_by_default() {
        let mut p = integrator();
        for s in &mut p.stages {
            s.push_row(&[0.0], &[1.0, 0.0], 0.2, 0.8);
        }
        let err = run_closed_loop(
            &p,
            &PlantModel::nominal(&p),
            &dvector![1.0],
            &ClosedLoopConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ClosedLoop { step: 0, .. }));
    }
}

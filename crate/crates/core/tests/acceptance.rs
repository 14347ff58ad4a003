//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.
//!
//! ```text
//! cargo test --test acceptance
//! ```

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mimpc::bench::oracle::brute_force_oracle;
use mimpc::bench::random::{small_corpus, RandomInstance};
use mimpc::bench::satellite::{initial_state, make_satellite, SatelliteConfig};
use mimpc::branching::{BranchRule, Direction, PseudoCost, PseudoCostTable};
use mimpc::mpc::{run_closed_loop, ClosedLoopConfig};
use mimpc::ocp::condense;
use mimpc::presolve::{propagate, BoundState, PropagationConfig};
use mimpc::tree::{WarmStart, WarmStartPath};
use mimpc::{solve_miqp, MiqpOutcome, OcpMiqp, SolverConfig, Termination};

const CORPUS_SIZE: usize = 500;
const CORPUS_SEED: u64 = 2024;
const MAX_BINARIES: usize = 6;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn corpus() -> Vec<RandomInstance> {
    small_corpus(CORPUS_SIZE, CORPUS_SEED, MAX_BINARIES)
}

fn solve(inst: &RandomInstance, cfg: &SolverConfig, warm: Option<&WarmStart>) -> MiqpOutcome {
    solve_miqp(&inst.prob, &inst.x0, warm, cfg).expect("corpus instances are well formed")
}

fn oracle_equivalence() -> Verdict {
    let cfg = SolverConfig::default();
    let (mut feasible, mut worst) = (0, 0.0f64);
    for inst in corpus() {
        let oracle = brute_force_oracle(&inst.prob, &inst.x0).map_err(|e| e.to_string())?;
        let out = solve(&inst, &cfg, None);
        match (oracle.objective, out.objective()) {
            (None, None) => {
                if out.stats.termination != Termination::Infeasible {
                    return Err(format!(
                        "seed {}: no solution but {}",
                        inst.seed, out.stats.termination
                    ));
                }
            }
            (Some(a), Some(b)) => {
                feasible += 1;
                worst = worst.max((a - b).abs());
                if (a - b).abs() > 1e-6 {
                    return Err(format!("seed {}: oracle {a:.9} solver {b:.9}", inst.seed));
                }
            }
            (a, b) => {
                return Err(format!(
                    "seed {}: verdicts differ, oracle {a:?} solver {b:?}",
                    inst.seed
                ))
            }
        }
    }
    Ok(format!(
        "{CORPUS_SIZE} instances, {feasible} feasible, worst |Δobjective| {worst:.1e}"
    ))
}

/// `prob` with the given flat input indices fixed through their bounds.
fn restrict(prob: &OcpMiqp, fixes: &[(usize, f64)]) -> OcpMiqp {
    let mut p = prob.clone();
    for &(j, v) in fixes {
        let s = &mut p.stages[j / prob.nu];
        s.input_lo[j % prob.nu] = v;
        s.input_hi[j % prob.nu] = v;
    }
    p
}

fn presolve_soundness() -> Verdict {
    let pcfg = PropagationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut checks, mut declared_infeasible) = (0, 0);
    for inst in corpus() {
        let qp = condense(&inst.prob, &inst.x0).map_err(|e| e.to_string())?;
        let bins = qp.binaries().to_vec();
        // The root plus three random partial fixings.
        for round in 0..4 {
            let fixes: Vec<(usize, f64)> = if round == 0 {
                Vec::new()
            } else {
                bins.iter()
                    .filter_map(|&j| match rng.random_range(0..4) {
                        0 => Some((j, 0.0)),
                        1 => Some((j, 1.0)),
                        _ => None,
                    })
                    .collect()
            };
            let mut b = BoundState::from_qp(&qp);
            for &(j, v) in &fixes {
                b.fix(j, v);
            }
            let b = propagate(&qp, b, &pcfg);
            let oracle = brute_force_oracle(&restrict(&inst.prob, &fixes), &inst.x0)
                .map_err(|e| e.to_string())?;
            checks += 1;
            if !b.is_consistent() {
                declared_infeasible += 1;
                if !oracle.is_infeasible() {
                    return Err(format!(
                        "seed {} fixes {fixes:?}: propagation declared a feasible node infeasible",
                        inst.seed
                    ));
                }
            } else if let Some(u) = &oracle.u {
                if !b.contains(u, 1e-7) {
                    return Err(format!(
                        "seed {} fixes {fixes:?}: propagation cut off the optimum",
                        inst.seed
                    ));
                }
            }
        }
    }
    Ok(format!(
        "{checks} nodes checked, {declared_infeasible} declared infeasible and confirmed"
    ))
}

fn warm_start_transparency() -> Verdict {
    let sat = SatelliteConfig::default();
    let (prob, plant) = make_satellite(&sat).map_err(|e| e.to_string())?;
    let x0 = initial_state(&sat);
    let run = |warm_start| {
        let cfg = ClosedLoopConfig {
            steps: 50,
            warm_start,
            ..Default::default()
        };
        run_closed_loop(&prob, &plant, &x0, &cfg).map_err(|e| e.to_string())
    };
    let (cold, warm) = (run(false)?, run(true)?);
    let mut worst = 0.0f64;
    for (k, (a, b)) in cold.inputs().iter().zip(warm.inputs()).enumerate() {
        let d = (a - &b).amax();
        worst = worst.max(d);
        if d > 1e-8 {
            return Err(format!("step {k}: inputs differ by {d:.2e}"));
        }
    }
    let (qc, qw) = (cold.total_qp_solves(), warm.total_qp_solves());
    let detail = format!(
        "max |Δu| {worst:.1e}, QP solves warm {qw} / cold {qc}, nodes warm {} / cold {}",
        warm.total_nodes(),
        cold.total_nodes()
    );
    if qw > qc {
        return Err(detail);
    }
    Ok(detail)
}

fn populated_pseudo_costs(inst: &RandomInstance, rng: &mut ChaCha8Rng) -> WarmStart {
    let (nu, n) = (inst.prob.nu, inst.prob.horizon());
    let mut pc = PseudoCostTable::new(nu, n);
    for j in inst.prob.binary_indices() {
        *pc.get_mut(j) = PseudoCost {
            phi_down: rng.random_range(0.01..5.0),
            phi_up: rng.random_range(0.01..5.0),
            n_down: rng.random_range(1..4),
            n_up: rng.random_range(1..4),
        };
    }
    WarmStart {
        path: WarmStartPath {
            nu,
            ..Default::default()
        },
        pseudo_costs: pc,
    }
}

fn same_search(a: &MiqpOutcome, b: &MiqpOutcome) -> bool {
    a.stats.nodes == b.stats.nodes
        && a.artifacts.branch_log == b.artifacts.branch_log
        && a.objective().map(f64::to_bits) == b.objective().map(f64::to_bits)
}

fn branching_limits() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let with = |rule, eta_rel| {
        let mut cfg = SolverConfig::default();
        cfg.branching.rule = rule;
        cfg.branching.eta_rel = eta_rel;
        cfg
    };
    let (mut branched, mut nodes) = (0, 0);
    for inst in corpus().into_iter().take(50) {
        let warm = populated_pseudo_costs(&inst, &mut rng);
        let rel0 = solve(&inst, &with(BranchRule::Reliability, 0), Some(&warm));
        let pure_pc = solve(&inst, &with(BranchRule::PseudoCost, 0), Some(&warm));
        if !same_search(&rel0, &pure_pc) {
            return Err(format!(
                "seed {}: eta_rel = 0 differs from pseudo-cost branching",
                inst.seed
            ));
        }
        let rel_inf = solve(&inst, &with(BranchRule::Reliability, u32::MAX), None);
        let strong = solve(&inst, &with(BranchRule::Strong, u32::MAX), None);
        if !same_search(&rel_inf, &strong) {
            return Err(format!(
                "seed {}: eta_rel = inf differs from strong branching",
                inst.seed
            ));
        }
        branched += usize::from(!rel_inf.artifacts.branch_log.is_empty());
        nodes += rel0.stats.nodes + rel_inf.stats.nodes;
    }
    Ok(format!(
        "50 instances, {branched} needed branching, {nodes} nodes compared"
    ))
}

fn satellite_closed_loop() -> Verdict {
    let sat = SatelliteConfig::default();
    let (prob, plant) = make_satellite(&sat).map_err(|e| e.to_string())?;
    let cfg = ClosedLoopConfig {
        steps: 200,
        ..Default::default()
    };
    let start = Instant::now();
    let trace =
        run_closed_loop(&prob, &plant, &initial_state(&sat), &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let tol = 1e-6;
    let mut states = trace.states();
    states.push(trace.final_state.clone());
    for (k, x) in states.iter().enumerate() {
        if !sat.window.contains(x[0], x[1], tol) {
            return Err(format!(
                "sample {k} leaves the window at ({:.3}, {:.3})",
                x[0], x[1]
            ));
        }
        if sat.zone.contains_strictly(x[0], x[1], tol) {
            return Err(format!(
                "sample {k} inside the exclusion zone at ({:.3}, {:.3})",
                x[0], x[1]
            ));
        }
    }
    let dist = |x: &DVector<f64>| x[0].hypot(x[1]);
    let first = states.iter().position(|x| dist(x) <= 10.0);
    let end = dist(&trace.final_state);
    let detail = format!(
        "enters 10 m ball at sample {first:?}, final distance {end:.3} m, {:.1} s",
        elapsed.as_secs_f64()
    );
    if end > 10.0 || elapsed > Duration::from_secs(60) || trace.records.iter().any(|r| r.held) {
        return Err(detail);
    }
    Ok(detail)
}

fn invariant_suite() -> Verdict {
    let cfg = SolverConfig::default();
    let eps = cfg.eps_gap;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut samples = 0;
    for inst in corpus() {
        let out = solve(&inst, &cfg, None);
        let trace = &out.artifacts.bound_trace;
        samples += trace.len();
        for w in trace.windows(2) {
            if w[1].upper > w[0].upper {
                return Err(format!("seed {}: upper bound increased", inst.seed));
            }
            if w[0].has_incumbent && w[1].lower < w[0].lower {
                return Err(format!(
                    "seed {}: lower bound decreased after the first incumbent",
                    inst.seed
                ));
            }
        }
        if let Some(s) = trace.iter().find(|s| s.lower > s.upper + eps) {
            return Err(format!(
                "seed {}: lower bound {} above upper bound {}",
                inst.seed, s.lower, s.upper
            ));
        }

        // Condensed and structured objectives agree.
        let qp = condense(&inst.prob, &inst.x0).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let u: Vec<f64> = (0..qp.n_vars())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let states = inst.prob.simulate(&inst.x0, &u);
            let (a, b) = (qp.objective(&u), inst.prob.objective(&states, &u));
            if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(format!("seed {}: condensed {a} structured {b}", inst.seed));
            }
        }

        // Pseudo-costs are cumulative averages of the unit gains.
        let mut pc = PseudoCostTable::new(1, 1);
        let mut gains = [Vec::new(), Vec::new()];
        for _ in 0..rng.random_range(1..8) {
            let dir = if rng.random_bool(0.5) {
                Direction::Up
            } else {
                Direction::Down
            };
            let (delta, dist): (f64, f64) =
                (rng.random_range(0.0..3.0), rng.random_range(0.05..1.0));
            pc.update(0, dir, delta, dist);
            gains[usize::from(dir == Direction::Up)].push(delta / dist);
        }
        for (dir, g) in [(Direction::Down, &gains[0]), (Direction::Up, &gains[1])] {
            let mean = if g.is_empty() {
                0.0
            } else {
                g.iter().sum::<f64>() / g.len() as f64
            };
            if pc.get(0).count(dir) as usize != g.len()
                || (pc.get(0).phi(dir) - mean).abs() > 1e-12 * mean.max(1.0)
            {
                return Err(format!(
                    "seed {}: pseudo-cost is not the running mean",
                    inst.seed
                ));
            }
        }

        let again = solve(&inst, &cfg, None);
        if !same_search(&out, &again) || out.stats.qp_iterations != again.stats.qp_iterations {
            return Err(format!("seed {}: rerun differs", inst.seed));
        }
    }
    Ok(format!("{CORPUS_SIZE} instances, {samples} bound samples"))
}

fn iteration_cap() -> Verdict {
    let sat = SatelliteConfig::default();
    let (prob, _) = make_satellite(&sat).map_err(|e| e.to_string())?;
    let x0 = initial_state(&sat);
    let full = solve_miqp(&prob, &x0, None, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let optimum = full.objective().ok_or("uncapped solve found no solution")?;
    let cap = full.stats.nodes / 4;
    let capped_cfg = SolverConfig {
        max_iters: Some(cap),
        ..Default::default()
    };
    let capped = solve_miqp(&prob, &x0, None, &capped_cfg).map_err(|e| e.to_string())?;
    let detail = format!(
        "uncapped {} nodes, cap {cap}: {} with incumbent {:?} (optimum {optimum:.6}, bound {:.6})",
        full.stats.nodes,
        capped.stats.termination,
        capped.objective(),
        capped.stats.lower_bound
    );
    let ok = capped.stats.termination == Termination::IterationCap
        && capped.stats.nodes <= cap
        && capped.objective().is_some_and(|j| j >= optimum - 1e-9)
        && capped.stats.lower_bound <= optimum + 1e-9;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("oracle equivalence", oracle_equivalence),
        ("presolve soundness", presolve_soundness),
        ("warm-start transparency", warm_start_transparency),
        ("branching-mode limits", branching_limits),
        ("satellite closed loop", satellite_closed_loop),
        ("invariant suite", invariant_suite),
        ("iteration cap", iteration_cap),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS  {name:<24} {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<24} {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! Branch-and-bound over the binary controls of a condensed MIQP.

use std::rc::Rc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::branching::{
    fractional_candidates, select_variable, BranchCounters, BranchingConfig, Direction,
    PseudoCostTable, Selection, VarId,
};
use crate::error::{Error, Result};
use crate::ocp::{CondensedQp, Condenser, OcpMiqp, TrajectorySolution};
use crate::presolve::{fix_by_optimality, propagate, BoundState, PropagationConfig};
use crate::qp::{self, BoundOverride, QpInstance, QpOptions, QpResult, QpStatus, WarmStartHint};
use crate::tree::{build_warm_tree, PathEntry, WarmStart, WarmStartPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Absolute optimality gap.
    pub eps_gap: f64,
    /// Cap on node relaxations per solve.
    pub max_iters: Option<usize>,
    /// Cap on pending nodes; the solve stops with `IterationCap` beyond it.
    pub node_memory_cap: Option<usize>,
    pub presolve: bool,
    pub optimality_fixing: bool,
    /// Constraint tolerance an incumbent must meet.
    pub feas_tol: f64,
    pub branching: BranchingConfig,
    pub propagation: PropagationConfig,
    pub qp: QpOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_gap: 1e-6,
            max_iters: None,
            node_memory_cap: None,
            presolve: true,
            optimality_fixing: false,
            feas_tol: 1e-6,
            branching: BranchingConfig::default(),
            propagation: PropagationConfig::default(),
            qp: QpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GapClosed,
    IterationCap,
    Infeasible,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::GapClosed => "gap_closed",
            Termination::IterationCap => "iteration_cap",
            Termination::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    /// Node relaxations solved.
    pub nodes: usize,
    /// All QP solves: nodes, strong branching and incumbent checks.
    pub qp_solves: usize,
    pub qp_iterations: usize,
    pub strong_branch_qps: usize,
    /// Variables fixed or tightened by root presolve.
    pub presolve_fixings: usize,
    pub infeasible_prunes: usize,
    pub bound_prunes: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub wall_time: Duration,
    pub termination: Termination,
}

impl Default for SolveStats {
    fn default() -> Self {
        Self {
            nodes: 0,
            qp_solves: 0,
            qp_iterations: 0,
            strong_branch_qps: 0,
            presolve_fixings: 0,
            infeasible_prunes: 0,
            bound_prunes: 0,
            lower_bound: f64::NEG_INFINITY,
            upper_bound: f64::INFINITY,
            wall_time: Duration::ZERO,
            termination: Termination::Infeasible,
        }
    }
}

/// Bounds after each processed node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSample {
    pub lower: f64,
    pub upper: f64,
    pub has_incumbent: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SolveArtifacts {
    /// Branching sequence leading to the incumbent, with the relaxation
    /// solution of each node on the way.
    pub path: WarmStartPath,
    pub pseudo_costs: Option<PseudoCostTable>,
    pub incumbent: Option<Vec<f64>>,
    pub root_relaxation: Option<QpResult>,
    pub bound_trace: Vec<BoundSample>,
    /// Flat index of the variable branched at each branching node, in
    /// processing order.
    pub branch_log: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MiqpOutcome {
    pub solution: Option<TrajectorySolution>,
    pub stats: SolveStats,
    pub artifacts: SolveArtifacts,
}

impl MiqpOutcome {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }

    /// First-stage input of the incumbent.
    pub fn first_input(&self) -> Option<&DVector<f64>> {
        self.solution.as_ref().and_then(|s| s.inputs.first())
    }
}

/// One link of a node's branching history, shared between siblings.
#[derive(Debug)]
pub(crate) struct PathLink {
    pub var: usize,
    pub dir: Direction,
    /// Relaxation of the node where the branch was taken.
    pub relaxation: Rc<Vec<f64>>,
    pub prev: Option<Rc<PathLink>>,
}

/// Data needed to update pseudo-costs once the node is solved.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BranchOrigin {
    pub var: usize,
    pub dir: Direction,
    pub parent_objective: f64,
    pub parent_value: f64,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub(crate) path: Option<Rc<PathLink>>,
    pub(crate) origin: Option<BranchOrigin>,
    pub(crate) hint: Option<Rc<WarmStartHint>>,
    pub depth: usize,
    /// Inherited lower bound.
    pub bound: f64,
    pub seq: u64,
}

impl Node {
    pub fn root() -> Self {
        Self {
            path: None,
            origin: None,
            hint: None,
            depth: 0,
            bound: f64::NEG_INFINITY,
            seq: 0,
        }
    }

    pub(crate) fn child(
        parent: &Node,
        var: usize,
        dir: Direction,
        relaxation: &Rc<Vec<f64>>,
        parent_objective: f64,
        hint: &Rc<WarmStartHint>,
        seq: u64,
    ) -> Self {
        Self {
            path: Some(Rc::new(PathLink {
                var,
                dir,
                relaxation: Rc::clone(relaxation),
                prev: parent.path.clone(),
            })),
            origin: Some(BranchOrigin {
                var,
                dir,
                parent_objective,
                parent_value: relaxation[var],
            }),
            hint: Some(Rc::clone(hint)),
            depth: parent.depth + 1,
            bound: parent.bound.max(parent_objective),
            seq,
        }
    }

    /// Branching decisions from the root down to this node.
    pub fn fixings(&self) -> Vec<(usize, Direction)> {
        let mut out = Vec::with_capacity(self.depth);
        let mut link = self.path.as_deref();
        while let Some(l) = link {
            out.push((l.var, l.dir));
            link = l.prev.as_deref();
        }
        out.reverse();
        out
    }

    pub(crate) fn path_entries(&self, nu: usize) -> Vec<PathEntry> {
        let mut out = Vec::with_capacity(self.depth);
        let mut link = self.path.as_deref();
        while let Some(l) = link {
            let id = VarId::from_flat(l.var, nu);
            out.push(PathEntry {
                stage: id.stage,
                index: id.index,
                direction: l.dir,
                relaxation: l.relaxation.as_ref().clone(),
            });
            link = l.prev.as_deref();
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    DepthFirst,
    BestFirst,
}

/// Pending nodes.
#[derive(Debug, Clone)]
pub struct NodeList {
    nodes: Vec<Node>,
    pub mode: SearchMode,
}

impl Default for NodeList {
    fn default() -> Self {
        Self::new()
    }
}

impl NodeList {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            mode: SearchMode::DepthFirst,
        }
    }

    pub fn push(&mut self, node: Node) {
        self.nodes.push(node);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Least inherited bound, or `None` when empty.
    pub fn min_bound(&self) -> Option<f64> {
        self.nodes.iter().map(|n| n.bound).reduce(f64::min)
    }

    /// Drops every node whose bound exceeds `cutoff`; returns the count.
    pub fn prune_above(&mut self, cutoff: f64) -> usize {
        let before = self.nodes.len();
        self.nodes.retain(|n| n.bound <= cutoff);
        before - self.nodes.len()
    }
}

/// LIFO in depth-first mode; otherwise least bound, then greatest depth,
/// then lowest sequence number.
pub fn select_next(list: &mut NodeList) -> Option<Node> {
    match list.mode {
        SearchMode::DepthFirst => list.nodes.pop(),
        SearchMode::BestFirst => {
            let best = list
                .nodes
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    a.bound
                        .total_cmp(&b.bound)
                        .then(b.depth.cmp(&a.depth))
                        .then(a.seq.cmp(&b.seq))
                })
                .map(|(i, _)| i)?;
            Some(list.nodes.remove(best))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneDecision {
    Infeasible,
    Bound,
    Keep,
}

pub fn prune_check(relaxation: &QpResult, upper_bound: f64, eps_gap: f64) -> PruneDecision {
    if relaxation.status == QpStatus::Infeasible {
        PruneDecision::Infeasible
    } else if relaxation.objective > upper_bound - eps_gap {
        PruneDecision::Bound
    } else {
        PruneDecision::Keep
    }
}

/// Condensed MIQP solver bound to one problem; [`MiqpSolver::solve`] only
/// re-evaluates the initial-state dependent data.
#[derive(Debug, Clone)]
pub struct MiqpSolver {
    condenser: Condenser,
    config: SolverConfig,
}

impl MiqpSolver {
    pub fn new(prob: &OcpMiqp, config: SolverConfig) -> Result<Self> {
        Ok(Self {
            condenser: Condenser::new(prob)?,
            config,
        })
    }

    pub fn problem(&self) -> &OcpMiqp {
        self.condenser.problem()
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn condense(&self, x0: &DVector<f64>) -> Result<CondensedQp> {
        if x0.len() != self.problem().nx {
            return Err(Error::InvalidProblem(format!(
                "initial state has length {}, expected {}",
                x0.len(),
                self.problem().nx
            )));
        }
        Ok(self.condenser.at(x0))
    }

    pub fn solve(&self, x0: &DVector<f64>, warm: Option<&WarmStart>) -> Result<MiqpOutcome> {
        let qp = self.condense(x0)?;
        Ok(Search::new(&qp, &self.config, warm).run())
    }

    /// Solves an already condensed problem.
    pub fn solve_condensed(&self, qp: &CondensedQp, warm: Option<&WarmStart>) -> MiqpOutcome {
        Search::new(qp, &self.config, warm).run()
    }
}

/// Convenience wrapper that condenses `prob` and solves it once.
pub fn solve_miqp(
    prob: &OcpMiqp,
    x0: &DVector<f64>,
    warm: Option<&WarmStart>,
    config: &SolverConfig,
) -> Result<MiqpOutcome> {
    MiqpSolver::new(prob, *config)?.solve(x0, warm)
}

/// Solves the QP with every binary fixed to its rounded value in `u` and the
/// original bounds elsewhere. The result depends only on the assignment.
pub(crate) fn polish(qp: &CondensedQp, u: &[f64], opts: &QpOptions) -> Option<QpResult> {
    let fixes: Vec<BoundOverride> = qp
        .binaries()
        .iter()
        .map(|&j| BoundOverride::fix(j, u[j].round().clamp(0.0, 1.0)))
        .collect();
    let inst = QpInstance::new(qp).update_bounds(&fixes).ok()?;
    let res = qp::solve(&inst, &WarmStartHint::none(), opts);
    res.is_optimal().then_some(res)
}

struct Incumbent {
    u: Vec<f64>,
    objective: f64,
    path: Vec<PathEntry>,
}

struct Search<'a> {
    qp: &'a CondensedQp,
    cfg: &'a SolverConfig,
    warm: Option<&'a WarmStart>,
    root_bounds: BoundState,
    pc: PseudoCostTable,
    list: NodeList,
    stats: SolveStats,
    artifacts: SolveArtifacts,
    incumbent: Option<Incumbent>,
    seq: u64,
    lb: f64,
    start: Instant,
}

impl<'a> Search<'a> {
    fn new(qp: &'a CondensedQp, cfg: &'a SolverConfig, warm: Option<&'a WarmStart>) -> Self {
        let pc = match warm {
            Some(w) if w.pseudo_costs.entries().len() == qp.n_vars() => w.pseudo_costs.clone(),
            _ => PseudoCostTable::for_qp(qp),
        };
        Self {
            qp,
            cfg,
            warm,
            root_bounds: BoundState::from_qp(qp),
            pc,
            list: NodeList::new(),
            stats: SolveStats::default(),
            artifacts: SolveArtifacts::default(),
            incumbent: None,
            seq: 0,
            lb: f64::NEG_INFINITY,
            start: Instant::now(),
        }
    }

    fn ub(&self) -> f64 {
        self.incumbent
            .as_ref()
            .map_or(f64::INFINITY, |i| i.objective)
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn run(mut self) -> MiqpOutcome {
        let termination = self.search();
        self.finish(termination)
    }

    fn root_presolve(&mut self) -> bool {
        if !self.cfg.presolve {
            return true;
        }
        let before = self.root_bounds.clone();
        let mut b = propagate(self.qp, before.clone(), &self.cfg.propagation);
        if b.is_consistent() && self.cfg.optimality_fixing {
            b = fix_by_optimality(self.qp, b, &self.cfg.propagation);
        }
        if !b.is_consistent() {
            return false;
        }
        self.stats.presolve_fixings = (0..self.qp.n_vars())
            .filter(|&j| b.lo[j] != before.lo[j] || b.hi[j] != before.hi[j])
            .count();
        b.clear_changed();
        self.root_bounds = b;
        true
    }

    /// Node bounds: root bounds, the node's fixings, then propagation on the
    /// fixed variables.
    fn node_bounds(&self, node: &Node) -> BoundState {
        let mut b = self.root_bounds.clone();
        b.clear_changed();
        for (var, dir) in node.fixings() {
            b.fix(var, dir.value());
        }
        if self.cfg.presolve && b.is_consistent() {
            propagate(self.qp, b, &self.cfg.propagation)
        } else {
            b
        }
    }

    fn search(&mut self) -> Termination {
        if !self.root_presolve() {
            self.stats.infeasible_prunes += 1;
            return Termination::Infeasible;
        }
        let mut root = Node::root();
        root.seq = self.next_seq();
        let mut is_root = true;
        self.list.push(root);

        while let Some(node) = select_next(&mut self.list) {
            if node.bound > self.ub() - self.cfg.eps_gap {
                self.stats.bound_prunes += 1;
                self.record_bounds();
                if self.gap_closed() {
                    return Termination::GapClosed;
                }
                continue;
            }
            if self
                .cfg
                .max_iters
                .is_some_and(|cap| self.stats.nodes >= cap)
            {
                self.list.push(node);
                return Termination::IterationCap;
            }
            self.process(node, is_root);
            is_root = false;
            self.record_bounds();
            if self.gap_closed() {
                return Termination::GapClosed;
            }
            if self
                .cfg
                .node_memory_cap
                .is_some_and(|cap| self.list.len() > cap)
            {
                return Termination::IterationCap;
            }
        }
        if self.incumbent.is_some() {
            Termination::GapClosed
        } else {
            Termination::Infeasible
        }
    }

    fn gap_closed(&self) -> bool {
        self.incumbent.is_some() && self.ub() - self.lb <= self.cfg.eps_gap
    }

    /// Updates the global lower bound from the pending list and logs it.
    fn record_bounds(&mut self) {
        let ub = self.ub();
        self.lb = match self.list.min_bound() {
            Some(b) => b.min(ub),
            None => ub,
        };
        self.artifacts.bound_trace.push(BoundSample {
            lower: self.lb,
            upper: ub,
            has_incumbent: self.incumbent.is_some(),
        });
    }

    fn process(&mut self, node: Node, is_root: bool) {
        let bounds = self.node_bounds(&node);
        if !bounds.is_consistent() {
            self.stats.infeasible_prunes += 1;
            return;
        }
        let inst = match QpInstance::with_bounds(self.qp, bounds.lo, bounds.hi) {
            Ok(i) => i,
            Err(_) => {
                self.stats.infeasible_prunes += 1;
                return;
            }
        };
        let hint = node
            .hint
            .as_deref()
            .cloned()
            .unwrap_or_else(WarmStartHint::none);
        let res = qp::solve(&inst, &hint, &self.cfg.qp);
        self.stats.nodes += 1;
        self.stats.qp_solves += 1;
        self.stats.qp_iterations += res.iterations;

        if let (Some(o), true) = (node.origin, res.is_optimal()) {
            let dist = o.dir.distance(o.parent_value);
            if dist > 0.0 {
                self.pc
                    .update(o.var, o.dir, res.objective - o.parent_objective, dist);
            }
        }
        if is_root {
            self.artifacts.root_relaxation = Some(res.clone());
        }

        match res.status {
            QpStatus::Infeasible => {
                self.stats.infeasible_prunes += 1;
                return;
            }
            QpStatus::IterationLimit => {
                self.branch_unresolved(&node, &inst, &res);
                return;
            }
            QpStatus::Optimal => {}
        }
        if prune_check(&res, self.ub(), self.cfg.eps_gap) == PruneDecision::Bound {
            self.stats.bound_prunes += 1;
            return;
        }

        if is_root {
            if let Some(warm) = self.warm {
                if self.seed_from_warm_start(&node, &res, warm) {
                    return;
                }
            }
        }

        let mut counters = BranchCounters::default();
        let sel = select_variable(
            &inst,
            &res,
            &mut self.pc,
            &self.cfg.branching,
            &mut counters,
        );
        self.stats.qp_solves += counters.qp_solves;
        self.stats.qp_iterations += counters.qp_iterations;
        self.stats.strong_branch_qps += counters.qp_solves;
        match sel {
            Selection::Integral => self.offer_incumbent(&res.u, &node),
            Selection::Prune => self.stats.infeasible_prunes += 1,
            Selection::Branch(c) => {
                self.artifacts.branch_log.push(c.var);
                self.push_children(&node, &res, c.var);
            }
        }
    }

    /// Appends both children of `node` on `var`, ordered so the side with the
    /// smaller predicted increase is popped first in depth-first mode.
    fn push_children(&mut self, node: &Node, res: &QpResult, var: usize) {
        let v = res.u[var];
        let e = self.pc.get(var);
        let relaxation = Rc::new(res.u.clone());
        let hint = Rc::new(WarmStartHint::from_result(res));
        let order = if (1.0 - v) * e.phi_up < v * e.phi_down {
            [Direction::Down, Direction::Up]
        } else {
            [Direction::Up, Direction::Down]
        };
        for dir in order {
            let seq = self.next_seq();
            self.list.push(Node::child(
                node,
                var,
                dir,
                &relaxation,
                res.objective,
                &hint,
                seq,
            ));
        }
    }

    /// A relaxation that hit the iteration cap still yields a valid dual
    /// bound; branch on the lowest unfixed binary under that bound.
    fn branch_unresolved(&mut self, node: &Node, inst: &QpInstance<'_>, res: &QpResult) {
        let Some(&var) = self
            .qp
            .binaries()
            .iter()
            .find(|&&j| inst.lo()[j] < inst.hi()[j])
        else {
            // Every binary is fixed; one more attempt without the hint.
            let retry = qp::solve(inst, &WarmStartHint::none(), &QpOptions::default());
            self.stats.qp_solves += 1;
            self.stats.qp_iterations += retry.iterations;
            if retry.is_optimal() {
                self.offer_incumbent(&retry.u, node);
            }
            return;
        };
        let mut parent = node.clone();
        parent.bound = node.bound.max(res.objective);
        let mut u = res.u.clone();
        u[var] = 0.5;
        let fake = QpResult { u, ..res.clone() };
        self.push_children(&parent, &fake, var);
    }

    fn offer_incumbent(&mut self, u: &[f64], node: &Node) {
        let candidate = match polish(self.qp, u, &self.cfg.qp) {
            Some(p) => {
                self.stats.qp_solves += 1;
                self.stats.qp_iterations += p.iterations;
                Some((p.u, p.objective))
            }
            None => {
                self.stats.qp_solves += 1;
                let mut snapped = u.to_vec();
                for &j in self.qp.binaries() {
                    snapped[j] = snapped[j].round();
                }
                (self.qp.max_violation(&snapped) <= self.cfg.feas_tol).then(|| {
                    let obj = self.qp.objective(&snapped);
                    (snapped, obj)
                })
            }
        };
        if let Some((u, objective)) = candidate {
            let path = node.path_entries(self.qp.nu());
            self.install(u, objective, path);
        }
    }

    fn install(&mut self, u: Vec<f64>, objective: f64, path: Vec<PathEntry>) {
        if objective >= self.ub() {
            return;
        }
        self.incumbent = Some(Incumbent { u, objective, path });
        self.list.mode = SearchMode::BestFirst;
        let pruned = self.list.prune_above(objective - self.cfg.eps_gap);
        self.stats.bound_prunes += pruned;
    }

    /// Replaces the usual root branching by the warm-started node list and
    /// tries the shifted incumbent. Returns false when the warm tree is
    /// empty and the root should branch normally.
    fn seed_from_warm_start(&mut self, root: &Node, res: &QpResult, warm: &WarmStart) -> bool {
        if fractional_binaries(self.qp, &res.u, self.cfg.branching.int_tol).is_empty() {
            return false;
        }
        if let Some(shifted) = &warm.path.incumbent {
            if let Some((u, objective)) = self.verify_shifted_incumbent(shifted) {
                let path = consistent_path(&warm.path, &u, self.qp.nu());
                self.install(u, objective, path);
            }
        }
        let tree = build_warm_tree(&warm.path, res, &self.pc, &self.cfg.branching);
        if tree.leaves.is_empty() {
            return false;
        }
        let relaxation = Rc::new(res.u.clone());
        let hint = Rc::new(WarmStartHint::from_result(res));
        for leaf in tree.leaves {
            let mut node = root.clone();
            for (k, &(var, dir)) in leaf.iter().enumerate() {
                let seq = if k + 1 == leaf.len() {
                    self.next_seq()
                } else {
                    0
                };
                node = Node::child(&node, var, dir, &relaxation, res.objective, &hint, seq);
            }
            // Only first-level nodes have the current root as their actual
            // parent relaxation.
            if node.depth > 1 {
                node.origin = None;
            }
            node.bound = res.objective;
            if node.bound <= self.ub() - self.cfg.eps_gap {
                self.list.push(node);
            } else {
                self.stats.bound_prunes += 1;
            }
        }
        true
    }

    fn verify_shifted_incumbent(&mut self, shifted: &[f64]) -> Option<(Vec<f64>, f64)> {
        if shifted.len() != self.qp.n_vars() {
            return None;
        }
        let mut b = self.root_bounds.clone();
        b.clear_changed();
        for &j in self.qp.binaries() {
            b.fix(j, shifted[j].round().clamp(0.0, 1.0));
        }
        if !b.is_consistent() {
            return None;
        }
        if self.cfg.presolve && !propagate(self.qp, b, &self.cfg.propagation).is_consistent() {
            return None;
        }
        let res = polish(self.qp, shifted, &self.cfg.qp);
        self.stats.qp_solves += 1;
        let res = res?;
        self.stats.qp_iterations += res.iterations;
        (self.qp.max_violation(&res.u) <= self.cfg.feas_tol).then_some((res.u, res.objective))
    }

    fn finish(mut self, termination: Termination) -> MiqpOutcome {
        self.stats.termination = termination;
        self.stats.wall_time = self.start.elapsed();
        self.stats.upper_bound = self.ub();
        self.stats.lower_bound = match termination {
            Termination::GapClosed => self.lb.min(self.ub()),
            Termination::Infeasible => f64::INFINITY,
            Termination::IterationCap => self.list.min_bound().unwrap_or(self.lb).min(self.ub()),
        };
        let solution = self.incumbent.as_ref().map(|inc| self.qp.expand(&inc.u));
        if let Some(inc) = self.incumbent.take() {
            self.artifacts.path = WarmStartPath {
                nu: self.qp.nu(),
                entries: inc.path,
                incumbent: Some(inc.u.clone()),
            };
            self.artifacts.incumbent = Some(inc.u);
        } else {
            self.artifacts.path = WarmStartPath {
                nu: self.qp.nu(),
                ..WarmStartPath::default()
            };
        }
        self.artifacts.pseudo_costs = Some(self.pc);
        MiqpOutcome {
            solution,
            stats: self.stats,
            artifacts: self.artifacts,
        }
    }
}

/// Path entries of the warm path whose direction agrees with `u`.
fn consistent_path(path: &WarmStartPath, u: &[f64], nu: usize) -> Vec<PathEntry> {
    path.entries
        .iter()
        .filter(|e| {
            let j = e.stage * nu + e.index;
            j < u.len() && (u[j] - e.direction.value()).abs() < 0.5
        })
        .cloned()
        .collect()
}

/// Binaries of `u` that violate `int_tol`.
pub fn fractional_binaries(qp: &CondensedQp, u: &[f64], int_tol: f64) -> Vec<usize> {
    fractional_candidates(qp, u, int_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{Stage, Terminal};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn node(bound: f64, depth: usize, seq: u64) -> Node {
        Node {
            bound,
            depth,
            seq,
            ..Node::root()
        }
    }

    #[test]
    fn lifo_before_incumbent() {
        let mut l = NodeList::new();
        for s in 1..=3 {
            l.push(node(0.0, 1, s));
        }
        assert_eq!(select_next(&mut l).unwrap().seq, 3);
    }

    #[test]
    fn best_first_after_incumbent() {
        let mut l = NodeList::new();
        l.mode = SearchMode::BestFirst;
        l.push(node(5.0, 1, 1));
        l.push(node(3.0, 1, 2));
        assert_eq!(select_next(&mut l).unwrap().seq, 2);

        let mut l = NodeList::new();
        l.mode = SearchMode::BestFirst;
        l.push(node(3.0, 1, 1));
        l.push(node(3.0, 4, 2));
        l.push(node(3.0, 4, 3));
        assert_eq!(select_next(&mut l).unwrap().seq, 2);
    }

    #[test]
    fn prune_decisions() {
        let mk = |status, objective| QpResult {
            status,
            u: vec![],
            objective,
            active_set: vec![],
            iterations: 0,
            certificate: None,
        };
        assert_eq!(
            prune_check(&mk(QpStatus::Infeasible, 0.0), 1.0, 1e-6),
            PruneDecision::Infeasible
        );
        assert_eq!(
            prune_check(&mk(QpStatus::Optimal, 7.0), 5.0, 1e-6),
            PruneDecision::Bound
        );
        assert_eq!(
            prune_check(&mk(QpStatus::Optimal, 5.0), f64::INFINITY, 1e-6),
            PruneDecision::Keep
        );
    }

    fn scalar_binary(target: f64) -> OcpMiqp {
        let mut s = Stage::new(1, 1);
        s.input_cost = dmatrix![2.0];
        s.input_lin = dvector![-2.0 * target];
        s.state_cost = dmatrix![2.0 * target * target];
        s.binaries = vec![0];
        OcpMiqp::repeated(s, 1, Terminal::new(1))
    }

    #[test]
    fn scalar_dichotomy() {
        let out = solve_miqp(
            &scalar_binary(0.6),
            &dvector![1.0],
            None,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.stats.termination, Termination::GapClosed);
        let sol = out.solution.unwrap();
        assert_abs_diff_eq!(sol.inputs[0][0], 1.0);
        assert_abs_diff_eq!(sol.objective, 0.16, epsilon = 1e-12);
        assert_eq!(out.stats.nodes, 3);
    }

    #[test]
    fn integral_root_needs_one_node() {
        let out = solve_miqp(
            &scalar_binary(1.0),
            &dvector![1.0],
            None,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.stats.nodes, 1);
        assert!(out.artifacts.branch_log.is_empty());
        assert_abs_diff_eq!(out.objective().unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fixings_follow_the_path() {
        let root = Node::root();
        let rel = Rc::new(vec![0.5, 0.5]);
        let hint = Rc::new(WarmStartHint::none());
        let a = Node::child(&root, 1, Direction::Up, &rel, 1.0, &hint, 1);
        let b = Node::child(&a, 0, Direction::Down, &rel, 2.0, &hint, 2);
        assert_eq!(b.fixings(), vec![(1, Direction::Up), (0, Direction::Down)]);
        assert_eq!(b.depth, 2);
        assert_eq!(b.bound, 2.0);
    }
}

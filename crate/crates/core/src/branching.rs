//! Variable selection: pseudo-costs, strong branching and the reliability
//! rule that switches between them.

use serde::{Deserialize, Serialize};

use crate::ocp::CondensedQp;
use crate::qp::{self, BoundOverride, QpInstance, QpOptions, QpResult, QpStatus, WarmStartHint};

/// Floor applied to both factors of the product score.
pub const SCORE_EPS: f64 = 1e-6;

/// Product score of two objective gains.
pub fn score(delta_down: f64, delta_up: f64) -> f64 {
    delta_up.max(SCORE_EPS) * delta_down.max(SCORE_EPS)
}

/// Score predicted from pseudo-costs for a variable at fractional value `value`.
pub fn pseudo_score(value: f64, phi_down: f64, phi_up: f64) -> f64 {
    score(value * phi_down, (1.0 - value) * phi_up)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Down,
    Up,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Down => Direction::Up,
            Direction::Up => Direction::Down,
        }
    }

    /// The value a binary takes on this branch.
    pub fn value(self) -> f64 {
        match self {
            Direction::Down => 0.0,
            Direction::Up => 1.0,
        }
    }

    /// Distance from the fractional value `v` to this branch's value.
    pub fn distance(self, v: f64) -> f64 {
        match self {
            Direction::Down => v,
            Direction::Up => 1.0 - v,
        }
    }

    pub(crate) fn fixing(self, var: usize) -> BoundOverride {
        BoundOverride::fix(var, self.value())
    }
}

/// A control variable identified by stage and index within the stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId {
    pub stage: usize,
    pub index: usize,
}

impl VarId {
    pub fn from_flat(j: usize, nu: usize) -> Self {
        Self {
            stage: j / nu,
            index: j % nu,
        }
    }

    pub fn flat(self, nu: usize) -> usize {
        self.stage * nu + self.index
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoCost {
    pub phi_down: f64,
    pub phi_up: f64,
    pub n_down: u32,
    pub n_up: u32,
}

impl PseudoCost {
    pub fn phi(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Down => self.phi_down,
            Direction::Up => self.phi_up,
        }
    }

    pub fn count(&self, dir: Direction) -> u32 {
        match dir {
            Direction::Down => self.n_down,
            Direction::Up => self.n_up,
        }
    }

    /// Observations on the less explored side.
    pub fn reliability(&self) -> u32 {
        self.n_down.min(self.n_up)
    }

    fn fold(&mut self, dir: Direction, gain: f64) {
        let (phi, n) = match dir {
            Direction::Down => (&mut self.phi_down, &mut self.n_down),
            Direction::Up => (&mut self.phi_up, &mut self.n_up),
        };
        let k = f64::from(*n);
        *phi = (k * *phi + gain) / (k + 1.0);
        *n += 1;
    }
}

/// Pseudo-costs for every control variable of a horizon, stored by flat
/// index `stage * nu + index`. Entries of continuous variables stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoCostTable {
    nu: usize,
    entries: Vec<PseudoCost>,
}

impl PseudoCostTable {
    pub fn new(nu: usize, horizon: usize) -> Self {
        Self {
            nu,
            entries: vec![PseudoCost::default(); nu * horizon],
        }
    }

    pub fn for_qp(qp: &CondensedQp) -> Self {
        Self::new(qp.nu(), qp.horizon())
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn horizon(&self) -> usize {
        self.entries.len().checked_div(self.nu).unwrap_or(0)
    }

    pub fn get(&self, j: usize) -> &PseudoCost {
        &self.entries[j]
    }

    pub fn get_mut(&mut self, j: usize) -> &mut PseudoCost {
        &mut self.entries[j]
    }

    pub fn at(&self, id: VarId) -> &PseudoCost {
        &self.entries[id.flat(self.nu)]
    }

    pub fn entries(&self) -> &[PseudoCost] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(|e| e.n_down == 0 && e.n_up == 0)
    }

    /// Folds one observed gain into the running mean: `Δobj / distance`.
    /// Negative gains from round-off are clipped to zero.
    pub fn update(&mut self, j: usize, dir: Direction, delta_obj: f64, distance: f64) {
        debug_assert!(distance > 0.0);
        let gain = (delta_obj / distance).max(0.0);
        self.entries[j].fold(dir, gain);
    }

    pub fn pseudo_score(&self, j: usize, value: f64) -> f64 {
        let e = &self.entries[j];
        pseudo_score(value, e.phi_down, e.phi_up)
    }

    /// Entry `j` moves to `j − nu`, the last stage becomes empty and every
    /// counter loses `decay` observations (saturating at zero).
    pub fn shifted(&self, decay: u32) -> Self {
        let nu = self.nu;
        let mut entries = vec![PseudoCost::default(); self.entries.len()];
        for (j, e) in self.entries.iter().enumerate().skip(nu) {
            entries[j - nu] = PseudoCost {
                n_down: e.n_down.saturating_sub(decay),
                n_up: e.n_up.saturating_sub(decay),
                ..*e
            };
        }
        Self { nu, entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    /// Strong branching until a variable has `eta_rel` observations on both
    /// sides, pseudo-costs afterwards.
    Reliability,
    PseudoCost,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BranchingConfig {
    pub rule: BranchRule,
    /// `u32::MAX` stands for an infinite threshold.
    pub eta_rel: u32,
    pub int_tol: f64,
    pub look_ahead: usize,
    pub strong_iter_cap: usize,
    pub big_gain: f64,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        Self {
            rule: BranchRule::Reliability,
            eta_rel: 2,
            int_tol: 1e-6,
            look_ahead: 8,
            strong_iter_cap: 25,
            big_gain: 1e12,
        }
    }
}

impl BranchingConfig {
    pub fn is_unreliable(&self, pc: &PseudoCost) -> bool {
        pc.reliability() <= self.eta_rel
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchCandidate {
    pub var: usize,
    pub id: VarId,
    pub value: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongBranchResult {
    pub delta_down: f64,
    pub delta_up: f64,
    pub score: f64,
    pub down: QpStatus,
    pub up: QpStatus,
}

impl StrongBranchResult {
    pub fn both_infeasible(&self) -> bool {
        self.down == QpStatus::Infeasible && self.up == QpStatus::Infeasible
    }
}

/// QP work spent on strong branching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchCounters {
    pub qp_solves: usize,
    pub qp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Branch(BranchCandidate),
    /// Strong branching found both children of some candidate infeasible.
    Prune,
    /// No fractional binary.
    Integral,
}

/// Binaries with `min(v, 1 − v) > int_tol`, ascending by flat index.
pub fn fractional_candidates(qp: &CondensedQp, u: &[f64], int_tol: f64) -> Vec<usize> {
    qp.binaries()
        .iter()
        .copied()
        .filter(|&j| u[j].min(1.0 - u[j]) > int_tol)
        .collect()
}

/// Solves both children of `var` under the capped iteration budget and
/// records the objective increases relative to `relaxation`.
///
/// A capped child reports the dual bound it reached; it is not folded into
/// the pseudo-costs since its feasibility is unknown.
pub fn strong_branch(
    inst: &QpInstance<'_>,
    relaxation: &QpResult,
    var: usize,
    pc: &mut PseudoCostTable,
    cfg: &BranchingConfig,
    counters: &mut BranchCounters,
) -> StrongBranchResult {
    let hint = WarmStartHint::from_result(relaxation);
    let opts = QpOptions::with_max_iter(cfg.strong_iter_cap);
    let value = relaxation.u[var];
    let mut side = |dir: Direction| -> (f64, QpStatus) {
        let child = match inst.update_bounds(&[dir.fixing(var)]) {
            Ok(c) => c,
            // The fixing lies outside the node's bounds.
            Err(_) => return (cfg.big_gain, QpStatus::Infeasible),
        };
        let res = qp::solve(&child, &hint, &opts);
        counters.qp_solves += 1;
        counters.qp_iterations += res.iterations;
        match res.status {
            QpStatus::Infeasible => (cfg.big_gain, QpStatus::Infeasible),
            QpStatus::IterationLimit => (
                (res.objective - relaxation.objective).max(0.0),
                QpStatus::IterationLimit,
            ),
            QpStatus::Optimal => {
                let delta = (res.objective - relaxation.objective).max(0.0);
                pc.update(var, dir, delta, dir.distance(value));
                (delta, QpStatus::Optimal)
            }
        }
    };
    let (delta_down, down) = side(Direction::Down);
    let (delta_up, up) = side(Direction::Up);
    StrongBranchResult {
        delta_down,
        delta_up,
        score: score(delta_down, delta_up),
        down,
        up,
    }
}

fn argmax(scored: &[(usize, f64)]) -> (usize, f64) {
    // Candidates arrive in ascending index order, so keeping the first
    // maximum breaks ties towards the lowest stage and index.
    let mut best = scored[0];
    for &(j, s) in &scored[1..] {
        if s > best.1 {
            best = (j, s);
        }
    }
    best
}

/// Candidates ordered by descending pseudo-score, ties by index.
fn by_pseudo_score(cands: &[usize], u: &[f64], pc: &PseudoCostTable) -> Vec<usize> {
    let mut order = cands.to_vec();
    order.sort_by(|&a, &b| {
        pc.pseudo_score(b, u[b])
            .total_cmp(&pc.pseudo_score(a, u[a]))
            .then(a.cmp(&b))
    });
    order
}

fn candidate(qp: &CondensedQp, u: &[f64], (var, score): (usize, f64)) -> BranchCandidate {
    BranchCandidate {
        var,
        id: VarId::from_flat(var, qp.nu()),
        value: u[var],
        score,
    }
}

/// Chooses the branching variable for a node whose relaxation is
/// `relaxation` and whose bounds are those of `inst`.
pub fn select_variable(
    inst: &QpInstance<'_>,
    relaxation: &QpResult,
    pc: &mut PseudoCostTable,
    cfg: &BranchingConfig,
    counters: &mut BranchCounters,
) -> Selection {
    let qp = inst.qp();
    let u = &relaxation.u;
    let cands = fractional_candidates(qp, u, cfg.int_tol);
    match cands.len() {
        0 => return Selection::Integral,
        1 => return Selection::Branch(candidate(qp, u, (cands[0], 0.0))),
        _ => {}
    }
    match cfg.rule {
        BranchRule::PseudoCost => select_pseudo_cost(qp, u, &cands, pc),
        BranchRule::Strong => select_strong(inst, relaxation, &cands, pc, cfg, counters),
        BranchRule::Reliability => select_reliability(inst, relaxation, &cands, pc, cfg, counters),
    }
}

fn select_pseudo_cost(
    qp: &CondensedQp,
    u: &[f64],
    cands: &[usize],
    pc: &PseudoCostTable,
) -> Selection {
    let scored: Vec<(usize, f64)> = cands
        .iter()
        .map(|&j| (j, pc.pseudo_score(j, u[j])))
        .collect();
    Selection::Branch(candidate(qp, u, argmax(&scored)))
}

fn select_strong(
    inst: &QpInstance<'_>,
    relaxation: &QpResult,
    cands: &[usize],
    pc: &mut PseudoCostTable,
    cfg: &BranchingConfig,
    counters: &mut BranchCounters,
) -> Selection {
    let u = &relaxation.u;
    let mut evaluate: Vec<usize> = by_pseudo_score(cands, u, pc);
    evaluate.truncate(cfg.look_ahead);
    evaluate.sort_unstable();
    let mut scored = Vec::with_capacity(evaluate.len());
    for j in evaluate {
        let sb = strong_branch(inst, relaxation, j, pc, cfg, counters);
        if sb.both_infeasible() {
            return Selection::Prune;
        }
        scored.push((j, sb.score));
    }
    Selection::Branch(candidate(inst.qp(), u, argmax(&scored)))
}

fn select_reliability(
    inst: &QpInstance<'_>,
    relaxation: &QpResult,
    cands: &[usize],
    pc: &mut PseudoCostTable,
    cfg: &BranchingConfig,
    counters: &mut BranchCounters,
) -> Selection {
    let u = &relaxation.u;
    let unreliable: Vec<usize> = cands
        .iter()
        .copied()
        .filter(|&j| cfg.is_unreliable(pc.get(j)))
        .collect();
    let mut look: Vec<usize> = by_pseudo_score(&unreliable, u, pc);
    look.truncate(cfg.look_ahead);

    // Pseudo-scores are taken before strong branching updates the table, so
    // the outcome does not depend on evaluation order.
    let mut scores: Vec<(usize, f64)> = cands
        .iter()
        .map(|&j| (j, pc.pseudo_score(j, u[j])))
        .collect();
    look.sort_unstable();
    for j in look {
        let sb = strong_branch(inst, relaxation, j, pc, cfg, counters);
        if sb.both_infeasible() {
            return Selection::Prune;
        }
        if let Some(entry) = scores.iter_mut().find(|(k, _)| *k == j) {
            entry.1 = sb.score;
        }
    }
    Selection::Branch(candidate(inst.qp(), u, argmax(&scores)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{condense, OcpMiqp, Stage, Terminal};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn score_values() {
        assert_abs_diff_eq!(score(3.0, 2.0), 6.0);
        assert_abs_diff_eq!(score(0.0, 5.0), 5e-6, epsilon = 1e-18);
        assert_abs_diff_eq!(score(0.0, 0.0), 1e-12, epsilon = 1e-24);
    }

    #[test]
    fn pseudo_score_values() {
        assert_abs_diff_eq!(pseudo_score(0.3, 2.0, 4.0), 1.68, epsilon = 1e-12);
        assert_abs_diff_eq!(pseudo_score(0.5, 0.0, 0.0), 1e-12, epsilon = 1e-24);
        assert_abs_diff_eq!(pseudo_score(0.5, 2.0, 2.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cumulative_average() {
        let mut pc = PseudoCostTable::new(1, 1);
        pc.update(0, Direction::Up, 0.8, 0.4);
        assert_abs_diff_eq!(pc.get(0).phi_up, 2.0, epsilon = 1e-12);
        assert_eq!(pc.get(0).n_up, 1);
        pc.update(0, Direction::Up, 4.0, 1.0);
        assert_abs_diff_eq!(pc.get(0).phi_up, 3.0, epsilon = 1e-12);
        assert_eq!(pc.get(0).n_up, 2);
        assert_eq!(pc.get(0).n_down, 0);
    }

    #[test]
    fn shift_moves_and_decays() {
        let mut pc = PseudoCostTable::new(1, 3);
        *pc.get_mut(2) = PseudoCost {
            phi_up: 3.0,
            n_up: 4,
            ..Default::default()
        };
        let s = pc.shifted(1);
        assert_eq!(s.get(1).phi_up, 3.0);
        assert_eq!(s.get(1).n_up, 3);
        assert_eq!(*s.get(2), PseudoCost::default());

        let mut only0 = PseudoCostTable::new(1, 3);
        *only0.get_mut(0) = PseudoCost {
            phi_down: 1.0,
            n_down: 2,
            ..Default::default()
        };
        assert!(only0.shifted(1).is_empty());
    }

    /// min (u − 0.6)², u ∈ [0, 1] relaxed binary.
    fn scalar_qp() -> CondensedQp {
        let mut s = Stage::new(1, 1);
        s.input_cost = dmatrix![2.0];
        s.input_lin = dvector![-1.2];
        s.state_cost = dmatrix![0.72];
        s.input_lo = dvector![0.0];
        s.input_hi = dvector![1.0];
        s.binaries = vec![0];
        condense(&OcpMiqp::repeated(s, 1, Terminal::new(1)), &dvector![1.0]).unwrap()
    }

    #[test]
    fn strong_branch_scalar() {
        let qp = scalar_qp();
        let inst = QpInstance::new(&qp);
        let root = qp::solve(&inst, &WarmStartHint::none(), &QpOptions::default());
        assert_abs_diff_eq!(root.u[0], 0.6, epsilon = 1e-12);
        let mut pc = PseudoCostTable::for_qp(&qp);
        let mut counters = BranchCounters::default();
        let sb = strong_branch(
            &inst,
            &root,
            0,
            &mut pc,
            &BranchingConfig::default(),
            &mut counters,
        );
        assert_abs_diff_eq!(sb.delta_down, 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(sb.delta_up, 0.16, epsilon = 1e-12);
        assert_eq!(counters.qp_solves, 2);
        assert_abs_diff_eq!(pc.get(0).phi_down, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(pc.get(0).phi_up, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn single_candidate_needs_no_strong_branching() {
        let qp = scalar_qp();
        let inst = QpInstance::new(&qp);
        let root = qp::solve(&inst, &WarmStartHint::none(), &QpOptions::default());
        let mut pc = PseudoCostTable::for_qp(&qp);
        let mut counters = BranchCounters::default();
        let sel = select_variable(
            &inst,
            &root,
            &mut pc,
            &BranchingConfig::default(),
            &mut counters,
        );
        assert!(matches!(sel, Selection::Branch(c) if c.var == 0));
        assert_eq!(counters.qp_solves, 0);
    }
}

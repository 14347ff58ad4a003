//! Convex QP relaxations of the condensed problem.
//!
//! The solver is a dual active-set method in the Goldfarb–Idnani form: it
//! starts from the unconstrained minimizer, repeatedly adds the most violated
//! constraint and drops constraints whose multiplier would turn negative.
//! Every iterate minimizes the objective over the constraints added so far,
//! so its objective is a lower bound on the relaxation optimum. The Cholesky
//! factor of the Hessian is shared by all nodes of a tree.
//!
//! Variables whose bounds coincide, and rows whose bounds coincide, are
//! handled as equalities and added before any inequality.

use serde::{Deserialize, Serialize};

use crate::linalg::dot;
use crate::ocp::CondensedQp;
use crate::{Error, Result};

/// One side of a row or variable bound, in `normalᵀU >= rhs` orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintRef {
    RowLower(usize),
    RowUpper(usize),
    VarLower(usize),
    VarUpper(usize),
}

/// A node-local tightening of one variable's bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOverride {
    pub var: usize,
    pub lo: f64,
    pub hi: f64,
}

impl BoundOverride {
    pub fn fix(var: usize, value: f64) -> Self {
        Self {
            var,
            lo: value,
            hi: value,
        }
    }
}

/// A condensed QP together with node-local variable bounds.
#[derive(Debug, Clone)]
pub struct QpInstance<'a> {
    qp: &'a CondensedQp,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> QpInstance<'a> {
    pub fn new(qp: &'a CondensedQp) -> Self {
        Self {
            qp,
            lo: qp.lo().to_vec(),
            hi: qp.hi().to_vec(),
        }
    }

    /// Instance with explicit bounds, which must lie inside the problem's.
    pub fn with_bounds(qp: &'a CondensedQp, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let base = Self::new(qp);
        let overrides: Vec<BoundOverride> = (0..qp.n_vars())
            .map(|j| BoundOverride {
                var: j,
                lo: lo[j],
                hi: hi[j],
            })
            .collect();
        base.update_bounds(&overrides)
    }

    pub fn qp(&self) -> &'a CondensedQp {
        self.qp
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Merges tightening overrides. An override may produce `lo > hi`, which
    /// the solver reports as infeasible; it may not widen either side.
    pub fn update_bounds(&self, overrides: &[BoundOverride]) -> Result<Self> {
        let mut out = self.clone();
        for o in overrides {
            let j = o.var;
            if j >= out.lo.len() {
                return Err(Error::VariableOutOfRange(j));
            }
            let (lo, hi) = (out.lo[j], out.hi[j]);
            if o.lo < lo - 1e-12 || o.hi > hi + 1e-12 || o.lo.is_nan() || o.hi.is_nan() {
                return Err(Error::LooseningOverride {
                    var: j,
                    lo,
                    hi,
                    new_lo: o.lo,
                    new_hi: o.hi,
                });
            }
            out.lo[j] = o.lo.max(lo);
            out.hi[j] = o.hi.min(hi);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Evidence that a relaxation has no feasible point.
#[derive(Debug, Clone, PartialEq)]
pub enum InfeasibilityCertificate {
    ContradictoryBounds {
        var: usize,
        lo: f64,
        hi: f64,
    },
    /// A row with no nonzero coefficient whose bounds exclude zero.
    EmptyRow {
        row: usize,
    },
    /// Nonnegative combination of constraints (`≥` orientation, equalities
    /// with free sign) whose normals cancel while the right-hand sides do not.
    DualRay(Vec<(ConstraintRef, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub status: QpStatus,
    pub u: Vec<f64>,
    /// Full objective including the condensed constant. Under
    /// `IterationLimit` this is a lower bound on the optimum.
    pub objective: f64,
    pub active_set: Vec<ConstraintRef>,
    pub iterations: usize,
    pub certificate: Option<InfeasibilityCertificate>,
}

impl QpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    fn infeasible(n: usize, iterations: usize, cert: InfeasibilityCertificate) -> Self {
        Self {
            status: QpStatus::Infeasible,
            u: vec![0.0; n],
            objective: f64::INFINITY,
            active_set: Vec::new(),
            iterations,
            certificate: Some(cert),
        }
    }
}

/// Optional information from an earlier solve. Hinted constraints that are
/// violated are added first; the hint never changes the optimum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStartHint {
    pub primal: Option<Vec<f64>>,
    pub active: Vec<ConstraintRef>,
}

impl WarmStartHint {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_result(res: &QpResult) -> Self {
        Self {
            primal: Some(res.u.clone()),
            active: res.active_set.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpOptions {
    /// Defaults to `100·(n_vars + n_rows)`.
    pub max_iter: Option<usize>,
    pub feas_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iter: None,
            feas_tol: 1e-8,
        }
    }
}

impl QpOptions {
    pub fn with_max_iter(max_iter: usize) -> Self {
        Self {
            max_iter: Some(max_iter),
            ..Self::default()
        }
    }
}

const EQ_TOL: f64 = 1e-12;

struct Workspace<'q> {
    qp: &'q CondensedQp,
    lo: &'q [f64],
    hi: &'q [f64],
    n: usize,
    m: usize,
    /// Column-major n×n.
    j: Vec<f64>,
    /// Column-major n×n, upper triangular in the leading q×q block.
    r: Vec<f64>,
    x: Vec<f64>,
    active: Vec<(ConstraintRef, bool)>,
    mult: Vec<f64>,
    is_active: Vec<bool>,
    iterations: usize,
    max_iter: usize,
    d: Vec<f64>,
    z: Vec<f64>,
    rdir: Vec<f64>,
}

enum AddOutcome {
    Added,
    Redundant,
    Infeasible(InfeasibilityCertificate),
    Limit,
}

impl<'q> Workspace<'q> {
    fn slot(&self, c: ConstraintRef) -> usize {
        match c {
            ConstraintRef::RowLower(i) => i,
            ConstraintRef::RowUpper(i) => self.m + i,
            ConstraintRef::VarLower(j) => 2 * self.m + j,
            ConstraintRef::VarUpper(j) => 2 * self.m + self.n + j,
        }
    }

    fn twin(c: ConstraintRef) -> ConstraintRef {
        match c {
            ConstraintRef::RowLower(i) => ConstraintRef::RowUpper(i),
            ConstraintRef::RowUpper(i) => ConstraintRef::RowLower(i),
            ConstraintRef::VarLower(j) => ConstraintRef::VarUpper(j),
            ConstraintRef::VarUpper(j) => ConstraintRef::VarLower(j),
        }
    }

    fn rhs(&self, c: ConstraintRef) -> f64 {
        match c {
            ConstraintRef::RowLower(i) => self.qp.row_lo()[i],
            ConstraintRef::RowUpper(i) => -self.qp.row_hi()[i],
            ConstraintRef::VarLower(j) => self.lo[j],
            ConstraintRef::VarUpper(j) => -self.hi[j],
        }
    }

    fn norm(&self, c: ConstraintRef) -> f64 {
        match c {
            ConstraintRef::RowLower(i) | ConstraintRef::RowUpper(i) => self.qp.row_norm(i),
            _ => 1.0,
        }
    }

    fn lhs(&self, c: ConstraintRef, x: &[f64]) -> f64 {
        match c {
            ConstraintRef::RowLower(i) => dot(self.qp.row(i), x),
            ConstraintRef::RowUpper(i) => -dot(self.qp.row(i), x),
            ConstraintRef::VarLower(j) => x[j],
            ConstraintRef::VarUpper(j) => -x[j],
        }
    }

    fn slack(&self, c: ConstraintRef) -> f64 {
        self.lhs(c, &self.x) - self.rhs(c)
    }

    /// d = Jᵀ n_c
    fn compute_d(&mut self, c: ConstraintRef) {
        let n = self.n;
        for k in 0..n {
            let col = &self.j[k * n..(k + 1) * n];
            self.d[k] = match c {
                ConstraintRef::RowLower(i) => dot(col, self.qp.row(i)),
                ConstraintRef::RowUpper(i) => -dot(col, self.qp.row(i)),
                ConstraintRef::VarLower(j) => col[j],
                ConstraintRef::VarUpper(j) => -col[j],
            };
        }
    }

    fn q(&self) -> usize {
        self.active.len()
    }

    /// z = J₂ d₂ and r = R⁻¹ d₁.
    fn directions(&mut self) {
        let (n, q) = (self.n, self.q());
        self.z.iter_mut().for_each(|v| *v = 0.0);
        for k in q..n {
            let dk = self.d[k];
            if dk != 0.0 {
                let col = &self.j[k * n..(k + 1) * n];
                for (zi, ci) in self.z.iter_mut().zip(col) {
                    *zi += dk * ci;
                }
            }
        }
        for i in (0..q).rev() {
            let mut s = self.d[i];
            for k in i + 1..q {
                s -= self.r[k * n + i] * self.rdir[k];
            }
            self.rdir[i] = s / self.r[i * n + i];
        }
    }

    fn rotate_j(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let n = self.n;
        for row in 0..n {
            let ja = self.j[a * n + row];
            let jb = self.j[b * n + row];
            self.j[a * n + row] = c * ja + s * jb;
            self.j[b * n + row] = -s * ja + c * jb;
        }
    }

    /// Appends constraint `c` (with current `d`) to the factorization.
    fn push_active(&mut self, c: ConstraintRef, eq: bool, multiplier: f64) {
        let (n, q) = (self.n, self.q());
        for k in (q + 1..n).rev() {
            let (a, b) = (self.d[k - 1], self.d[k]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            self.d[k - 1] = h;
            self.d[k] = 0.0;
            self.rotate_j(k - 1, k, cs, sn);
        }
        for i in 0..=q {
            self.r[q * n + i] = self.d[i];
        }
        self.active.push((c, eq));
        self.mult.push(multiplier);
        let s = self.slot(c);
        self.is_active[s] = true;
        if eq {
            let t = self.slot(Self::twin(c));
            self.is_active[t] = true;
        }
    }

    fn drop_active(&mut self, l: usize) {
        let n = self.n;
        let q = self.q();
        let (c, eq) = self.active.remove(l);
        self.mult.remove(l);
        let s = self.slot(c);
        self.is_active[s] = false;
        if eq {
            let t = self.slot(Self::twin(c));
            self.is_active[t] = false;
        }
        // Shift columns of R left, then restore triangularity.
        for col in l..q - 1 {
            for i in 0..=col + 1 {
                self.r[col * n + i] = self.r[(col + 1) * n + i];
            }
        }
        for i in 0..n {
            self.r[(q - 1) * n + i] = 0.0;
        }
        for k in l..q - 1 {
            let a = self.r[k * n + k];
            let b = self.r[k * n + k + 1];
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            for col in k..q - 1 {
                let ra = self.r[col * n + k];
                let rb = self.r[col * n + k + 1];
                self.r[col * n + k] = cs * ra + sn * rb;
                self.r[col * n + k + 1] = -sn * ra + cs * rb;
            }
            self.rotate_j(k, k + 1, cs, sn);
        }
    }

    /// One Goldfarb–Idnani addition, including any partial steps that drop
    /// active inequalities on the way.
    fn add(&mut self, c: ConstraintRef, eq: bool) -> AddOutcome {
        let mut up = 0.0;
        loop {
            if self.iterations >= self.max_iter {
                return AddOutcome::Limit;
            }
            self.compute_d(c);
            self.directions();
            let q = self.q();
            let dd: f64 = self.d.iter().map(|v| v * v).sum();
            let zn: f64 = self.d[q..].iter().map(|v| v * v).sum();
            let rmax = self.rdir[..q].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for k in 0..q {
                if self.active[k].1 {
                    continue;
                }
                let rk = self.rdir[k];
                if rk > 1e-12 * rmax.max(1e-300) {
                    let ratio = self.mult[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(k);
                    }
                }
            }
            let slack = self.slack(c);
            let full = zn > 1e-13 * dd;
            let t2 = if full { -slack / zn } else { f64::INFINITY };

            if !full && t1.is_infinite() {
                if eq && slack.abs() <= 1e-9 * (1.0 + self.rhs(c).abs()) {
                    return AddOutcome::Redundant;
                }
                let mut ray = vec![(c, 1.0)];
                for k in 0..q {
                    ray.push((self.active[k].0, -self.rdir[k]));
                }
                return AddOutcome::Infeasible(InfeasibilityCertificate::DualRay(ray));
            }

            self.iterations += 1;
            let t = t1.min(t2);
            if full {
                for (xi, zi) in self.x.iter_mut().zip(&self.z) {
                    *xi += t * zi;
                }
            }
            for k in 0..q {
                self.mult[k] -= t * self.rdir[k];
            }
            up += t;
            if full && t2 <= t1 {
                self.push_active(c, eq, up);
                return AddOutcome::Added;
            }
            let l = drop.expect("partial step without a blocking multiplier");
            self.drop_active(l);
        }
    }

    fn most_violated(&self, prio: &[bool], tol: f64) -> Option<ConstraintRef> {
        let mut best: Option<(f64, ConstraintRef)> = None;
        let mut best_prio: Option<(f64, ConstraintRef)> = None;
        let consider = |c: ConstraintRef,
                        best: &mut Option<(f64, ConstraintRef)>,
                        best_prio: &mut Option<(f64, ConstraintRef)>| {
            let rhs = self.rhs(c);
            if !rhs.is_finite() {
                return;
            }
            let norm = self.norm(c);
            let v = self.slack(c) / norm;
            if v < -tol * (1.0 + rhs.abs() / norm) {
                if best.is_none_or(|(b, _)| v < b) {
                    *best = Some((v, c));
                }
                if prio[self.slot(c)] && best_prio.is_none_or(|(b, _)| v < b) {
                    *best_prio = Some((v, c));
                }
            }
        };
        for i in 0..self.m {
            if self.qp.row_norm(i) == 0.0 {
                continue;
            }
            for c in [ConstraintRef::RowLower(i), ConstraintRef::RowUpper(i)] {
                if !self.is_active[self.slot(c)] {
                    consider(c, &mut best, &mut best_prio);
                }
            }
        }
        for j in 0..self.n {
            for c in [ConstraintRef::VarLower(j), ConstraintRef::VarUpper(j)] {
                if !self.is_active[self.slot(c)] {
                    consider(c, &mut best, &mut best_prio);
                }
            }
        }
        best_prio.or(best).map(|(_, c)| c)
    }
}

/// Solves the relaxation of `inst`. Deterministic for identical inputs.
pub fn solve(inst: &QpInstance<'_>, hint: &WarmStartHint, opts: &QpOptions) -> QpResult {
    let qp = inst.qp;
    let (n, m) = (qp.n_vars(), qp.n_rows());
    let tol = opts.feas_tol;

    for j in 0..n {
        if inst.lo[j] > inst.hi[j] + tol * (1.0 + inst.lo[j].abs()) {
            return QpResult::infeasible(
                n,
                0,
                InfeasibilityCertificate::ContradictoryBounds {
                    var: j,
                    lo: inst.lo[j],
                    hi: inst.hi[j],
                },
            );
        }
    }
    for i in 0..m {
        if qp.row_norm(i) == 0.0 && (qp.row_lo()[i] > tol || qp.row_hi()[i] < -tol) {
            return QpResult::infeasible(n, 0, InfeasibilityCertificate::EmptyRow { row: i });
        }
    }

    let j0 = qp.factor().as_slice().to_vec();
    // x = -J Jᵀ h
    let h = qp.gradient().as_slice();
    let jt_h: Vec<f64> = (0..n).map(|k| dot(&j0[k * n..(k + 1) * n], h)).collect();
    let mut x = vec![0.0; n];
    for k in 0..n {
        let col = &j0[k * n..(k + 1) * n];
        for (xi, ci) in x.iter_mut().zip(col) {
            *xi -= ci * jt_h[k];
        }
    }

    let mut ws = Workspace {
        qp,
        lo: &inst.lo,
        hi: &inst.hi,
        n,
        m,
        j: j0,
        r: vec![0.0; n * n],
        x,
        active: Vec::with_capacity(n),
        mult: Vec::with_capacity(n),
        is_active: vec![false; 2 * m + 2 * n],
        iterations: 0,
        max_iter: opts.max_iter.unwrap_or(100 * (n + m)),
        d: vec![0.0; n],
        z: vec![0.0; n],
        rdir: vec![0.0; n],
    };

    let mut prio = vec![false; 2 * m + 2 * n];
    for &c in &hint.active {
        let in_range = match c {
            ConstraintRef::RowLower(i) | ConstraintRef::RowUpper(i) => i < m,
            ConstraintRef::VarLower(j) | ConstraintRef::VarUpper(j) => j < n,
        };
        if in_range {
            prio[ws.slot(c)] = true;
        }
    }
    if let Some(p) = &hint.primal {
        if p.len() == n {
            for j in 0..n {
                if (p[j] - inst.lo[j]).abs() <= 1e-9 {
                    prio[ws.slot(ConstraintRef::VarLower(j))] = true;
                }
                if (p[j] - inst.hi[j]).abs() <= 1e-9 {
                    prio[ws.slot(ConstraintRef::VarUpper(j))] = true;
                }
            }
            for i in 0..m {
                let a = dot(qp.row(i), p);
                if (a - qp.row_lo()[i]).abs() <= 1e-9 * (1.0 + a.abs()) {
                    prio[ws.slot(ConstraintRef::RowLower(i))] = true;
                }
                if (a - qp.row_hi()[i]).abs() <= 1e-9 * (1.0 + a.abs()) {
                    prio[ws.slot(ConstraintRef::RowUpper(i))] = true;
                }
            }
        }
    }

    let finish = |ws: &Workspace, status: QpStatus, cert: Option<InfeasibilityCertificate>| {
        if status == QpStatus::Infeasible {
            return QpResult::infeasible(n, ws.iterations, cert.expect("certificate"));
        }
        let mut u = ws.x.clone();
        for &(c, _) in &ws.active {
            match c {
                ConstraintRef::VarLower(j) => u[j] = inst.lo[j],
                ConstraintRef::VarUpper(j) => u[j] = inst.hi[j],
                _ => {}
            }
        }
        QpResult {
            status,
            objective: qp.objective(&u),
            u,
            active_set: ws.active.iter().map(|(c, _)| *c).collect(),
            iterations: ws.iterations,
            certificate: None,
        }
    };

    // Equalities first.
    let mut equalities = Vec::new();
    for j in 0..n {
        if inst.lo[j].is_finite()
            && (inst.hi[j] - inst.lo[j]).abs() <= EQ_TOL * (1.0 + inst.lo[j].abs())
        {
            equalities.push(ConstraintRef::VarLower(j));
        }
    }
    for i in 0..m {
        let (l, u) = (qp.row_lo()[i], qp.row_hi()[i]);
        if qp.row_norm(i) > 0.0 && l.is_finite() && (u - l).abs() <= EQ_TOL * (1.0 + l.abs()) {
            equalities.push(ConstraintRef::RowLower(i));
        }
    }
    for c in equalities {
        let oriented = if ws.slack(c) > 0.0 {
            Workspace::twin(c)
        } else {
            c
        };
        match ws.add(oriented, true) {
            AddOutcome::Added | AddOutcome::Redundant => {}
            AddOutcome::Infeasible(cert) => return finish(&ws, QpStatus::Infeasible, Some(cert)),
            AddOutcome::Limit => return finish(&ws, QpStatus::IterationLimit, None),
        }
    }

    loop {
        let Some(c) = ws.most_violated(&prio, tol) else {
            return finish(&ws, QpStatus::Optimal, None);
        };
        match ws.add(c, false) {
            AddOutcome::Added | AddOutcome::Redundant => {}
            AddOutcome::Infeasible(cert) => return finish(&ws, QpStatus::Infeasible, Some(cert)),
            AddOutcome::Limit => return finish(&ws, QpStatus::IterationLimit, None),
        }
    }
}

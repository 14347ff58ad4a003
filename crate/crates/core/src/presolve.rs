//! Domain propagation on the condensed rows.
//!
//! For a row `l <= Σ d_j u_j <= h` and a variable `i` with `d_i != 0`, the
//! opposite-side activity of the other variables bounds `d_i u_i` from above
//! by `h − min Σ_{j≠i} d_j u_j` and from below by `l − max Σ_{j≠i} d_j u_j`.
//! Dividing by `d_i` (flipping the side when negative) yields new bounds,
//! rounded inward for binaries. Rows are revisited whenever one of their
//! variables tightens.

use serde::{Deserialize, Serialize};

use crate::ocp::CondensedQp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Consistent,
    Infeasible,
}

/// Per-variable bounds of the control vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundState {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// On input: variables whose rows should be revisited. On output:
    /// variables tightened by the call.
    pub changed: Vec<bool>,
    pub status: BoundStatus,
    /// Sweeps performed by the last propagation.
    pub passes: usize,
    /// The last propagation stopped because nothing changed.
    pub converged: bool,
}

impl BoundState {
    /// All variables marked dirty.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let n = lo.len();
        Self {
            lo,
            hi,
            changed: vec![true; n],
            status: BoundStatus::Consistent,
            passes: 0,
            converged: false,
        }
    }

    pub fn from_qp(qp: &CondensedQp) -> Self {
        Self::new(qp.lo().to_vec(), qp.hi().to_vec())
    }

    pub fn is_consistent(&self) -> bool {
        self.status == BoundStatus::Consistent
    }

    pub fn is_fixed(&self, j: usize) -> bool {
        self.lo[j] == self.hi[j]
    }

    pub fn mark_all(&mut self) {
        self.changed.iter_mut().for_each(|c| *c = true);
    }

    pub fn clear_changed(&mut self) {
        self.changed.iter_mut().for_each(|c| *c = false);
    }

    /// Fixes `var` to `value` and marks it dirty.
    pub fn fix(&mut self, var: usize, value: f64) {
        if value < self.lo[var] - 1e-12 || value > self.hi[var] + 1e-12 {
            self.status = BoundStatus::Infeasible;
        }
        self.lo[var] = value;
        self.hi[var] = value;
        self.changed[var] = true;
    }

    /// Whether `u` lies inside the bounds up to `tol`.
    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.iter()
            .enumerate()
            .all(|(j, v)| *v >= self.lo[j] - tol && *v <= self.hi[j] + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub max_passes: usize,
    /// Tightenings smaller than this (relative to `max(1, |bound|)`) are
    /// ignored.
    pub min_change: f64,
    pub feas_tol: f64,
    /// Slack added before rounding binary bounds inward.
    pub int_eps: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            max_passes: 10,
            min_change: 1e-8,
            feas_tol: 1e-9,
            int_eps: 1e-6,
        }
    }
}

struct Propagator<'a> {
    qp: &'a CondensedQp,
    cfg: &'a PropagationConfig,
    lo: Vec<f64>,
    hi: Vec<f64>,
    tightened: Vec<bool>,
    touched: Vec<usize>,
}

impl Propagator<'_> {
    fn tighten_hi(&mut self, j: usize, bound: f64) -> bool {
        let v = if self.qp.is_binary(j) {
            (bound + self.cfg.int_eps).floor()
        } else {
            bound
        };
        let cur = self.hi[j];
        if v < cur - self.cfg.min_change * cur.abs().max(1.0)
            || (cur.is_infinite() && v.is_finite())
        {
            self.hi[j] = v;
            self.record(j);
        }
        self.check(j)
    }

    fn tighten_lo(&mut self, j: usize, bound: f64) -> bool {
        let v = if self.qp.is_binary(j) {
            (bound - self.cfg.int_eps).ceil()
        } else {
            bound
        };
        let cur = self.lo[j];
        if v > cur + self.cfg.min_change * cur.abs().max(1.0)
            || (cur.is_infinite() && v.is_finite())
        {
            self.lo[j] = v;
            self.record(j);
        }
        self.check(j)
    }

    fn record(&mut self, j: usize) {
        if !self.tightened[j] {
            self.tightened[j] = true;
        }
        self.touched.push(j);
    }

    /// False when the bounds of `j` crossed.
    fn check(&mut self, j: usize) -> bool {
        let (l, h) = (self.lo[j], self.hi[j]);
        if l <= h {
            return true;
        }
        if l - h <= self.cfg.feas_tol * l.abs().max(h.abs()).max(1.0) {
            let mid = 0.5 * (l + h);
            self.lo[j] = mid;
            self.hi[j] = mid;
            return true;
        }
        false
    }

    /// Returns false on detected infeasibility.
    fn row(&mut self, i: usize) -> bool {
        let entries = self.qp.row_entries(i);
        let (row_lo, row_hi) = (self.qp.row_lo()[i], self.qp.row_hi()[i]);
        if entries.is_empty() {
            let tol = self.cfg.feas_tol;
            return row_lo <= tol && row_hi >= -tol;
        }
        let (mut min_fin, mut min_inf, mut max_fin, mut max_inf) = (0.0, 0usize, 0.0, 0usize);
        let contrib = |lo: &[f64], hi: &[f64], j: usize, d: f64| -> (f64, f64) {
            if d > 0.0 {
                (d * lo[j], d * hi[j])
            } else {
                (d * hi[j], d * lo[j])
            }
        };
        for &(j, d) in entries {
            let (a, b) = contrib(&self.lo, &self.hi, j, d);
            if a.is_finite() {
                min_fin += a;
            } else {
                min_inf += 1;
            }
            if b.is_finite() {
                max_fin += b;
            } else {
                max_inf += 1;
            }
        }
        if min_inf == 0 && min_fin > row_hi + self.cfg.feas_tol * row_hi.abs().max(1.0) {
            return false;
        }
        if max_inf == 0 && max_fin < row_lo - self.cfg.feas_tol * row_lo.abs().max(1.0) {
            return false;
        }
        for &(j, d) in entries {
            // Contributions use the bounds as they were when the activity was
            // summed; later tightenings in this row only make those sums
            // conservative.
            let (a, b) = contrib(&self.lo, &self.hi, j, d);
            if row_hi.is_finite() {
                let rest_inf = min_inf - usize::from(!a.is_finite());
                if rest_inf == 0 {
                    let rest = if a.is_finite() { min_fin - a } else { min_fin };
                    let bound = (row_hi - rest) / d;
                    let ok = if d > 0.0 {
                        self.tighten_hi(j, bound)
                    } else {
                        self.tighten_lo(j, bound)
                    };
                    if !ok {
                        return false;
                    }
                }
            }
            if row_lo.is_finite() {
                let rest_inf = max_inf - usize::from(!b.is_finite());
                if rest_inf == 0 {
                    let rest = if b.is_finite() { max_fin - b } else { max_fin };
                    let bound = (row_lo - rest) / d;
                    let ok = if d > 0.0 {
                        self.tighten_lo(j, bound)
                    } else {
                        self.tighten_hi(j, bound)
                    };
                    if !ok {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Tightens `bounds` using the rows that contain a dirty variable, sweep by
/// sweep, until a sweep changes nothing or `max_passes` sweeps ran.
pub fn propagate(qp: &CondensedQp, bounds: BoundState, cfg: &PropagationConfig) -> BoundState {
    let n = qp.n_vars();
    let m = qp.n_rows();
    let mut state = bounds;
    state.passes = 0;
    state.converged = false;
    if !state.is_consistent() {
        return state;
    }
    if let Some(j) = (0..n).find(|&j| state.lo[j] > state.hi[j] + cfg.feas_tol) {
        let _ = j;
        state.status = BoundStatus::Infeasible;
        return state;
    }

    let mut p = Propagator {
        qp,
        cfg,
        lo: std::mem::take(&mut state.lo),
        hi: std::mem::take(&mut state.hi),
        tightened: vec![false; n],
        touched: Vec::new(),
    };

    let mut queued = vec![false; m];
    let mut queue: Vec<usize> = Vec::new();
    let all_dirty = state.changed.iter().all(|c| *c);
    if all_dirty {
        queue.extend(0..m);
        queued.iter_mut().for_each(|q| *q = true);
    } else {
        for (j, dirty) in state.changed.iter().enumerate() {
            if *dirty {
                for &i in qp.var_rows(j) {
                    if !queued[i] {
                        queued[i] = true;
                        queue.push(i);
                    }
                }
            }
        }
        queue.sort_unstable();
    }

    let mut infeasible = false;
    while !queue.is_empty() && state.passes < cfg.max_passes {
        state.passes += 1;
        for &i in &queue {
            queued[i] = false;
        }
        p.touched.clear();
        for &i in &queue {
            if !p.row(i) {
                infeasible = true;
                break;
            }
        }
        if infeasible {
            break;
        }
        let mut next = Vec::new();
        for &j in &p.touched {
            for &i in qp.var_rows(j) {
                if !queued[i] {
                    queued[i] = true;
                    next.push(i);
                }
            }
        }
        next.sort_unstable();
        queue = next;
    }

    state.converged = !infeasible && queue.is_empty();
    state.lo = p.lo;
    state.hi = p.hi;
    state.changed = p.tightened;
    if infeasible {
        state.status = BoundStatus::Infeasible;
    }
    state
}

/// Fixes binaries whose preferred value is implied by the objective alone,
/// provided the fixing induces no other bound change under propagation.
///
/// The preference test bounds `f(u_j = 1) − f(u_j = 0) = ½H_jj + h_j +
/// Σ_{k≠j} H_jk u_k` over the current box: a positive lower bound prefers 0,
/// a negative upper bound prefers 1.
pub fn fix_by_optimality(
    qp: &CondensedQp,
    bounds: BoundState,
    cfg: &PropagationConfig,
) -> BoundState {
    let mut state = bounds;
    if !state.is_consistent() {
        return state;
    }
    let n = qp.n_vars();
    let h = qp.hessian();
    let g = qp.gradient();
    for &j in qp.binaries() {
        if state.is_fixed(j) {
            continue;
        }
        let base = 0.5 * h[(j, j)] + g[j];
        let (mut dmin, mut dmax) = (base, base);
        let mut bounded = true;
        for k in 0..n {
            if k == j {
                continue;
            }
            let c = h[(j, k)];
            if c == 0.0 {
                continue;
            }
            let (a, b) = (c * state.lo[k], c * state.hi[k]);
            if !a.is_finite() || !b.is_finite() {
                bounded = false;
                break;
            }
            dmin += a.min(b);
            dmax += a.max(b);
        }
        if !bounded {
            continue;
        }
        let preferred = if dmin > 0.0 {
            0.0
        } else if dmax < 0.0 {
            1.0
        } else {
            continue;
        };
        let mut trial = state.clone();
        trial.clear_changed();
        trial.fix(j, preferred);
        let after = propagate(qp, trial, cfg);
        let induced = after.changed.iter().enumerate().any(|(k, c)| *c && k != j);
        if after.is_consistent() && !induced {
            let mut committed = after;
            committed.changed = state.changed.clone();
            committed.changed[j] = true;
            state = committed;
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{condense, OcpMiqp, Stage, Terminal};
    use nalgebra::{dvector, DMatrix, DVector};

    /// One stage, inputs only, `nb` binaries first then continuous in [0, 1].
    fn inputs_only(nu: usize, nb: usize, rows: &[(&[f64], f64, f64)]) -> CondensedQp {
        let mut s = Stage::new(1, nu);
        s.input_cost = DMatrix::identity(nu, nu);
        s.input_lo = DVector::zeros(nu);
        s.input_hi = DVector::from_element(nu, 1.0);
        s.binaries = (0..nb).collect();
        for (d, lo, hi) in rows {
            s.push_row(&[0.0], d, *lo, *hi);
        }
        condense(&OcpMiqp::repeated(s, 1, Terminal::new(1)), &dvector![0.0]).unwrap()
    }

    #[test]
    fn single_pass_hand_computation() {
        let qp = inputs_only(2, 2, &[(&[2.0, 3.0], 0.0, 2.0)]);
        let out = propagate(&qp, BoundState::from_qp(&qp), &PropagationConfig::default());
        assert!(out.is_consistent());
        assert_eq!(out.hi, vec![1.0, 0.0]);
        assert_eq!(out.lo, vec![0.0, 0.0]);
        assert_eq!(out.changed, vec![false, true]);
    }

    #[test]
    fn branching_fix_propagates_to_partner() {
        let qp = inputs_only(2, 2, &[(&[1.0, 1.0], f64::NEG_INFINITY, 1.0)]);
        let mut b = BoundState::from_qp(&qp);
        b.clear_changed();
        b.fix(0, 1.0);
        let out = propagate(&qp, b, &PropagationConfig::default());
        assert!(out.is_consistent());
        assert_eq!(out.hi[1], 0.0);
    }

    #[test]
    fn contradictory_fix_is_detected() {
        let qp = inputs_only(1, 1, &[(&[1.0], f64::NEG_INFINITY, 0.5)]);
        let mut b = BoundState::from_qp(&qp);
        b.fix(0, 1.0);
        let out = propagate(&qp, b, &PropagationConfig::default());
        assert_eq!(out.status, BoundStatus::Infeasible);
    }

    #[test]
    fn continuous_bounds_tighten_without_rounding() {
        // u0 binary, u1 continuous: u1 <= 0.4 + 0.5 u0 with u0 fixed to 0.
        let qp = inputs_only(2, 1, &[(&[-0.5, 1.0], f64::NEG_INFINITY, 0.4)]);
        let mut b = BoundState::from_qp(&qp);
        b.fix(0, 0.0);
        let out = propagate(&qp, b, &PropagationConfig::default());
        assert!((out.hi[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn second_call_is_a_fixed_point() {
        let qp = inputs_only(
            4,
            3,
            &[
                (&[2.0, 3.0, 0.0, 1.0], 0.0, 2.5),
                (&[1.0, 0.0, -1.0, 0.0], 0.5, 2.0),
            ],
        );
        let cfg = PropagationConfig::default();
        let once = propagate(&qp, BoundState::from_qp(&qp), &cfg);
        assert!(once.converged);
        let mut again = once.clone();
        again.mark_all();
        let twice = propagate(&qp, again, &cfg);
        assert_eq!(once.lo, twice.lo);
        assert_eq!(once.hi, twice.hi);
        assert!(twice.changed.iter().all(|c| !c));
    }

    #[test]
    fn optimality_fixing_without_coupling() {
        let qp = inputs_only(1, 1, &[]);
        let out = fix_by_optimality(&qp, BoundState::from_qp(&qp), &PropagationConfig::default());
        assert_eq!((out.lo[0], out.hi[0]), (0.0, 0.0));
    }

    #[test]
    fn optimality_fixing_reverted_when_it_forces_a_partner() {
        // u binary prefers 0, but u + v >= 1 would then force v = 1.
        let qp = inputs_only(2, 1, &[(&[1.0, 1.0], 1.0, f64::INFINITY)]);
        let out = fix_by_optimality(&qp, BoundState::from_qp(&qp), &PropagationConfig::default());
        assert_eq!((out.lo[0], out.hi[0]), (0.0, 1.0));
    }

    #[test]
    fn optimality_fixing_is_identity_when_all_fixed() {
        let qp = inputs_only(2, 2, &[]);
        let mut b = BoundState::from_qp(&qp);
        b.fix(0, 1.0);
        b.fix(1, 0.0);
        let out = fix_by_optimality(&qp, b.clone(), &PropagationConfig::default());
        assert_eq!(out.lo, b.lo);
        assert_eq!(out.hi, b.hi);
    }
}

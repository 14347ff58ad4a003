//! Exhaustive enumeration of binary assignments, used to verify the
//! branch-and-bound result on small instances.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ocp::{condense, CondensedQp, OcpMiqp};
use crate::qp::{self, BoundOverride, QpInstance, QpOptions, WarmStartHint};

pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best objective, `None` when every assignment is infeasible.
    pub objective: Option<f64>,
    /// Optimal control sequence.
    pub u: Option<Vec<f64>>,
    /// Number of feasible assignments.
    pub feasible: usize,
    pub enumerated: usize,
}

impl OracleResult {
    pub fn is_infeasible(&self) -> bool {
        self.objective.is_none()
    }

    /// Values of the binaries at the optimum, in flat index order.
    pub fn assignment(&self, binaries: &[usize]) -> Option<Vec<f64>> {
        self.u
            .as_ref()
            .map(|u| binaries.iter().map(|&j| u[j]).collect())
    }
}

/// Solves the convex QP for every binary assignment and keeps the best.
pub fn brute_force_oracle(prob: &OcpMiqp, x0: &DVector<f64>) -> Result<OracleResult> {
    let qp = condense(prob, x0)?;
    brute_force_condensed(&qp)
}

pub fn brute_force_condensed(qp: &CondensedQp) -> Result<OracleResult> {
    let bins = qp.binaries();
    if bins.len() > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            count: bins.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let base = QpInstance::new(qp);
    let opts = QpOptions::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut feasible = 0;
    let total = 1usize << bins.len();
    for mask in 0..total {
        let fixes: Vec<BoundOverride> = bins
            .iter()
            .enumerate()
            .map(|(b, &j)| BoundOverride::fix(j, ((mask >> b) & 1) as f64))
            .collect();
        let Ok(inst) = base.update_bounds(&fixes) else {
            continue;
        };
        let res = qp::solve(&inst, &WarmStartHint::none(), &opts);
        if !res.is_optimal() {
            continue;
        }
        feasible += 1;
        if best.as_ref().is_none_or(|(o, _)| res.objective < *o) {
            best = Some((res.objective, res.u));
        }
    }
    Ok(OracleResult {
        objective: best.as_ref().map(|b| b.0),
        u: best.map(|b| b.1),
        feasible,
        enumerated: total,
    })
}

/// Closed-form optimum of a condensed problem with diagonal Hessian and no
/// rows: each variable minimizes its own parabola over its interval, or
/// over {0, 1} for binaries. `None` when the problem is not of that form.
pub fn separable_optimum(qp: &CondensedQp) -> Option<f64> {
    let n = qp.n_vars();
    let h = qp.hessian();
    if qp.n_rows() > 0 {
        return None;
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && h[(i, j)] != 0.0 {
                return None;
            }
        }
    }
    let g = qp.gradient();
    let mut total = qp.constant();
    for j in 0..n {
        let f = |v: f64| 0.5 * h[(j, j)] * v * v + g[j] * v;
        let best = if qp.is_binary(j) {
            f(0.0).min(f(1.0))
        } else {
            f((-g[j] / h[(j, j)]).clamp(qp.lo()[j], qp.hi()[j]))
        };
        total += best;
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{Stage, Terminal};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector, DMatrix};

    #[test]
    fn scalar_enumeration() {
        let mut s = Stage::new(1, 1);
        s.input_cost = dmatrix![2.0];
        s.input_lin = dvector![-1.2];
        s.state_cost = dmatrix![0.72];
        s.binaries = vec![0];
        let p = OcpMiqp::repeated(s, 1, Terminal::new(1));
        let r = brute_force_oracle(&p, &dvector![1.0]).unwrap();
        assert_abs_diff_eq!(r.objective.unwrap(), 0.16, epsilon = 1e-12);
        assert_eq!(r.u.unwrap(), vec![1.0]);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut s = Stage::new(1, 1);
        s.input_cost = dmatrix![1.0];
        s.binaries = vec![0];
        s.push_row(&[0.0], &[1.0], 0.2, 0.8);
        let p = OcpMiqp::repeated(s, 2, Terminal::new(1));
        assert!(brute_force_oracle(&p, &dvector![0.0])
            .unwrap()
            .is_infeasible());
    }

    #[test]
    fn guard_refuses_large_enumerations() {
        let mut s = Stage::new(1, 3);
        s.input_cost = DMatrix::identity(3, 3);
        s.binaries = vec![0, 1, 2];
        let p = OcpMiqp::repeated(s, 7, Terminal::new(1));
        assert!(matches!(
            brute_force_oracle(&p, &dvector![0.0]),
            Err(Error::EnumerationGuard { count: 21, .. })
        ));
    }
}

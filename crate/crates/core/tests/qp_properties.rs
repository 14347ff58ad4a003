//! Property tests of the node QP solver against the KKT conditions and
//! against the infeasibility certificates it returns.

use mimpc::ocp::{condense, CondensedQp, OcpMiqp, Stage, Terminal};
use mimpc::qp::{
    self, BoundOverride, ConstraintRef, InfeasibilityCertificate, QpInstance, QpOptions, QpStatus,
    WarmStartHint,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A one-stage problem whose condensed QP is `½uᵀRu + rᵀu` under box and
/// row constraints. Row bounds contain a random point of the box, so the
/// problem is feasible unless `tight` squeezes a row shut at another value.
fn random_qp(seed: u64, n: usize, m: usize, tight: bool) -> CondensedQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut s = Stage::new(1, n);
    s.input_cost = &f * f.transpose() + DMatrix::identity(n, n) * 0.05;
    s.input_cost = (&s.input_cost + s.input_cost.transpose()) * 0.5;
    s.input_lin = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let mut point = Vec::with_capacity(n);
    for k in 0..n {
        match rng.random_range(0..4) {
            0 => {}
            1 => s.input_lo[k] = rng.random_range(-2.0..0.0),
            2 => s.input_hi[k] = rng.random_range(0.0..2.0),
            _ => {
                s.input_lo[k] = rng.random_range(-2.0..0.0);
                s.input_hi[k] = rng.random_range(0.0..2.0);
            }
        }
        let (lo, hi) = (s.input_lo[k].max(-2.0), s.input_hi[k].min(2.0));
        point.push(rng.random_range(lo..=hi));
    }
    for r in 0..m {
        let d: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.7) {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let act: f64 = d.iter().zip(&point).map(|(a, b)| a * b).sum();
        let (lo, hi) = match rng.random_range(0..4) {
            0 => (f64::NEG_INFINITY, act + rng.random_range(0.0..0.5)),
            1 => (act - rng.random_range(0.0..0.5), f64::INFINITY),
            2 => (act, act),
            _ => (
                act - rng.random_range(0.0..0.5),
                act + rng.random_range(0.0..0.5),
            ),
        };
        let (lo, hi) = if tight && r == 0 {
            (act + 10.0, act + 10.0)
        } else {
            (lo, hi)
        };
        s.push_row(&[0.0], &d, lo, hi);
    }
    condense(
        &OcpMiqp::repeated(s, 1, Terminal::new(1)),
        &DVector::zeros(1),
    )
    .unwrap()
}

/// Normal and right-hand side of a constraint in `normalᵀu >= rhs` form.
fn normal(inst: &QpInstance<'_>, c: ConstraintRef) -> (DVector<f64>, f64) {
    let qp = inst.qp();
    let n = qp.n_vars();
    match c {
        ConstraintRef::RowLower(i) => (DVector::from_column_slice(qp.row(i)), qp.row_lo()[i]),
        ConstraintRef::RowUpper(i) => (-DVector::from_column_slice(qp.row(i)), -qp.row_hi()[i]),
        ConstraintRef::VarLower(j) => (DVector::from_fn(n, |k, _| f64::from(k == j)), inst.lo()[j]),
        ConstraintRef::VarUpper(j) => (
            -DVector::from_fn(n, |k, _| f64::from(k == j)),
            -inst.hi()[j],
        ),
    }
}

fn is_equality(inst: &QpInstance<'_>, c: ConstraintRef) -> bool {
    let qp = inst.qp();
    match c {
        ConstraintRef::RowLower(i) | ConstraintRef::RowUpper(i) => qp.row_lo()[i] == qp.row_hi()[i],
        ConstraintRef::VarLower(j) | ConstraintRef::VarUpper(j) => inst.lo()[j] == inst.hi()[j],
    }
}

/// Checks primal feasibility, complementarity, stationarity and dual signs.
fn assert_kkt(inst: &QpInstance<'_>, u: &[f64], active: &[ConstraintRef]) {
    let qp = inst.qp();
    let uv = DVector::from_column_slice(u);
    for (j, &v) in u.iter().enumerate() {
        assert!(
            v >= inst.lo()[j] - 1e-7 && v <= inst.hi()[j] + 1e-7,
            "bound {j} violated"
        );
    }
    assert!(
        qp.max_violation(u) <= 1e-7,
        "row violation {}",
        qp.max_violation(u)
    );

    let grad = qp.hessian() * &uv + qp.gradient();
    if active.is_empty() {
        assert!(
            grad.amax() <= 1e-7,
            "unconstrained gradient {}",
            grad.amax()
        );
        return;
    }
    let cols: Vec<DVector<f64>> = active.iter().map(|&c| normal(inst, c).0).collect();
    for (&c, col) in active.iter().zip(&cols) {
        let rhs = normal(inst, c).1;
        assert!(
            (col.dot(&uv) - rhs).abs() <= 1e-7,
            "{c:?} listed active but slack"
        );
    }
    let nmat = DMatrix::from_columns(&cols);
    let lambda = nmat.clone().svd(true, true).solve(&grad, 1e-12).unwrap();
    let residual = (&nmat * &lambda - &grad).amax();
    assert!(
        residual <= 1e-6 * grad.amax().max(1.0),
        "stationarity residual {residual}"
    );
    for (&c, &l) in active.iter().zip(lambda.iter()) {
        if !is_equality(inst, c) {
            assert!(l >= -1e-7, "multiplier of {c:?} is {l}");
        }
    }
}

fn assert_certificate(inst: &QpInstance<'_>, cert: &InfeasibilityCertificate) {
    match cert {
        InfeasibilityCertificate::ContradictoryBounds { lo, hi, .. } => assert!(lo > hi),
        InfeasibilityCertificate::EmptyRow { row } => {
            let qp = inst.qp();
            assert!(qp.row(*row).iter().all(|v| *v == 0.0));
            assert!(qp.row_lo()[*row] > 0.0 || qp.row_hi()[*row] < 0.0);
        }
        InfeasibilityCertificate::DualRay(terms) => {
            let n = inst.qp().n_vars();
            let mut combo = DVector::zeros(n);
            let mut rhs = 0.0;
            for &(c, w) in terms {
                if !is_equality(inst, c) {
                    assert!(w >= -1e-9, "negative weight on {c:?}");
                }
                let (nv, b) = normal(inst, c);
                combo += nv * w;
                rhs += w * b;
            }
            assert!(
                combo.amax() <= 1e-7 * rhs.abs().max(1.0),
                "normals do not cancel: {}",
                combo.amax()
            );
            assert!(rhs > 1e-9, "right-hand side {rhs} is not positive");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn feasible_problems_satisfy_kkt(seed in any::<u64>(), n in 1usize..7, m in 0usize..6) {
        let qp = random_qp(seed, n, m, false);
        let inst = QpInstance::new(&qp);
        let res = qp::solve(&inst, &WarmStartHint::none(), &QpOptions::default());
        prop_assert_eq!(res.status, QpStatus::Optimal);
        assert_kkt(&inst, &res.u, &res.active_set);
        prop_assert!((res.objective - qp.objective(&res.u)).abs() <= 1e-9 * res.objective.abs().max(1.0));
    }

    #[test]
    fn hints_do_not_change_the_optimum(seed in any::<u64>(), n in 2usize..7, m in 0usize..6, var in 0usize..7, value in -1.0f64..1.0) {
        let qp = random_qp(seed, n, m, false);
        let parent = QpInstance::new(&qp);
        let root = qp::solve(&parent, &WarmStartHint::none(), &QpOptions::default());
        let var = var % n;
        let value = value.clamp(qp.lo()[var], qp.hi()[var]);
        let child = parent.update_bounds(&[BoundOverride::fix(var, value)]).unwrap();
        let cold = qp::solve(&child, &WarmStartHint::none(), &QpOptions::default());
        let warm = qp::solve(&child, &WarmStartHint::from_result(&root), &QpOptions::default());
        prop_assert_eq!(cold.status, warm.status);
        if cold.is_optimal() {
            assert_kkt(&child, &warm.u, &warm.active_set);
            prop_assert!((cold.objective - warm.objective).abs() <= 1e-8 * cold.objective.abs().max(1.0));
            prop_assert!(warm.objective >= root.objective - 1e-9 * root.objective.abs().max(1.0));
        } else if let Some(cert) = &warm.certificate {
            assert_certificate(&child, cert);
        }
    }

    #[test]
    fn infeasible_problems_carry_a_valid_certificate(seed in any::<u64>(), n in 1usize..6, m in 1usize..5) {
        let qp = random_qp(seed, n, m, true);
        let inst = QpInstance::new(&qp);
        let res = qp::solve(&inst, &WarmStartHint::none(), &QpOptions::default());
        match res.status {
            QpStatus::Infeasible => assert_certificate(&inst, res.certificate.as_ref().expect("certificate")),
            // Shifting one row far away is not always infeasible under
            // unbounded variables.
            QpStatus::Optimal => assert_kkt(&inst, &res.u, &res.active_set),
            QpStatus::IterationLimit => prop_assert!(false, "iteration limit on a small problem"),
        }
    }
}

#[test]
fn iteration_limit_reports_a_lower_bound() {
    let qp = random_qp(5, 6, 5, false);
    let inst = QpInstance::new(&qp);
    let full = qp::solve(&inst, &WarmStartHint::none(), &QpOptions::default());
    assert!(full.iterations > 1);
    let capped = qp::solve(&inst, &WarmStartHint::none(), &QpOptions::with_max_iter(1));
    assert_eq!(capped.status, QpStatus::IterationLimit);
    assert!(capped.objective <= full.objective + 1e-9);
}

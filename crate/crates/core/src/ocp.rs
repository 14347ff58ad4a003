//! Block-structured MIQP optimal control problems and their condensed form.
//!
//! A problem has `N` control intervals. Stage `i` couples `x_{i+1} = A_i x_i +
//! B_i u_i + a_i` with the path constraints `lc_i <= C_i x_i + D_i u_i <= uc_i`
//! and the objective `½ x_iᵀQ_i x_i + q_iᵀx_i + ½ u_iᵀR_i u_i + r_iᵀu_i`. The
//! terminal stage carries `½ x_NᵀP x_N + pᵀx_N` and `lc_N <= C_N x_N <= uc_N`.
//! Selected control entries are restricted to `{0, 1}`.
//!
//! [`Condenser`] eliminates `x_1..x_N` by forward block substitution. All
//! parts that do not depend on the initial state are computed once; a
//! [`CondensedQp`] for a particular `x̂0` only adds the affine terms.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{definiteness, is_symmetric, Definiteness};
use crate::{Error, Result};

/// One control interval of the optimal control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// `Q_i`, nx×nx, symmetric PSD.
    pub state_cost: DMatrix<f64>,
    /// `R_i`, nu×nu, symmetric PD.
    pub input_cost: DMatrix<f64>,
    pub state_lin: DVector<f64>,
    pub input_lin: DVector<f64>,
    /// `A_i`
    pub dynamics: DMatrix<f64>,
    /// `B_i`
    pub input_map: DMatrix<f64>,
    /// `a_i`
    pub offset: DVector<f64>,
    /// `C_i`, nc×nx
    pub con_state: DMatrix<f64>,
    /// `D_i`, nc×nu
    pub con_input: DMatrix<f64>,
    pub con_lo: DVector<f64>,
    pub con_hi: DVector<f64>,
    pub input_lo: DVector<f64>,
    pub input_hi: DVector<f64>,
    /// Control indices restricted to `{0, 1}`.
    pub binaries: Vec<usize>,
}

impl Stage {
    /// Zero dynamics and costs, no rows, unbounded inputs.
    pub fn new(nx: usize, nu: usize) -> Self {
        Self {
            state_cost: DMatrix::zeros(nx, nx),
            input_cost: DMatrix::zeros(nu, nu),
            state_lin: DVector::zeros(nx),
            input_lin: DVector::zeros(nu),
            dynamics: DMatrix::zeros(nx, nx),
            input_map: DMatrix::zeros(nx, nu),
            offset: DVector::zeros(nx),
            con_state: DMatrix::zeros(0, nx),
            con_input: DMatrix::zeros(0, nu),
            con_lo: DVector::zeros(0),
            con_hi: DVector::zeros(0),
            input_lo: DVector::from_element(nu, f64::NEG_INFINITY),
            input_hi: DVector::from_element(nu, f64::INFINITY),
            binaries: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.con_lo.len()
    }

    /// Appends one path constraint row `lo <= c·x + d·u <= hi`.
    pub fn push_row(&mut self, c: &[f64], d: &[f64], lo: f64, hi: f64) {
        self.con_state = append_row(&self.con_state, c);
        self.con_input = append_row(&self.con_input, d);
        self.con_lo = self.con_lo.push(lo);
        self.con_hi = self.con_hi.push(hi);
    }
}

/// Terminal cost and constraints on `x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminal {
    /// `P`
    pub cost: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub con_state: DMatrix<f64>,
    pub con_lo: DVector<f64>,
    pub con_hi: DVector<f64>,
}

impl Terminal {
    pub fn new(nx: usize) -> Self {
        Self {
            cost: DMatrix::zeros(nx, nx),
            lin: DVector::zeros(nx),
            con_state: DMatrix::zeros(0, nx),
            con_lo: DVector::zeros(0),
            con_hi: DVector::zeros(0),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.con_lo.len()
    }

    pub fn push_row(&mut self, c: &[f64], lo: f64, hi: f64) {
        self.con_state = append_row(&self.con_state, c);
        self.con_lo = self.con_lo.push(lo);
        self.con_hi = self.con_hi.push(hi);
    }
}

fn append_row(m: &DMatrix<f64>, row: &[f64]) -> DMatrix<f64> {
    assert_eq!(
        m.ncols(),
        row.len(),
        "row length does not match column count"
    );
    let r = m.nrows();
    let mut out = m.clone().insert_row(r, 0.0);
    for (j, v) in row.iter().enumerate() {
        out[(r, j)] = *v;
    }
    out
}

/// The mixed-integer optimal control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpMiqp {
    pub nx: usize,
    pub nu: usize,
    pub stages: Vec<Stage>,
    pub terminal: Terminal,
}

/// One violated invariant found by [`OcpMiqp::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.message.contains(needle))
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            location: location.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl OcpMiqp {
    /// Time-invariant problem: `stage` repeated `horizon` times.
    pub fn repeated(stage: Stage, horizon: usize, terminal: Terminal) -> Self {
        let nx = stage.dynamics.nrows();
        let nu = stage.input_map.ncols();
        Self {
            nx,
            nu,
            stages: vec![stage; horizon],
            terminal,
        }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn n_vars(&self) -> usize {
        self.horizon() * self.nu
    }

    pub fn n_binaries(&self) -> usize {
        self.stages.iter().map(|s| s.binaries.len()).sum()
    }

    /// Flat indices (into `U`) of all binary controls, ascending.
    pub fn binary_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            let mut b = s.binaries.clone();
            b.sort_unstable();
            b.dedup();
            out.extend(b.into_iter().map(|k| i * self.nu + k));
        }
        out
    }

    /// Flat input bounds with binaries intersected with `[0, 1]`.
    pub fn input_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.n_vars());
        let mut hi = Vec::with_capacity(self.n_vars());
        for s in &self.stages {
            lo.extend(s.input_lo.iter().copied());
            hi.extend(s.input_hi.iter().copied());
        }
        for j in self.binary_indices() {
            lo[j] = lo[j].max(0.0);
            hi[j] = hi[j].min(1.0);
        }
        (lo, hi)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        let (nx, nu) = (self.nx, self.nu);
        if self.stages.is_empty() {
            rep.push("problem", "horizon must be at least 1");
        }
        let dims = |rep: &mut ValidationReport,
                    loc: &str,
                    what: &str,
                    got: (usize, usize),
                    want: (usize, usize)| {
            if got != want {
                rep.push(
                    loc,
                    format!(
                        "{what} has shape {}x{}, expected {}x{}",
                        got.0, got.1, want.0, want.1
                    ),
                );
            }
        };
        for (i, s) in self.stages.iter().enumerate() {
            let loc = format!("stage {i}");
            let nc = s.con_lo.len();
            dims(&mut rep, &loc, "Q", s.state_cost.shape(), (nx, nx));
            dims(&mut rep, &loc, "R", s.input_cost.shape(), (nu, nu));
            dims(&mut rep, &loc, "A", s.dynamics.shape(), (nx, nx));
            dims(&mut rep, &loc, "B", s.input_map.shape(), (nx, nu));
            dims(&mut rep, &loc, "C", s.con_state.shape(), (nc, nx));
            dims(&mut rep, &loc, "D", s.con_input.shape(), (nc, nu));
            for (what, len, want) in [
                ("q", s.state_lin.len(), nx),
                ("r", s.input_lin.len(), nu),
                ("a", s.offset.len(), nx),
                ("upper row bound", s.con_hi.len(), nc),
                ("input lower bound", s.input_lo.len(), nu),
                ("input upper bound", s.input_hi.len(), nu),
            ] {
                if len != want {
                    rep.push(&loc, format!("{what} has length {len}, expected {want}"));
                }
            }
            if let Some(&k) = s.binaries.iter().find(|&&k| k >= nu) {
                rep.push(&loc, format!("binary index {k} out of range"));
            }
            if s.state_cost.shape() == (nx, nx) {
                check_weight(&mut rep, &loc, "Q", &s.state_cost, false);
            }
            if s.input_cost.shape() == (nu, nu) {
                check_weight(&mut rep, &loc, "R", &s.input_cost, true);
            }
            check_bounds(&mut rep, &loc, "row", &s.con_lo, &s.con_hi);
            check_bounds(&mut rep, &loc, "input", &s.input_lo, &s.input_hi);
        }
        let t = &self.terminal;
        let nc = t.con_lo.len();
        dims(&mut rep, "terminal", "P", t.cost.shape(), (nx, nx));
        dims(&mut rep, "terminal", "C", t.con_state.shape(), (nc, nx));
        if t.lin.len() != nx {
            rep.push(
                "terminal",
                format!("p has length {}, expected {nx}", t.lin.len()),
            );
        }
        if t.con_hi.len() != nc {
            rep.push("terminal", "row bound lengths differ");
        }
        if t.cost.shape() == (nx, nx) {
            check_weight(&mut rep, "terminal", "P", &t.cost, false);
        }
        check_bounds(&mut rep, "terminal", "row", &t.con_lo, &t.con_hi);
        rep
    }

    /// Forward simulation: returns `x_0..x_N`.
    pub fn simulate(&self, x0: &DVector<f64>, u: &[f64]) -> Vec<DVector<f64>> {
        let mut xs = Vec::with_capacity(self.horizon() + 1);
        xs.push(x0.clone());
        for (i, s) in self.stages.iter().enumerate() {
            let ui = DVector::from_column_slice(&u[i * self.nu..(i + 1) * self.nu]);
            let next = &s.dynamics * &xs[i] + &s.input_map * ui + &s.offset;
            xs.push(next);
        }
        xs
    }

    /// Objective evaluated stage by stage on a state and control trajectory.
    pub fn objective(&self, states: &[DVector<f64>], u: &[f64]) -> f64 {
        let mut j = 0.0;
        for (i, s) in self.stages.iter().enumerate() {
            let x = &states[i];
            let ui = DVector::from_column_slice(&u[i * self.nu..(i + 1) * self.nu]);
            j += 0.5 * x.dot(&(&s.state_cost * x)) + s.state_lin.dot(x);
            j += 0.5 * ui.dot(&(&s.input_cost * &ui)) + s.input_lin.dot(&ui);
        }
        let xn = &states[self.horizon()];
        j + 0.5 * xn.dot(&(&self.terminal.cost * xn)) + self.terminal.lin.dot(xn)
    }

    /// Largest violation of the path, terminal and input constraints, and of
    /// binary integrality, on a given trajectory. Zero means feasible.
    pub fn max_violation(&self, states: &[DVector<f64>], u: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut row = |v: f64, lo: f64, hi: f64| {
            worst = worst.max(lo - v).max(v - hi);
        };
        for (i, s) in self.stages.iter().enumerate() {
            let ui = DVector::from_column_slice(&u[i * self.nu..(i + 1) * self.nu]);
            let act = &s.con_state * &states[i] + &s.con_input * &ui;
            for r in 0..act.len() {
                row(act[r], s.con_lo[r], s.con_hi[r]);
            }
            for k in 0..self.nu {
                row(ui[k], s.input_lo[k], s.input_hi[k]);
            }
        }
        let act = &self.terminal.con_state * &states[self.horizon()];
        for r in 0..act.len() {
            row(act[r], self.terminal.con_lo[r], self.terminal.con_hi[r]);
        }
        for j in self.binary_indices() {
            worst = worst.max(u[j].min(1.0 - u[j]).max(u[j] - 1.0).max(-u[j]));
        }
        worst
    }
}

fn check_weight(
    rep: &mut ValidationReport,
    loc: &str,
    name: &str,
    m: &DMatrix<f64>,
    definite: bool,
) {
    if !is_symmetric(m) {
        rep.push(loc, format!("{name} not symmetric"));
        return;
    }
    match (definiteness(m), definite) {
        (Definiteness::Positive, _) | (Definiteness::SemiPositive, false) => {}
        (_, true) => rep.push(loc, format!("{name} not positive definite")),
        (_, false) => rep.push(loc, format!("{name} not positive semidefinite")),
    }
}

fn check_bounds(
    rep: &mut ValidationReport,
    loc: &str,
    what: &str,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) {
    for (k, (l, h)) in lo.iter().zip(hi.iter()).enumerate() {
        if l.is_nan() || h.is_nan() {
            rep.push(loc, format!("{what} bound {k} is NaN"));
        } else if l > h {
            rep.push(loc, format!("inverted bound on {what} {k}: {l} > {h}"));
        }
    }
}

/// State and control trajectory with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    /// `x_0..x_N`
    pub states: Vec<DVector<f64>>,
    /// `u_0..u_{N-1}`
    pub inputs: Vec<DVector<f64>>,
    pub objective: f64,
}

impl TrajectorySolution {
    /// Controls stacked into `U`.
    pub fn stacked_inputs(&self) -> Vec<f64> {
        self.inputs.iter().flat_map(|u| u.iter().copied()).collect()
    }

    /// `max_i ‖x_{i+1} − A_i x_i − B_i u_i − a_i‖∞`.
    pub fn dynamics_residual(&self, prob: &OcpMiqp) -> f64 {
        prob.stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let pred =
                    &s.dynamics * &self.states[i] + &s.input_map * &self.inputs[i] + &s.offset;
                (&self.states[i + 1] - pred).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Sparse view of one condensed row.
pub type RowEntries = Vec<(usize, f64)>;

#[derive(Debug)]
struct CondensedCore {
    problem: OcpMiqp,
    hessian: DMatrix<f64>,
    /// Inverse transposed Cholesky factor of the Hessian.
    factor: DMatrix<f64>,
    grad_x0: DMatrix<f64>,
    grad_aff: DVector<f64>,
    rows: DMatrix<f64>,
    rows_flat: Vec<Vec<f64>>,
    row_norms: Vec<f64>,
    row_x0: DMatrix<f64>,
    row_aff: DVector<f64>,
    row_lo_raw: Vec<f64>,
    row_hi_raw: Vec<f64>,
    row_stage: Vec<usize>,
    state_map: DMatrix<f64>,
    state_x0: DMatrix<f64>,
    state_aff: DVector<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    binaries: Vec<usize>,
    is_binary: Vec<bool>,
    row_entries: Vec<RowEntries>,
    var_rows: Vec<Vec<usize>>,
}

/// The `x̂0`-independent part of condensing, computed once per problem.
#[derive(Debug, Clone)]
pub struct Condenser {
    core: Arc<CondensedCore>,
}

impl Condenser {
    pub fn new(prob: &OcpMiqp) -> Result<Self> {
        let report = prob.validate();
        if !report.is_ok() {
            return Err(Error::InvalidProblem(report.to_string()));
        }
        let (nx, nu, n) = (prob.nx, prob.nu, prob.horizon());
        let (nxs, nus) = (n * nx, n * nu);

        // x_{i+1} = G_i U + Φ_i x̂0 + g_i, built by forward substitution.
        let mut g = DMatrix::<f64>::zeros(nxs, nus);
        let mut phi = DMatrix::<f64>::zeros(nxs, nx);
        let mut gaff = DVector::<f64>::zeros(nxs);
        for (i, s) in prob.stages.iter().enumerate() {
            let r0 = i * nx;
            if i == 0 {
                phi.view_mut((0, 0), (nx, nx)).copy_from(&s.dynamics);
                gaff.rows_mut(0, nx).copy_from(&s.offset);
            } else {
                let p0 = (i - 1) * nx;
                let prev_g = g.view((p0, 0), (nx, i * nu)).clone_owned();
                g.view_mut((r0, 0), (nx, i * nu))
                    .copy_from(&(&s.dynamics * prev_g));
                let prev_phi = phi.view((p0, 0), (nx, nx)).clone_owned();
                phi.view_mut((r0, 0), (nx, nx))
                    .copy_from(&(&s.dynamics * prev_phi));
                let prev_aff = gaff.rows(p0, nx).clone_owned();
                gaff.rows_mut(r0, nx)
                    .copy_from(&(&s.dynamics * prev_aff + &s.offset));
            }
            g.view_mut((r0, i * nu), (nx, nu)).copy_from(&s.input_map);
        }

        // Weights on x_1..x_N: Q_1..Q_{N-1}, P.
        let weight = |i: usize| -> (&DMatrix<f64>, &DVector<f64>) {
            if i + 1 < n {
                (
                    &prob.stages[i + 1].state_cost,
                    &prob.stages[i + 1].state_lin,
                )
            } else {
                (&prob.terminal.cost, &prob.terminal.lin)
            }
        };
        let mut qg = DMatrix::<f64>::zeros(nxs, nus);
        let mut qlin = DVector::<f64>::zeros(nxs);
        for i in 0..n {
            let (w, wl) = weight(i);
            let block = g.view((i * nx, 0), (nx, nus)).clone_owned();
            qg.view_mut((i * nx, 0), (nx, nus)).copy_from(&(w * block));
            qlin.rows_mut(i * nx, nx).copy_from(wl);
        }
        let mut hessian = g.transpose() * &qg;
        let mut rlin = DVector::<f64>::zeros(nus);
        for (i, s) in prob.stages.iter().enumerate() {
            let mut blk = hessian.view_mut((i * nu, i * nu), (nu, nu));
            blk += &s.input_cost;
            rlin.rows_mut(i * nu, nu).copy_from(&s.input_lin);
        }
        let sym = (&hessian + hessian.transpose()) * 0.5;
        hessian = sym;
        let grad_x0 = qg.transpose() * &phi;
        let grad_aff = qg.transpose() * &gaff + g.transpose() * &qlin + rlin;

        let chol = Cholesky::new(hessian.clone()).ok_or_else(|| {
            Error::InvalidProblem("condensed Hessian not positive definite".into())
        })?;
        let l_inv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(nus, nus))
            .ok_or_else(|| Error::InvalidProblem("singular Cholesky factor".into()))?;
        let factor = l_inv.transpose();

        // Rows in stage order 0..N-1 then terminal.
        let n_rows: usize =
            prob.stages.iter().map(Stage::n_rows).sum::<usize>() + prob.terminal.n_rows();
        let mut rows = DMatrix::<f64>::zeros(n_rows, nus);
        let mut row_x0 = DMatrix::<f64>::zeros(n_rows, nx);
        let mut row_aff = DVector::<f64>::zeros(n_rows);
        let mut row_lo_raw = Vec::with_capacity(n_rows);
        let mut row_hi_raw = Vec::with_capacity(n_rows);
        let mut row_stage = Vec::with_capacity(n_rows);
        let mut r = 0;
        for (i, s) in prob.stages.iter().enumerate() {
            let nc = s.n_rows();
            if nc == 0 {
                continue;
            }
            if i == 0 {
                row_x0.view_mut((r, 0), (nc, nx)).copy_from(&s.con_state);
            } else {
                let p0 = (i - 1) * nx;
                let gb = g.view((p0, 0), (nx, nus)).clone_owned();
                rows.view_mut((r, 0), (nc, nus))
                    .copy_from(&(&s.con_state * gb));
                let pb = phi.view((p0, 0), (nx, nx)).clone_owned();
                row_x0
                    .view_mut((r, 0), (nc, nx))
                    .copy_from(&(&s.con_state * pb));
                let ab = gaff.rows(p0, nx).clone_owned();
                row_aff.rows_mut(r, nc).copy_from(&(&s.con_state * ab));
            }
            let mut blk = rows.view_mut((r, i * nu), (nc, nu));
            blk += &s.con_input;
            row_lo_raw.extend(s.con_lo.iter().copied());
            row_hi_raw.extend(s.con_hi.iter().copied());
            row_stage.extend(std::iter::repeat_n(i, nc));
            r += nc;
        }
        let nc = prob.terminal.n_rows();
        if nc > 0 {
            let p0 = (n - 1) * nx;
            let c = &prob.terminal.con_state;
            rows.view_mut((r, 0), (nc, nus))
                .copy_from(&(c * g.view((p0, 0), (nx, nus)).clone_owned()));
            row_x0
                .view_mut((r, 0), (nc, nx))
                .copy_from(&(c * phi.view((p0, 0), (nx, nx)).clone_owned()));
            row_aff
                .rows_mut(r, nc)
                .copy_from(&(c * gaff.rows(p0, nx).clone_owned()));
            row_lo_raw.extend(prob.terminal.con_lo.iter().copied());
            row_hi_raw.extend(prob.terminal.con_hi.iter().copied());
            row_stage.extend(std::iter::repeat_n(n, nc));
        }

        let rows_flat: Vec<Vec<f64>> = (0..n_rows)
            .map(|i| rows.row(i).iter().copied().collect())
            .collect();
        let row_norms = rows_flat
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut var_rows = vec![Vec::new(); nus];
        let row_entries: Vec<RowEntries> = rows_flat
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let scale = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let e: RowEntries = row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() > 1e-13 * scale)
                    .map(|(j, v)| (j, *v))
                    .collect();
                for &(j, _) in &e {
                    var_rows[j].push(i);
                }
                e
            })
            .collect();

        let (lo, hi) = prob.input_bounds();
        let binaries = prob.binary_indices();
        let mut is_binary = vec![false; nus];
        for &j in &binaries {
            is_binary[j] = true;
        }

        Ok(Self {
            core: Arc::new(CondensedCore {
                problem: prob.clone(),
                hessian,
                factor,
                grad_x0,
                grad_aff,
                rows,
                rows_flat,
                row_norms,
                row_x0,
                row_aff,
                row_lo_raw,
                row_hi_raw,
                row_stage,
                state_map: g,
                state_x0: phi,
                state_aff: gaff,
                lo,
                hi,
                binaries,
                is_binary,
                row_entries,
                var_rows,
            }),
        })
    }

    pub fn problem(&self) -> &OcpMiqp {
        &self.core.problem
    }

    /// Adds the `x̂0`-dependent gradient, row bounds and constant.
    pub fn at(&self, x0: &DVector<f64>) -> CondensedQp {
        let c = &self.core;
        let prob = &c.problem;
        assert_eq!(x0.len(), prob.nx, "initial state has wrong dimension");
        let gradient = &c.grad_x0 * x0 + &c.grad_aff;
        let offset = &c.row_x0 * x0 + &c.row_aff;
        let row_lo = c
            .row_lo_raw
            .iter()
            .zip(offset.iter())
            .map(|(l, o)| l - o)
            .collect();
        let row_hi = c
            .row_hi_raw
            .iter()
            .zip(offset.iter())
            .map(|(h, o)| h - o)
            .collect();

        // Constant: x̂0 stage cost plus the U = 0 trajectory's state costs.
        let s0 = &prob.stages[0];
        let mut constant = 0.5 * x0.dot(&(&s0.state_cost * x0)) + s0.state_lin.dot(x0);
        let free = &c.state_x0 * x0 + &c.state_aff;
        let (nx, n) = (prob.nx, prob.horizon());
        for i in 0..n {
            let xi = free.rows(i * nx, nx);
            let (w, wl) = if i + 1 < n {
                (
                    &prob.stages[i + 1].state_cost,
                    &prob.stages[i + 1].state_lin,
                )
            } else {
                (&prob.terminal.cost, &prob.terminal.lin)
            };
            constant += 0.5 * xi.dot(&(w * xi)) + wl.dot(&xi);
        }

        CondensedQp {
            core: Arc::clone(&self.core),
            x0: x0.clone(),
            gradient,
            row_lo,
            row_hi,
            constant,
        }
    }
}

/// Convenience wrapper: condense `prob` at `x0`.
pub fn condense(prob: &OcpMiqp, x0: &DVector<f64>) -> Result<CondensedQp> {
    Ok(Condenser::new(prob)?.at(x0))
}

/// Dense control-space QP `min ½UᵀHU + hᵀU + c` subject to
/// `row_lo <= D U <= row_hi` and `lo <= U <= hi`, with binary entries.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    core: Arc<CondensedCore>,
    x0: DVector<f64>,
    gradient: DVector<f64>,
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
    constant: f64,
}

impl CondensedQp {
    pub fn problem(&self) -> &OcpMiqp {
        &self.core.problem
    }
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }
    pub fn n_vars(&self) -> usize {
        self.core.lo.len()
    }
    pub fn n_rows(&self) -> usize {
        self.row_lo.len()
    }
    pub fn nu(&self) -> usize {
        self.core.problem.nu
    }
    pub fn horizon(&self) -> usize {
        self.core.problem.horizon()
    }
    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.core.hessian
    }
    pub fn gradient(&self) -> &DVector<f64> {
        &self.gradient
    }
    pub fn constant(&self) -> f64 {
        self.constant
    }
    /// Condensed constraint matrix `Dc`.
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.core.rows
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.core.rows_flat[i]
    }
    pub fn row_norm(&self, i: usize) -> f64 {
        self.core.row_norms[i]
    }
    pub fn row_lo(&self) -> &[f64] {
        &self.row_lo
    }
    pub fn row_hi(&self) -> &[f64] {
        &self.row_hi
    }
    /// Stage that produced row `i`; the terminal stage is `horizon()`.
    pub fn row_stage(&self, i: usize) -> usize {
        self.core.row_stage[i]
    }
    pub fn row_entries(&self, i: usize) -> &RowEntries {
        &self.core.row_entries[i]
    }
    pub fn var_rows(&self, j: usize) -> &[usize] {
        &self.core.var_rows[j]
    }
    pub fn lo(&self) -> &[f64] {
        &self.core.lo
    }
    pub fn hi(&self) -> &[f64] {
        &self.core.hi
    }
    pub fn binaries(&self) -> &[usize] {
        &self.core.binaries
    }
    pub fn is_binary(&self, j: usize) -> bool {
        self.core.is_binary[j]
    }
    pub(crate) fn factor(&self) -> &DMatrix<f64> {
        &self.core.factor
    }
    /// Hessian entries as a contiguous column-major slice.
    pub(crate) fn hessian_col(&self, j: usize) -> &[f64] {
        let n = self.n_vars();
        &self.core.hessian.as_slice()[j * n..(j + 1) * n]
    }

    /// `½UᵀHU + hᵀU + c`, which equals the stage-wise objective of the
    /// expanded trajectory.
    pub fn objective(&self, u: &[f64]) -> f64 {
        let n = self.n_vars();
        let mut quad = 0.0;
        for j in 0..n {
            let col = self.hessian_col(j);
            quad += u[j] * crate::linalg::dot(col, u);
        }
        0.5 * quad + crate::linalg::dot(self.gradient.as_slice(), u) + self.constant
    }

    pub fn row_activity(&self, i: usize, u: &[f64]) -> f64 {
        crate::linalg::dot(self.row(i), u)
    }

    /// Largest violation of rows and variable bounds at `u`.
    pub fn max_violation(&self, u: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows() {
            let a = self.row_activity(i, u);
            worst = worst.max(self.row_lo[i] - a).max(a - self.row_hi[i]);
        }
        for (j, v) in u.iter().enumerate() {
            worst = worst.max(self.lo()[j] - v).max(v - self.hi()[j]);
        }
        worst
    }

    /// Recovers `x_0..x_N` from `U` and evaluates the stage-wise objective.
    pub fn expand(&self, u: &[f64]) -> TrajectorySolution {
        let c = &self.core;
        let prob = &c.problem;
        let (nx, nu, n) = (prob.nx, prob.nu, prob.horizon());
        assert_eq!(u.len(), n * nu, "control vector has wrong length");
        let uv = DVector::from_column_slice(u);
        let x = &c.state_map * &uv + &c.state_x0 * &self.x0 + &c.state_aff;
        let mut states = Vec::with_capacity(n + 1);
        states.push(self.x0.clone());
        for i in 0..n {
            states.push(x.rows(i * nx, nx).clone_owned());
        }
        let inputs = (0..n).map(|i| uv.rows(i * nu, nu).clone_owned()).collect();
        let objective = prob.objective(&states, u);
        TrajectorySolution {
            states,
            inputs,
            objective,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_problem() -> OcpMiqp {
        let mut s = Stage::new(1, 1);
        s.dynamics = dmatrix![1.0];
        s.input_map = dmatrix![1.0];
        s.input_cost = dmatrix![1.0];
        let mut t = Terminal::new(1);
        t.cost = dmatrix![1.0];
        OcpMiqp::repeated(s, 1, t)
    }

    fn double_integrator(n: usize) -> OcpMiqp {
        let mut s = Stage::new(2, 1);
        s.dynamics = dmatrix![1.0, 0.1; 0.0, 1.0];
        s.input_map = dmatrix![0.005; 0.1];
        s.state_cost = DMatrix::identity(2, 2);
        s.input_cost = dmatrix![0.1];
        s.input_lo = dvector![-1.0];
        s.input_hi = dvector![1.0];
        s.push_row(&[1.0, 0.0], &[0.0], -5.0, 5.0);
        let mut t = Terminal::new(2);
        t.cost = DMatrix::identity(2, 2) * 10.0;
        OcpMiqp::repeated(s, n, t)
    }

    #[test]
    fn double_integrator_validates() {
        assert!(double_integrator(2).validate().is_ok());
    }

    #[test]
    fn zero_input_weight_is_rejected() {
        let mut p = double_integrator(2);
        p.stages[0].input_cost = dmatrix![0.0];
        let rep = p.validate();
        assert!(rep.mentions("R not positive definite"), "{rep}");
    }

    #[test]
    fn inverted_row_bound_is_rejected() {
        let mut p = double_integrator(2);
        p.stages[0].con_lo[0] = 6.0;
        let rep = p.validate();
        assert!(rep.mentions("inverted bound"), "{rep}");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut p = double_integrator(2);
        p.stages[1].input_map = DMatrix::zeros(3, 1);
        assert!(p.validate().mentions("B has shape"));
    }

    #[test]
    fn single_stage_hand_expansion() {
        // J = ½u² + ½(2 + u)² = u² + 2u + 2.
        let qp = condense(&scalar_problem(), &dvector![2.0]).unwrap();
        assert_relative_eq!(qp.hessian()[(0, 0)], 2.0);
        assert_relative_eq!(qp.gradient()[0], 2.0);
        let sol = qp.expand(&[1.0]);
        assert_relative_eq!(sol.states[1][0], 3.0);
        assert_relative_eq!(sol.objective, qp.objective(&[1.0]), epsilon = 1e-12);
    }

    #[test]
    fn homogeneous_case_has_no_affine_terms() {
        let p = double_integrator(3);
        let qp = condense(&p, &dvector![0.0, 0.0]).unwrap();
        assert!(qp.gradient().iter().all(|v| *v == 0.0));
        assert_eq!(qp.constant(), 0.0);
        for i in 0..qp.n_rows() {
            assert_eq!(qp.row_lo()[i], -5.0);
            assert_eq!(qp.row_hi()[i], 5.0);
        }
        let sol = qp.expand(&[0.0; 3]);
        assert!(sol.states.iter().all(|x| x.amax() == 0.0));
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn hessian_and_rows_do_not_depend_on_initial_state() {
        let p = double_integrator(4);
        let cond = Condenser::new(&p).unwrap();
        let a = cond.at(&dvector![1.0, -2.0]);
        let b = cond.at(&dvector![-3.0, 0.5]);
        assert_eq!(a.hessian(), b.hessian());
        assert_eq!(a.rows(), b.rows());
        // Affine in x̂0: midpoint condensation is the average.
        let m = cond.at(&dvector![-1.0, -0.75]);
        for j in 0..m.n_vars() {
            assert_relative_eq!(
                m.gradient()[j],
                0.5 * (a.gradient()[j] + b.gradient()[j]),
                epsilon = 1e-12
            );
        }
        for i in 0..m.n_rows() {
            assert_relative_eq!(
                m.row_lo()[i],
                0.5 * (a.row_lo()[i] + b.row_lo()[i]),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn stage_zero_rows_only_see_the_first_input() {
        let mut p = double_integrator(3);
        p.stages[0].push_row(&[1.0, 1.0], &[2.0], -1.0, 1.0);
        let qp = condense(&p, &dvector![0.5, 0.25]).unwrap();
        // Stage 0 has two rows; the second is 2 u_0 with offset 0.75.
        assert_eq!(qp.row(1), &[2.0, 0.0, 0.0]);
        assert_relative_eq!(qp.row_lo()[1], -1.75);
        assert_relative_eq!(qp.row_hi()[1], 0.25);
        assert_eq!(qp.row_stage(1), 0);
    }
}

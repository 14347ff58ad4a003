//! TOML problem files.
//!
//! ```toml
//! horizon = 2
//! nx = 1
//! nu = 2
//! x0 = [1.0]
//!
//! [[stage]]              # one table is repeated over the horizon,
//! A = [[1.0]]            # otherwise give exactly `horizon` tables
//! B = [[1.0, 0.5]]
//! Q = [[1.0]]
//! R = [[0.1, 0.0], [0.0, 0.1]]
//! u_lo = [0.0, -1.0]
//! u_hi = [1.0, 1.0]
//! binaries = [0]
//! C = [[0.0]]            # path rows lo <= C x + D u <= hi
//! D = [[1.0, 1.0]]
//! lo = [-inf]
//! hi = [1.5]
//!
//! [terminal]
//! P = [[2.0]]
//! ```
//!
//! Matrices are arrays of rows. Optional per-stage keys: `a` (affine
//! dynamics term), `q` and `r` (linear costs), `C`/`D`/`lo`/`hi`; terminal
//! keys: `P`, `p`, `C`, `lo`, `hi`. Absent costs are zero, absent input bounds
//! are infinite.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::{OcpMiqp, Stage, Terminal};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageDoc {
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
    #[serde(rename = "a", default, skip_serializing_if = "Option::is_none")]
    offset: Option<Vec<f64>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q: Option<Rows>,
    #[serde(rename = "R")]
    r: Rows,
    #[serde(rename = "q", default, skip_serializing_if = "Option::is_none")]
    q_lin: Option<Vec<f64>>,
    #[serde(rename = "r", default, skip_serializing_if = "Option::is_none")]
    r_lin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u_hi: Option<Vec<f64>>,
    #[serde(default)]
    binaries: Vec<usize>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Rows>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    d: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerminalDoc {
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    p: Option<Rows>,
    #[serde(rename = "p", default, skip_serializing_if = "Option::is_none")]
    p_lin: Option<Vec<f64>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    horizon: usize,
    nx: usize,
    nu: usize,
    x0: Vec<f64>,
    stage: Vec<StageDoc>,
    #[serde(default)]
    terminal: TerminalDoc,
}

/// A problem together with the initial state to solve it at.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub prob: OcpMiqp,
    pub x0: DVector<f64>,
}

fn matrix(rows: &Rows, r: usize, c: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        let got_c = rows.first().map_or(0, Vec::len);
        return Err(Error::InvalidProblem(format!(
            "{what} must be {r}x{c}, found {}x{got_c}",
            rows.len()
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::InvalidProblem(format!(
            "{what} must have {n} entries, found {}",
            v.len()
        )));
    }
    Ok(DVector::from_column_slice(v))
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn stage_from(doc: &StageDoc, nx: usize, nu: usize, at: &str) -> Result<Stage> {
    let mut s = Stage::new(nx, nu);
    s.dynamics = matrix(&doc.a, nx, nx, &format!("{at}.A"))?;
    s.input_map = matrix(&doc.b, nx, nu, &format!("{at}.B"))?;
    s.input_cost = matrix(&doc.r, nu, nu, &format!("{at}.R"))?;
    if let Some(q) = &doc.q {
        s.state_cost = matrix(q, nx, nx, &format!("{at}.Q"))?;
    }
    if let Some(a) = &doc.offset {
        s.offset = vector(a, nx, &format!("{at}.a"))?;
    }
    if let Some(q) = &doc.q_lin {
        s.state_lin = vector(q, nx, &format!("{at}.q"))?;
    }
    if let Some(r) = &doc.r_lin {
        s.input_lin = vector(r, nu, &format!("{at}.r"))?;
    }
    if let Some(lo) = &doc.u_lo {
        s.input_lo = vector(lo, nu, &format!("{at}.u_lo"))?;
    }
    if let Some(hi) = &doc.u_hi {
        s.input_hi = vector(hi, nu, &format!("{at}.u_hi"))?;
    }
    s.binaries = doc.binaries.clone();
    let nc = doc
        .c
        .as_ref()
        .map(Vec::len)
        .or(doc.d.as_ref().map(Vec::len))
        .or(doc.lo.as_ref().map(Vec::len))
        .or(doc.hi.as_ref().map(Vec::len))
        .unwrap_or(0);
    if nc > 0 {
        s.con_state = match &doc.c {
            Some(c) => matrix(c, nc, nx, &format!("{at}.C"))?,
            None => DMatrix::zeros(nc, nx),
        };
        s.con_input = match &doc.d {
            Some(d) => matrix(d, nc, nu, &format!("{at}.D"))?,
            None => DMatrix::zeros(nc, nu),
        };
        s.con_lo = match &doc.lo {
            Some(v) => vector(v, nc, &format!("{at}.lo"))?,
            None => DVector::from_element(nc, f64::NEG_INFINITY),
        };
        s.con_hi = match &doc.hi {
            Some(v) => vector(v, nc, &format!("{at}.hi"))?,
            None => DVector::from_element(nc, f64::INFINITY),
        };
    }
    Ok(s)
}

fn terminal_from(doc: &TerminalDoc, nx: usize) -> Result<Terminal> {
    let mut t = Terminal::new(nx);
    if let Some(p) = &doc.p {
        t.cost = matrix(p, nx, nx, "terminal.P")?;
    }
    if let Some(p) = &doc.p_lin {
        t.lin = vector(p, nx, "terminal.p")?;
    }
    let nc = doc
        .c
        .as_ref()
        .map(Vec::len)
        .or(doc.lo.as_ref().map(Vec::len))
        .or(doc.hi.as_ref().map(Vec::len))
        .unwrap_or(0);
    if nc > 0 {
        t.con_state = match &doc.c {
            Some(c) => matrix(c, nc, nx, "terminal.C")?,
            None => DMatrix::zeros(nc, nx),
        };
        t.con_lo = match &doc.lo {
            Some(v) => vector(v, nc, "terminal.lo")?,
            None => DVector::from_element(nc, f64::NEG_INFINITY),
        };
        t.con_hi = match &doc.hi {
            Some(v) => vector(v, nc, "terminal.hi")?,
            None => DVector::from_element(nc, f64::INFINITY),
        };
    }
    Ok(t)
}

fn stage_doc(s: &Stage) -> StageDoc {
    let nonzero = |v: &DVector<f64>| v.iter().any(|x| *x != 0.0);
    let has_rows = s.n_rows() > 0;
    StageDoc {
        a: rows_of(&s.dynamics),
        b: rows_of(&s.input_map),
        offset: nonzero(&s.offset).then(|| s.offset.iter().copied().collect()),
        q: Some(rows_of(&s.state_cost)),
        r: rows_of(&s.input_cost),
        q_lin: nonzero(&s.state_lin).then(|| s.state_lin.iter().copied().collect()),
        r_lin: nonzero(&s.input_lin).then(|| s.input_lin.iter().copied().collect()),
        u_lo: Some(s.input_lo.iter().copied().collect()),
        u_hi: Some(s.input_hi.iter().copied().collect()),
        binaries: s.binaries.clone(),
        c: has_rows.then(|| rows_of(&s.con_state)),
        d: has_rows.then(|| rows_of(&s.con_input)),
        lo: has_rows.then(|| s.con_lo.iter().copied().collect()),
        hi: has_rows.then(|| s.con_hi.iter().copied().collect()),
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: ProblemDoc = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let (nx, nu, n) = (doc.nx, doc.nu, doc.horizon);
        if n == 0 {
            return Err(Error::InvalidProblem("horizon must be at least 1".into()));
        }
        let x0 = vector(&doc.x0, nx, "x0")?;
        let stages = match doc.stage.len() {
            1 => {
                let s = stage_from(&doc.stage[0], nx, nu, "stage[0]")?;
                vec![s; n]
            }
            k if k == n => doc
                .stage
                .iter()
                .enumerate()
                .map(|(i, s)| stage_from(s, nx, nu, &format!("stage[{i}]")))
                .collect::<Result<Vec<_>>>()?,
            k => {
                return Err(Error::InvalidProblem(format!(
                    "expected 1 or {n} [[stage]] tables, found {k}"
                )))
            }
        };
        let prob = OcpMiqp {
            nx,
            nu,
            stages,
            terminal: terminal_from(&doc.terminal, nx)?,
        };
        let report = prob.validate();
        if !report.is_ok() {
            return Err(Error::InvalidProblem(report.to_string()));
        }
        Ok(Self { prob, x0 })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        let p = &self.prob;
        let t = &p.terminal;
        let has_rows = t.n_rows() > 0;
        let doc = ProblemDoc {
            horizon: p.horizon(),
            nx: p.nx,
            nu: p.nu,
            x0: self.x0.iter().copied().collect(),
            stage: p.stages.iter().map(stage_doc).collect(),
            terminal: TerminalDoc {
                p: Some(rows_of(&t.cost)),
                p_lin: t
                    .lin
                    .iter()
                    .any(|v| *v != 0.0)
                    .then(|| t.lin.iter().copied().collect()),
                c: has_rows.then(|| rows_of(&t.con_state)),
                lo: has_rows.then(|| t.con_lo.iter().copied().collect()),
                hi: has_rows.then(|| t.con_hi.iter().copied().collect()),
            },
        };
        toml::to_string(&doc).map_err(|e| Error::InvalidProblem(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
horizon = 2
nx = 1
nu = 2
x0 = [1.0]

[[stage]]
A = [[1.0]]
B = [[1.0, 0.5]]
Q = [[1.0]]
R = [[0.1, 0.0], [0.0, 0.1]]
u_lo = [0.0, -1.0]
u_hi = [1.0, 1.0]
binaries = [0]
C = [[0.0]]
D = [[1.0, 1.0]]
lo = [-inf]
hi = [1.5]

[terminal]
P = [[2.0]]
"#;

    #[test]
    fn parses_repeated_stage() {
        let f = ProblemFile::parse(TOY).unwrap();
        assert_eq!(f.prob.horizon(), 2);
        assert_eq!(f.prob.stages[1].con_lo[0], f64::NEG_INFINITY);
        assert_eq!(f.prob.binary_indices(), vec![0, 2]);
    }

    #[test]
    fn round_trip_is_stable() {
        let f = ProblemFile::parse(TOY).unwrap();
        let text = f.to_toml().unwrap();
        let g = ProblemFile::parse(&text).unwrap();
        assert_eq!(f, g);
        assert_eq!(text, g.to_toml().unwrap());
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let bad = TOY.replace("hi = [1.5]", "hi = [1.5");
        match ProblemFile::parse(&bad) {
            Err(Error::Parse { line, .. }) => assert!((17..=21).contains(&line), "line {line}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_errors_name_the_field() {
        let bad = TOY.replace("B = [[1.0, 0.5]]", "B = [[1.0]]");
        let err = ProblemFile::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("stage[0].B"), "{err}");
    }
}

//! Carrying the search tree of one MPC step over to the next.
//!
//! After a solve, the branching decisions that led to the incumbent and the
//! pseudo-cost table are shifted by one stage. The next solve rebuilds the
//! tree along the shifted path and starts from its leaves instead of the
//! root, and it tries the shifted incumbent as an initial upper bound.

use serde::{Deserialize, Serialize};

use crate::branching::{BranchingConfig, Direction, PseudoCostTable};
use crate::error::{Error, Result};
use crate::qp::QpResult;

/// One branching decision on the path to an incumbent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub stage: usize,
    pub index: usize,
    pub direction: Direction,
    /// Relaxation solution of the node where this branch was taken.
    #[serde(default)]
    pub relaxation: Vec<f64>,
}

impl PathEntry {
    pub fn flat(&self, nu: usize) -> usize {
        self.stage * nu + self.index
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WarmStartPath {
    pub nu: usize,
    #[serde(default, rename = "entry")]
    pub entries: Vec<PathEntry>,
    #[serde(default)]
    pub incumbent: Option<Vec<f64>>,
}

impl WarmStartPath {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidProblem(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map_or(1, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })
    }
}

/// Everything the next solve needs from the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub path: WarmStartPath,
    pub pseudo_costs: PseudoCostTable,
}

impl WarmStart {
    /// Shifts the artifacts of a finished solve by one stage.
    pub fn shifted(path: &WarmStartPath, pseudo_costs: &PseudoCostTable, rel_decay: u32) -> Self {
        Self {
            path: shift_path(path),
            pseudo_costs: shift_pseudo_costs(pseudo_costs, rel_decay),
        }
    }
}

/// Drops the first `nu` entries and repeats the last `nu` at the tail.
fn shift_vector(v: &[f64], nu: usize) -> Vec<f64> {
    if nu == 0 || v.len() <= nu {
        return v.to_vec();
    }
    let mut out = Vec::with_capacity(v.len());
    out.extend_from_slice(&v[nu..]);
    out.extend_from_slice(&v[v.len() - nu..]);
    out
}

/// Moves every branching decision one stage earlier, dropping those on the
/// first stage. Stored relaxations and the incumbent are shifted likewise;
/// their new last stage repeats the old one and is clamped when used.
pub fn shift_path(path: &WarmStartPath) -> WarmStartPath {
    let nu = path.nu;
    WarmStartPath {
        nu,
        entries: path
            .entries
            .iter()
            .filter(|e| e.stage >= 1)
            .map(|e| PathEntry {
                stage: e.stage - 1,
                index: e.index,
                direction: e.direction,
                relaxation: shift_vector(&e.relaxation, nu),
            })
            .collect(),
        incumbent: path.incumbent.as_ref().map(|u| shift_vector(u, nu)),
    }
}

pub fn shift_pseudo_costs(pc: &PseudoCostTable, rel_decay: u32) -> PseudoCostTable {
    pc.shifted(rel_decay)
}

/// The initial node list of a warm-started solve, as branching sequences
/// from the root. Leaves are in push order, so the last one is explored
/// first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmTree {
    pub leaves: Vec<Vec<(usize, Direction)>>,
    /// Path entries kept after filtering and re-ordering.
    pub kept: Vec<PathEntry>,
}

/// Rebuilds the tree along `shifted`.
///
/// Variables that are integral in the root relaxation or lack observations
/// on either side are removed, the rest are re-ordered by descending
/// pseudo-score at the root. Each path node contributes its off-path child,
/// and the last one also its on-path child.
pub fn build_warm_tree(
    shifted: &WarmStartPath,
    root: &QpResult,
    pc: &PseudoCostTable,
    cfg: &BranchingConfig,
) -> WarmTree {
    if !root.is_optimal() {
        return WarmTree::default();
    }
    let nu = shifted.nu;
    let n = root.u.len();
    let mut seen = vec![false; n];
    let mut kept: Vec<(PathEntry, f64)> = Vec::new();
    for e in &shifted.entries {
        let j = e.flat(nu);
        if j >= n || seen[j] || j >= pc.entries().len() {
            continue;
        }
        seen[j] = true;
        let v = root.u[j];
        if v.min(1.0 - v) <= cfg.int_tol {
            continue;
        }
        if pc.get(j).reliability() < 1 {
            continue;
        }
        kept.push((e.clone(), pc.pseudo_score(j, v)));
    }
    // Stable: equal scores keep the previous branching order.
    kept.sort_by(|a, b| b.1.total_cmp(&a.1));
    let kept: Vec<PathEntry> = kept.into_iter().map(|(e, _)| e).collect();

    let mut leaves = Vec::with_capacity(kept.len() + 1);
    let mut prefix: Vec<(usize, Direction)> = Vec::with_capacity(kept.len());
    for e in &kept {
        let j = e.flat(nu);
        let mut sibling = prefix.clone();
        sibling.push((j, e.direction.flip()));
        leaves.push(sibling);
        prefix.push((j, e.direction));
    }
    if !prefix.is_empty() {
        leaves.push(prefix);
    }
    WarmTree { leaves, kept }
}

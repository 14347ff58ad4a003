//! Seeded random hybrid MPC instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ocp::{OcpMiqp, Stage, Terminal};

/// Parameters of a family of random hybrid systems. Inputs are ordered
/// binaries first, then continuous inputs; every continuous input is gated
/// by the binary with the same position modulo the binary count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomHybridFamily {
    pub nx: usize,
    pub n_binary: usize,
    pub n_continuous: usize,
    pub horizon: usize,
    /// General constraint rows per stage, on top of the gating rows.
    pub rows_per_stage: usize,
    /// Probability that a constraint coefficient is nonzero.
    pub density: f64,
    /// Build the row bounds around a random integer-feasible point.
    pub planted: bool,
}

impl Default for RandomHybridFamily {
    fn default() -> Self {
        Self {
            nx: 2,
            n_binary: 1,
            n_continuous: 1,
            horizon: 4,
            rows_per_stage: 2,
            density: 0.7,
            planted: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub prob: OcpMiqp,
    pub x0: DVector<f64>,
    /// The planted integer-feasible control sequence, if any.
    pub planted: Option<Vec<f64>>,
    pub seed: u64,
}

const CONT_BOUND: f64 = 2.0;

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..=scale))
}

fn sparse_row(rng: &mut ChaCha8Rng, len: usize, density: f64) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len)
        .map(|_| {
            if rng.random_bool(density) {
                let v: f64 = rng.random_range(-1.0..=1.0);
                (v * 100.0).round() / 100.0
            } else {
                0.0
            }
        })
        .collect();
    if row.iter().all(|v| *v == 0.0) && len > 0 {
        let k = rng.random_range(0..len);
        row[k] = 1.0;
    }
    row
}

/// Symmetric positive semidefinite `M Mᵀ / k` plus `shift · I`.
fn gram(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let m = uniform(rng, n, n, 1.0);
    let mut g = &m * m.transpose() / n as f64;
    for i in 0..n {
        g[(i, i)] += shift;
    }
    (&g + g.transpose()) * 0.5
}

impl RandomHybridFamily {
    pub fn nu(&self) -> usize {
        self.n_binary + self.n_continuous
    }

    pub fn total_binaries(&self) -> usize {
        self.n_binary * self.horizon
    }

    pub fn generate(&self, seed: u64) -> RandomInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (nx, nu, nb) = (self.nx, self.nu(), self.n_binary);

        let x0 = DVector::from_fn(nx, |_, _| rng.random_range(-1.0..=1.0));
        let planted: Vec<f64> = (0..self.horizon)
            .flat_map(|_| {
                let mut u = Vec::with_capacity(nu);
                for _ in 0..nb {
                    u.push(if rng.random_bool(0.5) { 1.0 } else { 0.0 });
                }
                for c in 0..self.n_continuous {
                    let gate = if nb > 0 { u[c % nb] } else { 1.0 };
                    u.push(gate * rng.random_range(-CONT_BOUND..=CONT_BOUND) * 0.5);
                }
                u
            })
            .collect();

        let mut stages = Vec::with_capacity(self.horizon);
        let mut x = x0.clone();
        for i in 0..self.horizon {
            let mut s = Stage::new(nx, nu);
            s.dynamics = uniform(&mut rng, nx, nx, 0.6) + DMatrix::identity(nx, nx) * 0.4;
            s.input_map = uniform(&mut rng, nx, nu, 1.0);
            s.offset = DVector::from_fn(nx, |_, _| rng.random_range(-0.2..=0.2));
            s.state_cost = gram(&mut rng, nx, 0.0);
            s.input_cost = gram(&mut rng, nu, 0.2);
            s.input_lin = DVector::from_fn(nu, |_, _| rng.random_range(-1.5..=1.5));
            s.binaries = (0..nb).collect();
            for k in nb..nu {
                s.input_lo[k] = -CONT_BOUND;
                s.input_hi[k] = CONT_BOUND;
            }
            // Gating: |u_c| <= CONT_BOUND · b.
            if nb > 0 {
                for c in 0..self.n_continuous {
                    let mut d = vec![0.0; nu];
                    d[nb + c] = 1.0;
                    d[c % nb] = -CONT_BOUND;
                    s.push_row(&vec![0.0; nx], &d, f64::NEG_INFINITY, 0.0);
                    d[nb + c] = -1.0;
                    s.push_row(&vec![0.0; nx], &d, f64::NEG_INFINITY, 0.0);
                }
            }
            let u = &planted[i * nu..(i + 1) * nu];
            for _ in 0..self.rows_per_stage {
                let c = sparse_row(&mut rng, nx, self.density);
                let d = sparse_row(&mut rng, nu, self.density);
                let (lo, hi) = self.row_bounds(&mut rng, &c, &d, &x, u);
                s.push_row(&c, &d, lo, hi);
            }
            x = &s.dynamics * &x + &s.input_map * DVector::from_column_slice(u) + &s.offset;
            stages.push(s);
        }
        let mut terminal = Terminal::new(nx);
        terminal.cost = gram(&mut rng, nx, 0.1);
        let c = sparse_row(&mut rng, nx, self.density);
        let (lo, hi) = self.row_bounds(&mut rng, &c, &[], &x, &[]);
        terminal.push_row(&c, lo, hi);

        RandomInstance {
            prob: OcpMiqp {
                nx,
                nu,
                stages,
                terminal,
            },
            x0,
            planted: self.planted.then_some(planted),
            seed,
        }
    }

    /// A time-invariant system for closed-loop runs: one stage repeated,
    /// with constraint rows on the inputs only, so the planted input
    /// pattern stays feasible from every state.
    pub fn time_invariant(&self, seed: u64) -> RandomInstance {
        let stateless = RandomHybridFamily {
            horizon: 1,
            planted: true,
            ..*self
        };
        let mut inst = stateless.generate(seed);
        let mut stage = inst.prob.stages.remove(0);
        let nx = self.nx;
        stage.con_state = DMatrix::zeros(stage.con_state.nrows(), nx);
        let planted = inst.planted.take().unwrap_or_default();
        let u = DVector::from_column_slice(&planted);
        let act = &stage.con_input * &u;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for r in 0..act.len() {
            if stage.con_lo[r].is_finite() {
                stage.con_lo[r] = stage.con_lo[r].min(act[r] - rng.random_range(0.0..=0.5));
            }
            if stage.con_hi[r].is_finite() {
                stage.con_hi[r] = stage.con_hi[r].max(act[r] + rng.random_range(0.0..=0.5));
            }
        }
        // Contractive dynamics keep long runs bounded.
        let norm = stage.dynamics.singular_values().max();
        if norm > 0.95 {
            stage.dynamics *= 0.95 / norm;
        }
        let mut terminal = inst.prob.terminal;
        terminal.con_state = DMatrix::zeros(0, nx);
        terminal.con_lo = DVector::zeros(0);
        terminal.con_hi = DVector::zeros(0);
        let planted_seq: Vec<f64> = (0..self.horizon)
            .flat_map(|_| planted.iter().copied())
            .collect();
        RandomInstance {
            prob: OcpMiqp::repeated(stage, self.horizon, terminal),
            x0: inst.x0,
            planted: Some(planted_seq),
            seed,
        }
    }

    /// Bounds that contain the planted activity, or arbitrary narrow bounds
    /// for unplanted families.
    fn row_bounds(
        &self,
        rng: &mut ChaCha8Rng,
        c: &[f64],
        d: &[f64],
        x: &DVector<f64>,
        u: &[f64],
    ) -> (f64, f64) {
        let centre = if self.planted {
            c.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()
                + d.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
        } else {
            rng.random_range(-1.5..=1.5)
        };
        let below: f64 = rng.random_range(0.0..=1.0);
        let above: f64 = rng.random_range(0.0..=1.0);
        match rng.random_range(0..3) {
            0 => (f64::NEG_INFINITY, centre + above),
            1 => (centre - below, f64::INFINITY),
            _ => (centre - below, centre + above),
        }
    }
}

/// A varied corpus of small instances: horizon 1–4, up to 3 states and at
/// most `max_binaries` binaries in total. About one in five instances is
/// unplanted and may be infeasible.
pub fn small_corpus(count: usize, seed: u64, max_binaries: usize) -> Vec<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let horizon = rng.random_range(1..=4usize);
            let n_binary = rng.random_range(1..=(max_binaries / horizon).max(1));
            let family = RandomHybridFamily {
                nx: rng.random_range(1..=3),
                n_binary,
                n_continuous: rng.random_range(0..=2),
                horizon,
                rows_per_stage: rng.random_range(1..=3),
                density: 0.7,
                planted: rng.random_bool(0.8),
            };
            family.generate(rng.random())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_validate_and_plant_a_feasible_point() {
        for inst in small_corpus(50, 7, 6) {
            assert!(inst.prob.validate().is_ok(), "{}", inst.prob.validate());
            assert!(inst.prob.n_binaries() <= 6);
            if let Some(u) = &inst.planted {
                let states = inst.prob.simulate(&inst.x0, u);
                assert!(inst.prob.max_violation(&states, u) <= 1e-9);
            }
        }
    }

    #[test]
    fn time_invariant_instances_keep_the_plant_feasible() {
        let f = RandomHybridFamily {
            horizon: 3,
            n_continuous: 2,
            ..Default::default()
        };
        let inst = f.time_invariant(11);
        assert!(inst.prob.validate().is_ok());
        let u = inst.planted.unwrap();
        for scale in [0.0, 5.0, -20.0] {
            let x0 = DVector::from_element(f.nx, scale);
            let states = inst.prob.simulate(&x0, &u);
            assert!(inst.prob.max_violation(&states, &u) <= 1e-9);
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let f = RandomHybridFamily::default();
        let (a, b) = (f.generate(3), f.generate(3));
        assert_eq!(a.x0, b.x0);
        assert_eq!(a.prob.stages[2].input_map, b.prob.stages[2].input_map);
    }
}

//! In-plane station keeping of a satellite with two on/off thrusters and a
//! rectangular no-go zone.
//!
//! States are `[X, Y, Vx, Vy]` with `X` the in-track and `Y` the radial
//! offset from the target position, in metres. The relative motion follows
//! the Hill–Clohessy–Wiltshire equations
//!
//! ```text
//! Ẍ = −2nẎ + aX
//! Ÿ = 3n²Y + 2nẊ + aY
//! ```
//!
//! discretized exactly under zero-order hold.
//!
//! Inputs per stage are `[b1, b2, f1, g1, f2, g2, δL, δR, δB]`. Thruster `k`
//! is switched by `b_k`; when on, its normalized throttle `f_k` lies in
//! `[f_min, 1]` and its gimbal component `g_k` satisfies `|g_k| <= tanθ·f_k`.
//! Thruster 1 pushes along `+X`, thruster 2 along `−X`, so
//! `aX = T(f1 − f2)` and `aY = T(g1 + g2)`. The binaries `δL, δR, δB` select
//! the side of the zone (left, right, below; none of them means above) that
//! the next state must lie on.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::PlantModel;
use crate::ocp::{OcpMiqp, Stage, Terminal};

pub const MU_EARTH: f64 = 3.986004418e14;
pub const EARTH_RADIUS: f64 = 6_378_137.0;

pub const NX: usize = 4;
pub const NU: usize = 9;
/// Input positions.
pub const B1: usize = 0;
pub const B2: usize = 1;
pub const F1: usize = 2;
pub const G1: usize = 3;
pub const F2: usize = 4;
pub const G2: usize = 5;
pub const DL: usize = 6;
pub const DR: usize = 7;
pub const DB: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    /// Closed containment with a tolerance that shrinks the rectangle.
    pub fn contains_strictly(&self, x: f64, y: f64, tol: f64) -> bool {
        x > self.x_lo + tol && x < self.x_hi - tol && y > self.y_lo + tol && y < self.y_hi - tol
    }

    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x_lo - tol && x <= self.x_hi + tol && y >= self.y_lo - tol && y <= self.y_hi + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SatelliteConfig {
    pub horizon: usize,
    /// Sampling period in seconds.
    pub ts: f64,
    pub altitude: f64,
    /// Maximum thrust acceleration per thruster, m/s².
    pub thrust: f64,
    /// Minimum throttle of a thruster that is on.
    pub min_throttle: f64,
    /// Tangent of the gimbal half-angle.
    pub tan_cone: f64,
    pub window: Rect,
    pub zone: Rect,
    pub q_position: f64,
    pub q_velocity: f64,
    pub terminal_scale: f64,
    pub r_throttle: f64,
    pub r_gimbal: f64,
    /// Quadratic weight on every binary, keeps the input weight definite.
    pub r_binary: f64,
    /// Linear cost per active thruster.
    pub fire_cost: f64,
    /// Linear costs of `δL, δR, δB`; distinct values make the choice of
    /// side unique when several are feasible.
    pub zone_costs: [f64; 3],
    pub x_init: [f64; 4],
}

impl Default for SatelliteConfig {
    fn default() -> Self {
        let altitude = 400e3;
        let n = orbital_rate(altitude);
        let y0 = -80.0;
        Self {
            horizon: 6,
            ts: 30.0,
            altitude,
            thrust: 0.02,
            min_throttle: 0.1,
            tan_cone: 0.5,
            window: Rect {
                x_lo: -300.0,
                x_hi: 300.0,
                y_lo: -150.0,
                y_hi: 150.0,
            },
            zone: Rect {
                x_lo: -150.0,
                x_hi: -50.0,
                y_lo: -50.0,
                y_hi: 50.0,
            },
            q_position: 1e-3,
            q_velocity: 1.0,
            terminal_scale: 10.0,
            r_throttle: 0.5,
            r_gimbal: 0.5,
            r_binary: 1e-3,
            fire_cost: 0.01,
            zone_costs: [1e-3, 2e-3, 3e-3],
            // Drifting on a lower orbit: constant radial offset with the
            // matching in-track drift velocity.
            x_init: [-260.0, y0, -1.5 * n * y0, 0.0],
        }
    }
}

/// Mean motion of a circular orbit at `altitude` metres.
pub fn orbital_rate(altitude: f64) -> f64 {
    let a = EARTH_RADIUS + altitude;
    (MU_EARTH / (a * a * a)).sqrt()
}

/// Continuous-time HCW matrices for the state and `[aX, aY]`.
pub fn hcw_continuous(n: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::zeros(NX, NX);
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    a[(2, 3)] = -2.0 * n;
    a[(3, 1)] = 3.0 * n * n;
    a[(3, 2)] = 2.0 * n;
    let mut b = DMatrix::zeros(NX, 2);
    b[(2, 0)] = 1.0;
    b[(3, 1)] = 1.0;
    (a, b)
}

/// Zero-order-hold discretization through the exponential of the augmented
/// matrix `[[A, B], [0, 0]]·ts`.
pub fn discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nx, nu) = (a.nrows(), b.ncols());
    let mut m = DMatrix::zeros(nx + nu, nx + nu);
    m.view_mut((0, 0), (nx, nx)).copy_from(&(a * ts));
    m.view_mut((0, nx), (nx, nu)).copy_from(&(b * ts));
    let e = m.exp();
    (
        e.view((0, 0), (nx, nx)).into_owned(),
        e.view((0, nx), (nx, nu)).into_owned(),
    )
}

/// Discrete dynamics for the full input vector: `(A_d, B_d)`.
pub fn discrete_model(cfg: &SatelliteConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    let (ac, bc) = hcw_continuous(orbital_rate(cfg.altitude));
    let (ad, bd) = discretize(&ac, &bc, cfg.ts);
    // Map the nine inputs to [aX, aY].
    let mut mix = DMatrix::zeros(2, NU);
    mix[(0, F1)] = cfg.thrust;
    mix[(0, F2)] = -cfg.thrust;
    mix[(1, G1)] = cfg.thrust;
    mix[(1, G2)] = cfg.thrust;
    (ad, bd * mix)
}

/// Builds the MPC problem and the matching nominal plant.
pub fn make_satellite(cfg: &SatelliteConfig) -> Result<(OcpMiqp, PlantModel)> {
    if cfg.ts <= 0.0 || cfg.horizon == 0 {
        return Err(Error::Scenario(
            "sampling period and horizon must be positive".into(),
        ));
    }
    let (w, z) = (cfg.window, cfg.zone);
    if !(z.x_lo > w.x_lo
        && z.x_hi < w.x_hi
        && z.y_lo > w.y_lo
        && z.y_hi < w.y_hi
        && z.x_lo < z.x_hi
        && z.y_lo < z.y_hi)
    {
        return Err(Error::Scenario(
            "exclusion zone must lie strictly inside the window".into(),
        ));
    }
    let (ad, bd) = discrete_model(cfg);

    let mut s = Stage::new(NX, NU);
    s.dynamics = ad.clone();
    s.input_map = bd.clone();
    s.state_cost = DMatrix::from_diagonal(&DVector::from_vec(vec![
        cfg.q_position,
        cfg.q_position,
        cfg.q_velocity,
        cfg.q_velocity,
    ]));
    let r = [
        cfg.r_binary,
        cfg.r_binary,
        cfg.r_throttle,
        cfg.r_gimbal,
        cfg.r_throttle,
        cfg.r_gimbal,
        cfg.r_binary,
        cfg.r_binary,
        cfg.r_binary,
    ];
    s.input_cost = DMatrix::from_diagonal(&DVector::from_row_slice(&r));
    s.input_lin[B1] = cfg.fire_cost;
    s.input_lin[B2] = cfg.fire_cost;
    s.input_lin[DL] = cfg.zone_costs[0];
    s.input_lin[DR] = cfg.zone_costs[1];
    s.input_lin[DB] = cfg.zone_costs[2];
    s.binaries = vec![B1, B2, DL, DR, DB];
    for k in [B1, B2, DL, DR, DB, F1, F2] {
        s.input_lo[k] = 0.0;
        s.input_hi[k] = 1.0;
    }
    for k in [G1, G2] {
        s.input_lo[k] = -cfg.tan_cone;
        s.input_hi[k] = cfg.tan_cone;
    }

    let zero_x = [0.0; NX];
    let row = |pairs: &[(usize, f64)]| {
        let mut d = [0.0; NU];
        for &(k, v) in pairs {
            d[k] = v;
        }
        d
    };
    let inf = f64::INFINITY;
    for (b, f, g) in [(B1, F1, G1), (B2, F2, G2)] {
        // f <= b, f >= f_min·b.
        s.push_row(&zero_x, &row(&[(f, 1.0), (b, -1.0)]), -inf, 0.0);
        s.push_row(&zero_x, &row(&[(f, 1.0), (b, -cfg.min_throttle)]), 0.0, inf);
        // |g| <= tanθ·f.
        s.push_row(&zero_x, &row(&[(g, 1.0), (f, -cfg.tan_cone)]), -inf, 0.0);
        s.push_row(&zero_x, &row(&[(g, -1.0), (f, -cfg.tan_cone)]), -inf, 0.0);
    }

    // Rows on the next state x⁺ = A x + B u: coefficient rows eᵀA and eᵀB.
    let next = |state: usize, extra: &[(usize, f64)]| {
        let c: Vec<f64> = ad.row(state).iter().copied().collect();
        let mut d: Vec<f64> = bd.row(state).iter().copied().collect();
        for &(k, v) in extra {
            d[k] += v;
        }
        (c, d)
    };
    let (cx, dx) = next(0, &[]);
    s.push_row(&cx, &dx, w.x_lo, w.x_hi);
    let (cy, dy) = next(1, &[]);
    s.push_row(&cy, &dy, w.y_lo, w.y_hi);

    let m_left = w.x_hi - z.x_lo;
    let m_right = z.x_hi - w.x_lo;
    let m_below = w.y_hi - z.y_lo;
    let m_above = z.y_hi - w.y_lo;
    let (c, d) = next(0, &[(DL, m_left)]);
    s.push_row(&c, &d, -inf, z.x_lo + m_left);
    let (c, d) = next(0, &[(DR, -m_right)]);
    s.push_row(&c, &d, z.x_hi - m_right, inf);
    let (c, d) = next(1, &[(DB, m_below)]);
    s.push_row(&c, &d, -inf, z.y_lo + m_below);
    let (c, d) = next(1, &[(DL, m_above), (DR, m_above), (DB, m_above)]);
    s.push_row(&c, &d, z.y_hi, inf);
    s.push_row(&zero_x, &row(&[(DL, 1.0), (DR, 1.0), (DB, 1.0)]), -inf, 1.0);

    let mut terminal = Terminal::new(NX);
    terminal.cost = &s.state_cost * cfg.terminal_scale;

    let prob = OcpMiqp::repeated(s, cfg.horizon, terminal);
    let plant = PlantModel::linear(ad, bd, DVector::zeros(NX));
    Ok((prob, plant))
}

pub fn initial_state(cfg: &SatelliteConfig) -> DVector<f64> {
    DVector::from_row_slice(&cfg.x_init)
}

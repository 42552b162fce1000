//! Network geometry and large-scale propagation constants.
//!
//! Coordinates are in meters. Every surface is assumed to lie in a plane
//! parallel to the xz-plane, so its reflection space is `y > y_ris` and its
//! transmission space is `y < y_ris`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Counts, node positions, power budgets and noise floor of a multi-cell
/// broadcast channel. Users are indexed flat as `l * users_per_cell + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub cells: usize,
    pub num_ris: usize,
    pub users_per_cell: usize,
    pub bs_antennas: usize,
    pub ris_elements: usize,
    pub bs_positions: Vec<Point3>,
    pub ris_positions: Vec<Point3>,
    pub user_positions: Vec<Point3>,
    /// Per-BS transmit power budget (linear, relative to `noise_power`).
    pub power_budgets: Vec<f64>,
    pub noise_power: f64,
}

impl NetworkTopology {
    pub fn num_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    /// Serving BS of a flat user index.
    pub fn bs_of(&self, user: usize) -> usize {
        user / self.users_per_cell
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTopology(msg));
        if self.cells == 0 || self.users_per_cell == 0 || self.bs_antennas == 0 {
            return bad("cell, user and antenna counts must be positive".into());
        }
        if self.num_ris == 0 || self.ris_elements == 0 {
            return bad("at least one surface with one element is required".into());
        }
        if self.num_ris < self.cells {
            log::warn!(
                "{} surfaces for {} cells; the system model assumes at least one per cell",
                self.num_ris,
                self.cells
            );
        }
        if self.bs_positions.len() != self.cells {
            return bad(format!("{} BS positions for {} cells", self.bs_positions.len(), self.cells));
        }
        if self.ris_positions.len() != self.num_ris {
            return bad(format!("{} surface positions for {} surfaces", self.ris_positions.len(), self.num_ris));
        }
        if self.user_positions.len() != self.num_users() {
            return bad(format!("{} user positions for {} users", self.user_positions.len(), self.num_users()));
        }
        if self.power_budgets.len() != self.cells || self.power_budgets.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return bad("one positive finite power budget per BS is required".into());
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return bad("noise power must be positive".into());
        }
        let all = self.bs_positions.iter().chain(&self.ris_positions).chain(&self.user_positions);
        if all.flat_map(|p| p.iter()).any(|c| !c.is_finite()) {
            return bad("non-finite coordinate".into());
        }
        Ok(())
    }

    /// Sets every BS budget to `10^(p_db/10)` times the noise power.
    pub fn set_power_db(&mut self, p_db: f64) {
        let p = self.noise_power * 10f64.powf(p_db / 10.0);
        self.power_budgets.iter_mut().for_each(|b| *b = p);
    }
}

/// Pathloss and fading constants.
///
/// Gains are normalized by the noise floor: a link of length `d` has mean
/// power gain `10^(ref_gain_db/10) * d^-exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub direct_exponent: f64,
    pub direct_ref_gain_db: f64,
    pub ris_exponent: f64,
    pub ris_ref_gain_db: f64,
    /// Linear Rician K-factor of the surface links. `f64::INFINITY` (or any
    /// value above 1e12) selects the pure line-of-sight limit.
    pub rician_k_factor: f64,
    pub wavelength_m: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            direct_exponent: 3.75,
            direct_ref_gain_db: 65.0,
            ris_exponent: 2.2,
            ris_ref_gain_db: 21.0,
            rician_k_factor: 10f64.powf(0.3),
            wavelength_m: 0.1,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.direct_exponent > 0.0
            && self.ris_exponent > 0.0
            && self.rician_k_factor >= 0.0
            && self.wavelength_m > 0.0
            && self.direct_ref_gain_db.is_finite()
            && self.ris_ref_gain_db.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("propagation parameters {self:?}")))
        }
    }

    pub fn is_pure_los(&self) -> bool {
        self.rician_k_factor > 1e12
    }

    pub fn direct_gain(&self, distance: f64) -> f64 {
        10f64.powf(self.direct_ref_gain_db / 10.0) * distance.max(1.0).powf(-self.direct_exponent)
    }

    pub fn ris_gain(&self, distance: f64) -> f64 {
        10f64.powf(self.ris_ref_gain_db / 10.0) * distance.max(1.0).powf(-self.ris_exponent)
    }
}

/// Parameters of the generated layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Layout {
    pub users_per_cell: usize,
    pub bs_antennas: usize,
    pub ris_elements: usize,
    pub power_db: f64,
    /// Seed of the user drop inside each square.
    pub seed: u64,
}

impl Default for Layout {
    fn default() -> Self {
        Self { users_per_cell: 2, bs_antennas: 4, ris_elements: 20, power_db: 20.0, seed: 0 }
    }
}

const BS_HEIGHT: f64 = 25.0;
const RIS_HEIGHT: f64 = 15.0;
const USER_HEIGHT: f64 = 1.5;
const SQUARE_SIDE: f64 = 20.0;
const SQUARE_GAP: f64 = 2.0;

/// Uniform drop in the 20 m square in front of (`front = true`) or behind a
/// surface at `ris`.
fn drop_user(rng: &mut ChaCha8Rng, ris: Point3, front: bool) -> Point3 {
    let x = ris[0] + rng.random_range(-SQUARE_SIDE / 2.0..SQUARE_SIDE / 2.0);
    let dy = SQUARE_GAP + rng.random_range(0.0..SQUARE_SIDE);
    let y = if front { ris[1] + dy } else { ris[1] - dy };
    [x, y, USER_HEIGHT]
}

/// The two-cell evaluation layout: BSs at (0,0,25) and (400,0,25), one
/// surface per cell at (140,0,15) and (260,0,15), users dropped in front of
/// their cell's surface.
pub fn two_cell_topology(layout: &Layout) -> NetworkTopology {
    let bs_positions = vec![[0.0, 0.0, BS_HEIGHT], [400.0, 0.0, BS_HEIGHT]];
    let ris_positions = vec![[140.0, 0.0, RIS_HEIGHT], [260.0, 0.0, RIS_HEIGHT]];
    let mut rng = ChaCha8Rng::seed_from_u64(layout.seed);
    let user_positions = ris_positions
        .iter()
        .flat_map(|&ris| (0..layout.users_per_cell).map(move |_| ris))
        .map(|ris| drop_user(&mut rng, ris, true))
        .collect();
    let mut topology = NetworkTopology {
        cells: 2,
        num_ris: 2,
        users_per_cell: layout.users_per_cell,
        bs_antennas: layout.bs_antennas,
        ris_elements: layout.ris_elements,
        bs_positions,
        ris_positions,
        user_positions,
        power_budgets: vec![1.0; 2],
        noise_power: 1.0,
    };
    topology.set_power_db(layout.power_db);
    topology
}

/// Single cell with one surface at (140,0,15). The first half of the users
/// is dropped in front of the surface (reflection space), the second half
/// behind it (transmission space).
pub fn star_topology(layout: &Layout) -> NetworkTopology {
    let ris = [140.0, 0.0, RIS_HEIGHT];
    let k = layout.users_per_cell;
    let mut rng = ChaCha8Rng::seed_from_u64(layout.seed);
    let user_positions = (0..k).map(|i| drop_user(&mut rng, ris, i < k.div_ceil(2))).collect();
    let mut topology = NetworkTopology {
        cells: 1,
        num_ris: 1,
        users_per_cell: k,
        bs_antennas: layout.bs_antennas,
        ris_elements: layout.ris_elements,
        bs_positions: vec![[0.0, 0.0, BS_HEIGHT]],
        ris_positions: vec![ris],
        user_positions,
        power_budgets: vec![1.0],
        noise_power: 1.0,
    };
    topology.set_power_db(layout.power_db);
    topology
}

/// [`two_cell_topology`] with the default [`Layout`].
pub fn default_topology() -> NetworkTopology {
    two_cell_topology(&Layout::default())
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

//! Fading draws and effective channels.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ris::RisState;
use crate::topology::{distance, NetworkTopology, Point3, PropagationParams};
use crate::C64;

/// All small- and large-scale channel coefficients of one draw.
///
/// Layouts (users flat as `l * K + k`):
/// * `direct[u * L + i]`: BS `i` to user `u`, length `n_bs`.
/// * `bs_ris[m * L + i]`: BS `i` to surface `m`, row-major `n_ris x n_bs`.
/// * `ris_user[u * M + m]`: surface `m` to user `u`, length `n_ris`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub cells: usize,
    pub num_ris: usize,
    pub users_per_cell: usize,
    pub bs_antennas: usize,
    pub ris_elements: usize,
    pub noise_power: f64,
    pub direct: Vec<Vec<C64>>,
    pub bs_ris: Vec<Vec<C64>>,
    pub ris_user: Vec<Vec<C64>>,
}

fn cn(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

fn unit_dir(from: Point3, to: Point3) -> [f64; 3] {
    let d = distance(from, to).max(1e-12);
    [(to[0] - from[0]) / d, (to[1] - from[1]) / d, (to[2] - from[2]) / d]
}

/// Half-wavelength ULA response along `axis` towards direction `dir`.
fn ula(n: usize, axis: usize, dir: [f64; 3]) -> Vec<C64> {
    (0..n).map(|k| C64::from_polar(1.0, PI * k as f64 * dir[axis])).collect()
}

const BS_AXIS: usize = 1;
const RIS_AXIS: usize = 0;

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    pub fn bs_of(&self, user: usize) -> usize {
        user / self.users_per_cell
    }

    pub fn direct(&self, user: usize, bs: usize) -> &[C64] {
        &self.direct[user * self.cells + bs]
    }

    pub fn bs_ris(&self, m: usize, bs: usize) -> &[C64] {
        &self.bs_ris[m * self.cells + bs]
    }

    pub fn ris_user(&self, user: usize, m: usize) -> &[C64] {
        &self.ris_user[user * self.num_ris + m]
    }

    /// Row `n` of the BS-to-surface matrix, i.e. what element `n` of surface
    /// `m` receives from the antennas of BS `i`.
    pub fn bs_ris_row(&self, m: usize, bs: usize, n: usize) -> &[C64] {
        let g = self.bs_ris(m, bs);
        &g[n * self.bs_antennas..(n + 1) * self.bs_antennas]
    }

    /// Copy of the channel set with every surface path removed.
    pub fn without_ris(&self) -> Self {
        let mut out = self.clone();
        for v in out.bs_ris.iter_mut().chain(out.ris_user.iter_mut()) {
            v.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.direct
            .iter()
            .chain(&self.bs_ris)
            .chain(&self.ris_user)
            .flatten()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn check(&self, user: usize, bs: usize) -> Result<()> {
        if user >= self.num_users() || bs >= self.cells {
            return Err(Error::IndexOutOfRange(format!(
                "user {user}, BS {bs} with {} users and {} cells",
                self.num_users(),
                self.cells
            )));
        }
        Ok(())
    }
}

/// Rician draw: `sqrt(gain) (sqrt(K/(K+1)) los + sqrt(1/(K+1)) CN(0,1))`.
fn rician(rng: &mut ChaCha8Rng, los: &[C64], gain: f64, params: &PropagationParams) -> Vec<C64> {
    let (w_los, w_nlos) = if params.is_pure_los() {
        (1.0, 0.0)
    } else {
        let k = params.rician_k_factor;
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    };
    let amp = gain.sqrt();
    los.iter()
        .map(|&a| {
            let scatter = if w_nlos > 0.0 { cn(rng, 1.0) } else { C64::new(0.0, 0.0) };
            (a * w_los + scatter * w_nlos) * amp
        })
        .collect()
}

/// Draws a full channel set. Direct links are Rayleigh, surface links are
/// Rician around a deterministic ULA line-of-sight component. Gains are
/// divided by the noise power so that the returned set is noise-normalized
/// (`noise_power = 1`).
pub fn generate_channels(topology: &NetworkTopology, params: &PropagationParams, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l_count, m_count) = (topology.cells, topology.num_ris);
    let (n_bs, n_ris) = (topology.bs_antennas, topology.ris_elements);
    let scale = 1.0 / topology.noise_power;
    let users = topology.num_users();

    let mut direct = Vec::with_capacity(users * l_count);
    for u in 0..users {
        for i in 0..l_count {
            let d = distance(topology.user_positions[u], topology.bs_positions[i]);
            let gain = params.direct_gain(d) * scale;
            direct.push((0..n_bs).map(|_| cn(&mut rng, gain)).collect());
        }
    }

    let mut bs_ris = Vec::with_capacity(m_count * l_count);
    for m in 0..m_count {
        for i in 0..l_count {
            let (ris, bs) = (topology.ris_positions[m], topology.bs_positions[i]);
            let d = distance(ris, bs);
            let a_ris = ula(n_ris, RIS_AXIS, unit_dir(ris, bs));
            let a_bs = ula(n_bs, BS_AXIS, unit_dir(bs, ris));
            let phase = C64::from_polar(1.0, -2.0 * PI * d / params.wavelength_m);
            let los: Vec<C64> = a_ris.iter().flat_map(|&r| a_bs.iter().map(move |&b| r * b.conj() * phase)).collect();
            bs_ris.push(rician(&mut rng, &los, params.ris_gain(d), params));
        }
    }

    let mut ris_user = Vec::with_capacity(users * m_count);
    for u in 0..users {
        for m in 0..m_count {
            let (ris, user) = (topology.ris_positions[m], topology.user_positions[u]);
            let d = distance(ris, user);
            let phase = C64::from_polar(1.0, -2.0 * PI * d / params.wavelength_m);
            let los: Vec<C64> = ula(n_ris, RIS_AXIS, unit_dir(ris, user)).iter().map(|a| a.conj() * phase).collect();
            ris_user.push(rician(&mut rng, &los, params.ris_gain(d) * scale, params));
        }
    }

    ChannelSet {
        cells: l_count,
        num_ris: m_count,
        users_per_cell: topology.users_per_cell,
        bs_antennas: n_bs,
        ris_elements: n_ris,
        noise_power: 1.0,
        direct,
        bs_ris,
        ris_user,
    }
}

/// Channel from BS `bs` to user `user` through all surfaces:
/// `d + sum_m f_m diag(theta_m) G_m`, with the coefficient vector of each
/// surface chosen by the user's side and the operating mode.
pub fn effective_channel_flat(channels: &ChannelSet, ris: &RisState, user: usize, bs: usize) -> Result<Vec<C64>> {
    channels.check(user, bs)?;
    let mut h = channels.direct(user, bs).to_vec();
    for m in 0..channels.num_ris {
        let Some(side) = ris.coefficient_side(user, m) else { continue };
        let theta = ris.coefficients(side, m);
        let f = channels.ris_user(user, m);
        for (n, (&fn_, &th)) in f.iter().zip(theta).enumerate() {
            let w = fn_ * th;
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            for (hk, &g) in h.iter_mut().zip(channels.bs_ris_row(m, bs, n)) {
                *hk += w * g;
            }
        }
    }
    Ok(h)
}

/// [`effective_channel_flat`] addressed by `(cell, user in cell, BS)`.
pub fn effective_channel(channels: &ChannelSet, ris: &RisState, l: usize, k: usize, i: usize) -> Result<Vec<C64>> {
    if k >= channels.users_per_cell {
        return Err(Error::IndexOutOfRange(format!("user {k} in a cell of {}", channels.users_per_cell)));
    }
    effective_channel_flat(channels, ris, l * channels.users_per_cell + k, i)
}

/// All effective channels, indexed `[user * L + bs]`.
pub fn all_effective_channels(channels: &ChannelSet, ris: &RisState) -> Vec<Vec<C64>> {
    let mut out = Vec::with_capacity(channels.num_users() * channels.cells);
    for u in 0..channels.num_users() {
        for i in 0..channels.cells {
            out.push(effective_channel_flat(channels, ris, u, i).expect("indices in range"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ris::{FeasibilitySet, RisMode, Side};
    use crate::topology::{default_topology, star_topology, Layout};

    fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn deterministic_in_seed() {
        let t = default_topology();
        let p = PropagationParams::default();
        assert_eq!(generate_channels(&t, &p, 7), generate_channels(&t, &p, 7));
        assert_ne!(generate_channels(&t, &p, 7), generate_channels(&t, &p, 8));
    }

    #[test]
    fn pure_los_has_no_spread() {
        let t = default_topology();
        let p = PropagationParams { rician_k_factor: f64::INFINITY, ..Default::default() };
        let a = generate_channels(&t, &p, 1);
        let b = generate_channels(&t, &p, 2);
        assert_eq!(a.bs_ris, b.bs_ris);
        assert_eq!(a.ris_user, b.ris_user);
        assert_ne!(a.direct, b.direct);
    }

    #[test]
    fn ris_off_gives_direct() {
        let t = default_topology();
        let c = generate_channels(&t, &PropagationParams::default(), 3);
        let r = RisState::off(&t);
        for u in 0..t.num_users() {
            for i in 0..t.cells {
                assert_eq!(effective_channel_flat(&c, &r, u, i).unwrap(), c.direct(u, i));
            }
        }
    }

    #[test]
    fn single_element_is_rank_one() {
        let t = default_topology();
        let c = generate_channels(&t, &PropagationParams::default(), 3);
        let mut r = RisState::off(&t);
        r.reflect[0][5] = C64::new(1.0, 0.0);
        let h = effective_channel(&c, &r, 0, 1, 0).unwrap();
        let f = c.ris_user(1, 0)[5];
        let expect: Vec<C64> = c.direct(1, 0).iter().zip(c.bs_ris_row(0, 0, 5)).map(|(d, g)| d + f * g).collect();
        assert!(close(&h, &expect, 1e-14));
    }

    #[test]
    fn affine_in_coefficients() {
        let t = default_topology();
        let c = generate_channels(&t, &PropagationParams::default(), 4);
        let a = RisState::initial(&t, RisMode::Regular, FeasibilitySet::Ti, 1).unwrap();
        let b = RisState::initial(&t, RisMode::Regular, FeasibilitySet::Ti, 2).unwrap();
        let mut mix = a.clone();
        for m in 0..t.num_ris {
            for n in 0..t.ris_elements {
                mix.reflect[m][n] = a.reflect[m][n] * 0.3 + b.reflect[m][n] * 0.7;
            }
        }
        for u in 0..t.num_users() {
            let ha = effective_channel_flat(&c, &a, u, 0).unwrap();
            let hb = effective_channel_flat(&c, &b, u, 0).unwrap();
            let hm = effective_channel_flat(&c, &mix, u, 0).unwrap();
            let expect: Vec<C64> = ha.iter().zip(&hb).map(|(x, y)| x * 0.3 + y * 0.7).collect();
            assert!(close(&hm, &expect, 1e-12 * expect.iter().map(|z| z.norm()).sum::<f64>().max(1.0)));
        }
    }

    #[test]
    fn reflection_side_ignores_transmission() {
        let t = star_topology(&Layout { users_per_cell: 4, ..Layout::default() });
        let c = generate_channels(&t, &PropagationParams::default(), 5);
        let mut r = RisState::initial(&t, RisMode::StarEs, FeasibilitySet::Tsi, 0).unwrap();
        assert_eq!(r.user_side[0][0], Side::Reflect);
        r.reflect[0].iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        assert_eq!(effective_channel_flat(&c, &r, 0, 0).unwrap(), c.direct(0, 0));
        assert_ne!(effective_channel_flat(&c, &r, 3, 0).unwrap(), c.direct(3, 0));
    }

    #[test]
    fn out_of_range_is_an_error() {
        let t = default_topology();
        let c = generate_channels(&t, &PropagationParams::default(), 0);
        let r = RisState::off(&t);
        assert!(effective_channel(&c, &r, 0, 9, 0).is_err());
        assert!(effective_channel(&c, &r, 0, 0, 2).is_err());
    }

    #[test]
    fn pathloss_law_monte_carlo() {
        let p = PropagationParams { direct_exponent: 4.0, ..Default::default() };
        let mut t = star_topology(&Layout { users_per_cell: 2, ..Layout::default() });
        t.bs_positions[0] = [0.0, 0.0, 0.0];
        t.user_positions[0] = [50.0, 0.0, 0.0];
        t.user_positions[1] = [100.0, 0.0, 0.0];
        let draws = 10_000;
        let (mut near, mut far) = (0.0, 0.0);
        for s in 0..draws {
            let c = generate_channels(&t, &p, s);
            near += c.direct(0, 0).iter().map(|z| z.norm_sqr()).sum::<f64>();
            far += c.direct(1, 0).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let ratio = far / near;
        assert!((ratio / 2f64.powi(-4) - 1.0).abs() < 0.05, "ratio {ratio}");
    }
}

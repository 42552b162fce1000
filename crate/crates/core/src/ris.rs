//! Surface coefficients, operating modes and feasibility sets.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::NetworkTopology;
use crate::C64;

/// How the surface elements are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RisMode {
    /// Reflect-only surface.
    Regular,
    /// Every element reflects and transmits at the same time.
    StarEs,
    /// Each element either reflects or transmits (fixed bipartition).
    StarMs,
    /// Reflect in one sub-slot, transmit in the other.
    StarTs,
}

impl RisMode {
    pub fn is_star(self) -> bool {
        !matches!(self, RisMode::Regular)
    }
}

/// Feasibility set of the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeasibilitySet {
    /// `|θ|² ≤ 1`.
    Tu,
    /// `|θ| = 1`.
    Ti,
    /// `|θ| = F(∠θ)`, see [`PhaseAmplitudeModel`].
    Tc,
    /// `|θr|² + |θt|² ≤ 1`.
    Tsu,
    /// `|θr|² + |θt|² = 1`.
    Tsi,
    /// `|θr|² + |θt|² = 1` and `Re{θr* θt} = 0`.
    Tsn,
}

impl FeasibilitySet {
    pub fn is_star(self) -> bool {
        matches!(self, FeasibilitySet::Tsu | FeasibilitySet::Tsi | FeasibilitySet::Tsn)
    }

    pub fn is_convex(self) -> bool {
        matches!(self, FeasibilitySet::Tu | FeasibilitySet::Tsu)
    }
}

/// Side of a surface a user sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Reflect,
    Transmit,
    Uncovered,
}

/// Phase-dependent amplitude of practical reflecting elements:
/// `F(φ) = θmin + (1 - θmin) ((sin(φ - offset) + 1) / 2)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseAmplitudeModel {
    pub theta_min: f64,
    pub alpha: f64,
    pub phi: f64,
}

impl Default for PhaseAmplitudeModel {
    fn default() -> Self {
        Self { theta_min: 0.2, alpha: 1.6, phi: 0.43 * PI }
    }
}

impl PhaseAmplitudeModel {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.theta_min) && self.alpha >= 0.0 && self.phi.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("amplitude model {self:?}")))
        }
    }

    pub fn amplitude(&self, phase: f64) -> f64 {
        let s = ((phase - self.phi).sin() + 1.0) / 2.0;
        self.theta_min + (1.0 - self.theta_min) * s.max(0.0).powf(self.alpha)
    }

    /// Keeps the phase of `theta` and sets its amplitude to `F(∠θ)`. Zero maps
    /// to phase 0.
    pub fn project(&self, theta: C64) -> C64 {
        let phase = if theta.norm() > 0.0 { theta.arg() } else { 0.0 };
        C64::from_polar(self.amplitude(phase), phase)
    }
}

/// Unit-modulus projection; zero maps to 1.
pub fn project_unit(theta: C64) -> C64 {
    let r = theta.norm();
    if r > 0.0 {
        theta / r
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Joint normalization of a reflect/transmit pair to unit sum power.
/// A zero pair maps to `(1, 0)`.
pub fn project_pair(r: C64, t: C64) -> (C64, C64) {
    let norm = (r.norm_sqr() + t.norm_sqr()).sqrt();
    if norm > 0.0 {
        (r / norm, t / norm)
    } else {
        (C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }
}

/// Unit-sum-power pair with `Re{r* t} = 0`: removes the in-phase part of `t`
/// along `r`, then renormalizes.
pub fn project_pair_orthogonal(r: C64, t: C64) -> (C64, C64) {
    let (r, t) = project_pair(r, t);
    let rr = r.norm_sqr();
    let t = if rr > 0.0 { t - r * ((r.conj() * t).re / rr) } else { t };
    let (r, t) = project_pair(r, t);
    // One more pass clears the rounding left by the renormalization.
    let rr = r.norm_sqr();
    let t = if rr > 0.0 { t - r * ((r.conj() * t).re / rr) } else { t };
    project_pair(r, t)
}

/// Lemma-style convex description of the orthogonal pair set: returns
/// `(|r+t|² ≤ 1, |r-t|² ≤ 1, |r|²+|t|² = 1)` evaluated with tolerance `tol`.
pub fn convex_pair_conditions(r: C64, t: C64, tol: f64) -> bool {
    (r + t).norm_sqr() <= 1.0 + tol
        && (r - t).norm_sqr() <= 1.0 + tol
        && (r.norm_sqr() + t.norm_sqr() - 1.0).abs() <= tol
}

/// Direct description of the orthogonal pair set.
pub fn orthogonal_pair_conditions(r: C64, t: C64, tol: f64) -> bool {
    (r.norm_sqr() + t.norm_sqr() - 1.0).abs() <= tol && (r.conj() * t).re.abs() <= tol
}

/// One optimizable coefficient: element `n` of surface `m` on `side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoefRef {
    pub m: usize,
    pub n: usize,
    pub side: Side,
}

/// Coefficients of all surfaces plus the user/side bookkeeping needed to
/// assemble effective channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisState {
    pub mode: RisMode,
    pub set_tag: FeasibilitySet,
    /// `reflect[m][n]`: reflection coefficient (the only one for a regular surface).
    pub reflect: Vec<Vec<C64>>,
    /// `transmit[m][n]`: transmission coefficient; all zero for a regular surface.
    pub transmit: Vec<Vec<C64>>,
    /// Element to side assignment, mode switching only.
    pub ms_partition: Option<Vec<Vec<Side>>>,
    /// `user_side[u][m]`.
    pub user_side: Vec<Vec<Side>>,
    /// Share of the slot spent in the reflection sub-slot (time switching).
    pub ts_fraction: f64,
    pub amplitude_model: PhaseAmplitudeModel,
}

impl RisState {
    /// Sides from geometry: users with `y` above the surface are in its
    /// reflection space, the others in its transmission space.
    pub fn sides_from_geometry(topology: &NetworkTopology) -> Vec<Vec<Side>> {
        topology
            .user_positions
            .iter()
            .map(|p| {
                topology
                    .ris_positions
                    .iter()
                    .map(|r| if p[1] >= r[1] { Side::Reflect } else { Side::Transmit })
                    .collect()
            })
            .collect()
    }

    /// All-zero coefficients: the surfaces are switched off.
    pub fn off(topology: &NetworkTopology) -> Self {
        let zeros = vec![vec![C64::new(0.0, 0.0); topology.ris_elements]; topology.num_ris];
        Self {
            mode: RisMode::Regular,
            set_tag: FeasibilitySet::Tu,
            reflect: zeros.clone(),
            transmit: zeros,
            ms_partition: None,
            user_side: Self::sides_from_geometry(topology),
            ts_fraction: 0.5,
            amplitude_model: PhaseAmplitudeModel::default(),
        }
    }

    /// A feasible starting state for `(mode, set)`: unit-amplitude random
    /// phases (projected onto the set), deterministic in `seed`.
    pub fn initial(topology: &NetworkTopology, mode: RisMode, set_tag: FeasibilitySet, seed: u64) -> Result<Self> {
        let star_set = set_tag.is_star();
        if mode.is_star() != star_set {
            return Err(Error::InvalidParameter(format!("feasibility set {set_tag:?} does not match mode {mode:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = Self::off(topology);
        state.mode = mode;
        state.set_tag = set_tag;
        let (m_count, n_count) = (topology.num_ris, topology.ris_elements);
        if mode == RisMode::StarMs {
            let mut partition = Vec::with_capacity(m_count);
            for _ in 0..m_count {
                let mut sides: Vec<Side> = (0..n_count)
                    .map(|n| if n < n_count.div_ceil(2) { Side::Reflect } else { Side::Transmit })
                    .collect();
                sides.shuffle(&mut rng);
                partition.push(sides);
            }
            state.ms_partition = Some(partition);
        }
        for m in 0..m_count {
            for n in 0..n_count {
                let phase = rng.random_range(-PI..PI);
                let unit = C64::from_polar(1.0, phase);
                let (r, t) = match mode {
                    RisMode::Regular => {
                        let r = if set_tag == FeasibilitySet::Tc { state.amplitude_model.project(unit) } else { unit };
                        (r, C64::new(0.0, 0.0))
                    }
                    // Equal split with a quarter-turn offset satisfies all
                    // three energy-splitting sets.
                    RisMode::StarEs => {
                        let s = std::f64::consts::FRAC_1_SQRT_2;
                        (unit * s, unit * C64::new(0.0, s))
                    }
                    RisMode::StarMs => match state.ms_partition.as_ref().unwrap()[m][n] {
                        Side::Transmit => (C64::new(0.0, 0.0), unit),
                        _ => (unit, C64::new(0.0, 0.0)),
                    },
                    RisMode::StarTs => {
                        let phase_t = rng.random_range(-PI..PI);
                        (unit, C64::from_polar(1.0, phase_t))
                    }
                };
                state.reflect[m][n] = r;
                state.transmit[m][n] = t;
            }
        }
        Ok(state)
    }

    /// Random unit-modulus reflection (the random-surface baseline).
    pub fn random_phases(topology: &NetworkTopology, seed: u64) -> Self {
        Self::initial(topology, RisMode::Regular, FeasibilitySet::Ti, seed).expect("regular/TI is always consistent")
    }

    pub fn num_ris(&self) -> usize {
        self.reflect.len()
    }

    pub fn num_elements(&self) -> usize {
        self.reflect.first().map_or(0, Vec::len)
    }

    pub fn num_users(&self) -> usize {
        self.user_side.len()
    }

    pub fn coefficients(&self, side: Side, m: usize) -> &[C64] {
        match side {
            Side::Transmit => &self.transmit[m],
            _ => &self.reflect[m],
        }
    }

    /// Time-switching sub-slot of a user: the side of the first surface that
    /// covers it.
    pub fn slot(&self, user: usize) -> Side {
        if self.mode != RisMode::StarTs {
            return Side::Reflect;
        }
        self.user_side[user].iter().copied().find(|s| *s != Side::Uncovered).unwrap_or(Side::Reflect)
    }

    /// Whether users `a` and `b` are active in the same (sub-)slot, i.e.
    /// interfere with each other.
    pub fn same_slot(&self, a: usize, b: usize) -> bool {
        self.slot(a) == self.slot(b)
    }

    /// Rate (and transmit power) scaling of a user; below one only for time
    /// switching.
    pub fn rate_fraction(&self, user: usize) -> f64 {
        match (self.mode, self.slot(user)) {
            (RisMode::StarTs, Side::Reflect) => self.ts_fraction,
            (RisMode::StarTs, _) => 1.0 - self.ts_fraction,
            _ => 1.0,
        }
    }

    /// Which coefficient vector of surface `m` reaches `user`, if any.
    pub fn coefficient_side(&self, user: usize, m: usize) -> Option<Side> {
        let side = self.user_side[user][m];
        match (self.mode, side) {
            (_, Side::Uncovered) => None,
            (RisMode::Regular, Side::Transmit) => None,
            (RisMode::StarTs, s) if s != self.slot(user) => None,
            (_, s) => Some(s),
        }
    }

    /// Whether the coefficient `(m, n, side)` is an optimization variable in
    /// this mode.
    pub fn is_active(&self, m: usize, n: usize, side: Side) -> bool {
        match self.mode {
            RisMode::Regular => side == Side::Reflect,
            RisMode::StarEs | RisMode::StarTs => side != Side::Uncovered,
            RisMode::StarMs => self.ms_partition.as_ref().is_some_and(|p| p[m][n] == side),
        }
    }

    /// Active coefficients in a fixed order (surface, element, side).
    pub fn active_coefficients(&self) -> Vec<CoefRef> {
        let mut out = Vec::new();
        for m in 0..self.num_ris() {
            for n in 0..self.num_elements() {
                for side in [Side::Reflect, Side::Transmit] {
                    if self.is_active(m, n, side) {
                        out.push(CoefRef { m, n, side });
                    }
                }
            }
        }
        out
    }

    pub fn coefficient(&self, c: CoefRef) -> C64 {
        self.coefficients(c.side, c.m)[c.n]
    }

    pub fn set_coefficient(&mut self, c: CoefRef, value: C64) {
        match c.side {
            Side::Transmit => self.transmit[c.m][c.n] = value,
            _ => self.reflect[c.m][c.n] = value,
        }
    }

    /// Largest violation of the equalities/inequalities of the active set.
    pub fn feasibility_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut note = |v: f64| worst = worst.max(v);
        for m in 0..self.num_ris() {
            for n in 0..self.num_elements() {
                let r = self.reflect[m][n];
                let t = self.transmit[m][n];
                match (self.mode, self.set_tag) {
                    (RisMode::Regular, set) => {
                        note(t.norm());
                        match set {
                            FeasibilitySet::Tu => note(r.norm_sqr() - 1.0),
                            FeasibilitySet::Ti => note((r.norm() - 1.0).abs()),
                            FeasibilitySet::Tc => {
                                let phase = if r.norm() > 0.0 { r.arg() } else { 0.0 };
                                note((r.norm() - self.amplitude_model.amplitude(phase)).abs())
                            }
                            _ => note(f64::INFINITY),
                        }
                    }
                    (RisMode::StarTs, FeasibilitySet::Tsu) => {
                        note(r.norm_sqr() - 1.0);
                        note(t.norm_sqr() - 1.0);
                    }
                    (RisMode::StarTs, _) => {
                        note((r.norm() - 1.0).abs());
                        note((t.norm() - 1.0).abs());
                    }
                    (RisMode::StarMs, set) => {
                        let sum = r.norm_sqr() + t.norm_sqr();
                        match set {
                            FeasibilitySet::Tsu => note(sum - 1.0),
                            _ => note((sum - 1.0).abs()),
                        }
                        let inactive = match self.ms_partition.as_ref().map(|p| p[m][n]) {
                            Some(Side::Transmit) => r,
                            _ => t,
                        };
                        note(inactive.norm());
                    }
                    (RisMode::StarEs, set) => {
                        let sum = r.norm_sqr() + t.norm_sqr();
                        match set {
                            FeasibilitySet::Tsu => note(sum - 1.0),
                            FeasibilitySet::Tsi => note((sum - 1.0).abs()),
                            FeasibilitySet::Tsn => {
                                note((sum - 1.0).abs());
                                note((r.conj() * t).re.abs());
                            }
                            _ => note(f64::INFINITY),
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.feasibility_violation() <= tol
    }

    /// Per-mode dimension checks against a topology.
    pub fn validate(&self, topology: &NetworkTopology) -> Result<()> {
        let shape_ok = self.reflect.len() == topology.num_ris
            && self.transmit.len() == topology.num_ris
            && self.reflect.iter().chain(&self.transmit).all(|v| v.len() == topology.ris_elements)
            && self.user_side.len() == topology.num_users()
            && self.user_side.iter().all(|s| s.len() == topology.num_ris);
        if !shape_ok {
            return Err(Error::InvalidParameter("surface state does not match topology".into()));
        }
        if self.mode == RisMode::StarMs && self.ms_partition.is_none() {
            return Err(Error::InvalidParameter("mode switching needs a partition".into()));
        }
        if !(0.0..=1.0).contains(&self.ts_fraction) {
            return Err(Error::InvalidParameter("time-switching fraction outside [0,1]".into()));
        }
        Ok(())
    }

    /// Regular surface that only covers users on its reflection side.
    pub fn with_uncovered_transmit_side(mut self) -> Self {
        for sides in &mut self.user_side {
            for s in sides.iter_mut() {
                if *s == Side::Transmit {
                    *s = Side::Uncovered;
                }
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{default_topology, star_topology, Layout};

    #[test]
    fn amplitude_peak_at_quarter_turn() {
        let model = PhaseAmplitudeModel::default();
        let a = model.amplitude(model.phi + PI / 2.0);
        assert!((a - 1.0).abs() < 1e-12);
        assert!((model.amplitude(model.phi - PI / 2.0) - model.theta_min).abs() < 1e-12);
    }

    #[test]
    fn projections_hit_sets() {
        assert_eq!(project_unit(C64::new(0.0, 0.0)), C64::new(1.0, 0.0));
        assert!((project_unit(C64::new(0.3, -0.4)).norm() - 1.0).abs() < 1e-15);
        let (r, t) = project_pair(C64::new(0.2, 0.1), C64::new(-0.3, 0.5));
        assert!((r.norm_sqr() + t.norm_sqr() - 1.0).abs() < 1e-15);
        let (r, t) = project_pair_orthogonal(C64::new(0.2, 0.1), C64::new(-0.3, 0.5));
        assert!(orthogonal_pair_conditions(r, t, 1e-14));
        let model = PhaseAmplitudeModel::default();
        let p = model.project(C64::new(0.1, 0.7));
        assert!((p.norm() - model.amplitude(p.arg())).abs() < 1e-14);
    }

    #[test]
    fn initial_states_are_feasible() {
        let t = default_topology();
        for set in [FeasibilitySet::Tu, FeasibilitySet::Ti, FeasibilitySet::Tc] {
            let s = RisState::initial(&t, RisMode::Regular, set, 3).unwrap();
            assert!(s.is_feasible(1e-12), "{set:?}");
        }
        let t = star_topology(&Layout { users_per_cell: 4, ..Layout::default() });
        for (mode, set) in [
            (RisMode::StarEs, FeasibilitySet::Tsu),
            (RisMode::StarEs, FeasibilitySet::Tsi),
            (RisMode::StarEs, FeasibilitySet::Tsn),
            (RisMode::StarMs, FeasibilitySet::Tsi),
            (RisMode::StarTs, FeasibilitySet::Tsi),
        ] {
            let s = RisState::initial(&t, mode, set, 3).unwrap();
            assert!(s.is_feasible(1e-12), "{mode:?}/{set:?}");
        }
        assert!(RisState::initial(&t, RisMode::Regular, FeasibilitySet::Tsi, 0).is_err());
    }

    #[test]
    fn ms_partition_is_bipartition() {
        let t = star_topology(&Layout { users_per_cell: 2, ris_elements: 10, ..Layout::default() });
        let s = RisState::initial(&t, RisMode::StarMs, FeasibilitySet::Tsi, 5).unwrap();
        let p = &s.ms_partition.as_ref().unwrap()[0];
        assert_eq!(p.iter().filter(|s| **s == Side::Reflect).count(), 5);
        assert_eq!(p.iter().filter(|s| **s == Side::Transmit).count(), 5);
        assert_eq!(s.active_coefficients().len(), 10);
    }

    #[test]
    fn ts_slots_and_fractions() {
        let t = star_topology(&Layout { users_per_cell: 4, ..Layout::default() });
        let s = RisState::initial(&t, RisMode::StarTs, FeasibilitySet::Tsi, 1).unwrap();
        assert_eq!(s.slot(0), Side::Reflect);
        assert_eq!(s.slot(3), Side::Transmit);
        assert!(!s.same_slot(0, 3));
        assert_eq!(s.rate_fraction(0) + s.rate_fraction(3), 1.0);
        assert_eq!(s.coefficient_side(3, 0), Some(Side::Transmit));
    }

    #[test]
    fn regular_surface_ignores_transmission_side() {
        let t = star_topology(&Layout { users_per_cell: 4, ..Layout::default() });
        let s = RisState::initial(&t, RisMode::Regular, FeasibilitySet::Ti, 1).unwrap();
        assert_eq!(s.coefficient_side(0, 0), Some(Side::Reflect));
        assert_eq!(s.coefficient_side(3, 0), None);
    }
}

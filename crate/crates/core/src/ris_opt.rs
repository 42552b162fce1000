//! Surface-coefficient update for fixed beams.
//!
//! Non-convex sets are handled by the convex-concave procedure: the
//! unit-modulus (or minimum-amplitude) equality is relaxed to the ball plus
//! a linearized lower bound around the previous coefficients, the relaxed
//! problem is solved, and the result is projected back onto the set. A
//! candidate replaces the previous state only if the true utility does not
//! drop.

use serde::{Deserialize, Serialize};

use crate::beam_opt::{BeamformingSet, UtilityKind};
use crate::convex::{solve, ConvexSubproblem, SolveOptions, SolveStatus};
use crate::error::{Error, Result};
use crate::framework::Instance;
use crate::metrics::RateReport;
use crate::ris::{
    project_pair, project_pair_orthogonal, project_unit, CoefRef, FeasibilitySet, RisMode, RisState, Side,
};
use crate::surrogate::{rate_surrogate, theta_links, ComplexAffine, QuadraticForm, ThetaLayout, Variables};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcpOptions {
    /// Relaxation of the unit-modulus lower bound, `|θ|² ≥ 1 - ε`.
    pub epsilon_relax: f64,
    /// A candidate is accepted if its utility is at least the previous one
    /// minus this tolerance.
    pub acceptance_tol: f64,
}

impl Default for CcpOptions {
    fn default() -> Self {
        Self { epsilon_relax: 0.05, acceptance_tol: 0.0 }
    }
}

impl CcpOptions {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=0.5).contains(&self.epsilon_relax) && self.acceptance_tol >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("CCP options {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RisOptions {
    pub ccp: CcpOptions,
    pub solve: SolveOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisUpdate {
    pub ris: RisState,
    pub utility: f64,
    pub accepted: bool,
    pub kkt_residual: f64,
    pub status: SolveStatus,
}

fn var(i: usize) -> ComplexAffine {
    ComplexAffine { constant: C64::new(0.0, 0.0), terms: vec![(i, C64::new(1.0, 0.0))] }
}

/// `Σ_c (2Re{c̄* c} - |c̄|²) - bound`: linearization of `Σ|c|² ≥ bound`.
fn linearized_lower(vars: &[usize], z_bar: &[C64], bound: f64) -> QuadraticForm {
    let mut q = QuadraticForm::constant(-bound);
    for &i in vars {
        q.constant -= z_bar[i].norm_sqr();
        q.add_re(z_bar[i].conj() * 2.0, &var(i));
    }
    q
}

/// Active variables of element `(m, n)` as `(reflect, transmit)` indices.
fn element_vars(layout: &ThetaLayout, m: usize, n: usize) -> (Option<usize>, Option<usize>) {
    (layout.index_of(CoefRef { m, n, side: Side::Reflect }), layout.index_of(CoefRef { m, n, side: Side::Transmit }))
}

/// Convex (relaxed) constraints of the coefficient set around `z_bar`.
pub(crate) fn set_constraints(ris: &RisState, layout: &ThetaLayout, z_bar: &[C64], eps: f64) -> Vec<QuadraticForm> {
    let mut out = Vec::new();
    let unit_like = |out: &mut Vec<QuadraticForm>, i: usize, lower: Option<f64>| {
        out.push(QuadraticForm::ball([i], 1.0));
        if let Some(b) = lower {
            out.push(linearized_lower(&[i], z_bar, b));
        }
    };
    let ti_lower = Some(1.0 - eps);
    for m in 0..ris.num_ris() {
        for n in 0..ris.num_elements() {
            let (r, t) = element_vars(layout, m, n);
            match (ris.mode, ris.set_tag) {
                (RisMode::Regular, set) => {
                    let Some(r) = r else { continue };
                    let lower = match set {
                        FeasibilitySet::Ti => ti_lower,
                        FeasibilitySet::Tc => Some(ris.amplitude_model.theta_min.powi(2)),
                        _ => None,
                    };
                    unit_like(&mut out, r, lower);
                }
                (RisMode::StarMs | RisMode::StarTs, set) => {
                    let lower = if set == FeasibilitySet::Tsu { None } else { ti_lower };
                    for i in [r, t].into_iter().flatten() {
                        unit_like(&mut out, i, lower);
                    }
                }
                (RisMode::StarEs, set) => {
                    let vars: Vec<usize> = [r, t].into_iter().flatten().collect();
                    out.push(QuadraticForm::ball(vars.clone(), 1.0));
                    if set != FeasibilitySet::Tsu {
                        out.push(linearized_lower(&vars, z_bar, 1.0 - eps));
                    }
                    if let (FeasibilitySet::Tsn, Some(r), Some(t)) = (set, r, t) {
                        for sign in [1.0, -1.0] {
                            let mut q = QuadraticForm::constant(1.0);
                            q.sub_square(
                                1.0,
                                ComplexAffine {
                                    constant: C64::new(0.0, 0.0),
                                    terms: vec![(r, C64::new(1.0, 0.0)), (t, C64::new(sign, 0.0))],
                                },
                            );
                            out.push(q);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Maps relaxed coefficients back onto the exact set.
pub fn project(ris: &RisState) -> RisState {
    let mut out = ris.clone();
    let zero = C64::new(0.0, 0.0);
    for m in 0..out.num_ris() {
        for n in 0..out.num_elements() {
            let (r, t) = (out.reflect[m][n], out.transmit[m][n]);
            let clamp = |z: C64| if z.norm() > 1.0 { z / z.norm() } else { z };
            let (r, t) = match (out.mode, out.set_tag) {
                (RisMode::Regular, FeasibilitySet::Tu) => (clamp(r), zero),
                (RisMode::Regular, FeasibilitySet::Tc) => (out.amplitude_model.project(r), zero),
                (RisMode::Regular, _) => (project_unit(r), zero),
                (RisMode::StarEs, FeasibilitySet::Tsu) => {
                    let s = (r.norm_sqr() + t.norm_sqr()).sqrt();
                    if s > 1.0 {
                        (r / s, t / s)
                    } else {
                        (r, t)
                    }
                }
                (RisMode::StarEs, FeasibilitySet::Tsn) => project_pair_orthogonal(r, t),
                (RisMode::StarEs, _) => project_pair(r, t),
                (RisMode::StarMs, set) => {
                    let side = out.ms_partition.as_ref().map_or(Side::Reflect, |p| p[m][n]);
                    let fix = |z: C64| if set == FeasibilitySet::Tsu { clamp(z) } else { project_unit(z) };
                    match side {
                        Side::Transmit => (zero, fix(t)),
                        _ => (fix(r), zero),
                    }
                }
                (RisMode::StarTs, FeasibilitySet::Tsu) => (clamp(r), clamp(t)),
                (RisMode::StarTs, _) => (project_unit(r), project_unit(t)),
            };
            out.reflect[m][n] = r;
            out.transmit[m][n] = t;
        }
    }
    out
}

/// Utility-specific surrogate problem in the active coefficients, solved,
/// projected and passed through the acceptance rule.
pub fn update_ris(
    inst: &Instance,
    beams: &BeamformingSet,
    ris_prev: &RisState,
    opts: &RisOptions,
) -> Result<RisUpdate> {
    opts.ccp.validate()?;
    let utility = &inst.utility;
    let prev_report = RateReport::evaluate(&inst.channels, ris_prev, beams, &inst.fbl, &inst.energy);
    let prev_utility = utility.value(&prev_report);
    let keep = |kkt: f64, status| RisUpdate {
        ris: ris_prev.clone(),
        utility: prev_utility,
        accepted: false,
        kkt_residual: kkt,
        status,
    };
    let layout = ThetaLayout::new(ris_prev);
    if layout.is_empty() {
        return Ok(keep(0.0, SolveStatus::Optimal));
    }
    let links = theta_links(&inst.channels, ris_prev, beams, &layout);
    let z_bar = layout.to_vars(ris_prev);
    let noise = inst.channels.noise_power;
    let surrogates = links
        .iter()
        .map(|l| rate_surrogate(l, &z_bar, noise, &inst.fbl, ris_prev.rate_fraction(l.user)))
        .collect::<Result<Vec<_>>>()?;

    let eps = opts.ccp.epsilon_relax;
    let mut p = ConvexSubproblem::new(layout.len(), 0);
    p.constraints = set_constraints(ris_prev, &layout, &z_bar, eps);
    for (s, &t) in surrogates.iter().zip(&utility.thresholds) {
        if t > 0.0 {
            let mut c = s.clone();
            c.constant -= t;
            p.constraints.push(c);
        }
    }
    // Pull the start off the ball boundaries; the linearized lower bounds
    // keep a margin of about ε/2.
    let shrink = 1.0 - eps.max(1e-3) / 4.0;
    let z_start: Vec<C64> = z_bar.iter().map(|z| z * shrink).collect();

    // Weighted max-min problems share one form: max t s.t. r̃_u ≥ c_u t.
    let maxmin_weights: Option<Vec<f64>> = match utility.kind {
        UtilityKind::MinWeightedRate => Some(utility.weights.clone()),
        UtilityKind::MinWeightedEe => Some(
            (0..surrogates.len())
                .map(|u| {
                    let power = beams.power(u) * ris_prev.rate_fraction(u);
                    utility.weights[u] * (inst.energy.p_c + inst.energy.eta * power)
                })
                .collect(),
        ),
        _ => None,
    };
    match &maxmin_weights {
        Some(w) => {
            p.n_real = 1;
            let sv = Variables::new(z_start.clone(), vec![]);
            let t0 = surrogates.iter().zip(w).map(|(s, c)| s.eval(&sv) / c).fold(f64::INFINITY, f64::min);
            for (s, &c) in surrogates.iter().zip(w) {
                let mut q = s.clone();
                q.add_real(0, -c);
                p.constraints.push(q);
            }
            p.objective = QuadraticForm::real_var(0);
            p.start = Some(Variables::new(z_start, vec![t0 - 1.0]));
        }
        None => {
            let weights = match utility.kind {
                UtilityKind::WeightedSumRate => utility.weights.clone(),
                _ => vec![1.0; surrogates.len()],
            };
            for (s, &w) in surrogates.iter().zip(&weights) {
                p.objective.add_scaled(s, w);
            }
            p.start = Some(Variables::new(z_start, vec![]));
        }
    }

    let res = solve(&p, &opts.solve)?;
    if res.status == SolveStatus::Infeasible {
        return Ok(keep(res.kkt_residual, res.status));
    }
    let cand = project(&layout.apply(ris_prev, &res.vars.complex));
    let report = RateReport::evaluate(&inst.channels, &cand, beams, &inst.fbl, &inst.energy);
    let value = utility.value(&report);
    let thresholds_ok = utility.thresholds_met(&report) || !utility.thresholds_met(&prev_report);
    if value.is_finite() && value >= prev_utility - opts.ccp.acceptance_tol && thresholds_ok {
        Ok(RisUpdate { ris: cand, utility: value, accepted: true, kkt_residual: res.kkt_residual, status: res.status })
    } else {
        Ok(keep(res.kkt_residual, res.status))
    }
}

fn expect(ris: &RisState, mode: RisMode, sets: &[FeasibilitySet]) -> Result<()> {
    if ris.mode == mode && sets.contains(&ris.set_tag) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "state is {:?}/{:?}, expected {mode:?} with one of {sets:?}",
            ris.mode, ris.set_tag
        )))
    }
}

/// Regular surface, `|θ|² ≤ 1`.
pub fn update_tu(inst: &Instance, beams: &BeamformingSet, ris: &RisState, opts: &RisOptions) -> Result<RisUpdate> {
    expect(ris, RisMode::Regular, &[FeasibilitySet::Tu])?;
    update_ris(inst, beams, ris, opts)
}

/// Regular surface, `|θ| = 1`.
pub fn update_ti(inst: &Instance, beams: &BeamformingSet, ris: &RisState, opts: &RisOptions) -> Result<RisUpdate> {
    expect(ris, RisMode::Regular, &[FeasibilitySet::Ti])?;
    update_ris(inst, beams, ris, opts)
}

/// Regular surface with phase-dependent amplitude.
pub fn update_tc(inst: &Instance, beams: &BeamformingSet, ris: &RisState, opts: &RisOptions) -> Result<RisUpdate> {
    expect(ris, RisMode::Regular, &[FeasibilitySet::Tc])?;
    update_ris(inst, beams, ris, opts)
}

/// Energy splitting under any of the three STAR sets.
pub fn update_star_es(inst: &Instance, beams: &BeamformingSet, ris: &RisState, opts: &RisOptions) -> Result<RisUpdate> {
    expect(ris, RisMode::StarEs, &[FeasibilitySet::Tsu, FeasibilitySet::Tsi, FeasibilitySet::Tsn])?;
    update_ris(inst, beams, ris, opts)
}

/// Mode switching over the fixed element partition.
pub fn update_star_ms(inst: &Instance, beams: &BeamformingSet, ris: &RisState, opts: &RisOptions) -> Result<RisUpdate> {
    expect(ris, RisMode::StarMs, &[FeasibilitySet::Tsu, FeasibilitySet::Tsi, FeasibilitySet::Tsn])?;
    update_ris(inst, beams, ris, opts)
}

/// Time switching: reflection coefficients serve the reflection sub-slot,
/// transmission coefficients the transmission sub-slot. Both are solved in
/// one problem so that a max-min objective across sub-slots stays exact.
pub fn update_star_ts(inst: &Instance, beams: &BeamformingSet, ris: &RisState, opts: &RisOptions) -> Result<RisUpdate> {
    expect(ris, RisMode::StarTs, &[FeasibilitySet::Tsu, FeasibilitySet::Tsi, FeasibilitySet::Tsn])?;
    update_ris(inst, beams, ris, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ris::orthogonal_pair_conditions;
    use crate::topology::{default_topology, star_topology, Layout};

    #[test]
    fn projection_lands_on_sets() {
        let t = default_topology();
        let mut s = RisState::initial(&t, RisMode::Regular, FeasibilitySet::Ti, 0).unwrap();
        s.reflect[0][0] = C64::new(0.0, 0.0);
        s.reflect[0][1] = C64::new(0.3, 0.1);
        let p = project(&s);
        assert_eq!(p.reflect[0][0], C64::new(1.0, 0.0));
        assert!(p.is_feasible(1e-12));

        let t = star_topology(&Layout { users_per_cell: 2, ..Layout::default() });
        let mut s = RisState::initial(&t, RisMode::StarEs, FeasibilitySet::Tsn, 0).unwrap();
        s.reflect[0][0] = C64::new(0.3, 0.2);
        s.transmit[0][0] = C64::new(0.1, -0.5);
        let p = project(&s);
        assert!(orthogonal_pair_conditions(p.reflect[0][0], p.transmit[0][0], 1e-12));
        assert!(p.is_feasible(1e-12));
    }
}

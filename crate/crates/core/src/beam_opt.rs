//! Beamforming update for fixed surface coefficients.

use serde::{Deserialize, Serialize};

use crate::convex::{
    dinkelbach, generalized_dinkelbach, solve, ConvexSubproblem, DinkelbachOptions, FractionalProgram,
    MaxMinRatioProgram, SolveOptions, SolveResult, SolveStatus,
};
use crate::error::{Error, Result};
use crate::framework::Instance;
use crate::metrics::RateReport;
use crate::ris::{RisState, Side};
use crate::surrogate::{beam_links, rate_surrogate, BeamLayout, QuadraticForm, Variables};
use crate::C64;

/// Beam `x[u]` of every user (flat index `l * K + k`), length `n_bs` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingSet {
    pub x: Vec<Vec<C64>>,
}

impl BeamformingSet {
    pub fn zeros(users: usize, n_bs: usize) -> Self {
        Self { x: vec![vec![C64::new(0.0, 0.0); n_bs]; users] }
    }

    pub fn power(&self, user: usize) -> f64 {
        self.x[user].iter().map(|z| z.norm_sqr()).sum()
    }

    /// Transmit power of BS `bs` in sub-slot `slot`. Without time switching
    /// every user is in the reflection slot.
    pub fn bs_power(&self, ris: &RisState, users_per_cell: usize, bs: usize, slot: Side) -> f64 {
        (bs * users_per_cell..(bs + 1) * users_per_cell).filter(|&u| ris.slot(u) == slot).map(|u| self.power(u)).sum()
    }

    /// Largest excess of a per-BS (per-sub-slot) power over its budget.
    pub fn power_violation(&self, ris: &RisState, budgets: &[f64], users_per_cell: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for (bs, &p) in budgets.iter().enumerate() {
            for slot in [Side::Reflect, Side::Transmit] {
                worst = worst.max(self.bs_power(ris, users_per_cell, bs, slot) - p);
            }
        }
        worst
    }

    /// Scales each BS group down to its budget where it is exceeded.
    pub fn clamp_power(&mut self, ris: &RisState, budgets: &[f64], users_per_cell: usize) {
        for (bs, &p) in budgets.iter().enumerate() {
            for slot in [Side::Reflect, Side::Transmit] {
                let used = self.bs_power(ris, users_per_cell, bs, slot);
                if used > p {
                    let s = (p / used).sqrt();
                    for u in bs * users_per_cell..(bs + 1) * users_per_cell {
                        if ris.slot(u) == slot {
                            self.x[u].iter_mut().for_each(|z| *z *= s);
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UtilityKind {
    /// Maximize `min r_u / λ_u`.
    MinWeightedRate,
    /// Maximize `Σ λ_u r_u`.
    WeightedSumRate,
    /// Maximize total rate over total power.
    Gee,
    /// Maximize `min e_u / λ_u`.
    MinWeightedEe,
}

impl UtilityKind {
    pub const ALL: [UtilityKind; 4] = [Self::MinWeightedRate, Self::WeightedSumRate, Self::Gee, Self::MinWeightedEe];

    pub fn is_energy(self) -> bool {
        matches!(self, Self::Gee | Self::MinWeightedEe)
    }
}

/// Objective, user weights and per-user rate thresholds (zero disables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    pub weights: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl UtilitySpec {
    pub fn new(kind: UtilityKind, users: usize) -> Self {
        Self { kind, weights: vec![1.0; users], thresholds: vec![0.0; users] }
    }

    pub fn with_threshold(mut self, r_th: f64) -> Self {
        self.thresholds.iter_mut().for_each(|t| *t = r_th);
        self
    }

    pub fn validate(&self, users: usize) -> Result<()> {
        if self.weights.len() != users || self.thresholds.len() != users {
            return Err(Error::InvalidParameter("one weight and one threshold per user".into()));
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        if self.thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidParameter("thresholds must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn value(&self, report: &RateReport) -> f64 {
        let weighted_min = |v: &[f64]| v.iter().zip(&self.weights).map(|(x, w)| x / w).fold(f64::INFINITY, f64::min);
        match self.kind {
            UtilityKind::MinWeightedRate => weighted_min(&report.r),
            UtilityKind::WeightedSumRate => report.r.iter().zip(&self.weights).map(|(r, w)| r * w).sum(),
            UtilityKind::Gee => report.gee,
            UtilityKind::MinWeightedEe => weighted_min(&report.e),
        }
    }

    pub fn thresholds_met(&self, report: &RateReport) -> bool {
        report.r.iter().zip(&self.thresholds).all(|(r, t)| *t <= 0.0 || *r >= t - 1e-9)
    }

    pub fn has_thresholds(&self) -> bool {
        self.thresholds.iter().any(|t| *t > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BeamOptions {
    pub solve: SolveOptions,
    pub dinkelbach: DinkelbachOptions,
}

/// Outcome of one block update.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamUpdate {
    pub beams: BeamformingSet,
    pub utility: f64,
    /// Whether the candidate replaced the previous beams.
    pub accepted: bool,
    pub kkt_residual: f64,
    pub status: SolveStatus,
}

/// Variable layout `x_u = sqrt(p_bs(u)) x̂_u`, so every budget becomes a
/// unit ball.
pub fn beam_layout(inst: &Instance) -> BeamLayout {
    let t = &inst.topology;
    BeamLayout { n_bs: t.bs_antennas, scale: (0..t.num_users()).map(|u| t.power_budgets[t.bs_of(u)].sqrt()).collect() }
}

/// Unit-ball constraints of every (BS, sub-slot) group in scaled variables.
pub fn power_constraints(inst: &Instance, ris: &RisState, layout: &BeamLayout) -> Vec<QuadraticForm> {
    let t = &inst.topology;
    let mut out = Vec::new();
    for bs in 0..t.cells {
        for slot in [Side::Reflect, Side::Transmit] {
            let vars: Vec<usize> = (bs * t.users_per_cell..(bs + 1) * t.users_per_cell)
                .filter(|&u| ris.slot(u) == slot)
                .flat_map(|u| layout.user_vars(u))
                .collect();
            if !vars.is_empty() {
                out.push(QuadraticForm::ball(vars, 1.0));
            }
        }
    }
    out
}

/// `-η f_u ‖x_u‖²` in scaled variables (`f_u` the user's slot share).
fn neg_power(inst: &Instance, ris: &RisState, layout: &BeamLayout, u: usize) -> QuadraticForm {
    let w = inst.energy.eta * ris.rate_fraction(u) * layout.scale[u].powi(2);
    QuadraticForm::ball(layout.user_vars(u), 0.0).scaled(w)
}

/// Moves a start point strictly inside the power balls.
pub(crate) fn shrink_into_balls(z: &mut [C64], layout: &BeamLayout, inst: &Instance, ris: &RisState) {
    let balls = power_constraints(inst, ris, layout);
    let v = Variables::new(z.to_vec(), vec![]);
    let worst = balls.iter().map(|b| b.eval(&v)).fold(f64::INFINITY, f64::min);
    if worst < 1e-6 {
        // Each ball is `1 - Σ|z|²`; scaling by s gives `1 - s²(1 - worst)`.
        let used = 1.0 - worst;
        let s = (0.999 / used).sqrt();
        z.iter_mut().for_each(|x| *x *= s);
    }
}

/// Builds and solves the utility-specific surrogate problem at
/// `beams_prev`, then applies the acceptance rule: the candidate is kept only
/// if it does not lower the true utility and meets the thresholds.
pub fn update_beams(
    inst: &Instance,
    ris: &RisState,
    beams_prev: &BeamformingSet,
    opts: &BeamOptions,
) -> Result<BeamUpdate> {
    let users = inst.topology.num_users();
    let utility = &inst.utility;
    let layout = beam_layout(inst);
    let links = beam_links(&inst.channels, ris, &layout);
    let z_bar = layout.to_vars(beams_prev);
    let noise = inst.channels.noise_power;
    let surrogates = links
        .iter()
        .map(|l| rate_surrogate(l, &z_bar, noise, &inst.fbl, ris.rate_fraction(l.user)))
        .collect::<Result<Vec<_>>>()?;

    let mut z_start = z_bar.clone();
    shrink_into_balls(&mut z_start, &layout, inst, ris);
    let n = layout.len();
    let mut base = ConvexSubproblem::new(n, 0);
    base.constraints = power_constraints(inst, ris, &layout);
    for (s, &t) in surrogates.iter().zip(&utility.thresholds) {
        if t > 0.0 {
            let mut c = s.clone();
            c.constant -= t;
            base.constraints.push(c);
        }
    }
    base.start = Some(Variables::new(z_start.clone(), vec![]));

    let res: SolveResult = match utility.kind {
        UtilityKind::MinWeightedRate => {
            let mut p = base.clone();
            p.n_real = 1;
            let start_vars = Variables::new(z_start.clone(), vec![]);
            let t0 = surrogates
                .iter()
                .zip(&utility.weights)
                .map(|(s, w)| s.eval(&start_vars) / w)
                .fold(f64::INFINITY, f64::min);
            for (s, &w) in surrogates.iter().zip(&utility.weights) {
                let mut c = s.clone();
                c.add_real(0, -w);
                p.constraints.push(c);
            }
            p.objective = QuadraticForm::real_var(0);
            p.start = Some(Variables::new(z_start.clone(), vec![t0 - 1.0]));
            let mut r = solve(&p, &opts.solve)?;
            r.vars.real.clear();
            r
        }
        UtilityKind::WeightedSumRate => {
            let mut p = base.clone();
            for (s, &w) in surrogates.iter().zip(&utility.weights) {
                p.objective.add_scaled(s, w);
            }
            solve(&p, &opts.solve)?
        }
        UtilityKind::Gee => {
            let mut numerator = QuadraticForm::default();
            let mut neg_den = QuadraticForm::constant(-(users as f64) * inst.energy.p_c);
            for (u, s) in surrogates.iter().enumerate() {
                numerator.add(s);
                neg_den.add(&neg_power(inst, ris, &layout, u));
            }
            let fp = FractionalProgram { base: base.clone(), numerator, neg_denominator: neg_den };
            dinkelbach(&fp, &opts.dinkelbach)?.0
        }
        UtilityKind::MinWeightedEe => {
            let neg_dens = (0..users)
                .map(|u| {
                    let mut d = neg_power(inst, ris, &layout, u);
                    d.constant -= inst.energy.p_c;
                    d
                })
                .collect();
            let mm = MaxMinRatioProgram {
                base: base.clone(),
                numerators: surrogates.clone(),
                neg_denominators: neg_dens,
                weights: utility.weights.clone(),
            };
            generalized_dinkelbach(&mm, &opts.dinkelbach)?.0
        }
    };

    let prev_report = RateReport::evaluate(&inst.channels, ris, beams_prev, &inst.fbl, &inst.energy);
    let prev_utility = utility.value(&prev_report);
    let keep = |status| BeamUpdate {
        beams: beams_prev.clone(),
        utility: prev_utility,
        accepted: false,
        kkt_residual: res.kkt_residual,
        status,
    };
    if res.status == SolveStatus::Infeasible {
        if utility.has_thresholds() && !utility.thresholds_met(&prev_report) {
            return Err(Error::InfeasibleThresholds);
        }
        return Ok(keep(SolveStatus::Infeasible));
    }
    let mut cand = layout.to_beams(&res.vars.complex);
    cand.clamp_power(ris, &inst.topology.power_budgets, inst.topology.users_per_cell);
    let report = RateReport::evaluate(&inst.channels, ris, &cand, &inst.fbl, &inst.energy);
    let value = utility.value(&report);
    let thresholds_ok = utility.thresholds_met(&report) || !utility.thresholds_met(&prev_report);
    if value >= prev_utility && thresholds_ok && value.is_finite() {
        Ok(BeamUpdate {
            beams: cand,
            utility: value,
            accepted: true,
            kkt_residual: res.kkt_residual,
            status: res.status,
        })
    } else {
        Ok(keep(res.status))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utility_values() {
        let report = RateReport {
            gamma: vec![1.0, 3.0],
            v: vec![1.0, 1.5],
            delta: vec![0.0, 0.0],
            r: vec![1.0, 2.0],
            c: vec![1.0, 2.0],
            e: vec![0.5, 0.25],
            gee: 0.3,
        };
        let mut u = UtilitySpec::new(UtilityKind::MinWeightedRate, 2);
        u.weights = vec![1.0, 4.0];
        assert_eq!(u.value(&report), 0.5);
        u.kind = UtilityKind::WeightedSumRate;
        assert_eq!(u.value(&report), 9.0);
        u.kind = UtilityKind::Gee;
        assert_eq!(u.value(&report), 0.3);
        u.kind = UtilityKind::MinWeightedEe;
        assert_eq!(u.value(&report), 0.0625);
        assert!(u.clone().with_threshold(1.5).thresholds_met(&report) == false);
        assert!(u.validate(2).is_ok());
        assert!(u.validate(3).is_err());
    }
}

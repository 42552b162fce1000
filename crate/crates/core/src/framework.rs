//! Alternating optimization of beams and surface coefficients.

use std::io::Write;

use crate::beam_opt::{
    beam_layout, power_constraints, shrink_into_balls, update_beams, BeamOptions, BeamformingSet, UtilityKind,
    UtilitySpec,
};
use crate::channel::{all_effective_channels, generate_channels, ChannelSet};
use crate::convex::{generalized_dinkelbach, ConvexSubproblem, DinkelbachOptions, MaxMinRatioProgram};
use crate::error::{Error, Result};
use crate::metrics::{sinr_all, EnergyParams, FblParams, RateReport};
use crate::ris::RisState;
use crate::ris_opt::{project, set_constraints, update_ris, RisOptions};
use crate::surrogate::{
    beam_links, neg_interference, theta_links, useful_power_lower_bound, LinkAffine, ThetaLayout, Variables,
};
use crate::topology::{NetworkTopology, PropagationParams};
use crate::C64;

/// Everything fixed during one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub topology: NetworkTopology,
    pub channels: ChannelSet,
    pub fbl: FblParams,
    pub energy: EnergyParams,
    pub utility: UtilitySpec,
}

impl Instance {
    pub fn new(
        topology: NetworkTopology,
        params: &PropagationParams,
        seed: u64,
        fbl: FblParams,
        energy: EnergyParams,
        utility: UtilitySpec,
    ) -> Result<Self> {
        topology.validate()?;
        params.validate()?;
        energy.validate()?;
        utility.validate(topology.num_users())?;
        let channels = generate_channels(&topology, params, seed);
        Ok(Self { topology, channels, fbl, energy, utility })
    }

    pub fn with_utility(&self, utility: UtilitySpec) -> Self {
        Self { utility, ..self.clone() }
    }

    pub fn report(&self, ris: &RisState, beams: &BeamformingSet) -> RateReport {
        RateReport::evaluate(&self.channels, ris, beams, &self.fbl, &self.energy)
    }

    pub fn utility_value(&self, ris: &RisState, beams: &BeamformingSet) -> f64 {
        self.utility.value(&self.report(ris, beams))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoOptions {
    pub max_iter: usize,
    /// Stop once the relative utility improvement falls below this.
    pub eps_stop: f64,
    /// Update the surface coefficients; off for fixed-surface baselines.
    pub optimize_ris: bool,
    /// Start energy-efficiency utilities from the max-min rate solution.
    pub ee_warm_start: bool,
    pub init_iters: usize,
    pub beam: BeamOptions,
    pub ris: RisOptions,
    pub gda: DinkelbachOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            eps_stop: 1e-4,
            optimize_ris: true,
            ee_warm_start: true,
            init_iters: 10,
            beam: BeamOptions::default(),
            ris: RisOptions::default(),
            gda: DinkelbachOptions { tol: 1e-6, max_iter: 20, ..Default::default() },
        }
    }
}

/// Result of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct AoState {
    /// Completed outer iterations.
    pub iteration: usize,
    pub beams: BeamformingSet,
    pub ris: RisState,
    /// Utility after initialization and after every outer iteration.
    pub trace: Vec<f64>,
    /// Per-user rates after initialization and after every outer iteration.
    pub rate_trace: Vec<Vec<f64>>,
    pub converged: bool,
    pub eps_stop: f64,
    pub max_iter: usize,
    /// KKT residuals of the last beam and surface subproblems.
    pub beam_kkt: f64,
    pub ris_kkt: f64,
    pub init_min_sinr: f64,
}

impl AoState {
    pub fn utility(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial value")
    }

    /// Writes `iteration,utility,rate_0,...` rows.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let users = self.rate_trace.first().map_or(0, Vec::len);
        let mut header = vec!["iteration".to_string(), "utility".to_string()];
        header.extend((0..users).map(|u| format!("rate_{u}")));
        w.write_record(&header)?;
        for (i, (u, rates)) in self.trace.iter().zip(&self.rate_trace).enumerate() {
            let mut row = vec![i.to_string(), format!("{u:.12e}")];
            row.extend(rates.iter().map(|r| format!("{r:.12e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn relative_gain(new: f64, old: f64) -> f64 {
    (new - old) / old.abs().max(1e-12)
}

/// Full-power matched filters, power split evenly inside each BS group.
pub fn matched_filter_beams(inst: &Instance, ris: &RisState) -> BeamformingSet {
    let t = &inst.topology;
    let h = all_effective_channels(&inst.channels, ris);
    let mut beams = BeamformingSet::zeros(t.num_users(), t.bs_antennas);
    for u in 0..t.num_users() {
        let bs = t.bs_of(u);
        let group =
            (bs * t.users_per_cell..(bs + 1) * t.users_per_cell).filter(|&v| ris.slot(v) == ris.slot(u)).count();
        let hu = &h[u * t.cells + bs];
        let norm = hu.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let p = t.power_budgets[bs] / group as f64;
        beams.x[u] = if norm > 0.0 {
            hu.iter().map(|z| z.conj() * (p.sqrt() / norm)).collect()
        } else {
            let mut x = vec![C64::new(0.0, 0.0); t.bs_antennas];
            x[0] = C64::new(p.sqrt(), 0.0);
            x
        };
    }
    beams
}

fn min_sinr(inst: &Instance, ris: &RisState, beams: &BeamformingSet) -> f64 {
    sinr_all(&inst.channels, ris, beams).into_iter().fold(f64::INFINITY, f64::min)
}

/// Max-min SINR problem for one block: CCP-linearized useful powers over
/// interference-plus-noise, solved by the generalized Dinkelbach method.
fn maxmin_sinr_block(
    links: &[LinkAffine],
    z_bar: &[C64],
    z_start: Vec<C64>,
    constraints: Vec<crate::surrogate::QuadraticForm>,
    noise: f64,
    gda: &DinkelbachOptions,
) -> Result<Option<Vec<C64>>> {
    let mut base = ConvexSubproblem::new(z_bar.len(), 0);
    base.constraints = constraints;
    base.start = Some(Variables::new(z_start, vec![]));
    let program = MaxMinRatioProgram {
        base,
        numerators: links.iter().map(|l| useful_power_lower_bound(l, z_bar)).collect(),
        neg_denominators: links.iter().map(|l| neg_interference(l, noise)).collect(),
        weights: vec![1.0; links.len()],
    };
    let (res, _) = generalized_dinkelbach(&program, gda)?;
    Ok(res.is_usable().then_some(res.vars.complex))
}

/// Heuristic initial point: alternating max-min SINR over beams and surface
/// coefficients, starting from matched filters and `ris0`. Each block
/// update is kept only if it raises the minimum SINR. Returns the beams, the
/// coefficients and the minimum SINR reached.
pub fn init_maxmin_sinr(inst: &Instance, ris0: &RisState, opts: &AoOptions) -> Result<(BeamformingSet, RisState, f64)> {
    let noise = inst.channels.noise_power;
    let mut ris = ris0.clone();
    let mut beams = matched_filter_beams(inst, &ris);
    let mut best = min_sinr(inst, &ris, &beams);
    let layout = beam_layout(inst);
    for _ in 0..opts.init_iters {
        let start_value = best;

        let links = beam_links(&inst.channels, &ris, &layout);
        let z_bar = layout.to_vars(&beams);
        let mut z_start = z_bar.clone();
        shrink_into_balls(&mut z_start, &layout, inst, &ris);
        let cons = power_constraints(inst, &ris, &layout);
        if let Some(z) = maxmin_sinr_block(&links, &z_bar, z_start, cons, noise, &opts.gda)? {
            let mut cand = layout.to_beams(&z);
            cand.clamp_power(&ris, &inst.topology.power_budgets, inst.topology.users_per_cell);
            let v = min_sinr(inst, &ris, &cand);
            if v > best {
                best = v;
                beams = cand;
            }
        }

        if opts.optimize_ris {
            let tl = ThetaLayout::new(&ris);
            if !tl.is_empty() {
                let links = theta_links(&inst.channels, &ris, &beams, &tl);
                let z_bar = tl.to_vars(&ris);
                let eps = opts.ris.ccp.epsilon_relax;
                let shrink = 1.0 - eps.max(1e-3) / 4.0;
                let z_start = z_bar.iter().map(|z| z * shrink).collect();
                let cons = set_constraints(&ris, &tl, &z_bar, eps);
                if let Some(z) = maxmin_sinr_block(&links, &z_bar, z_start, cons, noise, &opts.gda)? {
                    let cand = project(&tl.apply(&ris, &z));
                    let v = min_sinr(inst, &cand, &beams);
                    if v > best {
                        best = v;
                        ris = cand;
                    }
                }
            }
        }

        if relative_gain(best, start_value) < 1e-3 {
            break;
        }
    }
    Ok((beams, ris, best))
}

/// Runs the alternating optimization from the max-min SINR initial point.
/// Energy-efficiency utilities are started from the max-min rate solution.
pub fn optimize(inst: &Instance, ris0: &RisState, opts: &AoOptions) -> Result<AoState> {
    ris0.validate(&inst.topology)?;
    let (mut beams, mut ris, init_min_sinr) = init_maxmin_sinr(inst, ris0, opts)?;
    if inst.utility.has_thresholds() {
        let gamma_zero = inst.fbl.gamma_zero();
        let gamma = sinr_all(&inst.channels, &ris, &beams);
        let short = gamma.iter().zip(&inst.utility.thresholds).any(|(g, t)| *t > 0.0 && *g <= gamma_zero);
        if short {
            return Err(Error::InitializationInfeasible { min_sinr: init_min_sinr, gamma_zero });
        }
    }
    if inst.utility.kind.is_energy() && opts.ee_warm_start {
        let mut rate_utility = inst.utility.clone();
        rate_utility.kind = UtilityKind::MinWeightedRate;
        let warm = run_loop(&inst.with_utility(rate_utility), beams, ris, opts, init_min_sinr)?;
        beams = warm.beams;
        ris = warm.ris;
    }
    run_loop(inst, beams, ris, opts, init_min_sinr)
}

fn run_loop(
    inst: &Instance,
    mut beams: BeamformingSet,
    mut ris: RisState,
    opts: &AoOptions,
    init_min_sinr: f64,
) -> Result<AoState> {
    let report = inst.report(&ris, &beams);
    let mut state = AoState {
        iteration: 0,
        trace: vec![inst.utility.value(&report)],
        rate_trace: vec![report.r],
        beams: beams.clone(),
        ris: ris.clone(),
        converged: false,
        eps_stop: opts.eps_stop,
        max_iter: opts.max_iter,
        beam_kkt: f64::NAN,
        ris_kkt: f64::NAN,
        init_min_sinr,
    };
    for t in 1..=opts.max_iter {
        let prev = state.utility();
        let b = update_beams(inst, &ris, &beams, &opts.beam)?;
        beams = b.beams;
        state.beam_kkt = b.kkt_residual;
        if opts.optimize_ris {
            let r = update_ris(inst, &beams, &ris, &opts.ris)?;
            ris = r.ris;
            state.ris_kkt = r.kkt_residual;
        }
        let report = inst.report(&ris, &beams);
        let value = inst.utility.value(&report);
        state.trace.push(value);
        state.rate_trace.push(report.r);
        state.iteration = t;
        if relative_gain(value, prev) < opts.eps_stop {
            state.converged = true;
            break;
        }
    }
    state.beams = beams;
    state.ris = ris;
    Ok(state)
}

/// Users actually reached by a surface (used for half-coverage scenarios).
pub fn covered_users(ris: &RisState) -> Vec<usize> {
    (0..ris.num_users()).filter(|&u| (0..ris.num_ris()).any(|m| ris.coefficient_side(u, m).is_some())).collect()
}

#![allow(dead_code)]

use starris::harness::{run_baseline, Baseline};
use starris::scenario::{Scenario, TopologySpec};
use starris::topology::Layout;
use starris::{AoState, FeasibilitySet, RisMode, UtilityKind};

/// Desk-scale two-cell layout: 2 users per cell, 4 BS antennas, 8 elements.
pub fn small_layout(power_db: f64) -> Layout {
    Layout { users_per_cell: 2, bs_antennas: 4, ris_elements: 8, power_db, ..Layout::default() }
}

pub fn two_cell(kind: UtilityKind) -> Scenario {
    let mut s = Scenario::default();
    s.topology = TopologySpec::TwoCell(small_layout(20.0));
    s.utility.kind = kind;
    s
}

/// Users split between the two sides of the surfaces.
pub fn half_coverage(kind: UtilityKind) -> Scenario {
    let mut s = two_cell(kind);
    s.topology = TopologySpec::Star(small_layout(20.0));
    s
}

/// The eight surface configurations exercised end to end.
pub const CONFIGS: [Baseline; 8] = [
    Baseline::Tu,
    Baseline::Ti,
    Baseline::Tc,
    Baseline::StarEs(FeasibilitySet::Tsu),
    Baseline::StarEs(FeasibilitySet::Tsi),
    Baseline::StarEs(FeasibilitySet::Tsn),
    Baseline::StarMs,
    Baseline::StarTs,
];

pub fn scenario_for(baseline: Baseline, kind: UtilityKind) -> Scenario {
    match baseline {
        Baseline::StarEs(_) | Baseline::StarMs | Baseline::StarTs => half_coverage(kind),
        _ => two_cell(kind),
    }
}

pub fn run(scenario: &Scenario, baseline: Baseline, seed: u64) -> AoState {
    run_baseline(scenario, baseline, seed).unwrap_or_else(|e| panic!("{baseline} seed {seed}: {e}"))
}

pub fn is_star(mode: RisMode) -> bool {
    !matches!(mode, RisMode::Regular)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

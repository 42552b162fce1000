//! Scenario files (JSON or TOML). The field reference lives in
//! `schema/scenario.schema.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beam_opt::{UtilityKind, UtilitySpec};
use crate::error::{Error, Result};
use crate::framework::{AoOptions, Instance};
use crate::metrics::{latency_threshold, EnergyParams, FblParams};
use crate::ris::{FeasibilitySet, PhaseAmplitudeModel, RisMode, RisState};
use crate::topology::{star_topology, two_cell_topology, Layout, NetworkTopology, PropagationParams};

/// Network geometry: an explicit topology or one of the generated layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Explicit(NetworkTopology),
    TwoCell(Layout),
    Star(Layout),
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::TwoCell(Layout::default())
    }
}

impl TopologySpec {
    pub fn build(&self) -> NetworkTopology {
        match self {
            TopologySpec::Explicit(t) => t.clone(),
            TopologySpec::TwoCell(l) => two_cell_topology(l),
            TopologySpec::Star(l) => star_topology(l),
        }
    }

    pub fn layout_mut(&mut self) -> Option<&mut Layout> {
        match self {
            TopologySpec::Explicit(_) => None,
            TopologySpec::TwoCell(l) | TopologySpec::Star(l) => Some(l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FblConfig {
    pub n_t: f64,
    pub eps_c: f64,
}

impl Default for FblConfig {
    fn default() -> Self {
        Self { n_t: 200.0, eps_c: 1e-3 }
    }
}

/// Deadline `t_c` (seconds) and bandwidth `w` (Hz) that fix the rate
/// threshold `n_t / (t_c w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub t_c: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityConfig {
    pub kind: UtilityKind,
    /// Per-user weights; all ones when absent.
    pub weights: Option<Vec<f64>>,
    /// Rate threshold for every user; overrides `latency`.
    pub threshold: Option<f64>,
    pub latency: Option<LatencyConfig>,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self { kind: UtilityKind::MinWeightedRate, weights: None, threshold: None, latency: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisConfig {
    pub mode: RisMode,
    pub set: FeasibilitySet,
    pub ts_fraction: f64,
    pub amplitude_model: PhaseAmplitudeModel,
    pub epsilon_relax: f64,
}

impl Default for RisConfig {
    fn default() -> Self {
        Self {
            mode: RisMode::Regular,
            set: FeasibilitySet::Ti,
            ts_fraction: 0.5,
            amplitude_model: PhaseAmplitudeModel::default(),
            epsilon_relax: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoConfig {
    pub max_iter: usize,
    pub eps_stop: f64,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self { max_iter: 50, eps_stop: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub topology: TopologySpec,
    pub propagation: PropagationParams,
    pub fbl: FblConfig,
    pub energy: EnergyParams,
    pub utility: UtilityConfig,
    pub ris: RisConfig,
    pub ao: AoConfig,
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a `.json` or `.toml` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            Some("json") => Self::from_json(&text),
            other => Err(Error::Config(format!("unsupported config extension {other:?}"))),
        }
    }

    pub fn fbl_params(&self) -> Result<FblParams> {
        FblParams::new(self.fbl.n_t, self.fbl.eps_c)
    }

    pub fn utility_spec(&self, users: usize) -> Result<UtilitySpec> {
        let mut spec = UtilitySpec::new(self.utility.kind, users);
        if let Some(w) = &self.utility.weights {
            spec.weights = w.clone();
        }
        let r_th = match (self.utility.threshold, self.utility.latency) {
            (Some(t), _) => t,
            (None, Some(l)) => latency_threshold(self.fbl.n_t, l.t_c, l.w)?,
            (None, None) => 0.0,
        };
        spec = spec.with_threshold(r_th);
        spec.validate(users)?;
        Ok(spec)
    }

    /// Topology with user drop seeded by `draw_seed` (generated layouts only).
    pub fn topology_for(&self, draw_seed: u64) -> NetworkTopology {
        let mut spec = self.topology.clone();
        if let Some(l) = spec.layout_mut() {
            l.seed = l.seed.wrapping_add(draw_seed);
        }
        spec.build()
    }

    pub fn instance(&self, draw_seed: u64) -> Result<Instance> {
        let topology = self.topology_for(draw_seed);
        let utility = self.utility_spec(topology.num_users())?;
        Instance::new(topology, &self.propagation, draw_seed, self.fbl_params()?, self.energy, utility)
    }

    pub fn initial_ris(&self, topology: &NetworkTopology, seed: u64) -> Result<RisState> {
        let mut s = RisState::initial(topology, self.ris.mode, self.ris.set, seed)?;
        s.ts_fraction = self.ris.ts_fraction;
        s.amplitude_model = self.ris.amplitude_model;
        s.amplitude_model.validate()?;
        if self.ris.set == FeasibilitySet::Tc {
            s = crate::ris_opt::project(&s);
        }
        s.validate(topology)?;
        Ok(s)
    }

    pub fn ao_options(&self) -> AoOptions {
        let mut o = AoOptions { max_iter: self.ao.max_iter, eps_stop: self.ao.eps_stop, ..AoOptions::default() };
        o.ris.ccp.epsilon_relax = self.ris.epsilon_relax;
        o
    }
}

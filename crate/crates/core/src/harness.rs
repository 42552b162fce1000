//! Monte-Carlo sweeps over one scenario parameter, with paired draws across
//! baselines, and result-table emission.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{optimize, AoState};
use crate::ris::{FeasibilitySet, RisMode, RisState};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PowerDb,
    NBs,
    K,
    NT,
    EpsC,
    PC,
    Iterations,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::PowerDb => "power_db",
            Self::NBs => "n_bs",
            Self::K => "k",
            Self::NT => "n_t",
            Self::EpsC => "eps_c",
            Self::PC => "p_c",
            Self::Iterations => "iterations",
        }
    }

    /// Copy of `scenario` with this parameter set to `value`.
    pub fn apply(self, scenario: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = scenario.clone();
        let count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidParameter(format!("{} must be a positive integer, got {v}", self.name())))
            }
        };
        let layout_only = || Error::InvalidParameter(format!("{} needs a generated layout", self.name()));
        match self {
            Self::PowerDb => match s.topology.layout_mut() {
                Some(l) => l.power_db = value,
                None => {
                    if let crate::scenario::TopologySpec::Explicit(t) = &mut s.topology {
                        t.set_power_db(value);
                    }
                }
            },
            Self::NBs => s.topology.layout_mut().ok_or_else(layout_only)?.bs_antennas = count(value)?,
            Self::K => s.topology.layout_mut().ok_or_else(layout_only)?.users_per_cell = count(value)?,
            Self::NT => s.fbl.n_t = value,
            Self::EpsC => s.fbl.eps_c = value,
            Self::PC => s.energy.p_c = value,
            Self::Iterations => s.ao.max_iter = count(value)?,
        }
        Ok(s)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Compared schemes. All run on the same channel draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Baseline {
    NoRis,
    RandomRis,
    Ti,
    Tu,
    Tc,
    ShannonTi,
    StarEs(FeasibilitySet),
    StarMs,
    StarTs,
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::NoRis => "NoRIS",
            Self::RandomRis => "RandomRIS",
            Self::Ti => "TI",
            Self::Tu => "TU",
            Self::Tc => "TC",
            Self::ShannonTi => "Shannon-TI",
            Self::StarEs(FeasibilitySet::Tsu) => "ES-TSU",
            Self::StarEs(FeasibilitySet::Tsn) => "ES-TSN",
            Self::StarEs(_) => "ES-TSI",
            Self::StarMs => "MS",
            Self::StarTs => "TS",
        };
        f.write_str(s)
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "NoRIS" => Self::NoRis,
            "RandomRIS" => Self::RandomRis,
            "TI" => Self::Ti,
            "TU" => Self::Tu,
            "TC" => Self::Tc,
            "Shannon-TI" => Self::ShannonTi,
            "ES-TSU" => Self::StarEs(FeasibilitySet::Tsu),
            "ES-TSI" => Self::StarEs(FeasibilitySet::Tsi),
            "ES-TSN" => Self::StarEs(FeasibilitySet::Tsn),
            "MS" => Self::StarMs,
            "TS" => Self::StarTs,
            other => return Err(Error::Config(format!("unknown baseline {other:?}"))),
        })
    }
}

impl TryFrom<String> for Baseline {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Baseline> for String {
    fn from(b: Baseline) -> String {
        b.to_string()
    }
}

impl Baseline {
    /// Surface mode, feasibility set and whether coefficients are optimized.
    fn surface(self) -> (RisMode, FeasibilitySet, bool) {
        match self {
            Self::NoRis => (RisMode::Regular, FeasibilitySet::Tu, false),
            Self::RandomRis => (RisMode::Regular, FeasibilitySet::Ti, false),
            Self::Ti | Self::ShannonTi => (RisMode::Regular, FeasibilitySet::Ti, true),
            Self::Tu => (RisMode::Regular, FeasibilitySet::Tu, true),
            Self::Tc => (RisMode::Regular, FeasibilitySet::Tc, true),
            Self::StarEs(set) => (RisMode::StarEs, set, true),
            Self::StarMs => (RisMode::StarMs, FeasibilitySet::Tsi, true),
            Self::StarTs => (RisMode::StarTs, FeasibilitySet::Tsi, true),
        }
    }
}

/// Runs one baseline on draw `draw_seed` of `scenario`.
pub fn run_baseline(scenario: &Scenario, baseline: Baseline, draw_seed: u64) -> Result<AoState> {
    let mut inst = scenario.instance(draw_seed)?;
    if baseline == Baseline::ShannonTi {
        inst.fbl = inst.fbl.shannon();
    }
    let (mode, set, optimize_ris) = baseline.surface();
    let mut s = scenario.clone();
    s.ris.mode = mode;
    s.ris.set = set;
    let ris = match baseline {
        Baseline::NoRis => {
            let mut r = RisState::off(&inst.topology);
            r.ts_fraction = scenario.ris.ts_fraction;
            r
        }
        _ => s.initial_ris(&inst.topology, draw_seed)?,
    };
    let mut opts = s.ao_options();
    opts.optimize_ris = optimize_ris;
    optimize(&inst, &ris, &opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub scenario: Scenario,
    pub baselines: Vec<Baseline>,
    pub num_draws: usize,
    pub base_seed: u64,
    /// Record wall-clock seconds per cell; off keeps output bit-stable.
    #[serde(default)]
    pub record_timing: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.baselines.is_empty() || self.num_draws == 0 {
            return Err(Error::InvalidParameter("sweep needs values, baselines and at least one draw".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_param: String,
    pub value: f64,
    pub baseline: String,
    /// Mean over the successful draws; absent when every draw failed.
    pub utility_mean: Option<f64>,
    pub utility_stderr: Option<f64>,
    /// Number of successful draws.
    pub draws: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// Failed (value, baseline, draw) runs.
    #[serde(default)]
    pub failures: usize,
}

impl ResultTable {
    pub fn row(&self, value: f64, baseline: Baseline) -> Option<&ResultRow> {
        let name = baseline.to_string();
        self.rows.iter().find(|r| r.value == value && r.baseline == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sweep_param", "value", "baseline", "utility_mean", "utility_stderr", "draws", "seconds"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.sweep_param.clone(),
                r.value.to_string(),
                r.baseline.clone(),
                opt(r.utility_mean),
                opt(r.utility_stderr),
                r.draws.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

pub fn emit(table: &ResultTable, path: &Path, format: OutputFormat) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => table.to_csv()?,
        OutputFormat::Json => table.to_json()?,
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn mean_stderr(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let stderr =
        if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt() } else { 0.0 };
    (Some(mean), Some(stderr))
}

/// Per-run outcome, kept for paired comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub value: f64,
    pub baseline: Baseline,
    pub draw: usize,
    pub utility: Option<f64>,
    pub seconds: f64,
}

/// Executes every (value, draw, baseline) run on the rayon pool and returns
/// the records in key order.
pub fn run_records(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let scenarios = spec.values.iter().map(|&v| spec.param.apply(&spec.scenario, v)).collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (vi, &value) in spec.values.iter().enumerate() {
        for draw in 0..spec.num_draws {
            for &baseline in &spec.baselines {
                jobs.push((vi, value, draw, baseline));
            }
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(vi, value, draw, baseline)| {
            let started = Instant::now();
            let seed = spec.base_seed.wrapping_add(draw as u64);
            let utility = match run_baseline(&scenarios[vi], baseline, seed) {
                Ok(state) => Some(state.utility()),
                Err(e) => {
                    log::warn!("{} = {value}, {baseline}, draw {draw}: {e}", spec.param);
                    None
                }
            };
            let seconds = if spec.record_timing { started.elapsed().as_secs_f64() } else { 0.0 };
            RunRecord { value, baseline, draw, utility, seconds }
        })
        .collect())
}

/// Aggregates records into one row per (value, baseline), in grid order.
pub fn tabulate(spec: &SweepSpec, records: &[RunRecord]) -> ResultTable {
    let mut table = ResultTable::default();
    for &value in &spec.values {
        for &baseline in &spec.baselines {
            let cell: Vec<&RunRecord> = records.iter().filter(|r| r.value == value && r.baseline == baseline).collect();
            let ok: Vec<f64> = cell.iter().filter_map(|r| r.utility).collect();
            table.failures += cell.len() - ok.len();
            let (mean, stderr) = mean_stderr(&ok);
            table.rows.push(ResultRow {
                sweep_param: spec.param.name().to_string(),
                value,
                baseline: baseline.to_string(),
                utility_mean: mean,
                utility_stderr: stderr,
                draws: ok.len(),
                seconds: cell.iter().map(|r| r.seconds).sum(),
            });
        }
    }
    table
}

pub fn run_sweep(spec: &SweepSpec) -> Result<ResultTable> {
    let records = run_records(spec)?;
    Ok(tabulate(spec, &records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_names_round_trip() {
        for b in [
            Baseline::NoRis,
            Baseline::RandomRis,
            Baseline::Ti,
            Baseline::Tu,
            Baseline::Tc,
            Baseline::ShannonTi,
            Baseline::StarEs(FeasibilitySet::Tsu),
            Baseline::StarEs(FeasibilitySet::Tsi),
            Baseline::StarEs(FeasibilitySet::Tsn),
            Baseline::StarMs,
            Baseline::StarTs,
        ] {
            assert_eq!(b.to_string().parse::<Baseline>().unwrap(), b);
        }
        assert!("XX".parse::<Baseline>().is_err());
    }

    #[test]
    fn empty_table_is_header_only() {
        let csv = ResultTable::default().to_csv().unwrap();
        assert_eq!(csv, "sweep_param,value,baseline,utility_mean,utility_stderr,draws,seconds\n");
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (Some(2.0), Some(0.0)));
        assert_eq!(mean_stderr(&[]), (None, None));
    }
}

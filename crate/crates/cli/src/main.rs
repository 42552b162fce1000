use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use starris::harness::{emit, run_baseline, run_sweep, Baseline, OutputFormat, SweepSpec};
use starris::metrics::{lemma2_analysis, lemma2_curve};
use starris::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "starris",
    version,
    about = "Rate and energy-efficiency optimization for RIS-assisted short-packet links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario (single, analyze-fbl) or sweep spec (sweep), JSON or TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep of one parameter over several baselines.
    Sweep(Common),
    /// One optimization run; emits the utility trace.
    Single {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "TI")]
        baseline: Baseline,
    },
    /// Dump of f(γ) = ln(1+γ) - a sqrt(γ/(1+γ)) with its minimizer and root.
    AnalyzeFbl {
        #[command(flatten)]
        common: Common,
        /// Penalty coefficient; derived from the scenario's n_t and eps_c when absent.
        #[arg(long)]
        a: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        /// Largest γ on the grid, as a multiple of the root.
        #[arg(long, default_value_t = 3.0)]
        span: f64,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_sweep(path: &Path) -> Result<SweepSpec> {
    let text = read_text(path)?;
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text)?,
        _ => serde_json::from_str(&text)?,
    })
}

fn load_scenario(common: &Common) -> Result<Scenario> {
    match &common.config {
        Some(p) => Ok(Scenario::load(p)?),
        None => Ok(Scenario::default()),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn sweep(common: &Common) -> Result<ExitCode> {
    let Some(path) = &common.config else { bail!("sweep needs --config") };
    let mut spec = load_sweep(path)?;
    if let Some(s) = common.seed {
        spec.base_seed = s;
    }
    if let Some(d) = common.draws {
        spec.num_draws = d;
    }
    let table = run_sweep(&spec)?;
    match &common.out {
        Some(p) => emit(&table, p, common.format)?,
        None => {
            let text = match common.format {
                OutputFormat::Csv => table.to_csv()?,
                OutputFormat::Json => table.to_json()?,
            };
            write_out(None, &text)?;
        }
    }
    if table.failures > 0 {
        log::warn!("{} runs failed", table.failures);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn single(common: &Common, baseline: Baseline) -> Result<ExitCode> {
    let scenario = load_scenario(common)?;
    let seed = common.seed.unwrap_or(scenario.seed);
    let state = run_baseline(&scenario, baseline, seed)?;
    let text = match common.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            state.write_trace_csv(&mut buf)?;
            String::from_utf8(buf)?
        }
        OutputFormat::Json => serde_json::to_string_pretty(&json!({
            "baseline": baseline.to_string(),
            "seed": seed,
            "utility": state.utility(),
            "iterations": state.iteration,
            "converged": state.converged,
            "trace": state.trace,
            "rates": state.rate_trace.last(),
        }))?,
    };
    write_out(common.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn analyze_fbl(common: &Common, a: Option<f64>, points: usize, span: f64) -> Result<ExitCode> {
    let a = match a {
        Some(a) => a,
        None => load_scenario(common)?.fbl_params()?.penalty_coefficient(),
    };
    if points < 2 || !(span > 0.0) {
        bail!("need at least two points and a positive span");
    }
    let an = lemma2_analysis(a)?;
    let top = span * an.gamma_zero;
    let grid: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let g = top * i as f64 / (points - 1) as f64;
            (g, lemma2_curve(a, g))
        })
        .collect();
    let text = match common.format {
        OutputFormat::Csv => {
            let mut s = format!(
                "# a={} gamma_star={} gamma_zero={} f_min={}\ngamma,f\n",
                an.a, an.gamma_star, an.gamma_zero, an.f_min
            );
            for (g, f) in &grid {
                s.push_str(&format!("{g},{f}\n"));
            }
            s
        }
        OutputFormat::Json => serde_json::to_string_pretty(&json!({
            "analysis": an,
            "gamma": grid.iter().map(|p| p.0).collect::<Vec<_>>(),
            "f": grid.iter().map(|p| p.1).collect::<Vec<_>>(),
        }))?,
    };
    write_out(common.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(c) => sweep(c),
        Command::Single { common, baseline } => single(common, *baseline),
        Command::AnalyzeFbl { common, a, points, span } => analyze_fbl(common, *a, *points, *span),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

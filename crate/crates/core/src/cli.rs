//! Command-line front end: flag and config-file parsing, presets, and
//! CSV/manifest output.
//!
//! Config files are flat `key = value` lines using the flag names without
//! the leading dashes. Flags override the file, which overrides defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;

use crate::adversary::{AdversaryMode, AttackKind};
use crate::error::{Error, Result};
use crate::harness::{AggregateResult, Algo, ExperimentConfig, RewardChoice};
use crate::metric_space::{Metric, SampleMode};
use crate::rmel::RmelVariant;

/// Every key a config file or flag may set, in emission order.
pub const CONFIG_KEYS: [&str; 24] = [
    "algo",
    "reward",
    "attack",
    "adversary",
    "budget",
    "known-budget",
    "horizon",
    "delta",
    "dim",
    "metric",
    "sigma",
    "sigma-adjust",
    "capped",
    "B",
    "rmel-variant",
    "sample-mode",
    "bob-restart",
    "grid-depth",
    "lb-epsilon",
    "lb-cell",
    "reps",
    "seed",
    "stride",
    "record-log",
];

#[derive(Debug, Clone, Default, Parser)]
#[command(name = "lipbandit", version, about = "Simulate Lipschitz bandits under adversarial corruption")]
pub struct CliArgs {
    /// zooming | robust-zooming | rmel | rmel-alt | bob
    #[arg(long)]
    pub algo: Option<String>,
    /// triangle | sine | twodim | lower-bound
    #[arg(long)]
    pub reward: Option<String>,
    /// none | oracle | garcelon | lower-bound
    #[arg(long)]
    pub attack: Option<String>,
    /// weak | strong
    #[arg(long)]
    pub adversary: Option<String>,
    /// Adversary's total corruption budget C
    #[arg(long)]
    pub budget: Option<String>,
    /// Budget Robust Zooming defends against
    #[arg(long = "known-budget")]
    pub known_budget: Option<String>,
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    /// Arm-space dimension of the lower-bound instance
    #[arg(long)]
    pub dim: Option<String>,
    /// linf | l2
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    /// on | off: scale confidence widths by sigma
    #[arg(long = "sigma-adjust")]
    pub sigma_adjust: Option<String>,
    /// on | off: cap the corruption term of the radius at 1
    #[arg(long)]
    pub capped: Option<String>,
    /// RMEL layer ratio
    #[arg(long = "B")]
    pub base: Option<String>,
    /// epoch | round
    #[arg(long = "rmel-variant")]
    pub rmel_variant: Option<String>,
    /// uniform | center
    #[arg(long = "sample-mode")]
    pub sample_mode: Option<String>,
    /// on | off
    #[arg(long = "bob-restart")]
    pub bob_restart: Option<String>,
    /// Candidate grid depth, or auto
    #[arg(long = "grid-depth")]
    pub grid_depth: Option<String>,
    /// Lower-bound cell width, or auto
    #[arg(long = "lb-epsilon")]
    pub lb_epsilon: Option<String>,
    /// One-based rewarding cell of the lower-bound instance
    #[arg(long = "lb-cell")]
    pub lb_cell: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Trace thinning
    #[arg(long)]
    pub stride: Option<String>,
    /// on | off: keep a per-round log in memory
    #[arg(long = "record-log")]
    pub record_log: Option<String>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// paper-strong | paper-weak | smoke
    #[arg(long)]
    pub preset: Option<String>,
    /// Flat key = value config file
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl CliArgs {
    /// Flags that were given, as `(key, value)` pairs.
    pub fn pairs(&self) -> Vec<(&'static str, &str)> {
        let fields: [&Option<String>; 24] = [
            &self.algo,
            &self.reward,
            &self.attack,
            &self.adversary,
            &self.budget,
            &self.known_budget,
            &self.horizon,
            &self.delta,
            &self.dim,
            &self.metric,
            &self.sigma,
            &self.sigma_adjust,
            &self.capped,
            &self.base,
            &self.rmel_variant,
            &self.sample_mode,
            &self.bob_restart,
            &self.grid_depth,
            &self.lb_epsilon,
            &self.lb_cell,
            &self.reps,
            &self.seed,
            &self.stride,
            &self.record_log,
        ];
        CONFIG_KEYS
            .iter()
            .zip(fields)
            .filter_map(|(&k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?} as a number")))
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on or off, got {value:?}"))),
    }
}

fn switch(b: bool) -> String {
    if b { "on" } else { "off" }.to_string()
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T> {
    options.iter().find(|(name, _)| *name == value).map(|&(_, v)| v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("{key}: unknown value {value:?}, expected one of {}", names.join(", ")))
    })
}

pub fn parse_algo(value: &str) -> Result<Algo> {
    let options: Vec<(&str, Algo)> = Algo::ALL.iter().map(|&a| (a.name(), a)).collect();
    choice("algo", value, &options)
}

pub fn parse_reward(value: &str) -> Result<RewardChoice> {
    use RewardChoice::*;
    choice("reward", value, &[("triangle", Triangle), ("sine", Sine), ("twodim", TwoDim), ("lower-bound", LowerBound)])
}

pub fn parse_attack(value: &str) -> Result<AttackKind> {
    use AttackKind::*;
    choice("attack", value, &[("none", None), ("oracle", Oracle), ("garcelon", Garcelon), ("lower-bound", LowerBound)])
}

pub fn parse_adversary(value: &str) -> Result<AdversaryMode> {
    choice("adversary", value, &[("weak", AdversaryMode::Weak), ("strong", AdversaryMode::Strong)])
}

/// Sets one key on `cfg`.
pub fn apply_pair(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let value = value.trim();
    match key {
        "algo" => cfg.algo = parse_algo(value)?,
        "reward" => cfg.reward = parse_reward(value)?,
        "attack" => cfg.attack = parse_attack(value)?,
        "adversary" => cfg.adversary = parse_adversary(value)?,
        "budget" => cfg.budget = parse_num(key, value)?,
        "known-budget" => cfg.known_budget = parse_num(key, value)?,
        "horizon" => cfg.horizon = parse_num(key, value)?,
        "delta" => cfg.delta = parse_num(key, value)?,
        "dim" => cfg.dim = parse_num(key, value)?,
        "metric" => cfg.metric = choice(key, value, &[("linf", Metric::LInf), ("l2", Metric::L2)])?,
        "sigma" => cfg.sigma = parse_num(key, value)?,
        "sigma-adjust" => cfg.sigma_adjust = parse_switch(key, value)?,
        "capped" => cfg.capped = parse_switch(key, value)?,
        "B" => cfg.base = parse_num(key, value)?,
        "rmel-variant" => {
            cfg.rmel_variant = choice(key, value, &[("epoch", RmelVariant::Epoch), ("round", RmelVariant::Round)])?
        }
        "sample-mode" => {
            cfg.sample_mode = choice(key, value, &[("uniform", SampleMode::Uniform), ("center", SampleMode::Center)])?
        }
        "bob-restart" => cfg.bob_restart = parse_switch(key, value)?,
        "grid-depth" => cfg.grid_depth = if value == "auto" { None } else { Some(parse_num(key, value)?) },
        "lb-epsilon" => cfg.lb_epsilon = if value == "auto" { None } else { Some(parse_num(key, value)?) },
        "lb-cell" => cfg.lb_cell = parse_num(key, value)?,
        "reps" => cfg.reps = parse_num(key, value)?,
        "seed" => cfg.seed = parse_num(key, value)?,
        "stride" => cfg.stride = parse_num(key, value)?,
        "record-log" => cfg.record_log = parse_switch(key, value)?,
        _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
    }
    Ok(())
}

/// Every key of `cfg` with its value, in `CONFIG_KEYS` order.
pub fn config_pairs(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    let metric = match cfg.metric {
        Metric::LInf => "linf",
        Metric::L2 => "l2",
    };
    let sample_mode = match cfg.sample_mode {
        SampleMode::Uniform => "uniform",
        SampleMode::Center => "center",
    };
    let values = [
        cfg.algo.name().to_string(),
        cfg.reward.name().to_string(),
        cfg.attack.name().to_string(),
        cfg.adversary.name().to_string(),
        format_number(cfg.budget),
        format_number(cfg.known_budget),
        cfg.horizon.to_string(),
        format_number(cfg.delta),
        cfg.dim.to_string(),
        metric.to_string(),
        format_number(cfg.sigma),
        switch(cfg.sigma_adjust),
        switch(cfg.capped),
        format_number(cfg.base),
        cfg.rmel_variant.name().to_string(),
        sample_mode.to_string(),
        switch(cfg.bob_restart),
        cfg.grid_depth.map_or("auto".into(), |g| g.to_string()),
        cfg.lb_epsilon.map_or("auto".into(), format_number),
        cfg.lb_cell.to_string(),
        cfg.reps.to_string(),
        cfg.seed.to_string(),
        cfg.stride.to_string(),
        switch(cfg.record_log),
    ];
    CONFIG_KEYS.into_iter().zip(values).collect()
}

/// Renders `cfg` as a config file.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    config_pairs(cfg).into_iter().fold(String::new(), |mut out, (k, v)| {
        let _ = writeln!(out, "{k} = {v}");
        out
    })
}

/// Splits config text into pairs; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Defaults, then `file_text`, then the flags; validated.
pub fn parse_config(args: &CliArgs, file_text: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(text) = file_text {
        for (k, v) in parse_config_text(text)? {
            apply_pair(&mut cfg, &k, &v)?;
        }
    }
    for (k, v) in args.pairs() {
        apply_pair(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A preset cell with its address.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetCell {
    pub key: String,
    pub config: ExperimentConfig,
}

/// Address of a cell: `reward-attack-adversary-C<budget>-algo`.
pub fn cell_key(cfg: &ExperimentConfig) -> String {
    format!(
        "{}-{}-{}-C{}-{}",
        cfg.reward.name(),
        cfg.attack.name(),
        cfg.adversary.name(),
        format_number(cfg.budget),
        cfg.algo.name()
    )
}

fn table_grid(adversary: AdversaryMode, horizon_1d: u64, horizon_2d: u64, reps: u32) -> Vec<PresetCell> {
    let mut cells = Vec::new();
    for reward in [RewardChoice::Triangle, RewardChoice::Sine, RewardChoice::TwoDim] {
        for attack in [AttackKind::Oracle, AttackKind::Garcelon] {
            for budget in [0.0f64, 3000.0, 4500.0] {
                for algo in [Algo::Zooming, Algo::Rmel, Algo::Bob] {
                    let horizon = if reward == RewardChoice::TwoDim { horizon_2d } else { horizon_1d };
                    let config = ExperimentConfig {
                        algo,
                        reward,
                        attack,
                        adversary,
                        budget: budget.min(horizon as f64),
                        horizon,
                        delta: 0.01,
                        sigma: 0.1,
                        bob_restart: false,
                        reps,
                        ..Default::default()
                    };
                    cells.push(PresetCell { key: cell_key(&config), config });
                }
            }
        }
    }
    cells
}

/// `paper-strong`, `paper-weak`, or `smoke`.
pub fn preset(name: &str) -> Result<Vec<PresetCell>> {
    match name {
        "paper-strong" => Ok(table_grid(AdversaryMode::Strong, 50_000, 60_000, 20)),
        "paper-weak" => Ok(table_grid(AdversaryMode::Weak, 50_000, 60_000, 20)),
        "smoke" => Ok(table_grid(AdversaryMode::Strong, 2000, 2000, 3)
            .into_iter()
            .map(|mut c| {
                c.config.stride = 10;
                c
            })
            .collect()),
        _ => Err(Error::Config(format!(
            "unknown preset {name:?}, expected paper-strong, paper-weak or smoke"
        ))),
    }
}

/// Decimal rendering that round-trips exactly.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub key: String,
    pub config: Vec<(String, String)>,
    pub seeds: Vec<u64>,
    pub wall_clock_secs: f64,
    /// Extra reported quantities, e.g. the lower-bound reference rate.
    pub notes: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, result: &AggregateResult, wall_clock_secs: f64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            key: cell_key(cfg),
            config: config_pairs(cfg).into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            seeds: result.seeds(),
            wall_clock_secs,
            notes: Vec::new(),
        }
    }

    /// Rebuilds the config the manifest echoes.
    pub fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in &self.config {
            apply_pair(&mut cfg, k, v)?;
        }
        Ok(cfg)
    }
}

pub const TRACE_HEADER: &str = "rep,t,cum_regret,budget_spent";
pub const SUMMARY_HEADER: &str = "algo,reward,attack,adversary,C,T,reps,mean_final_regret,std_final_regret";

pub fn trace_csv(result: &AggregateResult) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for (rep, summary) in result.reps.iter().enumerate() {
        for &(t, regret, spent) in &summary.points {
            let _ = writeln!(out, "{rep},{t},{},{}", format_number(regret), format_number(spent));
        }
    }
    out
}

pub fn summary_row(cfg: &ExperimentConfig, result: &AggregateResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        cfg.algo.name(),
        cfg.reward.name(),
        cfg.attack.name(),
        cfg.adversary.name(),
        format_number(cfg.budget),
        cfg.horizon,
        cfg.reps,
        format_number(result.mean_final_regret),
        format_number(result.std_final_regret)
    )
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes `trace.csv`, `summary.csv` and `manifest.json` into `out_dir`.
pub fn emit_results(
    cfg: &ExperimentConfig,
    result: &AggregateResult,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    write(&out_dir.join("trace.csv"), &trace_csv(result))?;
    write(&out_dir.join("summary.csv"), &format!("{SUMMARY_HEADER}\n{}\n", summary_row(cfg, result)))?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Io(e.to_string()))?;
    write(&out_dir.join("manifest.json"), &json)
}

/// Writes one subdirectory per cell plus a combined `summary.csv`.
pub fn emit_preset(cells: &[(PresetCell, AggregateResult, RunManifest)], out_dir: &Path) -> Result<()> {
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for (cell, result, manifest) in cells {
        emit_results(&cell.config, result, manifest, &out_dir.join(&cell.key))?;
        summary.push_str(&summary_row(&cell.config, result));
        summary.push('\n');
    }
    write(&out_dir.join("summary.csv"), &summary)
}

/// `C^(1/(d+1)) T^(d/(d+1))`, the rate the lower-bound instance forces.
pub fn lower_bound_rate(budget: f64, horizon: u64, dim: usize) -> f64 {
    let d = dim as f64;
    budget.powf(1.0 / (d + 1.0)) * (horizon as f64).powf(d / (d + 1.0))
}

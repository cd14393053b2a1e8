//! The per-round simulation loop, regret accounting, and repetitions.
//!
//! Every run derives four independent ChaCha streams from its seed (noise,
//! adversary, policy decisions, in-region sampling), so turning an attack on
//! or off never shifts the noise sequence a paired run sees.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    make_lower_bound_instance, Adversary, AdversaryMode, AttackContext, AttackKind, AttackSpec, BudgetLedger,
};
use crate::bob::{BobParams, BobPolicy};
use crate::environment::{NoiseModel, RewardFunction};
use crate::error::{Error, Result};
use crate::metric_space::{Arm, Metric, SampleMode};
use crate::policy::{Policy, PolicyRngs, SimRng};
use crate::rmel::{RmelParams, RmelPolicy, RmelVariant};
use crate::zooming::{default_grid_depth, ZoomingParams, ZoomingPolicy};

const NOISE_STREAM: u64 = 1;
const ADVERSARY_STREAM: u64 = 2;
const DECISION_STREAM: u64 = 3;
const SAMPLING_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    Zooming,
    RobustZooming,
    Rmel,
    RmelAlt,
    Bob,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Zooming, Algo::RobustZooming, Algo::Rmel, Algo::RmelAlt, Algo::Bob];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Zooming => "zooming",
            Algo::RobustZooming => "robust-zooming",
            Algo::Rmel => "rmel",
            Algo::RmelAlt => "rmel-alt",
            Algo::Bob => "bob",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardChoice {
    Triangle,
    Sine,
    TwoDim,
    LowerBound,
}

impl RewardChoice {
    pub fn name(self) -> &'static str {
        match self {
            RewardChoice::Triangle => "triangle",
            RewardChoice::Sine => "sine",
            RewardChoice::TwoDim => "twodim",
            RewardChoice::LowerBound => "lower-bound",
        }
    }
}

/// Everything one experiment cell needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub reward: RewardChoice,
    pub attack: AttackKind,
    pub adversary: AdversaryMode,
    /// Adversary's total budget `C`.
    pub budget: f64,
    /// Budget Robust Zooming defends against.
    pub known_budget: f64,
    pub horizon: u64,
    pub delta: f64,
    /// Dimension for the lower-bound instance; the other rewards fix it.
    pub dim: usize,
    pub metric: Metric,
    pub sigma: f64,
    /// Scale the stochastic confidence terms of every policy by `sigma`.
    pub sigma_adjust: bool,
    pub capped: bool,
    /// RMEL layer ratio `B`.
    pub base: f64,
    pub rmel_variant: RmelVariant,
    pub sample_mode: SampleMode,
    pub bob_restart: bool,
    pub grid_depth: Option<u32>,
    /// Lower-bound cell width; defaults to `(C/T)^(1/(d+1))`.
    pub lb_epsilon: Option<f64>,
    /// One-based rewarding cell of the lower-bound instance.
    pub lb_cell: u64,
    pub reps: u32,
    pub seed: u64,
    pub stride: u64,
    pub record_log: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Zooming,
            reward: RewardChoice::Triangle,
            attack: AttackKind::None,
            adversary: AdversaryMode::Strong,
            budget: 0.0,
            known_budget: 0.0,
            horizon: 50_000,
            delta: 0.01,
            dim: 1,
            metric: Metric::LInf,
            sigma: 0.1,
            sigma_adjust: true,
            capped: true,
            base: 2.0,
            rmel_variant: RmelVariant::Epoch,
            sample_mode: SampleMode::Uniform,
            bob_restart: true,
            grid_depth: None,
            lb_epsilon: None,
            lb_cell: 1,
            reps: 20,
            seed: 0,
            stride: 50,
            record_log: false,
        }
    }
}

impl ExperimentConfig {
    /// Dimension of the arm space this config runs in.
    pub fn effective_dim(&self) -> usize {
        match self.reward {
            RewardChoice::Triangle | RewardChoice::Sine => 1,
            RewardChoice::TwoDim => 2,
            RewardChoice::LowerBound => self.dim,
        }
    }

    pub fn effective_grid_depth(&self) -> u32 {
        self.grid_depth.unwrap_or_else(|| default_grid_depth(self.effective_dim()))
    }

    /// Multiplier on the stochastic confidence terms. A noiseless run keeps
    /// the unit-noise widths.
    pub fn noise_scale(&self) -> f64 {
        if self.sigma_adjust && self.sigma > 0.0 {
            self.sigma
        } else {
            1.0
        }
    }

    pub fn lower_bound_epsilon(&self) -> f64 {
        self.lb_epsilon.unwrap_or_else(|| {
            if self.budget > 0.0 {
                (self.budget / self.horizon as f64).powf(1.0 / (self.effective_dim() as f64 + 1.0))
            } else {
                0.25
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta {} must lie in (0, 1)", self.delta)));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.budget >= 0.0) || self.budget > self.horizon as f64 {
            return Err(Error::Config(format!("budget {} must lie in [0, T]", self.budget)));
        }
        if !(self.known_budget >= 0.0) {
            return Err(Error::Config(format!("known budget {} must be >= 0", self.known_budget)));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::Config(format!("sigma {} must be finite and >= 0", self.sigma)));
        }
        if self.dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if self.attack == AttackKind::LowerBound && self.reward != RewardChoice::LowerBound {
            return Err(Error::Config("the lower-bound attack needs the lower-bound reward".into()));
        }
        if self.attack == AttackKind::Garcelon && self.effective_dim() > 2 {
            return Err(Error::Config(format!(
                "garcelon has no target region in d = {}",
                self.effective_dim()
            )));
        }
        if self.algo == Algo::Bob && self.horizon < 2 {
            return Err(Error::Config("bob needs T >= 2".into()));
        }
        Ok(())
    }
}

/// Reward, attack and noise resolved from a config, shared by all reps.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub reward: RewardFunction,
    pub attack: AttackSpec,
    pub noise: NoiseModel,
    pub metric: Metric,
    pub ctx: AttackContext,
}

impl Scenario {
    pub fn new(reward: RewardFunction, attack: AttackSpec, noise: NoiseModel, metric: Metric) -> Result<Self> {
        attack.validate(reward.dim())?;
        let ctx = AttackContext::compute(&reward, metric, &attack)?;
        Ok(Self { reward, attack, noise, metric, ctx })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (reward, mut attack) = match cfg.reward {
            RewardChoice::Triangle => (RewardFunction::triangle(), AttackSpec::new(cfg.attack, cfg.adversary, cfg.budget)),
            RewardChoice::Sine => (RewardFunction::sine(), AttackSpec::new(cfg.attack, cfg.adversary, cfg.budget)),
            RewardChoice::TwoDim => (RewardFunction::two_dim(), AttackSpec::new(cfg.attack, cfg.adversary, cfg.budget)),
            RewardChoice::LowerBound => {
                let (reward, lb_spec) =
                    make_lower_bound_instance(cfg.dim, cfg.lower_bound_epsilon(), cfg.lb_cell, cfg.budget)?;
                let mut spec = AttackSpec::new(cfg.attack, cfg.adversary, cfg.budget);
                spec.lower_bound = lb_spec.lower_bound;
                (reward, spec)
            }
        };
        if cfg.attack != AttackKind::LowerBound {
            attack.lower_bound = None;
        }
        Scenario::new(reward, attack, NoiseModel::new(cfg.sigma)?, cfg.metric)
    }

    pub fn mu_star(&self) -> f64 {
        self.ctx.mu_star
    }
}

/// Builds the policy a config names.
pub fn build_policy(cfg: &ExperimentConfig) -> Result<Box<dyn Policy + Send>> {
    let dim = cfg.effective_dim();
    let zooming = |budget: f64| ZoomingParams {
        horizon: cfg.horizon,
        delta: cfg.delta,
        budget,
        capped: cfg.capped,
        sigma: cfg.noise_scale(),
        grid_depth: cfg.effective_grid_depth(),
        dim,
        metric: cfg.metric,
    };
    Ok(match cfg.algo {
        Algo::Zooming => Box::new(ZoomingPolicy::new(zooming(0.0))?),
        Algo::RobustZooming => Box::new(ZoomingPolicy::new(zooming(cfg.known_budget))?),
        Algo::Rmel | Algo::RmelAlt => {
            let mut p = RmelParams::new(cfg.horizon, cfg.delta, cfg.base, dim);
            p.variant = if cfg.algo == Algo::RmelAlt { RmelVariant::Round } else { cfg.rmel_variant };
            p.sample_mode = cfg.sample_mode;
            p.noise_scale = cfg.noise_scale();
            Box::new(RmelPolicy::new(p)?)
        }
        Algo::Bob => {
            let mut p = BobParams::new(cfg.horizon, cfg.delta, dim);
            p.metric = cfg.metric;
            p.sigma = cfg.noise_scale();
            p.capped = cfg.capped;
            p.grid_depth = cfg.effective_grid_depth();
            p.restart_each_batch = cfg.bob_restart;
            Box::new(BobPolicy::new(p)?)
        }
    })
}

/// One round as the simulator saw it.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    pub arm: Arm,
    pub mean: f64,
    pub raw: f64,
    pub observed: f64,
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub seed: u64,
    /// `mu(x_*) - mu(x_t)`, floored at zero.
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub budget_spent: Vec<f64>,
    pub log: Option<Vec<RoundRecord>>,
    pub ledger: BudgetLedger,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn horizon(&self) -> u64 {
        self.instant.len() as u64
    }

    /// `(t, cumulative regret, budget spent)` at `t = stride, 2 stride, ...`
    /// plus the final round.
    pub fn strided(&self, stride: u64) -> Vec<(u64, f64, f64)> {
        strided_rounds(self.horizon(), stride)
            .map(|t| (t, self.cumulative[t as usize - 1], self.budget_spent[t as usize - 1]))
            .collect()
    }
}

/// Rounds kept by a trace at the given stride: `ceil(T / stride)` of them.
pub fn strided_rounds(horizon: u64, stride: u64) -> impl Iterator<Item = u64> {
    (1..=horizon.div_ceil(stride)).map(move |k| (k * stride).min(horizon))
}

/// Runs the config's own policy for one seed.
pub fn run_once(cfg: &ExperimentConfig, seed: u64) -> Result<RegretTrace> {
    let scenario = Scenario::from_config(cfg)?;
    let mut policy = build_policy(cfg)?;
    run_with_policy(cfg, &scenario, seed, policy.as_mut())
}

/// The simulation loop with an externally supplied policy and scenario.
/// Only `horizon` and `record_log` are read from `cfg`.
pub fn run_with_policy(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    seed: u64,
    policy: &mut dyn Policy,
) -> Result<RegretTrace> {
    let reward = &scenario.reward;
    if policy.dim() != reward.dim() {
        return Err(Error::DimensionMismatch { expected: reward.dim(), got: policy.dim() });
    }
    let stream = |id: u64| {
        let mut rng = SimRng::seed_from_u64(seed);
        rng.set_stream(id);
        rng
    };
    let mut noise_rng = stream(NOISE_STREAM);
    let mut adversary_rng = stream(ADVERSARY_STREAM);
    let mut rngs = PolicyRngs { decisions: stream(DECISION_STREAM), sampling: stream(SAMPLING_STREAM) };
    let mut adversary = Adversary::new(
        scenario.attack.clone(),
        reward.clone(),
        scenario.metric,
        scenario.noise,
        scenario.ctx.clone(),
    )?;

    let horizon = cfg.horizon as usize;
    let mu_star = scenario.mu_star();
    let mut instant = Vec::with_capacity(horizon);
    let mut cumulative = Vec::with_capacity(horizon);
    let mut budget_spent = Vec::with_capacity(horizon);
    let mut log = cfg.record_log.then(|| Vec::with_capacity(horizon));
    let mut total = 0.0;

    for t in 1..=cfg.horizon {
        let (arm, mean, raw, corruption) = match scenario.attack.adversary {
            AdversaryMode::Weak => {
                // the map is fixed before the policy is consulted
                let committed = adversary.weak_attack(&mut adversary_rng);
                let arm = policy.select(&mut rngs)?;
                let mean = reward.mean_reward(&arm)?;
                let raw = mean + scenario.noise.draw(&mut noise_rng);
                let corruption = committed.apply(arm.coords(), raw, reward);
                (arm, mean, raw, corruption)
            }
            AdversaryMode::Strong => {
                let arm = policy.select(&mut rngs)?;
                let mean = reward.mean_reward(&arm)?;
                let raw = mean + scenario.noise.draw(&mut noise_rng);
                let corruption = adversary.strong_attack(&arm, raw, &mut adversary_rng);
                (arm, mean, raw, corruption)
            }
        };
        policy.observe(corruption.corrupted_observation)?;
        let gap = (mu_star - mean).max(0.0);
        total += gap;
        instant.push(gap);
        cumulative.push(total);
        budget_spent.push(adversary.ledger().spent());
        if let Some(log) = log.as_mut() {
            log.push(RoundRecord {
                t,
                arm,
                mean,
                raw,
                observed: corruption.corrupted_observation,
                charge: corruption.charge,
            });
        }
    }
    Ok(RegretTrace { seed, instant, cumulative, budget_spent, log, ledger: adversary.into_ledger() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}


/// One repetition reduced to its stored rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub seed: u64,
    pub final_regret: f64,
    pub budget_spent: f64,
    /// `(t, cumulative regret, budget spent)` at the trace stride.
    pub points: Vec<(u64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub reps: Vec<RepSummary>,
    pub mean_final_regret: f64,
    /// Population standard deviation over reps.
    pub std_final_regret: f64,
    /// `(t, mean cumulative regret)` at the trace stride.
    pub mean_trace: Vec<(u64, f64)>,
}

impl AggregateResult {
    pub fn seeds(&self) -> Vec<u64> {
        self.reps.iter().map(|r| r.seed).collect()
    }

    fn from_reps(reps: Vec<RepSummary>) -> Self {
        let n = reps.len() as f64;
        let mean = reps.iter().map(|r| r.final_regret).sum::<f64>() / n;
        let var = reps.iter().map(|r| (r.final_regret - mean).powi(2)).sum::<f64>() / n;
        let mean_trace = reps[0]
            .points
            .iter()
            .enumerate()
            .map(|(k, &(t, _, _))| (t, reps.iter().map(|r| r.points[k].1).sum::<f64>() / n))
            .collect();
        Self { reps, mean_final_regret: mean, std_final_regret: var.sqrt(), mean_trace }
    }
}

fn run_rep(cfg: &ExperimentConfig, scenario: &Scenario, seed: u64) -> Result<RepSummary> {
    let mut policy = build_policy(cfg)?;
    let trace = run_with_policy(cfg, scenario, seed, policy.as_mut())?;
    Ok(RepSummary {
        seed,
        final_regret: trace.final_regret(),
        budget_spent: trace.ledger.spent(),
        points: trace.strided(cfg.stride),
    })
}

/// `reps` runs with seeds `seed, seed + 1, ...`, in the default execution
/// mode.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateResult> {
    run_experiment_with(cfg, Execution::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, execution: Execution) -> Result<AggregateResult> {
    let scenario = Scenario::from_config(cfg)?;
    let seeds: Vec<u64> = (0..cfg.reps as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let reps: Vec<RepSummary> = match execution {
        Execution::Sequential => seeds.iter().map(|&s| run_rep(cfg, &scenario, s)).collect::<Result<_>>()?,
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            seeds.par_iter().map(|&s| run_rep(cfg, &scenario, s)).collect::<Result<_>>()?
        }
    };
    Ok(AggregateResult::from_reps(reps))
}

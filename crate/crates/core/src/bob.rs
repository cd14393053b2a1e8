//! BoB Robust Zooming: an EXP3.P master choosing, once per batch of `H`
//! rounds, which corruption-budget guess `2^i` the Robust Zooming base runs
//! with.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_space::{Arm, Metric};
use crate::policy::{Policy, PolicyRngs};
use crate::zooming::{default_grid_depth, ZoomingParams, ZoomingPolicy};

/// Largest magnitude of a single log-weight increment.
pub const EXPONENT_CLAMP: f64 = 50.0;

/// EXP3.P over `n` arms, weights kept in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3P {
    log_weights: Vec<f64>,
    alpha: f64,
    gamma: f64,
    horizon: u64,
}

impl Exp3P {
    /// `alpha = 2 sqrt(ln(3NT/delta))`,
    /// `gamma = min(3/5, 2 sqrt(3 N ln N / (5T)))`.
    pub fn new(n: usize, horizon: u64, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("EXP3.P needs at least one arm".into()));
        }
        let (nf, t) = (n as f64, horizon as f64);
        let alpha = 2.0 * (3.0 * nf * t / delta).ln().sqrt();
        let gamma = (0.6f64).min(2.0 * (3.0 * nf * nf.ln() / (5.0 * t)).sqrt());
        Ok(Self { log_weights: vec![0.0; n], alpha, gamma, horizon })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `p_i = (1 - gamma) w_i / sum(w) + gamma / N`.
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let top = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|wi| (1.0 - self.gamma) * wi / total + self.gamma / n).collect()
    }

    /// Draws an index and returns it with its probability.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let p = self.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return (i, pi);
            }
        }
        let last = p.len() - 1;
        (last, p[last])
    }

    /// `w_i *= exp(gamma/(3N) (s + alpha / (p_i sqrt(NT))))`, exponent
    /// clamped to `[-50, 50]`.
    pub fn update(&mut self, i: usize, reward: f64, p_i: f64) {
        let n = self.len() as f64;
        let bonus = self.alpha / (p_i * (n * self.horizon as f64).sqrt());
        let exponent = (self.gamma / (3.0 * n) * (reward + bonus)).clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
        self.log_weights[i] += exponent;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BobParams {
    pub horizon: u64,
    pub delta: f64,
    pub dim: usize,
    pub metric: Metric,
    pub sigma: f64,
    pub capped: bool,
    pub grid_depth: u32,
    pub restart_each_batch: bool,
}

impl BobParams {
    pub fn new(horizon: u64, delta: f64, dim: usize) -> Self {
        Self {
            horizon,
            delta,
            dim,
            metric: Metric::LInf,
            sigma: 1.0,
            capped: true,
            grid_depth: default_grid_depth(dim),
            restart_each_batch: true,
        }
    }

    /// `N = ceil(log2 T)`.
    pub fn budget_count(&self) -> usize {
        (self.horizon as f64).log2().ceil().max(1.0) as usize
    }

    /// `H = max(1, floor(T^((d+2)/(d+4))))`.
    pub fn batch_len(&self) -> u64 {
        let d = self.dim as f64;
        ((self.horizon as f64).powf((d + 2.0) / (d + 4.0)).floor() as u64).max(1)
    }

    /// `2H + sqrt(2H ln(12T / (H delta)))`.
    pub fn normalizer(&self) -> f64 {
        let h = self.batch_len() as f64;
        2.0 * h + (2.0 * h * (12.0 * self.horizon as f64 / (h * self.delta)).ln()).sqrt()
    }
}

/// Summary of one finished batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub index: usize,
    pub probability: f64,
    pub length: u64,
    pub raw_reward: f64,
    pub normalized_reward: f64,
}

#[derive(Debug, Clone)]
pub struct BobPolicy {
    params: BobParams,
    budgets: Vec<f64>,
    batch_len: u64,
    normalizer: f64,
    exp3p: Exp3P,
    bases: Vec<Option<ZoomingPolicy>>,
    current: Option<(usize, f64)>,
    batch_reward: f64,
    batch_rounds: u64,
    rounds: u64,
    batches: Vec<BatchRecord>,
    batches_started: u64,
}

impl BobPolicy {
    pub fn new(params: BobParams) -> Result<Self> {
        if params.horizon < 2 {
            return Err(Error::Config("BoB needs T >= 2".into()));
        }
        if !(params.delta > 0.0 && params.delta < 1.0) {
            return Err(Error::Config(format!("delta {} must lie in (0, 1)", params.delta)));
        }
        let n = params.budget_count();
        let budgets = (1..=n).map(|i| 2f64.powi(i as i32)).collect();
        // validate the base configuration once up front
        Self::base_params(&params, 2.0).validate()?;
        Ok(Self {
            budgets,
            batch_len: params.batch_len(),
            normalizer: params.normalizer(),
            exp3p: Exp3P::new(n, params.horizon, params.delta)?,
            bases: vec![None; n],
            current: None,
            batch_reward: 0.0,
            batch_rounds: 0,
            rounds: 0,
            batches: Vec::new(),
            batches_started: 0,
            params,
        })
    }

    fn base_params(params: &BobParams, budget: f64) -> ZoomingParams {
        ZoomingParams {
            horizon: params.horizon,
            delta: params.delta / 3.0,
            budget,
            capped: params.capped,
            sigma: params.sigma,
            grid_depth: params.grid_depth,
            dim: params.dim,
            metric: params.metric,
        }
    }

    pub fn params(&self) -> &BobParams {
        &self.params
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn batch_len(&self) -> u64 {
        self.batch_len
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn exp3p(&self) -> &Exp3P {
        &self.exp3p
    }

    pub fn batches(&self) -> &[BatchRecord] {
        &self.batches
    }

    pub fn batches_started(&self) -> u64 {
        self.batches_started
    }

    /// Index and probability of the base running in the current batch.
    pub fn current(&self) -> Option<(usize, f64)> {
        self.current
    }

    /// Base policy for budget index `i`, if one has been instantiated.
    pub fn base(&self, i: usize) -> Option<&ZoomingPolicy> {
        self.bases[i].as_ref()
    }

    /// Draws the batch's base index and readies its Robust Zooming instance.
    pub fn begin_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (i, p) = self.exp3p.draw(rng);
        if self.params.restart_each_batch || self.bases[i].is_none() {
            self.bases[i] = Some(ZoomingPolicy::new(Self::base_params(&self.params, self.budgets[i]))?);
        }
        self.current = Some((i, p));
        self.batch_reward = 0.0;
        self.batch_rounds = 0;
        self.batches_started += 1;
        Ok(())
    }

    /// Normalizes the batch reward and updates the chosen index's weight.
    pub fn end_batch(&mut self) -> Result<BatchRecord> {
        let (i, p) = self
            .current
            .take()
            .ok_or_else(|| Error::Invariant("batch end without an open batch".into()))?;
        let normalized = self.batch_reward / (p * self.normalizer);
        self.exp3p.update(i, normalized, p);
        let record = BatchRecord {
            index: i,
            probability: p,
            length: self.batch_rounds,
            raw_reward: self.batch_reward,
            normalized_reward: normalized,
        };
        self.batches.push(record);
        Ok(record)
    }

    fn active_base(&mut self) -> Result<&mut ZoomingPolicy> {
        let (i, _) = self.current.ok_or_else(|| Error::Invariant("no open batch".into()))?;
        self.bases[i].as_mut().ok_or_else(|| Error::Invariant(format!("base {i} missing")))
    }
}

impl Policy for BobPolicy {
    fn name(&self) -> &str {
        "bob"
    }

    fn dim(&self) -> usize {
        self.params.dim
    }

    fn select(&mut self, rngs: &mut PolicyRngs) -> Result<Arm> {
        if self.rounds >= self.params.horizon {
            return Err(Error::Invariant("BoB played past its horizon".into()));
        }
        if self.rounds.is_multiple_of(self.batch_len) {
            self.begin_batch(&mut rngs.decisions)?;
        }
        Ok(self.active_base()?.choose()?.0)
    }

    fn observe(&mut self, y: f64) -> Result<()> {
        self.active_base()?.observe(y)?;
        self.batch_reward += y;
        self.batch_rounds += 1;
        self.rounds += 1;
        if self.rounds.is_multiple_of(self.batch_len) || self.rounds == self.params.horizon {
            self.end_batch()?;
        }
        Ok(())
    }
}

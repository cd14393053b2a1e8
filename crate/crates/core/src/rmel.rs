//! Robust multi-layer elimination (RMEL).
//!
//! `l*` layers run side by side over dyadic region sets. Layer `l` tolerates
//! corruption `v_l = ln(4T/delta) * B^(l-1)` and is sampled with probability
//! `1/v_l` (layer 1 takes the remaining mass), so an adversary with budget
//! `C` can only reach layers with `v_l >= C` a handful of times. Within a
//! layer, regions are pulled round-robin by count; at the end of an epoch the
//! layer drops regions whose mean trails the best by more than `4 / 2^m`,
//! removes every contained region from all lower layers, and halves the
//! survivors. The per-round variant tests a confidence-based gap after every
//! pull instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_space::{
    refine_region, region_contains, sample_arm_in_region, uniform_grid_covering, Arm, Region,
    SampleMode, DEFAULT_REGION_CAP,
};
use crate::policy::{Policy, PolicyRngs};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RmelVariant {
    /// Eliminate once per epoch.
    #[default]
    Epoch,
    /// Eliminate after every pull; refine at epoch boundaries.
    Round,
}

impl RmelVariant {
    pub fn name(self) -> &'static str {
        match self {
            RmelVariant::Epoch => "epoch",
            RmelVariant::Round => "round",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmelParams {
    pub horizon: u64,
    pub delta: f64,
    /// Ratio `B` between tolerance levels of adjacent layers.
    pub base: f64,
    pub dim: usize,
    pub variant: RmelVariant,
    pub sample_mode: SampleMode,
    /// Noise scale of the stochastic terms: the epoch quota scales with its
    /// square and the per-round confidence width linearly. `1.0` matches
    /// unit sub-Gaussian noise.
    pub noise_scale: f64,
    pub region_cap: u64,
}

impl RmelParams {
    pub fn new(horizon: u64, delta: f64, base: f64, dim: usize) -> Self {
        Self {
            horizon,
            delta,
            base,
            dim,
            variant: RmelVariant::Epoch,
            sample_mode: SampleMode::Uniform,
            noise_scale: 1.0,
            region_cap: DEFAULT_REGION_CAP,
        }
    }

    /// `ln(4T/delta)`.
    pub fn log_term(&self) -> f64 {
        (4.0 * self.horizon as f64 / self.delta).ln()
    }

    /// Per-region pull quota closing epoch `m`:
    /// `ceil(noise_scale^2 * 6 ln(4T/delta) * 4^m)`.
    pub fn quota(&self, epoch: u32) -> u64 {
        let q = self.noise_scale.powi(2) * 6.0 * self.log_term() * 4f64.powi(epoch as i32);
        (q.ceil() as u64).max(1)
    }

    /// Per-round elimination gap at epoch `m` with `n_min` pulls on the
    /// least-pulled region; infinite while some region is unpulled.
    pub fn round_threshold(&self, epoch: u32, n_min: u64) -> f64 {
        if n_min == 0 {
            return f64::INFINITY;
        }
        let t = self.horizon as f64;
        let n = n_min as f64;
        2.0 / 2f64.powi(epoch as i32)
            + self.noise_scale * (8.0 * (4.0 * t * t / self.delta).ln() / n).sqrt()
            + 2.0 * self.log_term() / n
    }

    pub fn epoch_threshold(epoch: u32) -> f64 {
        4.0 / 2f64.powi(epoch as i32)
    }

    /// `l* = min { l : ln(4T/delta) B^(l-1) >= T }`.
    pub fn layer_count(&self) -> usize {
        let target = self.horizon as f64;
        let mut l = 1usize;
        let mut v = self.log_term();
        while v < target {
            v *= self.base;
            l += 1;
        }
        l
    }

    pub fn tolerance(&self, layer: usize) -> f64 {
        self.log_term() * self.base.powi(layer as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub region: Region,
    pub n: u64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    /// One-based layer index.
    pub index: usize,
    pub tolerance: f64,
    pub epoch: u32,
    /// Pulls since the last refresh.
    pub rounds: u64,
    pub regions: Vec<RegionStats>,
}

impl LayerState {
    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Whether some region's closed box contains `x`.
    pub fn covers_point(&self, x: &[f64]) -> bool {
        self.regions.iter().any(|s| {
            let (lo, hi) = (s.region.lo(), s.region.hi());
            x.iter().zip(lo.iter().zip(&hi)).all(|(&xi, (&l, &h))| l <= xi && xi <= h)
        })
    }
}

/// One elimination/refresh decision, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEvent {
    pub layer: usize,
    pub epoch: u32,
    pub eliminated: Vec<Region>,
    pub refined: bool,
}

#[derive(Debug, Clone)]
pub struct RmelPolicy {
    params: RmelParams,
    layers: Vec<LayerState>,
    /// Raw sampling probability of each layer, index 0 = layer 1.
    probabilities: Vec<f64>,
    pending: Option<(usize, usize)>,
    events: Vec<EpochEvent>,
    name: String,
}

impl RmelPolicy {
    pub fn new(params: RmelParams) -> Result<Self> {
        if !(params.base > 1.0) {
            return Err(Error::Config(format!("base B = {} must exceed 1", params.base)));
        }
        if !(params.delta > 0.0 && params.delta < 1.0) {
            return Err(Error::Config(format!("delta {} must lie in (0, 1)", params.delta)));
        }
        if params.horizon == 0 || params.dim == 0 {
            return Err(Error::Config("horizon and dimension must be positive".into()));
        }
        if params.log_term() <= 0.0 {
            return Err(Error::Config("ln(4T/delta) must be positive".into()));
        }
        let count = params.layer_count();
        let mut probabilities = vec![0.0; count];
        for (i, p) in probabilities.iter_mut().enumerate().skip(1) {
            *p = 1.0 / params.tolerance(i + 1);
        }
        let upper: f64 = probabilities.iter().sum();
        probabilities[0] = 1.0 - upper;
        if probabilities[0] < 0.0 || probabilities.iter().any(|&p| p > 1.0) {
            return Err(Error::Config(format!(
                "layer probabilities infeasible: upper layers need mass {upper}"
            )));
        }
        let covering = uniform_grid_covering(params.dim, 1)?;
        if covering.len() as u64 > params.region_cap {
            return Err(Error::RegionCap { requested: covering.len() as u128, cap: params.region_cap });
        }
        let regions: Vec<RegionStats> = covering
            .into_regions()
            .into_iter()
            .map(|region| RegionStats { region, n: 0, f: 0.0 })
            .collect();
        let layers = (1..=count)
            .map(|index| LayerState {
                index,
                tolerance: params.tolerance(index),
                epoch: 1,
                rounds: 0,
                regions: regions.clone(),
            })
            .collect();
        let name = match params.variant {
            RmelVariant::Epoch => "rmel".to_string(),
            RmelVariant::Round => "rmel-alt".to_string(),
        };
        Ok(Self { params, layers, probabilities, pending: None, events: Vec::new(), name })
    }

    pub fn params(&self) -> &RmelParams {
        &self.params
    }

    pub fn layers(&self) -> &[LayerState] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &LayerState {
        &self.layers[index - 1]
    }

    pub fn layer_probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn events(&self) -> &[EpochEvent] {
        &self.events
    }

    /// Draws a layer by tolerance, then moves up to the first nonempty one.
    pub fn sample_layer<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let raw = self.draw_raw_layer(rng);
        self.first_nonempty_from(raw)
    }

    /// Layer index drawn by tolerance alone, before skipping empty layers.
    pub fn draw_raw_layer<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probabilities.iter().enumerate().skip(1) {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        1
    }

    fn first_nonempty_from(&self, layer: usize) -> usize {
        (layer..=self.layers.len())
            .find(|&l| !self.layers[l - 1].is_empty())
            .expect("the top layer is never empty")
    }

    /// Position of the least-pulled region of layer `l`, lowest id on ties.
    pub fn choose_region(&self, layer: usize) -> Result<usize> {
        let regions = &self.layers[layer - 1].regions;
        regions
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.n.cmp(&b.n).then_with(|| a.region.id().cmp(&b.region.id())))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Invariant(format!("layer {layer} has no active region")))
    }

    /// Removes every region contained in `eliminated` from all layers below
    /// `layer`.
    pub fn cross_layer_eliminate(&mut self, eliminated: &Region, layer: usize) {
        for lower in self.layers.iter_mut().take(layer - 1) {
            lower.regions.retain(|s| !region_contains(eliminated, &s.region));
        }
    }

    /// Credits `y` to region `pos` of layer `l`, then runs whatever
    /// elimination and refresh that pull triggers.
    pub fn record_and_maybe_eliminate(&mut self, layer: usize, pos: usize, y: f64) -> Result<()> {
        {
            let state = &mut self.layers[layer - 1];
            let stats = state
                .regions
                .get_mut(pos)
                .ok_or_else(|| Error::Invariant(format!("region {pos} missing from layer {layer}")))?;
            state.rounds += 1;
            stats.n += 1;
            stats.f += (y - stats.f) / stats.n as f64;
        }
        match self.params.variant {
            RmelVariant::Epoch => {
                if self.quota_met(layer) {
                    let epoch = self.layers[layer - 1].epoch;
                    let eliminated = self.eliminate(layer, RmelParams::epoch_threshold(epoch));
                    self.refresh(layer)?;
                    self.events.push(EpochEvent { layer, epoch, eliminated, refined: true });
                }
            }
            RmelVariant::Round => {
                let state = &self.layers[layer - 1];
                let n_min = state.regions.iter().map(|s| s.n).min().unwrap_or(0);
                let threshold = self.params.round_threshold(state.epoch, n_min);
                let eliminated = self.eliminate(layer, threshold);
                let epoch = self.layers[layer - 1].epoch;
                let refined = self.quota_met(layer);
                if refined {
                    self.refresh(layer)?;
                }
                if refined || !eliminated.is_empty() {
                    self.events.push(EpochEvent { layer, epoch, eliminated, refined });
                }
            }
        }
        Ok(())
    }

    fn quota_met(&self, layer: usize) -> bool {
        let state = &self.layers[layer - 1];
        let quota = self.params.quota(state.epoch);
        !state.regions.is_empty() && state.regions.iter().all(|s| s.n >= quota)
    }

    /// Drops every region trailing the layer's best mean by more than
    /// `threshold`, all decided against the pre-elimination maximum.
    fn eliminate(&mut self, layer: usize, threshold: f64) -> Vec<Region> {
        if !threshold.is_finite() {
            return Vec::new();
        }
        let state = &mut self.layers[layer - 1];
        let best = state.regions.iter().map(|s| s.f).fold(f64::NEG_INFINITY, f64::max);
        let mut eliminated = Vec::new();
        state.regions.retain(|s| {
            let drop = best - s.f > threshold;
            if drop {
                eliminated.push(s.region.clone());
            }
            !drop
        });
        for region in &eliminated {
            self.cross_layer_eliminate(region, layer);
        }
        eliminated
    }

    /// Halves every surviving region and starts the next epoch.
    fn refresh(&mut self, layer: usize) -> Result<()> {
        let cap = self.params.region_cap;
        let state = &mut self.layers[layer - 1];
        let mut children: Vec<Region> = state.regions.iter().flat_map(|s| refine_region(&s.region)).collect();
        if children.len() as u64 > cap {
            return Err(Error::RegionCap { requested: children.len() as u128, cap });
        }
        children.sort_by_key(Region::id);
        state.regions = children.into_iter().map(|region| RegionStats { region, n: 0, f: 0.0 }).collect();
        state.rounds = 0;
        state.epoch += 1;
        Ok(())
    }
}

impl Policy for RmelPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.params.dim
    }

    fn select(&mut self, rngs: &mut PolicyRngs) -> Result<Arm> {
        let layer = self.sample_layer(&mut rngs.decisions);
        let pos = self.choose_region(layer)?;
        let region = &self.layers[layer - 1].regions[pos].region;
        let arm = sample_arm_in_region(region, self.params.sample_mode, &mut rngs.sampling);
        self.pending = Some((layer, pos));
        Ok(arm)
    }

    fn observe(&mut self, y: f64) -> Result<()> {
        let (layer, pos) = self
            .pending
            .take()
            .ok_or_else(|| Error::Invariant("observation without a pending pull".into()))?;
        self.record_and_maybe_eliminate(layer, pos, y)
    }
}

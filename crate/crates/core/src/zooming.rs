//! Zooming and Robust Zooming.
//!
//! The active space is tracked on a finite dyadic candidate grid. Each grid
//! point carries the number of live confidence balls covering it, so the
//! activation test ("is some live point uncovered?") is a lookup in an
//! ordered set instead of a scan. Confidence balls only change when their arm
//! is pulled or removed, which keeps per-round work proportional to the
//! pulled arm's ball.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_space::{Arm, Metric};
use crate::policy::{Policy, PolicyRngs};

/// Confidence radius of an active arm pulled `n` times:
/// `sigma * sqrt((4 ln T + 2 ln(2/delta)) / n)` plus the corruption term
/// `C/n`, or `min(1, C/n)` when capped.
pub fn robust_radius(n: u64, horizon: u64, delta: f64, budget: f64, capped: bool, sigma: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("radius is undefined before the first pull".into()));
    }
    let n = n as f64;
    let stochastic = sigma * ((4.0 * (horizon as f64).ln() + 2.0 * (2.0 / delta).ln()) / n).sqrt();
    let corruption = if capped { (budget / n).min(1.0) } else { budget / n };
    Ok(stochastic + corruption)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomingParams {
    pub horizon: u64,
    pub delta: f64,
    /// Corruption budget the radius defends against; zero for plain Zooming.
    pub budget: f64,
    pub capped: bool,
    /// Noise scale applied to the stochastic radius term.
    pub sigma: f64,
    /// Candidate grid resolution `2^-grid_depth` per axis.
    pub grid_depth: u32,
    pub dim: usize,
    pub metric: Metric,
}

impl ZoomingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta {} must lie in (0, 1)", self.delta)));
        }
        if self.horizon == 0 || self.dim == 0 {
            return Err(Error::Config("horizon and dimension must be positive".into()));
        }
        let points = ((1u128 << self.grid_depth) + 1).checked_pow(self.dim as u32);
        if points.is_none_or(|p| p > 1 << 26) {
            return Err(Error::Config(format!(
                "candidate grid 2^-{} in d = {} is too large",
                self.grid_depth, self.dim
            )));
        }
        if self.budget < 0.0 || !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::Config("budget and sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn radius(&self, n: u64) -> f64 {
        robust_radius(n, self.horizon, self.delta, self.budget, self.capped, self.sigma)
            .expect("active arms have n >= 1")
    }
}

/// Default candidate-grid depth: `2^-12` in one dimension, `2^-7` in two.
pub fn default_grid_depth(dim: usize) -> u32 {
    match dim {
        1 => 12,
        2 => 7,
        3 => 5,
        _ => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveArmRecord {
    pub center: Arm,
    /// Flat index of the center on the candidate grid.
    pub grid_index: u32,
    pub n: u64,
    pub f: f64,
    /// Radius at the current `n`; infinite before the first pull.
    pub radius: f64,
}

impl ActiveArmRecord {
    fn index_value(&self) -> f64 {
        self.f + 2.0 * self.radius
    }
}

/// Regular grid with `2^depth + 1` points per axis, flattened row-major with
/// the first axis most significant, so flat order is lexicographic order.
#[derive(Debug, Clone)]
struct CandidateGrid {
    dim: usize,
    per_axis: usize,
    step: f64,
    cover_count: Vec<u32>,
    live: Vec<bool>,
    uncovered_live: BTreeSet<u32>,
}

impl CandidateGrid {
    fn new(dim: usize, depth: u32) -> Self {
        let per_axis = (1usize << depth) + 1;
        let total = per_axis.pow(dim as u32);
        Self {
            dim,
            per_axis,
            step: (-(depth as f64)).exp2(),
            cover_count: vec![0; total],
            live: vec![true; total],
            uncovered_live: (0..total as u32).collect(),
        }
    }

    fn len(&self) -> usize {
        self.live.len()
    }

    fn coords(&self, index: u32) -> Vec<f64> {
        let mut rem = index as usize;
        let mut out = vec![0.0; self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = ((rem % self.per_axis) as f64 * self.step).min(1.0);
            rem /= self.per_axis;
        }
        out
    }

    /// Calls `visit(index, distance)` for every grid point within the
    /// axis-aligned bounding box of the ball of `radius` around `center`.
    fn for_each_in_box(&self, center: &[f64], radius: f64, metric: Metric, mut visit: impl FnMut(u32, f64)) {
        let last = self.per_axis - 1;
        let ranges: Vec<(usize, usize)> = center
            .iter()
            .map(|&c| {
                let lo = ((c - radius) / self.step).floor() - 1.0;
                let hi = ((c + radius) / self.step).ceil() + 1.0;
                let lo = if lo.is_finite() { lo.max(0.0).min(last as f64) as usize } else { 0 };
                let hi = if hi.is_finite() { hi.max(0.0).min(last as f64) as usize } else { last };
                (lo, hi)
            })
            .collect();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        let mut point = vec![0.0; self.dim];
        loop {
            let mut flat = 0usize;
            for axis in 0..self.dim {
                point[axis] = (idx[axis] as f64 * self.step).min(1.0);
                flat = flat * self.per_axis + idx[axis];
            }
            visit(flat as u32, metric.dist(&point, center));
            let mut axis = self.dim;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                if idx[axis] < ranges[axis].1 {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = ranges[axis].0;
            }
        }
    }

    fn cover(&mut self, i: u32) {
        let slot = &mut self.cover_count[i as usize];
        *slot += 1;
        if *slot == 1 {
            self.uncovered_live.remove(&i);
        }
    }

    fn uncover(&mut self, i: u32) {
        let slot = &mut self.cover_count[i as usize];
        debug_assert!(*slot > 0);
        *slot -= 1;
        if *slot == 0 && self.live[i as usize] {
            self.uncovered_live.insert(i);
        }
    }

    fn kill(&mut self, i: u32) {
        self.live[i as usize] = false;
        self.uncovered_live.remove(&i);
    }
}

/// Zooming with corruption-inflated radii; `budget = 0` gives plain Zooming.
#[derive(Debug, Clone)]
pub struct ZoomingPolicy {
    params: ZoomingParams,
    arms: Vec<ActiveArmRecord>,
    grid: CandidateGrid,
    removed: Vec<(Arm, f64)>,
    pending: Option<usize>,
    activations: u64,
}

/// What a round decided before the pull.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundKind {
    Activation,
    Selection,
}

impl ZoomingPolicy {
    pub fn new(params: ZoomingParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            grid: CandidateGrid::new(params.dim, params.grid_depth),
            params,
            arms: Vec::new(),
            removed: Vec::new(),
            pending: None,
            activations: 0,
        })
    }

    pub fn params(&self) -> &ZoomingParams {
        &self.params
    }

    pub fn active_arms(&self) -> &[ActiveArmRecord] {
        &self.arms
    }

    pub fn removed_balls(&self) -> &[(Arm, f64)] {
        &self.removed
    }

    pub fn activations(&self) -> u64 {
        self.activations
    }

    pub fn candidate_count(&self) -> usize {
        self.grid.len()
    }

    /// Whether a grid-snapped arm still lies in the active space.
    pub fn is_live(&self, arm: &Arm) -> bool {
        let idx = self.nearest_grid_index(arm.coords());
        self.grid.live[idx as usize]
    }

    pub fn nearest_grid_index(&self, x: &[f64]) -> u32 {
        let last = self.grid.per_axis - 1;
        x.iter().fold(0usize, |acc, &xi| {
            let i = ((xi / self.grid.step).round() as usize).min(last);
            acc * self.grid.per_axis + i
        }) as u32
    }

    /// Distance from `center` to the farthest corner of the unit cube.
    fn farthest_point(&self, center: &[f64]) -> f64 {
        let corner: Vec<f64> = center.iter().map(|&c| if c < 0.5 { 1.0 } else { 0.0 }).collect();
        self.params.metric.dist(center, &corner)
    }

    fn ball_points(&self, center: &[f64], radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        self.grid.for_each_in_box(center, radius, self.params.metric, |i, d| {
            if d <= radius {
                out.push(i);
            }
        });
        out
    }

    /// Drops every arm `u` for which some active `v` has
    /// `f(v) - f(u) >= r(v) + 2 r(u)` and deletes `B(u, r(u))` from the
    /// active space. Returns the removed `(center, radius)` pairs.
    ///
    /// The arm maximising `f - r` can never be removed and dominates every
    /// other witness, so one pass against it reaches the fixed point.
    pub fn removal_step(&mut self) -> Vec<(Arm, f64)> {
        if self.arms.len() < 2 {
            return Vec::new();
        }
        if let Some(bad) = self.arms.iter().find(|a| a.n == 0) {
            panic!("removal with an unpulled arm at {}", bad.center);
        }
        let (champion, lcb) = self
            .arms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, a.f - a.radius))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let mut out = Vec::new();
        let mut kept = Vec::with_capacity(self.arms.len());
        for (i, arm) in std::mem::take(&mut self.arms).into_iter().enumerate() {
            if i != champion && lcb >= arm.index_value() {
                out.push(arm);
            } else {
                kept.push(arm);
            }
        }
        self.arms = kept;
        for arm in &out {
            for p in self.ball_points(arm.center.coords(), arm.radius) {
                self.grid.uncover(p);
                self.grid.kill(p);
            }
        }
        let out: Vec<(Arm, f64)> = out.into_iter().map(|a| (a.center, a.radius)).collect();
        self.removed.extend(out.iter().cloned());
        out
    }

    /// Activates the lexicographically first live candidate outside every
    /// confidence ball, if any. The new arm is the one pulled this round.
    pub fn activation_step(&mut self) -> Result<Option<&ActiveArmRecord>> {
        let Some(&idx) = self.grid.uncovered_live.first() else {
            if self.arms.is_empty() {
                return Err(Error::Invariant("no active arm and no live candidate".into()));
            }
            return Ok(None);
        };
        let record = ActiveArmRecord {
            center: Arm::from_unchecked(self.grid.coords(idx)),
            grid_index: idx,
            n: 0,
            f: 0.0,
            radius: f64::INFINITY,
        };
        let pos = self.arms.partition_point(|a| a.grid_index < idx);
        self.arms.insert(pos, record);
        self.activations += 1;
        self.pending = Some(pos);
        Ok(Some(&self.arms[pos]))
    }

    /// Center of the arm maximising `f + 2r`; ties go to the
    /// lexicographically smallest center.
    pub fn selection_step(&mut self) -> Result<Arm> {
        let best = self
            .arms
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (i, a)| {
                let v = a.index_value();
                match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((i, v)),
                }
            })
            .ok_or_else(|| Error::Invariant("selection with no active arm".into()))?;
        self.pending = Some(best.0);
        Ok(self.arms[best.0].center.clone())
    }

    /// One decision: removal, then activation or selection. Returns the arm
    /// to pull.
    pub fn choose(&mut self) -> Result<(Arm, RoundKind)> {
        self.removal_step();
        if let Some(rec) = self.activation_step()? {
            return Ok((rec.center.clone(), RoundKind::Activation));
        }
        Ok((self.selection_step()?, RoundKind::Selection))
    }

    /// Records `y` for the arm chosen this round.
    pub fn observe(&mut self, y: f64) -> Result<()> {
        let pos = self
            .pending
            .take()
            .ok_or_else(|| Error::Invariant("observation without a pending pull".into()))?;
        self.record(pos, y);
        Ok(())
    }

    /// Records `y` for the active arm centered at `x`.
    pub fn update(&mut self, x: &Arm, y: f64) -> Result<()> {
        let pos = self
            .arms
            .iter()
            .position(|a| a.center == *x)
            .ok_or_else(|| Error::InvalidArgument(format!("arm {x} is not active")))?;
        self.pending = None;
        self.record(pos, y);
        Ok(())
    }

    fn record(&mut self, pos: usize, y: f64) {
        let radius_after = self.params.radius(self.arms[pos].n + 1);
        let arm = &mut self.arms[pos];
        arm.n += 1;
        arm.f += (y - arm.f) / arm.n as f64;
        let old = arm.radius;
        arm.radius = radius_after;
        let center = arm.center.coords().to_vec();
        if old.is_infinite() {
            for p in self.ball_points(&center, radius_after) {
                self.grid.cover(p);
            }
        } else if radius_after < old && radius_after < self.farthest_point(&center) {
            let mut shed = Vec::new();
            self.grid.for_each_in_box(&center, old, self.params.metric, |i, d| {
                if d <= old && d > radius_after {
                    shed.push(i);
                }
            });
            for p in shed {
                self.grid.uncover(p);
            }
        }
    }

    /// Brute-force check that every live candidate is covered by some ball.
    pub fn coverage_holds(&self) -> bool {
        (0..self.grid.len() as u32).all(|i| {
            if !self.grid.live[i as usize] {
                return true;
            }
            let x = self.grid.coords(i);
            self.arms
                .iter()
                .any(|a| self.params.metric.dist(&x, a.center.coords()) <= a.radius)
        })
    }

    /// Brute-force check that the incremental cover counts and the
    /// uncovered set match the current balls.
    pub fn cover_counts_consistent(&self) -> bool {
        (0..self.grid.len() as u32).all(|i| {
            let x = self.grid.coords(i);
            let count = self
                .arms
                .iter()
                .filter(|a| a.radius.is_finite() && self.params.metric.dist(&x, a.center.coords()) <= a.radius)
                .count() as u32;
            let live = self.grid.live[i as usize];
            let listed = self.grid.uncovered_live.contains(&i);
            let expected = if live { count } else { self.grid.cover_count[i as usize] };
            self.grid.cover_count[i as usize] == expected && listed == (live && count == 0)
        })
    }

    /// Brute-force check that killed candidates lie in some removed ball.
    pub fn removed_points_are_in_removed_balls(&self) -> bool {
        (0..self.grid.len() as u32).all(|i| {
            if self.grid.live[i as usize] {
                return true;
            }
            let x = self.grid.coords(i);
            self.removed
                .iter()
                .any(|(c, r)| self.params.metric.dist(&x, c.coords()) <= *r)
        })
    }
}

impl Policy for ZoomingPolicy {
    fn name(&self) -> &str {
        if self.params.budget > 0.0 {
            "robust-zooming"
        } else {
            "zooming"
        }
    }

    fn dim(&self) -> usize {
        self.params.dim
    }

    fn select(&mut self, _rngs: &mut PolicyRngs) -> Result<Arm> {
        Ok(self.choose()?.0)
    }

    fn observe(&mut self, y: f64) -> Result<()> {
        ZoomingPolicy::observe(self, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(dim: usize, budget: f64, sigma: f64) -> ZoomingParams {
        ZoomingParams {
            horizon: 50_000,
            delta: 0.01,
            budget,
            capped: false,
            sigma,
            grid_depth: default_grid_depth(dim),
            dim,
            metric: Metric::LInf,
        }
    }

    #[test]
    fn radius_examples() {
        let (t, delta) = (50_000u64, 0.01f64);
        let radicand = 4.0 * (t as f64).ln() + 2.0 * (2.0 / delta).ln();
        let r = (robust_radius(1, t, delta, 0.0, false, 1.0).unwrap()).powi(2);
        assert!((r - radicand).abs() < 1e-9);
        let uncapped = robust_radius(100, t, delta, 3000.0, false, 1.0).unwrap();
        assert!((uncapped - 30.734_001).abs() < 1e-6);
        let capped = robust_radius(100, t, delta, 3000.0, true, 1.0).unwrap();
        assert!((capped - 1.734_001).abs() < 1e-6);
        assert!(robust_radius(0, t, delta, 0.0, false, 1.0).is_err());
    }

    #[test]
    fn first_activation_is_grid_origin() {
        let mut z = ZoomingPolicy::new(params(1, 0.0, 1.0)).unwrap();
        let (arm, kind) = z.choose().unwrap();
        assert_eq!(kind, RoundKind::Activation);
        assert_eq!(arm.coords(), &[0.0]);
        z.observe(0.3).unwrap();
        let a = &z.active_arms()[0];
        assert_eq!((a.n, a.f), (1, 0.3));
    }

    #[test]
    fn wide_ball_blocks_activation() {
        let mut z = ZoomingPolicy::new(params(1, 0.0, 1.0)).unwrap();
        z.choose().unwrap();
        z.observe(0.5).unwrap();
        // radius at n = 1 is ~7.3 >= 1: the whole interval is covered
        assert!(z.active_arms()[0].radius >= 1.0);
        assert!(z.activation_step().unwrap().is_none());
        let (arm, kind) = z.choose().unwrap();
        assert_eq!((arm.coords(), kind), (&[0.0][..], RoundKind::Selection));
    }

    fn manual(params: ZoomingParams, arms: &[(f64, u64, f64)]) -> ZoomingPolicy {
        let mut z = ZoomingPolicy::new(params).unwrap();
        for &(x, n, f) in arms {
            let idx = z.nearest_grid_index(&[x]);
            z.arms.push(ActiveArmRecord {
                center: Arm::scalar(x).unwrap(),
                grid_index: idx,
                n,
                f,
                radius: if n == 0 { f64::INFINITY } else { params.radius(n) },
            });
            if n > 0 {
                for p in z.ball_points(&[x], params.radius(n)) {
                    z.grid.cover(p);
                }
            }
        }
        z.arms.sort_by_key(|a| a.grid_index);
        z
    }

    #[test]
    fn removal_needs_a_pair() {
        let mut z = manual(params(1, 0.0, 1.0), &[(0.5, 10, 0.2)]);
        assert!(z.removal_step().is_empty());
    }

    #[test]
    fn removal_fires_on_clear_gap() {
        // pick n so that the radius is 0.2 exactly enough: use sigma to scale
        let p = params(1, 0.0, 1.0);
        let n = 1000;
        let sigma = 0.2 / p.radius(n);
        let p = ZoomingParams { sigma, ..p };
        assert!((p.radius(n) - 0.2).abs() < 1e-12);
        let mut z = manual(p, &[(0.25, n, 0.0), (0.75, n, 1.0)]);
        let gone = z.removal_step();
        assert_eq!(gone.len(), 1);
        assert_eq!(gone[0].0.coords(), &[0.25]);
        assert_eq!(z.active_arms().len(), 1);
        assert_eq!(z.active_arms()[0].center.coords(), &[0.75]);
    }

    #[test]
    fn removal_never_fires_on_equal_means() {
        let mut z = manual(params(1, 0.0, 1.0), &[(0.25, 50, 0.4), (0.75, 50, 0.4), (0.5, 7, 0.4)]);
        assert!(z.removal_step().is_empty());
    }

    #[test]
    fn selection_examples() {
        let p = params(1, 0.0, 1.0);
        let mut z = manual(p, &[(0.1, 1, 0.5), (0.6, 1, 0.3)]);
        z.arms[0].radius = 0.1;
        z.arms[1].radius = 0.3;
        assert_eq!(z.selection_step().unwrap().coords(), &[0.6]);

        z.arms[1].f = 0.5;
        z.arms[1].radius = 0.1;
        assert_eq!(z.selection_step().unwrap().coords(), &[0.1]);

        let mut single = manual(p, &[(0.9, 3, 0.0)]);
        assert_eq!(single.selection_step().unwrap().coords(), &[0.9]);

        let mut empty = ZoomingPolicy::new(p).unwrap();
        assert!(empty.selection_step().is_err());
    }

    #[test]
    fn update_running_mean() {
        let mut z = manual(params(1, 0.0, 1.0), &[(0.5, 0, 0.0)]);
        z.arms[0].radius = f64::INFINITY;
        let x = Arm::scalar(0.5).unwrap();
        z.update(&x, 1.0).unwrap();
        assert_eq!((z.arms[0].n, z.arms[0].f), (1, 1.0));
        z.update(&x, 0.0).unwrap();
        assert_eq!((z.arms[0].n, z.arms[0].f), (2, 0.5));
        assert!(z.update(&Arm::scalar(0.25).unwrap(), 1.0).is_err());

        let mut z = manual(params(1, 0.0, 1.0), &[(0.5, 0, 0.0)]);
        z.arms[0].radius = f64::INFINITY;
        let c = 0.123_456_789;
        for _ in 0..1000 {
            z.update(&x, c).unwrap();
        }
        assert_eq!(z.arms[0].f, c);
        assert_eq!(z.arms[0].n, 1000);
    }

    /// Deterministic two-arm scenario: with zero noise the removal of the
    /// left arm kills its ball, and activation moves to the first uncovered
    /// live point on the right.
    #[test]
    fn activation_after_removal() {
        let p = ZoomingParams { sigma: 0.05, grid_depth: 6, ..params(1, 0.0, 1.0) };
        let mut z = ZoomingPolicy::new(p).unwrap();
        let mu = |x: f64| if x < 0.5 { 0.0 } else { 1.0 };
        let mut removed_seen = false;
        for _ in 0..400 {
            let (arm, _) = z.choose().unwrap();
            z.observe(mu(arm.coords()[0])).unwrap();
            assert!(z.cover_counts_consistent());
            assert!(z.removed_points_are_in_removed_balls());
            if !z.removed_balls().is_empty() {
                removed_seen = true;
            }
        }
        assert!(removed_seen);
        // the origin was removed and nothing left of its ball can reactivate
        assert!(!z.is_live(&Arm::scalar(0.0).unwrap()));
        assert!(z.active_arms().iter().any(|a| a.center.coords()[0] >= 0.5));
    }

    #[test]
    fn coverage_invariant_in_two_dims() {
        let p = ZoomingParams { sigma: 0.1, grid_depth: 5, ..params(2, 0.0, 0.1) };
        let mut z = ZoomingPolicy::new(p).unwrap();
        let mu = |x: &[f64]| 1.0 - 0.8 * (x[0] - 0.75).hypot(x[1] - 0.75);
        for t in 0..600 {
            let (arm, kind) = z.choose().unwrap();
            if kind == RoundKind::Selection {
                assert!(z.coverage_holds());
            }
            z.observe(mu(arm.coords())).unwrap();
            if t % 20 == 0 {
                assert!(z.cover_counts_consistent());
            }
        }
        assert!(z.removed_points_are_in_removed_balls());
    }

    #[test]
    fn observe_without_choice_is_error() {
        let mut z = ZoomingPolicy::new(params(1, 0.0, 1.0)).unwrap();
        assert!(z.observe(1.0).is_err());
    }
}

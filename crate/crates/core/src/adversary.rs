//! Reward-corrupting adversaries and their budget accounting.
//!
//! A strong adversary sees the pulled arm before corrupting; a weak one
//! commits a corruption map over all arms at the start of the round and is
//! charged the map's supremum. Every fired attack must fit entirely in the
//! remaining budget; otherwise the round is left uncorrupted.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::environment::{
    grid_extremes, optimal_value, worst_value, LowerBoundInstance, NoiseModel, RewardFunction,
};
use crate::error::{Error, Result};
use crate::metric_space::{Arm, Metric};

/// Largest corruption a single round may inject at any arm.
pub const PER_ROUND_CAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdversaryMode {
    Weak,
    Strong,
}

impl AdversaryMode {
    pub fn name(self) -> &'static str {
        match self {
            AdversaryMode::Weak => "weak",
            AdversaryMode::Strong => "strong",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    None,
    Oracle,
    Garcelon,
    LowerBound,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Oracle => "oracle",
            AttackKind::Garcelon => "garcelon",
            AttackKind::LowerBound => "lower-bound",
        }
    }
}

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl TargetBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&xi, (&l, &h))| l <= xi && xi <= h)
    }

    /// `[0.5, 1]` in one dimension, `[0, 0.5]^2` in two.
    pub fn garcelon_default(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self { lo: vec![0.5], hi: vec![1.0] }),
            2 => Ok(Self { lo: vec![0.0, 0.0], hi: vec![0.5, 0.5] }),
            d => Err(Error::Config(format!(
                "garcelon attack has no target region defined for d = {d}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub adversary: AdversaryMode,
    /// Total corruption budget `C`.
    pub budget: f64,
    /// Arms within this distance of `x_*` are benign (Oracle).
    pub benign_radius: f64,
    /// How far below the worst arm benign rewards are pushed (Oracle).
    pub margin: f64,
    pub fire_probability: f64,
    /// Arms inside this region are left alone (Garcelon).
    pub target: Option<TargetBox>,
    /// Standard deviation of the Garcelon replacement reward.
    pub garcelon_sigma: f64,
    pub lower_bound: Option<LowerBoundInstance>,
}

impl AttackSpec {
    pub fn none() -> Self {
        Self::new(AttackKind::None, AdversaryMode::Strong, 0.0)
    }

    pub fn new(kind: AttackKind, adversary: AdversaryMode, budget: f64) -> Self {
        Self {
            kind,
            adversary,
            budget,
            benign_radius: 0.2,
            margin: 0.1,
            fire_probability: 0.5,
            target: None,
            garcelon_sigma: 0.1,
            lower_bound: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fire_probability) {
            return Err(Error::Config(format!(
                "fire probability {} outside [0, 1]",
                self.fire_probability
            )));
        }
        if self.benign_radius < 0.0 || self.margin < 0.0 || self.garcelon_sigma < 0.0 {
            return Err(Error::Config("benign radius, margin and sigma must be >= 0".into()));
        }
        if !(self.budget >= 0.0) {
            return Err(Error::Config(format!("budget {} must be >= 0", self.budget)));
        }
        match self.kind {
            AttackKind::Garcelon => {
                let target = match &self.target {
                    Some(t) => t.clone(),
                    None => TargetBox::garcelon_default(dim)?,
                };
                if target.lo.len() != dim || target.hi.len() != dim {
                    return Err(Error::Config("garcelon target dimension mismatch".into()));
                }
            }
            AttackKind::LowerBound => match &self.lower_bound {
                Some(lb) if lb.dim == dim => {}
                Some(_) => return Err(Error::Config("lower-bound instance dimension mismatch".into())),
                None => return Err(Error::Config("lower-bound attack needs an instance".into())),
            },
            AttackKind::None | AttackKind::Oracle => {}
        }
        Ok(())
    }
}

/// `(RewardFunction, AttackSpec)` for the cell-tent hard instance with a
/// strong adversary zeroing rewards on the rewarding cell.
pub fn make_lower_bound_instance(
    d: usize,
    epsilon: f64,
    k: u64,
    budget: f64,
) -> Result<(RewardFunction, AttackSpec)> {
    let instance = LowerBoundInstance::new(d, epsilon, k)?;
    let mut spec = AttackSpec::new(AttackKind::LowerBound, AdversaryMode::Strong, budget);
    spec.lower_bound = Some(instance);
    Ok((RewardFunction::lower_bound(instance), spec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    total: f64,
    spent: f64,
    mode: AdversaryMode,
    per_round_log: Vec<f64>,
}

impl BudgetLedger {
    pub fn new(total: f64, mode: AdversaryMode) -> Self {
        Self { total, spent: 0.0, mode, per_round_log: Vec::new() }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn mode(&self) -> AdversaryMode {
        self.mode
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.spent
    }

    pub fn per_round_log(&self) -> &[f64] {
        &self.per_round_log
    }

    /// Whether a charge would fit in the remaining budget.
    pub fn can_afford(&self, charge: f64) -> bool {
        charge > 0.0 && charge <= PER_ROUND_CAP && self.spent + charge <= self.total
    }

    /// Logs this round's charge (zero when nothing fired).
    fn record(&mut self, charge: f64) {
        debug_assert!(charge == 0.0 || self.can_afford(charge));
        self.spent += charge;
        self.per_round_log.push(charge);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundCorruption {
    pub applies: bool,
    pub corrupted_observation: f64,
    pub charge: f64,
    pub description: &'static str,
}

impl RoundCorruption {
    fn clean(raw: f64) -> Self {
        Self { applies: false, corrupted_observation: raw, charge: 0.0, description: "none" }
    }
}

/// A corruption map `c_t(.)` committed before the arm is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum CorruptionMap {
    Zero,
    /// Benign arms have their mean moved to `target`.
    OracleShift { x_star: Vec<f64>, radius: f64, metric: Metric, target: f64 },
    /// Arms outside the target box have their mean replaced by `value`.
    GarcelonReplace { target: TargetBox, value: f64 },
    /// Rewards on the hard-instance cell are zeroed.
    ZeroCell { instance: LowerBoundInstance },
}

impl CorruptionMap {
    /// `c_t(x)`, clipped to the per-round cap.
    pub fn corruption_at(&self, x: &[f64], reward: &RewardFunction) -> f64 {
        let c = match self {
            CorruptionMap::Zero => 0.0,
            CorruptionMap::OracleShift { x_star, radius, metric, target } => {
                if metric.dist(x, x_star) <= *radius {
                    target - reward.eval(x)
                } else {
                    0.0
                }
            }
            CorruptionMap::GarcelonReplace { target, value } => {
                if target.contains(x) {
                    0.0
                } else {
                    value - reward.eval(x)
                }
            }
            CorruptionMap::ZeroCell { instance } => {
                if instance.in_target(x) {
                    -reward.eval(x)
                } else {
                    0.0
                }
            }
        };
        c.clamp(-PER_ROUND_CAP, PER_ROUND_CAP)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CorruptionMap::Zero)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakAttack {
    pub map: CorruptionMap,
    pub charge: f64,
}

impl WeakAttack {
    pub fn apply(&self, x: &[f64], raw: f64, reward: &RewardFunction) -> RoundCorruption {
        if self.map.is_zero() {
            return RoundCorruption::clean(raw);
        }
        let c = self.map.corruption_at(x, reward);
        RoundCorruption {
            applies: true,
            corrupted_observation: raw + c,
            charge: self.charge,
            description: "weak",
        }
    }
}

/// Landscape facts the attacks need, computed once per reward function.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackContext {
    pub x_star: Arm,
    pub mu_star: f64,
    pub mu_min: f64,
    /// `(max, min)` of the mean reward outside the Garcelon target.
    pub outside_extremes: Option<(f64, f64)>,
}

impl AttackContext {
    pub fn compute(reward: &RewardFunction, metric: Metric, spec: &AttackSpec) -> Result<Self> {
        let opt = optimal_value(reward, metric);
        let outside_extremes = if spec.kind == AttackKind::Garcelon {
            let target = resolve_target(spec, reward.dim())?;
            let res = if reward.dim() == 1 { 1e-4 } else { 1e-3 };
            grid_extremes(reward, res, |x| !target.contains(x)).map(|(_, hi, _, lo)| (hi, lo))
        } else {
            None
        };
        Ok(Self { x_star: opt.arm_star, mu_star: opt.mu_star, mu_min: worst_value(reward), outside_extremes })
    }
}

fn resolve_target(spec: &AttackSpec, dim: usize) -> Result<TargetBox> {
    match &spec.target {
        Some(t) => Ok(t.clone()),
        None => TargetBox::garcelon_default(dim),
    }
}

/// Per-run adversary: spec, cached landscape, and the budget ledger. The
/// random stream is owned by the caller.
#[derive(Debug, Clone)]
pub struct Adversary {
    spec: AttackSpec,
    reward: RewardFunction,
    metric: Metric,
    noise: NoiseModel,
    ctx: AttackContext,
    target: Option<TargetBox>,
    ledger: BudgetLedger,
}

impl Adversary {
    pub fn new(
        spec: AttackSpec,
        reward: RewardFunction,
        metric: Metric,
        noise: NoiseModel,
        ctx: AttackContext,
    ) -> Result<Self> {
        spec.validate(reward.dim())?;
        let target = if spec.kind == AttackKind::Garcelon {
            Some(resolve_target(&spec, reward.dim())?)
        } else {
            None
        };
        let ledger = BudgetLedger::new(spec.budget, spec.adversary);
        Ok(Self { spec, reward, metric, noise, ctx, target, ledger })
    }

    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> BudgetLedger {
        self.ledger
    }

    fn oracle_target(&self) -> f64 {
        self.ctx.mu_min - self.spec.margin
    }

    fn fires<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random_bool(self.spec.fire_probability)
    }

    fn garcelon_value<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let s = self.spec.garcelon_sigma;
        (s * z).clamp(-3.0 * s, 3.0 * s)
    }

    /// Corrupts the observation of the already-chosen arm `x_t`.
    pub fn strong_attack<R: Rng + ?Sized>(&mut self, x_t: &Arm, raw: f64, rng: &mut R) -> RoundCorruption {
        let x = x_t.coords();
        let proposal = match self.spec.kind {
            AttackKind::None => None,
            AttackKind::Oracle => {
                let benign = self.metric.dist(x, self.ctx.x_star.coords()) <= self.spec.benign_radius;
                if benign && self.fires(rng) {
                    Some((self.oracle_target() + self.noise.draw(rng), "oracle"))
                } else {
                    None
                }
            }
            AttackKind::Garcelon => {
                let outside = !self.target.as_ref().is_some_and(|t| t.contains(x));
                if outside && self.fires(rng) {
                    Some((self.garcelon_value(rng), "garcelon"))
                } else {
                    None
                }
            }
            AttackKind::LowerBound => {
                let lb = self.spec.lower_bound.as_ref().expect("validated");
                if lb.in_target(x) {
                    Some((raw - self.reward.eval(x), "lower-bound"))
                } else {
                    None
                }
            }
        };
        let Some((observation, description)) = proposal else {
            self.ledger.record(0.0);
            return RoundCorruption::clean(raw);
        };
        let c = (observation - raw).clamp(-PER_ROUND_CAP, PER_ROUND_CAP);
        let charge = c.abs();
        if !self.ledger.can_afford(charge) {
            self.ledger.record(0.0);
            return RoundCorruption::clean(raw);
        }
        self.ledger.record(charge);
        RoundCorruption { applies: true, corrupted_observation: raw + c, charge, description }
    }

    /// Commits this round's corruption map before the arm is chosen and
    /// charges its supremum over all arms.
    pub fn weak_attack<R: Rng + ?Sized>(&mut self, rng: &mut R) -> WeakAttack {
        let (map, sup) = match self.spec.kind {
            AttackKind::None => (CorruptionMap::Zero, 0.0),
            AttackKind::Oracle => {
                if self.fires(rng) {
                    let target = self.oracle_target();
                    // every benign mean lies in [mu_min, mu_star]; the sup is at x_*
                    let sup = (self.ctx.mu_star - target).abs();
                    let map = CorruptionMap::OracleShift {
                        x_star: self.ctx.x_star.coords().to_vec(),
                        radius: self.spec.benign_radius,
                        metric: self.metric,
                        target,
                    };
                    (map, sup)
                } else {
                    (CorruptionMap::Zero, 0.0)
                }
            }
            AttackKind::Garcelon => {
                if self.fires(rng) {
                    let value = self.garcelon_value(rng);
                    let (hi, lo) = self.ctx.outside_extremes.unwrap_or((value, value));
                    let sup = (value - hi).abs().max((value - lo).abs());
                    let target = self.target.clone().expect("validated");
                    (CorruptionMap::GarcelonReplace { target, value }, sup)
                } else {
                    (CorruptionMap::Zero, 0.0)
                }
            }
            AttackKind::LowerBound => {
                let instance = self.spec.lower_bound.expect("validated");
                (CorruptionMap::ZeroCell { instance }, instance.epsilon() / 2.0)
            }
        };
        let charge = sup.min(PER_ROUND_CAP);
        if map.is_zero() || !self.ledger.can_afford(charge) {
            self.ledger.record(0.0);
            return WeakAttack { map: CorruptionMap::Zero, charge: 0.0 };
        }
        self.ledger.record(charge);
        WeakAttack { map, charge }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn adversary(kind: AttackKind, mode: AdversaryMode, budget: f64, reward: RewardFunction) -> Adversary {
        let spec = AttackSpec::new(kind, mode, budget);
        let ctx = AttackContext::compute(&reward, Metric::LInf, &spec).unwrap();
        Adversary::new(spec, reward, Metric::LInf, NoiseModel::default(), ctx).unwrap()
    }

    const WORST_TRIANGLE: f64 = 0.9 - 0.95 * 2.0 / 3.0;

    #[test]
    fn oracle_strong_skips_non_benign_arm() {
        let mut adv = adversary(AttackKind::Oracle, AdversaryMode::Strong, 100.0, RewardFunction::triangle());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let out = adv.strong_attack(&Arm::scalar(0.9).unwrap(), 0.35, &mut rng);
            assert!(!out.applies);
            assert_eq!(out.charge, 0.0);
            assert_eq!(out.corrupted_observation, 0.35);
        }
        assert_eq!(adv.ledger().spent(), 0.0);
    }

    #[test]
    fn garcelon_strong_spares_target_interval() {
        let mut adv = adversary(AttackKind::Garcelon, AdversaryMode::Strong, 100.0, RewardFunction::triangle());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            assert!(!adv.strong_attack(&Arm::scalar(0.7).unwrap(), 0.5, &mut rng).applies);
        }
        let fired = (0..200)
            .filter(|_| adv.strong_attack(&Arm::scalar(0.2).unwrap(), 0.77, &mut rng).applies)
            .count();
        assert!(fired > 50 && fired < 150, "fired {fired} of 200");
    }

    #[test]
    fn oracle_strong_pushes_below_worst_arm() {
        let mut adv = adversary(AttackKind::Oracle, AdversaryMode::Strong, 1e9, RewardFunction::triangle());
        assert!((adv.oracle_target() - (WORST_TRIANGLE - 0.1)).abs() < 1e-12);
        assert!((adv.oracle_target() - 0.166667).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Arm::scalar(1.0 / 3.0).unwrap();
        let obs: Vec<f64> = (0..20_000)
            .map(|_| adv.strong_attack(&x, 0.9, &mut rng))
            .filter(|o| o.applies)
            .map(|o| o.corrupted_observation)
            .collect();
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        assert!((mean - 0.166667).abs() < 4.0 * 0.1 / (obs.len() as f64).sqrt());
        let frac = obs.len() as f64 / 20_000.0;
        assert!((frac - 0.5).abs() < 0.02);
    }

    #[test]
    fn weak_oracle_map_and_charge() {
        let reward = RewardFunction::triangle();
        let mut adv = adversary(AttackKind::Oracle, AdversaryMode::Weak, 1e9, reward.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let attack = (0..100).map(|_| adv.weak_attack(&mut rng)).find(|a| !a.map.is_zero()).unwrap();
        let target = WORST_TRIANGLE - 0.1;
        assert!((attack.charge - (0.9 - target)).abs() < 1e-12);
        assert!((attack.charge - 0.733333).abs() < 1e-6);
        for x in [0.2, 1.0 / 3.0, 0.5] {
            let c = attack.map.corruption_at(&[x], &reward);
            assert!((c - (target - reward.eval(&[x]))).abs() < 1e-12);
        }
        assert_eq!(attack.map.corruption_at(&[0.9], &reward), 0.0);
        // grid oracle: the sup of |c| over arms is the charge
        let sup = (0..=10_000)
            .map(|i| attack.map.corruption_at(&[i as f64 / 10_000.0], &reward).abs())
            .fold(0.0, f64::max);
        assert!((sup - attack.charge).abs() < 1e-3);
    }

    #[test]
    fn weak_no_fire_is_zero() {
        let reward = RewardFunction::triangle();
        let mut adv = adversary(AttackKind::Oracle, AdversaryMode::Weak, 1e9, reward.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let attack = (0..100).map(|_| adv.weak_attack(&mut rng)).find(|a| a.map.is_zero()).unwrap();
        assert_eq!(attack.charge, 0.0);
        assert!(!attack.apply(&[1.0 / 3.0], 0.9, &reward).applies);
    }

    #[test]
    fn weak_skips_when_budget_short() {
        let reward = RewardFunction::triangle();
        let mut adv = adversary(AttackKind::Oracle, AdversaryMode::Weak, 0.5, reward);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let a = adv.weak_attack(&mut rng);
            assert!(a.map.is_zero());
            assert_eq!(a.charge, 0.0);
        }
        assert_eq!(adv.ledger().spent(), 0.0);
    }

    #[test]
    fn weak_garcelon_sup_matches_grid() {
        let reward = RewardFunction::sine();
        let mut adv = adversary(AttackKind::Garcelon, AdversaryMode::Weak, 1e9, reward.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = adv.weak_attack(&mut rng);
            if a.map.is_zero() {
                continue;
            }
            let sup = (0..=10_000)
                .map(|i| a.map.corruption_at(&[i as f64 / 10_000.0], &reward).abs())
                .fold(0.0, f64::max);
            assert!((sup - a.charge).abs() < 1e-3, "sup {sup} charge {}", a.charge);
            assert!(a.charge <= 1.0);
        }
    }

    #[test]
    fn weak_map_is_precommitted() {
        // the same committed map serves any arm the policy might pick
        let reward = RewardFunction::triangle();
        let mut adv = adversary(AttackKind::Oracle, AdversaryMode::Weak, 1e9, reward.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut clone_adv = adv.clone();
        let mut clone_rng = rng.clone();
        for _ in 0..50 {
            let a = adv.weak_attack(&mut rng);
            let b = clone_adv.weak_attack(&mut clone_rng);
            assert_eq!(a, b);
            for x in [0.25, 0.8] {
                let raw = reward.eval(&[x]);
                let out = a.apply(&[x], raw, &reward);
                assert_eq!(out.corrupted_observation, raw + a.map.corruption_at(&[x], &reward));
            }
        }
        assert_eq!(adv.ledger(), clone_adv.ledger());
    }

    #[test]
    fn none_attack_is_identity() {
        let reward = RewardFunction::triangle();
        let mut strong = adversary(AttackKind::None, AdversaryMode::Strong, 10.0, reward.clone());
        let mut weak = adversary(AttackKind::None, AdversaryMode::Weak, 10.0, reward.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..100 {
            let x = i as f64 / 99.0;
            let raw = reward.eval(&[x]) + 0.01 * i as f64;
            assert_eq!(strong.strong_attack(&Arm::scalar(x).unwrap(), raw, &mut rng).corrupted_observation, raw);
            assert_eq!(weak.weak_attack(&mut rng).apply(&[x], raw, &reward).corrupted_observation, raw);
        }
    }

    #[test]
    fn lower_bound_instance_shapes() {
        let (f, spec) = make_lower_bound_instance(1, 0.5, 1, 10.0).unwrap();
        assert_eq!(spec.kind, AttackKind::LowerBound);
        let lb = spec.lower_bound.unwrap();
        assert_eq!(lb.center(1).coords(), &[0.25]);
        assert_eq!(lb.center(2).coords(), &[0.75]);
        assert_eq!(f.eval(&[0.25]), 0.25);
        let (_, spec) = make_lower_bound_instance(2, 0.25, 16, 10.0).unwrap();
        assert_eq!(spec.lower_bound.unwrap().cell_count(), 16);
        assert!(make_lower_bound_instance(2, 0.25, 17, 10.0).is_err());
    }

    #[test]
    fn lower_bound_strong_zeroes_target_cell() {
        let (f, spec) = make_lower_bound_instance(1, 0.25, 2, 1.0).unwrap();
        let ctx = AttackContext::compute(&f, Metric::LInf, &spec).unwrap();
        let mut adv = Adversary::new(spec, f.clone(), Metric::LInf, NoiseModel::new(0.0).unwrap(), ctx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Arm::scalar(0.375).unwrap();
        let out = adv.strong_attack(&x, f.eval(&[0.375]), &mut rng);
        assert!(out.applies);
        assert_eq!(out.corrupted_observation, 0.0);
        assert_eq!(out.charge, 0.125);
        // off-cell arms are never touched
        assert!(!adv.strong_attack(&Arm::scalar(0.9).unwrap(), 0.0, &mut rng).applies);
        // budget 1.0 covers exactly eight full-height charges
        let fired = (0..20).filter(|_| adv.strong_attack(&x, 0.125, &mut rng).applies).count();
        assert_eq!(fired, 7);
        assert!(adv.ledger().spent() <= 1.0);
    }

    #[test]
    fn garcelon_needs_a_target_in_three_dims() {
        let spec = AttackSpec::new(AttackKind::Garcelon, AdversaryMode::Strong, 1.0);
        assert!(matches!(spec.validate(3), Err(Error::Config(_))));
        assert!(spec.validate(2).is_ok());
    }

    #[test]
    fn ledger_invariants_under_random_attacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for run in 0..200 {
            let kind = [AttackKind::Oracle, AttackKind::Garcelon][run % 2];
            let mode = if run % 4 < 2 { AdversaryMode::Weak } else { AdversaryMode::Strong };
            let budget = rng.random_range(0.0..20.0);
            let reward = if run % 3 == 0 { RewardFunction::two_dim() } else { RewardFunction::triangle() };
            let spec = AttackSpec::new(kind, mode, budget);
            let ctx = AttackContext::compute(&reward, Metric::LInf, &spec).unwrap();
            let mut adv = Adversary::new(spec, reward.clone(), Metric::LInf, NoiseModel::default(), ctx).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..reward.dim()).map(|_| rng.random()).collect();
                let raw = reward.eval(&x);
                match mode {
                    AdversaryMode::Strong => {
                        adv.strong_attack(&Arm::new(x).unwrap(), raw, &mut rng);
                    }
                    AdversaryMode::Weak => {
                        adv.weak_attack(&mut rng);
                    }
                }
            }
            let ledger = adv.ledger();
            assert!(ledger.spent() <= budget);
            assert_eq!(ledger.per_round_log().iter().sum::<f64>(), ledger.spent());
            assert!(ledger.per_round_log().iter().all(|&c| (0.0..=1.0).contains(&c)));
        }
    }
}

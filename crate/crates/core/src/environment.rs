//! Expected-reward functions, Gaussian observation noise, and the optimum
//! oracle used for regret accounting.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_space::{Arm, Metric};

/// Hard instance on `[0,1]^d` split into `K^d` equal `l_inf` cells: a tent of
/// height `eps/2` on the target cell and zero everywhere else, `eps = 1/K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundInstance {
    pub dim: usize,
    pub cells_per_axis: u64,
    /// One-based index of the rewarding cell, lexicographic over cell corners.
    pub target: u64,
}

impl LowerBoundInstance {
    /// `epsilon` is snapped to `1 / floor(1/epsilon)` so the cells tile the cube.
    pub fn new(dim: usize, epsilon: f64, target: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} must lie in (0, 1]")));
        }
        let cells_per_axis = (1.0 / epsilon + 1e-9).floor() as u64;
        let count = (cells_per_axis as u128).pow(dim as u32);
        if target == 0 || target as u128 > count {
            return Err(Error::InvalidArgument(format!(
                "cell index {target} out of range 1..={count}"
            )));
        }
        Ok(Self { dim, cells_per_axis, target })
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.cells_per_axis as f64
    }

    pub fn cell_count(&self) -> u128 {
        (self.cells_per_axis as u128).pow(self.dim as u32)
    }

    fn cell_coords(&self, k: u64) -> Vec<u64> {
        let mut rem = k - 1;
        let mut out = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.cells_per_axis;
            rem /= self.cells_per_axis;
        }
        out
    }

    pub fn center(&self, k: u64) -> Arm {
        let eps = self.epsilon();
        Arm::from_unchecked(
            self.cell_coords(k).iter().map(|&c| (c as f64 + 0.5) * eps).collect(),
        )
    }

    /// Whether `x` lies in the target cell (upper faces of the cube included).
    pub fn in_target(&self, x: &[f64]) -> bool {
        let last = self.cells_per_axis - 1;
        let target = self.cell_coords(self.target);
        x.iter().zip(&target).all(|(&xi, &c)| {
            let idx = ((xi * self.cells_per_axis as f64).floor() as u64).min(last);
            idx == c
        })
    }

    fn eval(&self, x: &[f64]) -> f64 {
        if !self.in_target(x) {
            return 0.0;
        }
        let c = self.center(self.target);
        let dist = Metric::LInf.dist(x, c.coords());
        (self.epsilon() / 2.0 - dist).max(0.0)
    }
}

/// A user-supplied mean function with its declared Lipschitz constant.
pub type RewardFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomReward {
    pub name: String,
    pub lipschitz: f64,
    pub func: RewardFn,
}

impl fmt::Debug for CustomReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomReward")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum RewardKind {
    /// `0.9 - 0.95 |x - 1/3|` on `[0,1]`.
    Triangle,
    /// `2/(3 pi) sin(3 pi x / 2)` on `[0,1]`.
    Sine,
    /// `1 - 0.8 |x - (0.75,0.75)|_2 - 0.4 |x - (0,1)|_2` on `[0,1]^2`.
    TwoDim,
    LowerBound(LowerBoundInstance),
    Custom(CustomReward),
}

#[derive(Debug, Clone)]
pub struct RewardFunction {
    kind: RewardKind,
    dim: usize,
}

impl RewardFunction {
    pub fn triangle() -> Self {
        Self { kind: RewardKind::Triangle, dim: 1 }
    }

    pub fn sine() -> Self {
        Self { kind: RewardKind::Sine, dim: 1 }
    }

    pub fn two_dim() -> Self {
        Self { kind: RewardKind::TwoDim, dim: 2 }
    }

    pub fn lower_bound(instance: LowerBoundInstance) -> Self {
        Self { dim: instance.dim, kind: RewardKind::LowerBound(instance) }
    }

    pub fn custom(dim: usize, custom: CustomReward) -> Self {
        Self { kind: RewardKind::Custom(custom), dim }
    }

    pub fn kind(&self) -> &RewardKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            RewardKind::Triangle => "triangle",
            RewardKind::Sine => "sine",
            RewardKind::TwoDim => "twodim",
            RewardKind::LowerBound(_) => "lower-bound",
            RewardKind::Custom(c) => &c.name,
        }
    }

    /// Declared Lipschitz constant under `metric`.
    pub fn lipschitz_constant(&self, metric: Metric) -> f64 {
        match (&self.kind, metric) {
            (RewardKind::Triangle, _) => 0.95,
            (RewardKind::Sine, _) => 1.0,
            (RewardKind::TwoDim, Metric::L2) => 1.2,
            (RewardKind::TwoDim, Metric::LInf) => 1.2 * 2f64.sqrt(),
            (RewardKind::LowerBound(_), _) => 1.0,
            (RewardKind::Custom(c), _) => c.lipschitz,
        }
    }

    /// Mean reward at raw coordinates; the caller guarantees the dimension.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            RewardKind::Triangle => 0.9 - 0.95 * (x[0] - 1.0 / 3.0).abs(),
            RewardKind::Sine => 2.0 / (3.0 * PI) * (1.5 * PI * x[0]).sin(),
            RewardKind::TwoDim => {
                1.0 - 0.8 * (x[0] - 0.75).hypot(x[1] - 0.75) - 0.4 * x[0].hypot(x[1] - 1.0)
            }
            RewardKind::LowerBound(lb) => lb.eval(x),
            RewardKind::Custom(c) => (c.func)(x),
        }
    }

    pub fn mean_reward(&self, a: &Arm) -> Result<f64> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: a.dim() });
        }
        Ok(self.eval(a.coords()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sigma: 0.1 }
    }
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be finite and >= 0")));
        }
        Ok(Self { sigma })
    }

    /// One zero-mean Gaussian draw. Always consumes the stream, even at
    /// `sigma = 0`, so noise sequences stay aligned across configurations.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.sigma * z
    }
}

pub fn draw_stochastic_reward<R: Rng + ?Sized>(
    f: &RewardFunction,
    noise: &NoiseModel,
    a: &Arm,
    rng: &mut R,
) -> Result<f64> {
    let mu = f.mean_reward(a)?;
    Ok(mu + noise.draw(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimumMethod {
    ClosedForm,
    GridSearch { resolution: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumCertificate {
    pub arm_star: Arm,
    pub mu_star: f64,
    pub method: OptimumMethod,
    /// Certified slack: no arm beats `mu_star` by more than this.
    pub tolerance: f64,
}

/// Per-axis grid resolution for brute-force oracles.
fn oracle_resolution(dim: usize) -> f64 {
    match dim {
        1 => 1e-4,
        2 => 1e-3,
        d => 1.0 / ((1e6f64).powf(1.0 / d as f64).floor() - 1.0).max(1.0),
    }
}

/// Visits every point of the regular grid with `steps + 1` points per axis.
fn for_each_grid_point(dim: usize, steps: usize, mut visit: impl FnMut(&[f64])) {
    let h = 1.0 / steps as f64;
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    loop {
        for (xi, &i) in x.iter_mut().zip(&idx) {
            *xi = (i as f64 * h).min(1.0);
        }
        visit(&x);
        let mut axis = dim;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] <= steps {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Extremes of `f` over the grid points satisfying `keep`, as
/// `(argmax, max, argmin, min)`; `None` if no grid point qualifies.
pub fn grid_extremes(
    f: &RewardFunction,
    resolution: f64,
    keep: impl Fn(&[f64]) -> bool,
) -> Option<(Arm, f64, Arm, f64)> {
    let steps = (1.0 / resolution).round().max(1.0) as usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut worst: Option<(Vec<f64>, f64)> = None;
    for_each_grid_point(f.dim(), steps, |x| {
        if !keep(x) {
            return;
        }
        let v = f.eval(x);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((x.to_vec(), v));
        }
        if worst.as_ref().is_none_or(|(_, w)| v < *w) {
            worst = Some((x.to_vec(), v));
        }
    });
    let (bx, bv) = best?;
    let (wx, wv) = worst?;
    Some((Arm::from_unchecked(bx), bv, Arm::from_unchecked(wx), wv))
}

/// `x_*` and `mu(x_*)`: closed form where known, brute-force grid otherwise.
pub fn optimal_value(f: &RewardFunction, metric: Metric) -> OptimumCertificate {
    let closed = |x: Vec<f64>, mu: f64| OptimumCertificate {
        arm_star: Arm::from_unchecked(x),
        mu_star: mu,
        method: OptimumMethod::ClosedForm,
        tolerance: 0.0,
    };
    match f.kind() {
        RewardKind::Triangle => closed(vec![1.0 / 3.0], 0.9),
        RewardKind::Sine => closed(vec![1.0 / 3.0], 2.0 / (3.0 * PI)),
        RewardKind::LowerBound(lb) => closed(lb.center(lb.target).coords().to_vec(), lb.epsilon() / 2.0),
        RewardKind::TwoDim | RewardKind::Custom(_) => {
            let resolution = oracle_resolution(f.dim());
            let (arm_star, mu_star, _, _) =
                grid_extremes(f, resolution, |_| true).expect("full grid is nonempty");
            OptimumCertificate {
                arm_star,
                mu_star,
                method: OptimumMethod::GridSearch { resolution },
                tolerance: f.lipschitz_constant(metric) * resolution,
            }
        }
    }
}

/// Smallest mean reward over the arm space (closed form where known).
pub fn worst_value(f: &RewardFunction) -> f64 {
    match f.kind() {
        // both attain their minimum at x = 1
        RewardKind::Triangle | RewardKind::Sine => f.eval(&[1.0]),
        RewardKind::LowerBound(_) => 0.0,
        RewardKind::TwoDim | RewardKind::Custom(_) => {
            grid_extremes(f, oracle_resolution(f.dim()), |_| true)
                .expect("full grid is nonempty")
                .3
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_reward_examples() {
        let tri = RewardFunction::triangle();
        assert!((tri.mean_reward(&Arm::scalar(1.0 / 3.0).unwrap()).unwrap() - 0.9).abs() < 1e-15);
        let sine = RewardFunction::sine();
        let v = sine.mean_reward(&Arm::scalar(1.0 / 3.0).unwrap()).unwrap();
        assert!((v - 0.212207).abs() < 1e-6);
        let two = RewardFunction::two_dim();
        let v = two.mean_reward(&Arm::new(vec![0.75, 0.75]).unwrap()).unwrap();
        assert!((v - 0.683772).abs() < 1e-6);
    }

    #[test]
    fn mean_reward_checks_dimension() {
        let err = RewardFunction::two_dim().mean_reward(&Arm::scalar(0.5).unwrap());
        assert_eq!(err, Err(Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn zero_noise_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = RewardFunction::sine();
        let a = Arm::scalar(0.77).unwrap();
        let y = draw_stochastic_reward(&f, &NoiseModel::new(0.0).unwrap(), &a, &mut rng).unwrap();
        assert_eq!(y, f.eval(&[0.77]));
    }

    #[test]
    fn noise_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = RewardFunction::triangle();
        let a = Arm::scalar(0.5).unwrap();
        let mu = f.eval(&[0.5]);
        let noise = NoiseModel::default();
        let n = 100_000;
        let ys: Vec<f64> = (0..n)
            .map(|_| draw_stochastic_reward(&f, &noise, &a, &mut rng).unwrap())
            .collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - mu).abs() < 3.0 * 0.1 / (n as f64).sqrt());
        assert!((var - 0.01).abs() < 0.05 * 0.01);
    }

    #[test]
    fn noise_is_reproducible() {
        let noise = NoiseModel::default();
        let a: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(5);
            (0..10).map(|_| noise.draw(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(5);
            (0..10).map(|_| noise.draw(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn optimum_closed_forms() {
        let c = optimal_value(&RewardFunction::triangle(), Metric::LInf);
        assert_eq!(c.mu_star, 0.9);
        assert!((c.arm_star.coords()[0] - 1.0 / 3.0).abs() < 1e-15);
        let lb = LowerBoundInstance::new(1, 0.25, 2).unwrap();
        let c = optimal_value(&RewardFunction::lower_bound(lb), Metric::LInf);
        assert_eq!(c.arm_star.coords(), &[0.375]);
        assert_eq!(c.mu_star, 0.125);
    }

    #[test]
    fn optimum_two_dim_by_grid() {
        let c = optimal_value(&RewardFunction::two_dim(), Metric::LInf);
        assert!(matches!(c.method, OptimumMethod::GridSearch { resolution } if resolution == 1e-3));
        assert!(Metric::LInf.dist(c.arm_star.coords(), &[0.75, 0.75]) < 1e-2);
        assert!((c.mu_star - 0.6838).abs() < 1e-3);
    }

    #[test]
    fn optimum_certificate_dominates_finer_probe() {
        // random probes stand in for a finer grid: none may beat mu_star by more
        // than the certified tolerance
        let f = RewardFunction::two_dim();
        let c = optimal_value(&f, Metric::L2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20_000 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            assert!(f.eval(&x) <= c.mu_star + c.tolerance + 1e-12);
        }
    }

    #[test]
    fn worst_values() {
        assert!((worst_value(&RewardFunction::triangle()) - (0.9 - 0.95 * 2.0 / 3.0)).abs() < 1e-12);
        assert!((worst_value(&RewardFunction::sine()) + 2.0 / (3.0 * PI)).abs() < 1e-12);
        let w = worst_value(&RewardFunction::two_dim());
        assert!((w - (1.0 - 0.8 * 0.75 * 2f64.sqrt() - 0.4)).abs() < 1e-9);
    }

    #[test]
    fn lower_bound_cells() {
        let lb = LowerBoundInstance::new(1, 0.5, 1).unwrap();
        assert_eq!(lb.cell_count(), 2);
        assert_eq!(lb.center(1).coords(), &[0.25]);
        assert_eq!(lb.center(2).coords(), &[0.75]);
        assert_eq!(LowerBoundInstance::new(2, 0.25, 1).unwrap().cell_count(), 16);
        assert!(LowerBoundInstance::new(1, 0.5, 3).is_err());
        assert!(LowerBoundInstance::new(1, 0.5, 0).is_err());

        let lb = LowerBoundInstance::new(1, 0.25, 2).unwrap();
        let f = RewardFunction::lower_bound(lb);
        assert_eq!(f.eval(&[0.375]), 0.125);
        assert_eq!(f.eval(&[0.1]), 0.0);
        assert_eq!(f.eval(&[0.9]), 0.0);
        assert!(f.eval(&[0.3]) > 0.0);
    }

    fn lipschitz_ratio_max(f: &RewardFunction, metric: Metric, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = f.dim();
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let a: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            // half the pairs are close so local slopes are probed too
            let b: Vec<f64> = if rng.random_bool(0.5) {
                (0..d).map(|_| rng.random()).collect()
            } else {
                a.iter().map(|x| (x + rng.random_range(-0.01..0.01)).clamp(0.0, 1.0)).collect()
            };
            let dist = metric.dist(&a, &b);
            if dist > 1e-12 {
                worst = worst.max((f.eval(&a) - f.eval(&b)).abs() / dist);
            }
        }
        worst
    }

    #[test]
    fn measured_lipschitz_constants() {
        let tri = RewardFunction::triangle();
        for m in [Metric::LInf, Metric::L2] {
            assert!(lipschitz_ratio_max(&tri, m, 1) <= 0.95 + 1e-9);
        }
        assert!(lipschitz_ratio_max(&RewardFunction::sine(), Metric::LInf, 2) <= 1.0 + 1e-9);
        // 1.2-Lipschitz under L2, above the unit constant the algorithms assume
        let two = RewardFunction::two_dim();
        let measured = lipschitz_ratio_max(&two, Metric::L2, 3);
        assert!(measured <= 1.2 + 1e-9);
        assert!(measured > 1.0);
        let lb = RewardFunction::lower_bound(LowerBoundInstance::new(2, 0.25, 6).unwrap());
        assert!(lipschitz_ratio_max(&lb, Metric::LInf, 4) <= 1.0 + 1e-9);
    }
}

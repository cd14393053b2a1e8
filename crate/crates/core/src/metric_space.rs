//! Geometric substrate: arms in `[0,1]^d`, distances, and half-open dyadic
//! boxes with their coverings and refinements.
//!
//! A [`Region`] at depth `m` is stored as an integer cell index per axis, so
//! its bounds `[c / 2^m, (c + 1) / 2^m)` are exact in binary floating point and
//! containment is decided on integers.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the number of regions a single covering may hold.
pub const DEFAULT_REGION_CAP: u64 = 1 << 20;

/// Deepest supported dyadic level; keeps `2^depth` exact in `u64` and `f64`.
pub const MAX_DEPTH: u32 = 52;

/// A point of the arm space `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    coords: Vec<f64>,
}

impl Arm {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("an arm needs at least one coordinate".into()));
        }
        for (axis, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfDomain { axis, value });
            }
        }
        Ok(Self { coords })
    }

    /// Builds an arm from coordinates already known to lie in the unit cube.
    pub(crate) fn from_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| (0.0..=1.0).contains(c)));
        Self { coords }
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Lexicographic comparison of coordinates.
    pub fn lex_cmp(&self, other: &Arm) -> Ordering {
        for (a, b) in self.coords.iter().zip(&other.coords) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c:.6}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    LInf,
    L2,
}

impl Metric {
    /// Distance on raw coordinate slices of equal length.
    #[inline]
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::LInf => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::LInf => "l-inf",
            Metric::L2 => "l2",
        }
    }
}

pub fn distance(a: &Arm, b: &Arm, metric: Metric) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(metric.dist(a.coords(), b.coords()))
}

/// Half-open dyadic box `prod_i [cell_i / 2^depth, (cell_i + 1) / 2^depth)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    cell: Vec<u64>,
    depth: u32,
}

impl Region {
    pub fn new(cell: Vec<u64>, depth: u32) -> Result<Self> {
        if cell.is_empty() {
            return Err(Error::InvalidArgument("a region needs at least one axis".into()));
        }
        if depth > MAX_DEPTH {
            return Err(Error::InvalidArgument(format!("depth {depth} exceeds {MAX_DEPTH}")));
        }
        let cells_per_axis = 1u64 << depth;
        if let Some(&bad) = cell.iter().find(|&&c| c >= cells_per_axis) {
            return Err(Error::InvalidArgument(format!(
                "cell index {bad} out of range at depth {depth}"
            )));
        }
        Ok(Self { cell, depth })
    }

    /// The whole unit box `[0,1)^d` at depth zero.
    pub fn unit(d: usize) -> Self {
        Self { cell: vec![0; d], depth: 0 }
    }

    pub fn dim(&self) -> usize {
        self.cell.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cell(&self) -> &[u64] {
        &self.cell
    }

    pub fn side(&self) -> f64 {
        (-(self.depth as f64)).exp2()
    }

    pub fn lo(&self) -> Vec<f64> {
        let side = self.side();
        self.cell.iter().map(|&c| c as f64 * side).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        let side = self.side();
        self.cell.iter().map(|&c| (c + 1) as f64 * side).collect()
    }

    pub fn center(&self) -> Arm {
        let side = self.side();
        Arm::from_unchecked(self.cell.iter().map(|&c| (c as f64 + 0.5) * side).collect())
    }

    /// Row-major index among the `2^(d*depth)` boxes of the same depth, first
    /// axis most significant; equals lexicographic order of lower corners.
    pub fn id(&self) -> u128 {
        let base = 1u128 << self.depth;
        self.cell.iter().fold(0u128, |acc, &c| acc * base + c as u128)
    }

    /// Membership of a point in the half-open box. The closed upper face of
    /// the unit cube belongs to the boxes touching it so that every arm of
    /// `[0,1]^d` lies in exactly one box of a covering.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        if x.len() != self.cell.len() {
            return false;
        }
        let scale = (self.depth as f64).exp2();
        let last = (1u64 << self.depth) - 1;
        self.cell.iter().zip(x).all(|(&c, &xi)| {
            let idx = (xi * scale).floor();
            let idx = if idx >= (last + 1) as f64 && xi <= 1.0 { last as f64 } else { idx };
            idx == c as f64
        })
    }

    /// Diameter of the box under the given metric.
    pub fn diameter(&self, metric: Metric) -> f64 {
        match metric {
            Metric::LInf => self.side(),
            Metric::L2 => self.side() * (self.dim() as f64).sqrt(),
        }
    }
}

impl PartialOrd for Region {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Region {
    /// Lexicographic on lower corners, then by depth (coarser first).
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.lo(), other.lo());
        for (x, y) in a.iter().zip(&b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.depth.cmp(&other.depth).then_with(|| self.cell.cmp(&other.cell))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covering {
    depth: u32,
    regions: Vec<Region>,
}

impl Covering {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn into_regions(self) -> Vec<Region> {
        self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

fn covering_size(d: usize, depth: u32) -> u128 {
    let exp = d as u128 * depth as u128;
    if exp >= 127 {
        u128::MAX
    } else {
        1u128 << exp
    }
}

/// The `2^(d*depth)` dyadic boxes of side `2^-depth` tiling `[0,1)^d`,
/// ordered lexicographically by lower corner.
pub fn uniform_grid_covering(d: usize, depth: u32) -> Result<Covering> {
    uniform_grid_covering_capped(d, depth, DEFAULT_REGION_CAP)
}

pub fn uniform_grid_covering_capped(d: usize, depth: u32, cap: u64) -> Result<Covering> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let requested = covering_size(d, depth);
    if requested > cap as u128 || depth > MAX_DEPTH {
        return Err(Error::RegionCap { requested, cap });
    }
    let per_axis = 1u64 << depth;
    let mut regions = Vec::with_capacity(requested as usize);
    let mut cell = vec![0u64; d];
    loop {
        regions.push(Region { cell: cell.clone(), depth });
        // odometer increment, last axis fastest
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(Covering { depth, regions });
            }
            axis -= 1;
            cell[axis] += 1;
            if cell[axis] < per_axis {
                break;
            }
            cell[axis] = 0;
        }
    }
}

/// The `2^d` children of `r` one level deeper, in lexicographic order.
/// Children depend on `r` alone, so equal boxes refine identically anywhere.
pub fn refine_region(r: &Region) -> Vec<Region> {
    let d = r.dim();
    let depth = r.depth + 1;
    (0..(1u64 << d))
        .map(|bits| {
            let cell = r
                .cell
                .iter()
                .enumerate()
                .map(|(axis, &c)| 2 * c + ((bits >> (d - 1 - axis)) & 1))
                .collect();
            Region { cell, depth }
        })
        .collect()
}

/// `inner ⊆ outer` as boxes.
pub fn region_contains(outer: &Region, inner: &Region) -> bool {
    if outer.dim() != inner.dim() || outer.depth > inner.depth {
        return false;
    }
    let shift = inner.depth - outer.depth;
    outer
        .cell
        .iter()
        .zip(&inner.cell)
        .all(|(&o, &i)| i >> shift == o)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SampleMode {
    #[default]
    Uniform,
    Center,
}

pub fn sample_arm_in_region<R: Rng + ?Sized>(r: &Region, mode: SampleMode, rng: &mut R) -> Arm {
    match mode {
        SampleMode::Center => r.center(),
        SampleMode::Uniform => {
            let side = r.side();
            let coords = r
                .cell
                .iter()
                .map(|&c| {
                    let lo = c as f64 * side;
                    rng.random_range(lo..lo + side)
                })
                .collect();
            Arm::from_unchecked(coords)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arm(c: &[f64]) -> Arm {
        Arm::new(c.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let d = distance(&arm(&[0.2, 0.4]), &arm(&[0.5, 0.1]), Metric::LInf).unwrap();
        assert!((d - 0.3).abs() < 1e-12);
        let d = distance(&arm(&[0.0, 0.0]), &arm(&[0.3, 0.4]), Metric::L2).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        for m in [Metric::LInf, Metric::L2] {
            let a = arm(&[0.7, 0.1]);
            assert_eq!(distance(&a, &a, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn distance_rejects_dimension_mismatch() {
        let err = distance(&arm(&[0.1]), &arm(&[0.1, 0.2]), Metric::L2).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 1, got: 2 });
    }

    #[test]
    fn arm_rejects_out_of_domain() {
        assert!(Arm::new(vec![1.2]).is_err());
        assert!(Arm::new(vec![]).is_err());
        assert!(Arm::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn covering_d1_depth1() {
        let c = uniform_grid_covering(1, 1).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.regions()[0].lo(), vec![0.0]);
        assert_eq!(c.regions()[0].hi(), vec![0.5]);
        assert_eq!(c.regions()[1].lo(), vec![0.5]);
        assert_eq!(c.regions()[1].hi(), vec![1.0]);
    }

    #[test]
    fn covering_d2_depth1_has_four_boxes() {
        let c = uniform_grid_covering(2, 1).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.regions()[0].lo(), vec![0.0, 0.0]);
        assert_eq!(c.regions()[0].hi(), vec![0.5, 0.5]);
        let ids: Vec<u128> = c.regions().iter().map(Region::id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    /// Every probe of a grid four times finer than the boxes lands in exactly
    /// one region.
    fn assert_partition(regions: &[Region], d: usize, probe_depth: u32) {
        let per_axis = 1usize << probe_depth;
        let total = per_axis.pow(d as u32);
        let h = 1.0 / per_axis as f64;
        for flat in 0..total {
            let mut rem = flat;
            let mut p = vec![0.0; d];
            for axis in (0..d).rev() {
                p[axis] = (rem % per_axis) as f64 * h + h / 2.0;
                rem /= per_axis;
            }
            let hits = regions.iter().filter(|r| r.contains_point(&p)).count();
            assert_eq!(hits, 1, "probe {p:?} hit {hits} regions");
        }
    }

    #[test]
    fn covering_d2_depth3_partitions_unit_square() {
        let c = uniform_grid_covering(2, 3).unwrap();
        assert_eq!(c.len(), 64);
        assert_partition(c.regions(), 2, 5);
        assert!(c.regions().iter().all(|r| r.diameter(Metric::LInf) == 0.125));
    }

    #[test]
    fn covering_respects_cap() {
        let err = uniform_grid_covering_capped(2, 6, 1000).unwrap_err();
        assert!(matches!(err, Error::RegionCap { requested: 4096, cap: 1000 }));
        assert!(uniform_grid_covering(3, 7).is_err());
    }

    #[test]
    fn unit_box_contains_upper_face() {
        let c = uniform_grid_covering(1, 2).unwrap();
        let hits: Vec<_> = c.regions().iter().filter(|r| r.contains_point(&[1.0])).collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].cell(), &[3]);
    }

    #[test]
    fn refine_examples() {
        let r = Region::new(vec![0], 1).unwrap();
        let kids = refine_region(&r);
        assert_eq!(kids.len(), 2);
        assert_eq!((kids[0].lo(), kids[0].hi()), (vec![0.0], vec![0.25]));
        assert_eq!((kids[1].lo(), kids[1].hi()), (vec![0.25], vec![0.5]));

        let unit = Region::unit(2);
        assert_eq!(refine_region(&unit), uniform_grid_covering(2, 1).unwrap().into_regions());
    }

    #[test]
    fn refine_partitions_parent() {
        let parent = Region::new(vec![1, 2], 2).unwrap();
        let kids = refine_region(&parent);
        assert_eq!(kids.len(), 4);
        assert_eq!(kids, refine_region(&parent));
        let per_axis = 32;
        for i in 0..per_axis {
            for j in 0..per_axis {
                let p = [(i as f64 + 0.5) / per_axis as f64, (j as f64 + 0.5) / per_axis as f64];
                let n = kids.iter().filter(|k| k.contains_point(&p)).count();
                assert_eq!(n, usize::from(parent.contains_point(&p)));
            }
        }
    }

    #[test]
    fn containment_examples() {
        let outer = Region::new(vec![0], 1).unwrap(); // [0, 0.5)
        let inner = Region::new(vec![2], 3).unwrap(); // [0.25, 0.375)
        assert!(region_contains(&outer, &inner));
        // [0.25, 0.75) is not dyadic; the straddling case at its own level:
        let straddle = Region::new(vec![1], 1).unwrap();
        assert!(!region_contains(&outer, &straddle));
        let coarse = Region::unit(1);
        assert!(!region_contains(&outer, &coarse));
        assert!(region_contains(&outer, &outer));
    }

    #[test]
    fn sample_center_mode() {
        let r = Region::new(vec![0], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_arm_in_region(&r, SampleMode::Center, &mut rng).coords(), &[0.25]);
    }

    #[test]
    fn sample_uniform_stays_inside_and_centers() {
        let r = Region::new(vec![3, 1], 2).unwrap(); // [0.75,1) x [0.25,0.5)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let a = sample_arm_in_region(&r, SampleMode::Uniform, &mut rng);
            assert!(r.contains_point(a.coords()));
            sums[0] += a.coords()[0];
            sums[1] += a.coords()[1];
        }
        // uniform on a side-0.25 interval has sd 0.25/sqrt(12)
        let tol = 3.0 * 0.25 / 12f64.sqrt() / (n as f64).sqrt();
        let c = r.center();
        for (sum, centre) in sums.iter().zip(c.coords()) {
            assert!((sum / n as f64 - centre).abs() < tol);
        }
    }

    fn unit_point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, d)
    }

    fn dyadic_region() -> impl Strategy<Value = Region> {
        (0u32..5, 0u64..1024, 0u64..1024).prop_map(|(depth, a, b)| {
            let n = 1u64 << depth;
            Region::new(vec![a % n, b % n], depth).unwrap()
        })
    }

    proptest! {
        #[test]
        fn metric_axioms(a in unit_point(3), b in unit_point(3), c in unit_point(3)) {
            for m in [Metric::LInf, Metric::L2] {
                let ab = m.dist(&a, &b);
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab, m.dist(&b, &a));
                prop_assert!(m.dist(&a, &c) <= ab + m.dist(&b, &c) + 1e-12);
                prop_assert_eq!(m.dist(&a, &a), 0.0);
            }
        }

        #[test]
        fn containment_is_a_partial_order(a in dyadic_region(), b in dyadic_region(), c in dyadic_region()) {
            prop_assert!(region_contains(&a, &a));
            if region_contains(&a, &b) && region_contains(&b, &a) {
                prop_assert_eq!(&a, &b);
            }
            if region_contains(&a, &b) && region_contains(&b, &c) {
                prop_assert!(region_contains(&a, &c));
            }
        }

        #[test]
        fn refined_children_are_contained(r in dyadic_region()) {
            for k in refine_region(&r) {
                prop_assert!(region_contains(&r, &k));
                prop_assert_eq!(k.depth(), r.depth() + 1);
            }
        }
    }
}

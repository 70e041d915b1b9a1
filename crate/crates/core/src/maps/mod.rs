//! Countable-branch piecewise monotone interval maps.
//!
//! A [`MapModel`] is built from a [`Generator`] rule, truncated at branch
//! index `K` for countable families. Branch domains follow the half-open
//! convention `(b_k, b_{k-1}]`; the point `0` belongs to no branch. The mass
//! of the untruncated branches, `(0, b_K]`, is carried as
//! [`MapModel::tail_mass`] and reported with every downstream result.

mod branch;
mod cells;
mod spec;

pub use branch::{BranchAction, BranchSpec};
pub use cells::{Cell, CellSet, CellVisit, DEFAULT_CELL_CAP};
pub use spec::{ExplicitBranch, MapSpec, SlopeRule};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{tol, Interval, EPS};

pub const DEFAULT_TRUNCATION: usize = 60;

/// Generator rule for the branch family.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// `x ↦ 2x mod 1` on `(0, 1/2]`, `(1/2, 1]`.
    Doubling,
    /// `m` equal full branches of slope `m`.
    Dyadic { branches: usize },
    /// `a_k = λ^{k-1}(1-λ)`, `Λ_1 = 1/a_1`, `Λ_k = 1/a_2` for `k ≥ 2`.
    Vssv { lambda: f64 },
    /// `a_k = (1-r) r^{k-1}` with slopes from `slope`.
    GeometricTail { ratio: f64, slope: SlopeRule },
    /// Finite list of branches.
    Explicit { branches: Vec<ExplicitBranch> },
}

impl Generator {
    fn is_countable(&self) -> bool {
        matches!(
            self,
            Generator::Vssv { .. } | Generator::GeometricTail { .. }
        )
    }

    /// Base branches `k = 1..=truncation` (all branches for finite rules).
    fn branches(&self, truncation: usize) -> Result<Vec<BranchSpec>> {
        let geometric = |ratio: f64, slope_of: &dyn Fn(usize) -> f64| -> Vec<BranchSpec> {
            (1..=truncation)
                .map(|k| {
                    let left = ratio.powi(k as i32);
                    let right = ratio.powi(k as i32 - 1);
                    let s = slope_of(k);
                    BranchSpec::new(
                        k,
                        Interval::new(left, right),
                        BranchAction::affine(s, -s * left),
                    )
                })
                .collect()
        };
        match self {
            Generator::Doubling => Ok(full_branches(2)),
            Generator::Dyadic { branches } => {
                if *branches < 2 {
                    return Err(Error::InvalidMap(format!(
                        "dyadic map needs at least 2 branches, got {branches}"
                    )));
                }
                Ok(full_branches(*branches))
            }
            Generator::Vssv { lambda } => {
                let l = *lambda;
                if !(l > 0.0 && l < 1.0) {
                    return Err(Error::InvalidMap(format!("vssv lambda {l} not in (0,1)")));
                }
                let a1 = 1.0 - l;
                let a2 = l * (1.0 - l);
                Ok(geometric(l, &|k| if k == 1 { 1.0 / a1 } else { 1.0 / a2 }))
            }
            Generator::GeometricTail { ratio, slope } => {
                let r = *ratio;
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::InvalidMap(format!("geometric ratio {r} not in (0,1)")));
                }
                Ok(geometric(r, &|k| slope.slope(k)))
            }
            Generator::Explicit { branches } => branches
                .iter()
                .enumerate()
                .map(|(i, b)| b.to_branch(i + 1))
                .collect(),
        }
    }
}

fn full_branches(m: usize) -> Vec<BranchSpec> {
    let s = m as f64;
    (0..m)
        .map(|j| {
            BranchSpec::new(
                j + 1,
                Interval::new(j as f64 / s, (j + 1) as f64 / s),
                BranchAction::affine(s, -(j as f64)),
            )
        })
        .collect()
}

/// A countable-branch piecewise monotone map of `(0, 1]`, possibly iterated.
#[derive(Clone, Debug, Serialize)]
pub struct MapModel {
    generator: Generator,
    truncation: usize,
    iterate: usize,
    /// Effective branches (of `T^iterate`), sorted by left endpoint.
    branches: Vec<BranchSpec>,
    tail_mass: f64,
}

impl MapModel {
    pub fn new(generator: Generator, truncation: usize, iterate: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::InvalidMap("truncation must be positive".into()));
        }
        if iterate == 0 {
            return Err(Error::InvalidMap("iterate must be positive".into()));
        }
        let mut base = generator.branches(truncation)?;
        base.sort_by(|a, b| a.domain.left.total_cmp(&b.domain.left));
        validate(&base)?;
        let base_model = MapModel {
            tail_mass: base.first().map_or(0.0, |b| b.domain.left),
            generator: generator.clone(),
            truncation,
            iterate: 1,
            branches: base,
        };
        if iterate == 1 {
            return Ok(base_model);
        }
        let cells = base_model.cells(Interval::UNIT, iterate, usize::MAX)?;
        let mut branches: Vec<BranchSpec> = cells
            .cells
            .into_iter()
            .map(|c| BranchSpec::new(0, c.interval, c.action))
            .collect();
        branches.sort_by(|a, b| a.domain.left.total_cmp(&b.domain.left));
        for (i, b) in branches.iter_mut().enumerate() {
            b.index = i + 1;
        }
        let covered: f64 = branches.iter().map(|b| b.domain.len()).sum();
        Ok(MapModel {
            generator,
            truncation,
            iterate,
            branches,
            tail_mass: (1.0 - covered).max(0.0),
        })
    }

    pub fn doubling() -> Self {
        Self::new(Generator::Doubling, DEFAULT_TRUNCATION, 1).expect("doubling is valid")
    }

    pub fn dyadic(branches: usize) -> Result<Self> {
        Self::new(Generator::Dyadic { branches }, DEFAULT_TRUNCATION, 1)
    }

    pub fn vssv(lambda: f64, truncation: usize) -> Result<Self> {
        Self::new(Generator::Vssv { lambda }, truncation, 1)
    }

    pub fn geometric_tail(ratio: f64, slope: SlopeRule, truncation: usize) -> Result<Self> {
        Self::new(Generator::GeometricTail { ratio, slope }, truncation, 1)
    }

    pub fn explicit(branches: Vec<ExplicitBranch>) -> Result<Self> {
        Self::new(Generator::Explicit { branches }, DEFAULT_TRUNCATION, 1)
    }

    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let (generator, truncation, iterate) = spec.resolve()?;
        Self::new(generator, truncation, iterate)
    }

    pub fn with_iterate(&self, iterate: usize) -> Result<Self> {
        Self::new(self.generator.clone(), self.truncation, iterate)
    }

    pub fn with_truncation(&self, truncation: usize) -> Result<Self> {
        Self::new(self.generator.clone(), truncation, self.iterate)
    }

    /// The same rule with a much deeper truncation, used to estimate what the
    /// truncated branches contribute. `None` for finite maps.
    pub fn extended(&self) -> Option<Self> {
        if !self.generator.is_countable() {
            return None;
        }
        let ratio = match self.generator {
            Generator::Vssv { lambda } => lambda,
            Generator::GeometricTail { ratio, .. } => ratio,
            _ => unreachable!(),
        };
        // keep b_K well above the smallest normal f64
        let max_k = (-280.0 / ratio.log10()).floor() as usize;
        let k = (self.truncation * 2).max(self.truncation + 200).min(max_k);
        (k > self.truncation)
            .then(|| self.with_truncation(k).ok())
            .flatten()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn iterate(&self) -> usize {
        self.iterate
    }

    /// Effective branches, sorted by left endpoint.
    pub fn branches(&self) -> &[BranchSpec] {
        &self.branches
    }

    /// Lebesgue mass of `(0, b_K]`, the part not covered by truncated branches.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Left endpoint of the lowest truncated branch.
    pub fn tail_edge(&self) -> f64 {
        self.branches.first().map_or(0.0, |b| b.domain.left)
    }

    pub fn is_affine(&self) -> bool {
        self.branches.iter().all(|b| b.action.as_affine().is_some())
    }

    /// Interior partition points of ξ₁ (excluding 0 and 1).
    pub fn partition_points(&self) -> Vec<f64> {
        self.branches
            .iter()
            .map(|b| b.domain.right)
            .filter(|&p| p < 1.0 - EPS)
            .collect()
    }

    pub fn branch_index_at(&self, x: f64) -> Result<usize> {
        if x == 0.0 {
            return Err(Error::ZeroPoint);
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        let edge = self.tail_edge();
        if x <= edge {
            return Err(Error::PointInTail { x, tail_edge: edge });
        }
        let i = self.branches.partition_point(|b| b.domain.right < x);
        Ok(i.min(self.branches.len() - 1))
    }

    /// The unique branch whose half-open domain contains `x`.
    pub fn branch_at(&self, x: f64) -> Result<&BranchSpec> {
        Ok(&self.branches[self.branch_index_at(x)?])
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        Ok(self.branch_at(x)?.apply(x))
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(self.branch_at(x)?.derivative(x))
    }

    /// Indices of branches whose domains meet `window` (positive overlap).
    pub fn branches_meeting(&self, window: &Interval) -> std::ops::Range<usize> {
        let start = self
            .branches
            .partition_point(|b| b.domain.right <= window.left + tol(b.domain.right, window.left));
        let end = self
            .branches
            .partition_point(|b| b.domain.left < window.right - tol(b.domain.left, window.right));
        start..end.max(start)
    }

    /// Components `T(J ∩ W_k)` of a single interval, with the branch position.
    pub fn step_components(&self, window: &Interval) -> Vec<(usize, Interval)> {
        self.branches_meeting(window)
            .filter_map(|i| {
                let b = &self.branches[i];
                b.domain
                    .intersect(window)
                    .map(|piece| (i, b.action.image(piece)))
            })
            .collect()
    }

    /// Smallest `n ≥ 1` with `x`, `y` in distinct cells of ξ_n, or `None`
    /// when no separation happens within `n_max` steps.
    pub fn separation_time(&self, x: f64, y: f64, n_max: usize) -> Result<Option<usize>> {
        if x == y {
            return Ok(None);
        }
        let (mut x, mut y) = (x, y);
        for n in 1..=n_max {
            let bx = self.branch_index_at(x)?;
            let by = self.branch_index_at(y)?;
            if bx != by {
                return Ok(Some(n));
            }
            let b = &self.branches[bx];
            x = b.apply(x);
            y = b.apply(y);
        }
        Ok(None)
    }
}

fn validate(branches: &[BranchSpec]) -> Result<()> {
    if branches.is_empty() {
        return Err(Error::InvalidMap("map has no branches".into()));
    }
    for b in branches {
        let d = b.domain;
        if !(d.left >= 0.0 && d.left < d.right && d.right <= 1.0 + EPS) {
            return Err(Error::InvalidMap(format!(
                "branch {} has invalid domain {d}",
                b.index
            )));
        }
        let expanding = match b.action.as_affine() {
            Some((s, _)) => s.abs() > 1.0,
            None => (0..=64).all(|i| {
                let x = d.left + (d.right - d.left) * (i as f64 + 0.5) / 65.0;
                b.derivative(x).abs() > 1.0
            }),
        };
        if !expanding {
            return Err(Error::InvalidMap(format!(
                "branch {} is not uniformly expanding",
                b.index
            )));
        }
        if b.image.left < -EPS || b.image.right > 1.0 + EPS {
            return Err(Error::InvalidMap(format!(
                "branch {} has image {} outside (0,1]",
                b.index, b.image
            )));
        }
    }
    for w in branches.windows(2) {
        if (w[0].domain.right - w[1].domain.left).abs() > EPS {
            return Err(Error::InvalidMap(format!(
                "branches {} and {} are not adjacent",
                w[0].index, w[1].index
            )));
        }
    }
    if (branches.last().unwrap().domain.right - 1.0).abs() > EPS {
        return Err(Error::InvalidMap("branches do not reach 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vssv04() -> MapModel {
        MapModel::vssv(0.4, 60).unwrap()
    }

    #[test]
    fn doubling_branch_lookup() {
        let m = MapModel::doubling();
        let b = m.branch_at(0.3).unwrap();
        assert_eq!(b.index, 1);
        assert_eq!(b.domain, Interval::new(0.0, 0.5));
        assert_eq!(m.apply(0.3).unwrap(), 0.6);
        assert_eq!(m.derivative(0.3).unwrap(), 2.0);
        assert_eq!(m.branch_at(0.5).unwrap().index, 1);
    }

    #[test]
    fn vssv_branch_lookup() {
        let m = vssv04();
        let b = m.branch_at(0.5).unwrap();
        assert_eq!(b.index, 1);
        assert!(b.domain.approx_eq(&Interval::new(0.4, 1.0)));
        assert!((b.slope().unwrap() - 1.0 / 0.6).abs() < 1e-14);
        let b = m.branch_at(0.4).unwrap();
        assert_eq!(b.index, 2);
        assert!(b.domain.approx_eq(&Interval::new(0.16, 0.4)));
    }

    #[test]
    fn vssv_apply_and_derivative() {
        let m = vssv04();
        assert!((m.apply(0.7).unwrap() - 0.5).abs() < 1e-14);
        assert!((m.apply(0.2).unwrap() - 0.04 / 0.24).abs() < 1e-14);
        assert!((m.derivative(0.2).unwrap() - 1.0 / 0.24).abs() < 1e-12);
    }

    #[test]
    fn zero_and_tail_points_are_rejected() {
        let m = MapModel::vssv(0.4, 10).unwrap();
        assert_eq!(m.branch_at(0.0).unwrap_err(), Error::ZeroPoint);
        assert!(matches!(
            m.branch_at(1e-6),
            Err(Error::PointInTail { .. })
        ));
        assert!((m.tail_mass() - 0.4f64.powi(10)).abs() < 1e-18);
    }

    #[test]
    fn vssv_tail_mass_matches_branch_sum() {
        let m = vssv04();
        let covered: f64 = m.branches().iter().map(|b| b.domain.len()).sum();
        assert!((1.0 - covered - m.tail_mass()).abs() < 1e-12);
    }

    #[test]
    fn non_expanding_branch_is_rejected() {
        let err = MapModel::explicit(vec![
            ExplicitBranch::affine(Interval::new(0.0, 1.0), 1.0, 0.0),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMap(_)));
    }

    #[test]
    fn separation_times() {
        let m = MapModel::doubling();
        assert_eq!(m.separation_time(0.1, 0.6, 50).unwrap(), Some(1));
        assert_eq!(m.separation_time(0.1, 0.3, 50).unwrap(), Some(2));
        assert_eq!(m.separation_time(0.3, 0.3, 50).unwrap(), None);
    }

    #[test]
    fn doubling_iterate_two_has_quarter_branches() {
        let m = MapModel::doubling().with_iterate(2).unwrap();
        assert_eq!(m.branches().len(), 4);
        for b in m.branches() {
            assert_eq!(b.slope(), Some(4.0));
            assert!(b.image.approx_eq(&Interval::UNIT));
        }
        assert!((m.apply(0.3).unwrap() - 0.2).abs() < 1e-14);
    }

    #[test]
    fn rychlik_and_linear_slope_rules() {
        let m = MapModel::geometric_tail(0.5, SlopeRule::Constant(2.0), 20).unwrap();
        let b3 = m.branches().iter().find(|b| b.index == 3).unwrap();
        assert!(b3.image.approx_eq(&Interval::new(0.0, 0.25)));
        let m = MapModel::geometric_tail(0.5, SlopeRule::Linear, 20).unwrap();
        let b1 = m.branches().iter().find(|b| b.index == 1).unwrap();
        assert!(b1.image.approx_eq(&Interval::UNIT));
        let b4 = m.branches().iter().find(|b| b.index == 4).unwrap();
        assert!(b4.image.approx_eq(&Interval::new(0.0, 4.0 / 16.0)));
    }
}

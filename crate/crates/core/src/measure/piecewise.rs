use serde::{Deserialize, Serialize};

use super::poly::Poly;
use crate::error::{Error, Result};
use crate::interval::{close, Interval};

/// Value carried by one piece of a [`Piecewise`] function.
pub trait PieceValue: Clone + Send + Sync {
    fn zero() -> Self;
    /// The constant function 1.
    fn unit() -> Self;
    fn is_zero(&self) -> bool;
    fn add_assign(&mut self, other: &Self);
    fn scale(&self, k: f64) -> Self;
    /// The piece transported by `φ(x) = slope·x + intercept`:
    /// `y ↦ v(φ⁻¹ y) / |slope|`.
    fn transport(&self, slope: f64, intercept: f64) -> Self;
    fn integral(&self, a: f64, b: f64) -> f64;
    fn eval(&self, x: f64) -> f64;
    fn same(&self, other: &Self) -> bool;
}

impl PieceValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn unit() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn transport(&self, slope: f64, _: f64) -> Self {
        self / slope.abs()
    }
    fn integral(&self, a: f64, b: f64) -> f64 {
        self * (b - a)
    }
    fn eval(&self, _: f64) -> f64 {
        *self
    }
    fn same(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-14 * self.abs().max(other.abs())
    }
}

impl PieceValue for Poly {
    fn zero() -> Self {
        Poly::default()
    }
    fn unit() -> Self {
        Poly::constant(1.0)
    }
    fn is_zero(&self) -> bool {
        Poly::is_zero(self)
    }
    fn add_assign(&mut self, other: &Self) {
        *self = self.add(other);
    }
    fn scale(&self, k: f64) -> Self {
        Poly::scale(self, k)
    }
    fn transport(&self, slope: f64, intercept: f64) -> Self {
        self.compose_affine(1.0 / slope, -intercept / slope)
            .scale(1.0 / slope.abs())
    }
    fn integral(&self, a: f64, b: f64) -> f64 {
        Poly::integral(self, a, b)
    }
    fn eval(&self, x: f64) -> f64 {
        Poly::eval(self, x)
    }
    fn same(&self, other: &Self) -> bool {
        self.approx_eq(other)
    }
}

/// Function on `(breakpoints[0], breakpoints[last]]`, given by one value per
/// piece and zero elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piecewise<V> {
    breakpoints: Vec<f64>,
    values: Vec<V>,
}

/// Piecewise-constant density (possibly signed in intermediate computations).
pub type PiecewiseDensity = Piecewise<f64>;

/// Piecewise-polynomial function, used for signed observables times densities.
pub type PiecewisePoly = Piecewise<Poly>;

impl<V: PieceValue> Piecewise<V> {
    pub fn new(breakpoints: Vec<f64>, values: Vec<V>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidParameter(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Piecewise {
            breakpoints,
            values,
        })
    }

    pub fn constant(support: Interval, value: V) -> Self {
        Piecewise {
            breakpoints: vec![support.left, support.right],
            values: vec![value],
        }
    }

    pub fn zero() -> Self {
        Self::constant(Interval::UNIT, V::zero())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn support(&self) -> Interval {
        Interval::new(self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn pieces(&self) -> impl Iterator<Item = (Interval, &V)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| (Interval::new(w[0], w[1]), v))
    }

    /// Index of the piece `(b_i, b_{i+1}]` containing `x`.
    pub fn piece_index(&self, x: f64) -> Option<usize> {
        if !self.support().contains_point(x) {
            return None;
        }
        let i = self.breakpoints.partition_point(|&b| b < x);
        Some(i.saturating_sub(1).min(self.values.len() - 1))
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.piece_index(x)
            .map_or(0.0, |i| self.values[i].eval(x))
    }

    pub fn integral(&self) -> f64 {
        self.pieces().map(|(p, v)| v.integral(p.left, p.right)).sum()
    }

    pub fn integral_on(&self, window: &Interval) -> f64 {
        self.pieces()
            .filter_map(|(p, v)| {
                let l = p.left.max(window.left);
                let r = p.right.min(window.right);
                (r > l).then(|| v.integral(l, r))
            })
            .sum()
    }

    /// The function multiplied by the indicator of `window`.
    pub fn restrict(&self, window: &Interval) -> Self {
        let contribs: Vec<_> = self
            .pieces()
            .filter_map(|(p, v)| p.intersect(window).map(|s| (s, v.clone())))
            .collect();
        if contribs.is_empty() {
            return Self::constant(*window, V::zero());
        }
        Self::from_contributions(contribs)
    }

    pub fn scale(&self, k: f64) -> Self {
        Piecewise {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| v.scale(k)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let contribs = self
            .pieces()
            .chain(other.pieces())
            .map(|(p, v)| (p, v.clone()))
            .collect();
        Self::from_contributions(contribs)
    }

    /// Linear combination `Σ c_i f_i`.
    pub fn combine(terms: &[(f64, &Self)]) -> Self {
        let contribs: Vec<_> = terms
            .iter()
            .flat_map(|(c, f)| f.pieces().map(move |(p, v)| (p, v.scale(*c))))
            .collect();
        if contribs.is_empty() {
            return Self::zero();
        }
        Self::from_contributions(contribs)
    }

    /// Image under one affine action, `x ↦ slope·x + intercept`.
    pub fn transported(&self, slope: f64, intercept: f64) -> Self {
        let mut pieces: Vec<_> = self
            .pieces()
            .map(|(p, v)| {
                let a = slope * p.left + intercept;
                let b = slope * p.right + intercept;
                (Interval::new(a.min(b), a.max(b)), v.transport(slope, intercept))
            })
            .collect();
        pieces.sort_by(|a, b| a.0.left.total_cmp(&b.0.left));
        Self::from_contributions(pieces)
    }

    /// Sum of piece contributions. Endpoints within the relative tolerance are
    /// identified; uncovered gaps become zero pieces; equal neighbours merge.
    pub fn from_contributions(contribs: Vec<(Interval, V)>) -> Self {
        let mut points: Vec<f64> = contribs
            .iter()
            .flat_map(|(i, _)| [i.left, i.right])
            .collect();
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| close(*a, *b));
        if points.len() < 2 {
            let x = points.first().copied().unwrap_or(0.0);
            return Self::constant(Interval::new(x, x.max(1e-300) * (1.0 + 1e-9)), V::zero());
        }
        let mut values = vec![V::zero(); points.len() - 1];
        let snap = |x: f64| -> usize {
            let i = points.partition_point(|&p| p < x);
            if i == points.len() || (i > 0 && (x - points[i - 1]) < (points[i] - x)) {
                i - 1
            } else {
                i
            }
        };
        for (iv, v) in &contribs {
            let (a, b) = (snap(iv.left), snap(iv.right));
            for value in &mut values[a..b.max(a)] {
                value.add_assign(v);
            }
        }
        let mut out = Piecewise {
            breakpoints: points,
            values,
        };
        out.simplify();
        out
    }

    /// Merge neighbouring pieces with equal values and trim zero ends.
    pub fn simplify(&mut self) {
        let mut bps = vec![self.breakpoints[0]];
        let mut vals: Vec<V> = Vec::with_capacity(self.values.len());
        for (i, v) in self.values.iter().enumerate() {
            match vals.last() {
                Some(last) if last.same(v) => {
                    *bps.last_mut().unwrap() = self.breakpoints[i + 1];
                }
                _ => {
                    vals.push(v.clone());
                    bps.push(self.breakpoints[i + 1]);
                }
            }
        }
        while vals.len() > 1 && vals[0].is_zero() {
            vals.remove(0);
            bps.remove(0);
        }
        while vals.len() > 1 && vals.last().unwrap().is_zero() {
            vals.pop();
            bps.pop();
        }
        self.breakpoints = bps;
        self.values = vals;
    }

    /// Mass-preserving projection onto `bins` equal cells of the support.
    pub fn coarsened(&self, bins: usize) -> Self {
        let s = self.support();
        let h = s.len() / bins as f64;
        let contribs = (0..bins)
            .map(|j| {
                let right = if j + 1 == bins {
                    s.right
                } else {
                    s.left + (j + 1) as f64 * h
                };
                let cell = Interval::new(s.left + j as f64 * h, right);
                let mass = self.integral_on(&cell);
                (cell, V::unit().scale(mass / cell.len()))
            })
            .collect();
        Self::from_contributions(contribs)
    }
}

impl PiecewiseDensity {
    /// Normalised Lebesgue measure on `support`.
    pub fn uniform(support: Interval) -> Self {
        Self::constant(support, 1.0 / support.len())
    }

    pub fn lebesgue() -> Self {
        Self::uniform(Interval::UNIT)
    }

    pub fn mass(&self) -> f64 {
        self.integral()
    }

    pub fn mass_on(&self, window: &Interval) -> f64 {
        self.integral_on(window)
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::ZeroDensity(self.support()));
        }
        Ok(self.scale(1.0 / m))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Smallest and largest value over the support.
    pub fn value_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// `∫|self − other| dm`, optionally restricted to `window`.
    pub fn l1_distance(&self, other: &Self, window: Option<&Interval>) -> f64 {
        let diff = Self::combine(&[(1.0, self), (-1.0, other)]);
        diff.pieces()
            .map(|(p, v)| {
                let len = match window {
                    Some(w) => p.overlap(w),
                    None => p.len(),
                };
                v.abs() * len
            })
            .sum()
    }

    /// Total variation `½∫|self − other| dm`.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        0.5 * self.l1_distance(other, None)
    }

    /// Product with a piecewise polynomial, as a piecewise polynomial.
    pub fn times(&self, f: &PiecewisePoly) -> PiecewisePoly {
        let contribs: Vec<_> = self
            .pieces()
            .flat_map(|(p, &h)| {
                f.pieces()
                    .filter_map(move |(q, poly)| p.intersect(&q).map(|s| (s, poly.scale(h))))
            })
            .collect();
        if contribs.is_empty() {
            return PiecewisePoly::zero();
        }
        PiecewisePoly::from_contributions(contribs)
    }

    pub fn as_poly(&self) -> PiecewisePoly {
        Piecewise {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|&v| Poly::constant(v)).collect(),
        }
    }

    /// Rows `(left, right, value)` for CSV output.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        self.pieces().map(|(p, &v)| (p.left, p.right, v)).collect()
    }
}

impl PiecewisePoly {
    /// `∫ self · other dm`.
    pub fn inner(&self, other: &PiecewisePoly) -> f64 {
        let mut total = 0.0;
        for (p, f) in self.pieces() {
            for (q, g) in other.pieces() {
                if let Some(s) = p.intersect(&q) {
                    total += f.mul(g).integral(s.left, s.right);
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_sums_overlaps() {
        let f = PiecewiseDensity::from_contributions(vec![
            (Interval::new(0.0, 0.5), 1.0),
            (Interval::new(0.25, 1.0), 2.0),
        ]);
        assert_eq!(f.breakpoints(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(f.values(), &[1.0, 3.0, 2.0]);
        assert!((f.mass() - (0.25 + 0.75 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn equal_neighbours_merge() {
        let f = PiecewiseDensity::from_contributions(vec![
            (Interval::new(0.0, 0.5), 1.0),
            (Interval::new(0.5, 1.0), 1.0),
        ]);
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn tv_examples() {
        let u = PiecewiseDensity::lebesgue();
        assert_eq!(u.tv_distance(&u), 0.0);
        let h = PiecewiseDensity::constant(Interval::new(0.0, 0.5), 2.0);
        assert!((u.tv_distance(&h) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn restriction_and_point_values() {
        let f = PiecewiseDensity::new(vec![0.0, 0.4, 1.0], vec![2.0, 0.5]).unwrap();
        assert_eq!(f.value_at(0.4), 2.0);
        assert_eq!(f.value_at(0.41), 0.5);
        assert_eq!(f.value_at(0.0), 0.0);
        let r = f.restrict(&Interval::new(0.2, 0.6));
        assert!((r.mass() - (0.4 + 0.1)).abs() < 1e-15);
        assert!(r.support().approx_eq(&Interval::new(0.2, 0.6)));
    }

    #[test]
    fn transport_preserves_mass() {
        let f = PiecewiseDensity::new(vec![0.1, 0.3, 0.4], vec![1.0, 3.0]).unwrap();
        let g = f.transported(-2.5, 1.0);
        assert!((g.mass() - f.mass()).abs() < 1e-14);
        assert!(g.support().approx_eq(&Interval::new(0.0, 0.75)));
        let p = PiecewisePoly::constant(Interval::UNIT, Poly::identity());
        let q = p.transported(2.0, 0.0);
        assert!((q.value_at(1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn coarsening_preserves_mass() {
        let f = PiecewiseDensity::new(vec![0.0, 0.013, 0.5, 1.0], vec![5.0, 1.0, 0.2]).unwrap();
        let g = f.coarsened(16);
        assert!((g.mass() - f.mass()).abs() < 1e-14);
    }
}

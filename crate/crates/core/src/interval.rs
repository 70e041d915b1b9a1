use std::fmt;

use serde::{Deserialize, Serialize};

/// Relative tolerance used to identify breakpoints and interval endpoints.
pub const EPS: f64 = 1e-12;

/// Tolerance for comparing `a` and `b`, scaled so that geometric tails near
/// zero keep their resolution.
pub fn tol(a: f64, b: f64) -> f64 {
    EPS * a.abs().max(b.abs()).min(1.0)
}

/// `a` and `b` agree up to [`tol`].
pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= tol(a, b)
}

/// Half-open interval `(left, right]`.
///
/// Endpoints are treated as a null set everywhere except in point lookup,
/// where the right endpoint belongs to the interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub left: f64,
    pub right: f64,
}

impl From<[f64; 2]> for Interval {
    fn from([left, right]: [f64; 2]) -> Self {
        Interval { left, right }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.left, i.right]
    }
}

impl Interval {
    pub const UNIT: Interval = Interval {
        left: 0.0,
        right: 1.0,
    };

    pub fn new(left: f64, right: f64) -> Self {
        Interval { left, right }
    }

    pub fn len(&self) -> f64 {
        (self.right - self.left).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.right - self.left <= tol(self.left, self.right)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    /// Membership under the half-open convention.
    pub fn contains_point(&self, x: f64) -> bool {
        x > self.left && x <= self.right
    }

    /// `other ⊆ self` up to [`tol`].
    pub fn contains(&self, other: &Interval) -> bool {
        self.left <= other.left + tol(self.left, other.left)
            && other.right <= self.right + tol(self.right, other.right)
    }

    pub fn approx_eq(&self, other: &Interval) -> bool {
        close(self.left, other.left) && close(self.right, other.right)
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let left = self.left.max(other.left);
        let right = self.right.min(other.right);
        (right - left > tol(left, right)).then_some(Interval { left, right })
    }

    /// Length of the overlap, zero when disjoint.
    pub fn overlap(&self, other: &Interval) -> f64 {
        (self.right.min(other.right) - self.left.max(other.left)).max(0.0)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}]", self.left, self.right)
    }
}

/// Parses `"a,b"` as used by command-line flags.
impl std::str::FromStr for Interval {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `left,right`, got `{s}`"))?;
        let left: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let right: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        if !(right > left) {
            return Err(format!("empty interval `{s}`"));
        }
        Ok(Interval { left, right })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_membership() {
        let w = Interval::new(0.16, 0.4);
        assert!(w.contains_point(0.4));
        assert!(!w.contains_point(0.16));
    }

    #[test]
    fn intersection_drops_slivers() {
        let a = Interval::new(0.0, 0.5);
        assert!(a.intersect(&Interval::new(0.5, 1.0)).is_none());
        let i = a.intersect(&Interval::new(0.25, 0.75)).unwrap();
        assert!(i.approx_eq(&Interval::new(0.25, 0.5)));
    }

    #[test]
    fn parse_flag() {
        let i: Interval = "0.25, 0.5".parse().unwrap();
        assert_eq!(i, Interval::new(0.25, 0.5));
        assert!("0.5,0.25".parse::<Interval>().is_err());
    }
}

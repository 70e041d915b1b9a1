use std::sync::Arc;

use serde::Serialize;

use crate::interval::Interval;

/// How a branch acts on its domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchAction {
    /// `y = slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// Strictly monotone polynomial, coefficients in increasing degree.
    Polynomial { coeffs: Vec<f64> },
    /// Composition of actions, applied first to last.
    Chain(Arc<[BranchAction]>),
}

impl BranchAction {
    pub fn affine(slope: f64, intercept: f64) -> Self {
        BranchAction::Affine { slope, intercept }
    }

    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self {
            BranchAction::Affine { slope, intercept } => Some((*slope, *intercept)),
            BranchAction::Polynomial { .. } => None,
            BranchAction::Chain(steps) => steps.iter().try_fold((1.0, 0.0), |(s, c), a| {
                let (s2, c2) = a.as_affine()?;
                Some((s2 * s, s2 * c + c2))
            }),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            BranchAction::Affine { slope, intercept } => slope * x + intercept,
            BranchAction::Polynomial { coeffs } => horner(coeffs, x),
            BranchAction::Chain(steps) => steps.iter().fold(x, |y, a| a.apply(y)),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            BranchAction::Affine { slope, .. } => *slope,
            BranchAction::Polynomial { coeffs } => {
                let d: Vec<f64> = coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, c)| i as f64 * c)
                    .collect();
                horner(&d, x)
            }
            BranchAction::Chain(steps) => {
                let mut y = x;
                let mut d = 1.0;
                for a in steps.iter() {
                    d *= a.derivative(y);
                    y = a.apply(y);
                }
                d
            }
        }
    }

    /// Compose `self` followed by `next`.
    pub fn then(&self, next: &BranchAction) -> BranchAction {
        if let (Some((s1, c1)), Some((s2, c2))) = (self.as_affine(), next.as_affine()) {
            return BranchAction::affine(s2 * s1, s2 * c1 + c2);
        }
        let mut steps: Vec<BranchAction> = match self {
            BranchAction::Chain(s) => s.to_vec(),
            other => vec![other.clone()],
        };
        match next {
            BranchAction::Chain(s) => steps.extend(s.iter().cloned()),
            other => steps.push(other.clone()),
        }
        BranchAction::Chain(steps.into())
    }

    /// Inverse of the action restricted to `domain` (where it is monotone).
    pub fn inverse_on(&self, y: f64, domain: Interval) -> f64 {
        if let Some((s, c)) = self.as_affine() {
            return (y - c) / s;
        }
        let (mut lo, mut hi) = (domain.left, domain.right);
        let increasing = self.apply(hi) >= self.apply(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let below = (self.apply(mid) < y) == increasing;
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Image of a subinterval of the domain, endpoints ordered.
    pub fn image(&self, source: Interval) -> Interval {
        let a = self.apply(source.left);
        let b = self.apply(source.right);
        Interval::new(a.min(b), a.max(b))
    }

    /// Preimage of `target` inside `domain`; `target` must lie in the image of `domain`.
    pub fn preimage(&self, target: Interval, domain: Interval) -> Interval {
        let a = self.inverse_on(target.left, domain);
        let b = self.inverse_on(target.right, domain);
        let (lo, hi) = (a.min(b), a.max(b));
        Interval::new(lo.max(domain.left), hi.min(domain.right))
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// One element of the partition ξ₁.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchSpec {
    /// Branch index k (1-based).
    pub index: usize,
    pub domain: Interval,
    pub action: BranchAction,
    /// `T(domain)`.
    pub image: Interval,
}

impl BranchSpec {
    pub fn new(index: usize, domain: Interval, action: BranchAction) -> Self {
        let image = action.image(domain);
        BranchSpec {
            index,
            domain,
            action,
            image,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        self.action.as_affine().map(|(s, _)| s)
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.action.apply(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.action.derivative(x)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        self.action.inverse_on(y, self.domain)
    }

    /// Preimage of a subinterval of the image.
    pub fn preimage(&self, target: Interval) -> Interval {
        self.action.preimage(target, self.domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_chain_collapses() {
        let a = BranchAction::affine(2.0, 0.0);
        let b = BranchAction::affine(2.0, -1.0);
        assert_eq!(a.then(&b), BranchAction::affine(4.0, -1.0));
    }

    #[test]
    fn polynomial_inverse_by_bisection() {
        let p = BranchAction::Polynomial {
            coeffs: vec![0.0, 1.0, 0.5],
        };
        let dom = Interval::new(0.0, 0.7);
        let y = p.apply(0.3);
        assert!((p.inverse_on(y, dom) - 0.3).abs() < 1e-14);
        assert!((p.derivative(0.3) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn chain_derivative_is_product() {
        let p = BranchAction::Polynomial {
            coeffs: vec![0.0, 1.0, 0.5],
        };
        let c = p.then(&BranchAction::affine(3.0, 0.0));
        assert!((c.derivative(0.2) - 3.0 * 1.2).abs() < 1e-14);
        assert!((c.apply(0.2) - 3.0 * 0.22).abs() < 1e-14);
    }
}

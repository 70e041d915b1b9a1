use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::measure::{PiecewiseDensity, PiecewisePoly, Poly};

/// Cutoff below which the singular part of `x^{-τ}` is bounded analytically.
pub const EPS_SING: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservablePiece {
    pub interval: Interval,
    pub coefficients: Vec<f64>,
}

/// Real observable on `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// Coefficients in increasing degree.
    Polynomial { coefficients: Vec<f64> },
    Indicator { interval: Interval },
    /// `x ↦ x^{-τ}`.
    PowerSingularity { tau: f64 },
    /// Polynomial pieces, zero off their union.
    Piecewise { pieces: Vec<ObservablePiece> },
}

impl Observable {
    pub fn identity() -> Self {
        Observable::Polynomial {
            coefficients: vec![0.0, 1.0],
        }
    }

    pub fn constant(c: f64) -> Self {
        Observable::Polynomial {
            coefficients: vec![c],
        }
    }

    pub fn power(tau: f64) -> Self {
        Observable::PowerSingularity { tau }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Observable = serde_json::from_str(text)?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Observable::PowerSingularity { tau } if !(*tau > 0.0) => Err(Error::InvalidParameter(
                format!("power singularity needs tau > 0, got {tau}"),
            )),
            Observable::PowerSingularity { tau } if *tau >= 1.0 => Err(Error::NonIntegrable(
                format!("x^-{tau} is not integrable at 0"),
            )),
            Observable::Piecewise { pieces } if pieces.is_empty() => {
                Err(Error::InvalidParameter("piecewise observable has no pieces".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Observable::Polynomial { coefficients } => horner(coefficients, x),
            Observable::Indicator { interval } => f64::from(interval.contains_point(x)),
            Observable::PowerSingularity { tau } => x.powf(-tau),
            Observable::Piecewise { pieces } => pieces
                .iter()
                .find(|p| p.interval.contains_point(x))
                .map_or(0.0, |p| horner(&p.coefficients, x)),
        }
    }

    /// Exponent of the singularity at 0, if any.
    pub fn singularity(&self) -> Option<f64> {
        match self {
            Observable::PowerSingularity { tau } => Some(*tau),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Observable::Polynomial { coefficients } => coefficients.iter().skip(1).all(|&c| c == 0.0),
            _ => false,
        }
    }

    /// Jump locations inside `(0, 1)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = match self {
            Observable::Indicator { interval } => vec![interval.left, interval.right],
            Observable::Piecewise { pieces } => pieces
                .iter()
                .flat_map(|p| [p.interval.left, p.interval.right])
                .collect(),
            _ => Vec::new(),
        };
        pts.retain(|&p| p > 0.0 && p < 1.0);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// The observable as a piecewise polynomial on `(0, 1]`, when it is one.
    pub fn as_piecewise_poly(&self) -> Option<PiecewisePoly> {
        let contribs: Vec<(Interval, Poly)> = match self {
            Observable::Polynomial { coefficients } => {
                vec![(Interval::UNIT, Poly(coefficients.clone()))]
            }
            Observable::Indicator { interval } => {
                vec![(interval.intersect(&Interval::UNIT)?, Poly::constant(1.0))]
            }
            Observable::Piecewise { pieces } => pieces
                .iter()
                .filter_map(|p| {
                    p.interval
                        .intersect(&Interval::UNIT)
                        .map(|i| (i, Poly(p.coefficients.clone())))
                })
                .collect(),
            Observable::PowerSingularity { .. } => return None,
        };
        Some(PiecewisePoly::from_contributions(contribs))
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `∫_a^b x^{-τ} p(x) dx` for `0 ≤ a < b`.
pub fn power_moment(p: &Poly, tau: f64, a: f64, b: f64) -> f64 {
    p.0.iter()
        .enumerate()
        .map(|(j, c)| {
            let e = j as f64 + 1.0 - tau;
            c * (b.powf(e) - a.powf(e)) / e
        })
        .sum()
}

/// `∫ g·p dm` for a piecewise polynomial `p`.
pub fn integrate_against(g: &Observable, p: &PiecewisePoly) -> Result<f64> {
    match g {
        Observable::PowerSingularity { tau } => {
            if *tau >= 1.0 {
                return Err(Error::NonIntegrable(format!("x^-{tau}")));
            }
            Ok(p.pieces()
                .map(|(i, q)| power_moment(q, *tau, i.left.max(0.0), i.right))
                .sum())
        }
        _ => Ok(p.inner(&g.as_piecewise_poly().expect("polynomial observable"))),
    }
}

/// `E_ρ f = ∫ f ρ dm`, exact for piecewise-constant `ρ`.
pub fn expectation(density: &PiecewiseDensity, f: &Observable) -> Result<f64> {
    f.validate()?;
    integrate_against(f, &density.as_poly())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_expectations() {
        let u = PiecewiseDensity::lebesgue();
        assert!((expectation(&u, &Observable::identity()).unwrap() - 0.5).abs() < 1e-15);
        let e = expectation(&u, &Observable::power(0.3)).unwrap();
        assert!((e - 1.0 / 0.7).abs() < 1e-14);
        let ind = Observable::Indicator {
            interval: Interval::new(0.25, 0.5),
        };
        assert!((expectation(&u, &ind).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_integrable_power() {
        let u = PiecewiseDensity::lebesgue();
        assert!(matches!(
            expectation(&u, &Observable::power(1.0)),
            Err(Error::NonIntegrable(_))
        ));
    }

    #[test]
    fn json_forms() {
        let f = Observable::from_json(r#"{"kind":"power_singularity","tau":0.3}"#).unwrap();
        assert_eq!(f, Observable::power(0.3));
        let g = Observable::from_json(
            r#"{"kind":"piecewise","pieces":[{"interval":[0,0.5],"coefficients":[0,-1]},
                {"interval":[0.5,1],"coefficients":[1,-1]}]}"#,
        )
        .unwrap();
        assert!((g.eval(0.25) + 0.25).abs() < 1e-15);
        assert!((g.eval(0.75) - 0.25).abs() < 1e-15);
        assert!(Observable::from_json(r#"{"kind":"indicator","interval":[0.1,0.2]}"#).is_ok());
        assert!(Observable::from_json(r#"{"kind":"power_singularity","tau":1.5}"#).is_err());
    }

    #[test]
    fn power_moment_matches_quadrature_free_cases() {
        // ∫_0^1 x^{1-τ} dx = 1/(2-τ)
        let m = power_moment(&Poly::identity(), 0.3, 0.0, 1.0);
        assert!((m - 1.0 / 1.7).abs() < 1e-15);
    }
}

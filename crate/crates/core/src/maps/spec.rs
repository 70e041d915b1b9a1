use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BranchAction, BranchSpec, Generator, DEFAULT_TRUNCATION};
use crate::error::{Error, Result};
use crate::interval::Interval;

/// Slope rule `k ↦ Λ_k` for geometric-tail families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SlopeRepr", into = "SlopeRepr")]
pub enum SlopeRule {
    Constant(f64),
    /// `Λ_k = k`, with `Λ_1 = 2` so that the first branch still expands.
    Linear,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SlopeRepr {
    Number(f64),
    Name(String),
}

impl TryFrom<SlopeRepr> for SlopeRule {
    type Error = String;

    fn try_from(r: SlopeRepr) -> std::result::Result<Self, String> {
        match r {
            SlopeRepr::Number(s) => Ok(SlopeRule::Constant(s)),
            SlopeRepr::Name(n) if n == "linear" => Ok(SlopeRule::Linear),
            SlopeRepr::Name(n) => Err(format!("unknown slope rule `{n}`")),
        }
    }
}

impl From<SlopeRule> for SlopeRepr {
    fn from(r: SlopeRule) -> Self {
        match r {
            SlopeRule::Constant(s) => SlopeRepr::Number(s),
            SlopeRule::Linear => SlopeRepr::Name("linear".into()),
        }
    }
}

impl SlopeRule {
    pub fn slope(&self, k: usize) -> f64 {
        match self {
            SlopeRule::Constant(s) => *s,
            SlopeRule::Linear => (k as f64).max(2.0),
        }
    }
}

/// A branch in an explicit map document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitBranch {
    pub domain: Interval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    /// Defaults to the value that sends the domain's lower end to 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    /// Polynomial coefficients (increasing degree); overrides `slope`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<f64>>,
}

impl ExplicitBranch {
    pub fn affine(domain: Interval, slope: f64, intercept: f64) -> Self {
        ExplicitBranch {
            domain,
            slope: Some(slope),
            intercept: Some(intercept),
            poly: None,
        }
    }

    pub fn polynomial(domain: Interval, coeffs: Vec<f64>) -> Self {
        ExplicitBranch {
            domain,
            slope: None,
            intercept: None,
            poly: Some(coeffs),
        }
    }

    pub(crate) fn to_branch(&self, index: usize) -> Result<BranchSpec> {
        let action = match (&self.poly, self.slope) {
            (Some(c), _) => BranchAction::Polynomial { coeffs: c.clone() },
            (None, Some(s)) => {
                let anchor = if s > 0.0 {
                    self.domain.left
                } else {
                    self.domain.right
                };
                BranchAction::affine(s, self.intercept.unwrap_or(-s * anchor))
            }
            (None, None) => {
                return Err(Error::InvalidMap(format!(
                    "explicit branch {index} needs `slope` or `poly`"
                )))
            }
        };
        Ok(BranchSpec::new(index, self.domain, action))
    }
}

/// JSON map document, e.g.
/// `{"family":"vssv","params":{"lambda":0.4},"truncation":60,"iterate":1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub family: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate: Option<usize>,
}

impl MapSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn param_f64(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::InvalidMap(format!("{} map needs numeric `{key}`", self.family)))
    }

    pub(crate) fn resolve(&self) -> Result<(Generator, usize, usize)> {
        let generator = match self.family.as_str() {
            "doubling" => Generator::Doubling,
            "dyadic" => Generator::Dyadic {
                branches: self.param_f64("branches")? as usize,
            },
            "vssv" => Generator::Vssv {
                lambda: self.param_f64("lambda")?,
            },
            "geometric_tail" => {
                let slope = match self.params.get("slope") {
                    Some(v) => serde_json::from_value(v.clone())
                        .map_err(|e| Error::InvalidMap(format!("slope: {e}")))?,
                    None => SlopeRule::Constant(2.0),
                };
                Generator::GeometricTail {
                    ratio: self.param_f64("ratio")?,
                    slope,
                }
            }
            "explicit" => {
                let branches = self
                    .params
                    .get("branches")
                    .cloned()
                    .ok_or_else(|| Error::InvalidMap("explicit map needs `branches`".into()))?;
                Generator::Explicit {
                    branches: serde_json::from_value(branches)
                        .map_err(|e| Error::InvalidMap(format!("branches: {e}")))?,
                }
            }
            other => return Err(Error::InvalidMap(format!("unknown family `{other}`"))),
        };
        let default_iterate = 1;
        Ok((
            generator,
            self.truncation.unwrap_or(DEFAULT_TRUNCATION),
            self.iterate.unwrap_or(default_iterate),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapModel;

    #[test]
    fn parses_vssv_document() {
        let spec = MapSpec::from_json(
            r#"{"family":"vssv","params":{"lambda":0.4},"truncation":60,"iterate":1}"#,
        )
        .unwrap();
        let m = MapModel::from_spec(&spec).unwrap();
        assert_eq!(m.branches().len(), 60);
    }

    #[test]
    fn parses_geometric_tail_rules() {
        let spec = MapSpec::from_json(
            r#"{"family":"geometric_tail","params":{"ratio":0.5,"slope":"linear"},"truncation":30}"#,
        )
        .unwrap();
        let m = MapModel::from_spec(&spec).unwrap();
        assert_eq!(m.branches().len(), 30);
        let spec = MapSpec::from_json(
            r#"{"family":"geometric_tail","params":{"ratio":0.5,"slope":2.0}}"#,
        )
        .unwrap();
        assert!(MapModel::from_spec(&spec).is_ok());
    }

    #[test]
    fn parses_explicit_branches() {
        let spec = MapSpec::from_json(
            r#"{"family":"explicit","params":{"branches":[
                {"domain":[0,0.5],"slope":2},
                {"domain":[0.5,1],"slope":2}]}}"#,
        )
        .unwrap();
        let m = MapModel::from_spec(&spec).unwrap();
        assert!((m.apply(0.75).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_family_is_an_error() {
        let spec = MapSpec::from_json(r#"{"family":"tent"}"#).unwrap();
        assert!(matches!(MapModel::from_spec(&spec), Err(Error::InvalidMap(_))));
    }
}

//! Gauss–Jacobi rules by the Golub–Welsch eigenvalue method.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Nodes and weights for `∫_{-1}^{1} (1-t)^α (1+t)^β φ(t) dt`.
#[derive(Clone, Debug)]
pub struct JacobiRule {
    pub alpha: f64,
    pub beta: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<JacobiRule> {
    if n == 0 || !(alpha > -1.0) || !(beta > -1.0) {
        return Err(Error::InvalidParameter(format!(
            "Gauss-Jacobi needs n > 0 and exponents > -1 (n = {n}, α = {alpha}, β = {beta})"
        )));
    }
    let ab = alpha + beta;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        j[(k, k)] = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + ab;
            let b2 = if m == 1.0 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * m * (m + alpha) * (m + beta) * (m + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            j[(k, k + 1)] = b2.sqrt();
            j[(k + 1, k)] = b2.sqrt();
        }
    }
    let ln_mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0);
    let mu0 = ln_mu0.exp();
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, weights) = pairs.into_iter().unzip();
    Ok(JacobiRule {
        alpha,
        beta,
        nodes,
        weights,
    })
}

impl JacobiRule {
    /// `∫_a^b (x-a)^β (b-x)^α φ(x) dx`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, phi: F) -> f64 {
        let half = 0.5 * (b - a);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * phi(a + half * (1.0 + t)))
            .sum();
        half.powf(1.0 + self.alpha + self.beta) * s
    }
}

/// Thread-safe cache of rules keyed by exponents.
#[derive(Debug)]
pub struct RuleCache {
    points: usize,
    rules: Mutex<HashMap<(u64, u64), Arc<JacobiRule>>>,
}

impl RuleCache {
    pub fn new(points: usize) -> Self {
        RuleCache {
            points,
            rules: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, alpha: f64, beta: f64) -> Result<Arc<JacobiRule>> {
        let key = (alpha.to_bits(), beta.to_bits());
        if let Some(r) = self.rules.lock().expect("rule cache").get(&key) {
            return Ok(r.clone());
        }
        let rule = Arc::new(gauss_jacobi(self.points, alpha, beta)?);
        self.rules
            .lock()
            .expect("rule cache")
            .insert(key, rule.clone());
        Ok(rule)
    }
}

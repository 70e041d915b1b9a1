use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{geometric_fit, GeometricFit};

/// `S_n = Σ_{k≥n} ‖x^{-τ} 1_{W_k}‖_{L^{1/t}}` over the dyadic pieces
/// `W_k = (2^{-k}, 2^{-k+1}]`, Lebesgue measure.
#[derive(Clone, Debug, Serialize)]
pub struct TailNormSeries {
    pub tau: f64,
    pub t: f64,
    /// `S_n` for `n = 1..=n_max` (index 0 holds `S_1`).
    pub values: Vec<f64>,
    pub fit: Option<GeometricFit>,
}

/// `‖x^{-τ} 1_{W_k}‖_{L^p}` with `p = 1/t`.
fn piece_norm(tau: f64, t: f64, k: usize) -> f64 {
    let e = 1.0 - tau / t;
    let lo = 0.5f64.powi(k as i32);
    let hi = 2.0 * lo;
    ((hi.powf(e) - lo.powf(e)) / e).powf(t)
}

pub fn tail_norm_series(tau: f64, t: f64, n_max: usize) -> Result<TailNormSeries> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("tau {tau} not in (0,1)")));
    }
    if t <= tau {
        return Err(Error::Divergence { tau, t });
    }
    if t >= 0.5 {
        return Err(Error::InvalidParameter(format!("t {t} must lie below 1/2")));
    }
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be positive".into()));
    }
    // terms are summed directly until they no longer change the total; the
    // exactly geometric remainder is then added in closed form
    let ratio = 2f64.powf(tau - t);
    let mut terms = Vec::new();
    let mut k = 1;
    let mut total = 0.0;
    loop {
        let a = piece_norm(tau, t, k);
        terms.push(a);
        total += a;
        if a <= 1e-18 * total || k > 10_000 {
            break;
        }
        k += 1;
    }
    let remainder = terms.last().copied().unwrap_or(0.0) * ratio / (1.0 - ratio);
    let mut suffix = vec![0.0; terms.len() + 1];
    suffix[terms.len()] = remainder;
    for i in (0..terms.len()).rev() {
        suffix[i] = suffix[i + 1] + terms[i];
    }
    let values: Vec<f64> = (1..=n_max)
        .map(|n| {
            if n <= terms.len() {
                suffix[n - 1]
            } else {
                remainder * ratio.powi((n - terms.len()) as i32)
            }
        })
        .collect();
    let pts: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    let fit = geometric_fit(&pts, 0.0);
    Ok(TailNormSeries {
        tau,
        t,
        values,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_and_total() {
        let s = tail_norm_series(0.3, 0.4, 30).unwrap();
        let rate = s.fit.unwrap().rate;
        assert!((rate - 2f64.powf(-0.1)).abs() < 1e-9);
        // S_1 is the full sum, a geometric series with first term ‖f_1‖
        let first = piece_norm(0.3, 0.4, 1);
        let total = first / (1.0 - 2f64.powf(-0.1));
        assert!((s.values[0] - total).abs() < 1e-12 * total);
    }

    #[test]
    fn boundary_diverges() {
        assert!(matches!(
            tail_norm_series(0.3, 0.3, 10),
            Err(Error::Divergence { .. })
        ));
    }
}

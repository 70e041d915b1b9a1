//! Least-squares fits used by the decay diagnostics.

use serde::Serialize;

/// `log y ≈ log c + n·log ϑ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeometricFit {
    pub rate: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ a + b·x`, returning `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Geometric fit of `|y_n|` over the points with `|y_n| > floor`.
pub fn geometric_fit(points: &[(usize, f64)], floor: f64) -> Option<GeometricFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(_, y)| y.abs() > floor && y.is_finite())
        .map(|&(n, y)| (n as f64, y.abs().ln()))
        .unzip();
    let (a, b) = linear_fit(&xs, &ys)?;
    Some(GeometricFit {
        rate: b.exp(),
        intercept: a.exp(),
        points: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_rate() {
        let pts: Vec<_> = (0..20).map(|n| (n, 3.0 * 0.7f64.powi(n as i32))).collect();
        let f = geometric_fit(&pts, 0.0).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-10);
    }

    #[test]
    fn needs_two_points() {
        assert!(geometric_fit(&[(1, 0.5)], 0.0).is_none());
        assert!(geometric_fit(&[(1, 0.0), (2, 0.0)], 0.0).is_none());
    }
}

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::correlation::{correlation_series, CorrelationMethod, CorrelationSeries};
use super::observable::{expectation, Observable};
use super::sampling::{invariant_density, map_orbit_chunks, OrbitSampler};
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::maps::MapModel;

/// `σ²` at or below this fraction of `Var(f)` marks a coboundary.
pub const COBOUNDARY_TOL: f64 = 1e-9;
pub const MIN_CLT_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenKubo {
    /// `Var(f) + 2 Σ_{1≤n≤N} Cov(f, f∘T^n)`, clamped at 0.
    pub sigma2: f64,
    pub raw: f64,
    /// Bound on the omitted terms from the fitted geometric rate.
    pub tail_bound: f64,
    pub truncation: usize,
    pub coboundary: bool,
}

pub fn green_kubo_sigma(series: &CorrelationSeries, truncation: usize) -> Result<GreenKubo> {
    let c = &series.values;
    if c.is_empty() {
        return Err(Error::InvalidParameter("empty correlation series".into()));
    }
    let n = truncation.min(c.len() - 1);
    let raw = c[0] + 2.0 * c[1..=n].iter().sum::<f64>();
    let tail_bound = match series.fit {
        Some(fit) if fit.rate < 1.0 && n >= 1 => 2.0 * c[n].abs() * fit.rate / (1.0 - fit.rate),
        Some(_) => f64::INFINITY,
        None => 0.0,
    };
    let coboundary = raw <= COBOUNDARY_TOL * c[0].abs();
    Ok(GreenKubo {
        sigma2: raw.max(0.0),
        raw,
        tail_bound,
        truncation: n,
        coboundary,
    })
}

#[derive(Clone, Debug)]
pub struct CltOptions {
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    /// Known `σ²`; computed from an exact correlation series when absent.
    pub sigma2: Option<f64>,
    /// Length of that series.
    pub series_len: Option<usize>,
    /// Number of halvings of the horizon in the variance-scaling grid.
    pub grid_levels: usize,
}

impl CltOptions {
    pub fn new(horizon: usize, samples: usize, seed: u64) -> Self {
        CltOptions {
            horizon,
            samples,
            seed,
            sigma2: None,
            series_len: None,
            grid_levels: 6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    pub mean: f64,
    pub sigma2: f64,
    /// Kolmogorov–Smirnov distance of `(S_n − n E f)/√n` to `N(0, σ²)`.
    pub ks: f64,
    /// `3 · 1.36/√samples`.
    pub ks_threshold: f64,
    pub horizons: Vec<usize>,
    pub variances: Vec<f64>,
    /// Slope of `Var(S_n)` against `n`.
    pub variance_slope: f64,
    pub restarts: usize,
    pub warnings: Vec<String>,
}

impl CltReport {
    pub fn ks_pass(&self) -> bool {
        self.ks <= self.ks_threshold
    }

    pub fn slope_error(&self) -> f64 {
        (self.variance_slope - self.sigma2).abs() / self.sigma2
    }
}

pub fn birkhoff_clt_report(
    map: &MapModel,
    f: &Observable,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<CltReport> {
    birkhoff_clt_report_with(map, f, &CltOptions::new(horizon, samples, seed))
}

fn ks_distance(sorted: &[f64], normal: &Normal) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let c = normal.cdf(z);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

pub fn birkhoff_clt_report_with(map: &MapModel, f: &Observable, opts: &CltOptions) -> Result<CltReport> {
    f.validate()?;
    if opts.horizon == 0 || opts.samples < 2 {
        return Err(Error::InvalidParameter("need a positive horizon and at least 2 samples".into()));
    }
    let h = invariant_density(map)?.density;
    let mean = expectation(&h, f)?;
    let sigma2 = match opts.sigma2 {
        Some(s) => s,
        None => {
            let len = opts.series_len.unwrap_or(if f.singularity().is_some() { 20 } else { 60 });
            let series = correlation_series(map, f, f, len, &CorrelationMethod::Exact)?;
            let gk = green_kubo_sigma(&series, len)?;
            if gk.coboundary {
                return Err(Error::DegenerateVariance(gk.raw));
            }
            gk.sigma2
        }
    };
    if !(sigma2 > 0.0) {
        return Err(Error::DegenerateVariance(sigma2));
    }
    let mut warnings = Vec::new();
    if opts.samples < MIN_CLT_SAMPLES {
        warnings.push(format!(
            "only {} samples; KS threshold is unreliable below {MIN_CLT_SAMPLES}",
            opts.samples
        ));
    }
    let mut horizons: Vec<usize> = (0..opts.grid_levels.max(1))
        .map(|j| opts.horizon >> j)
        .filter(|&m| m >= 1)
        .collect();
    horizons.sort_unstable();
    horizons.dedup();
    let sampler = OrbitSampler::new(map, &h);
    let (sums, restarts) = map_orbit_chunks(
        opts.samples,
        1024,
        |range| {
            let mut out = Vec::with_capacity(range.len() * horizons.len());
            let mut restarts = 0;
            for i in range {
                let mut orbit = sampler.orbit(opts.seed, i as u64);
                let mut s = 0.0;
                let mut next = 0;
                for k in 1..=opts.horizon {
                    s += f.eval(orbit.value()) - mean;
                    if k == horizons[next] {
                        out.push(s);
                        next += 1;
                    }
                    if k < opts.horizon {
                        orbit.step();
                    }
                }
                restarts += orbit.restarts;
            }
            (out, restarts)
        },
        |(mut a, ra), (b, rb)| {
            a.extend(b);
            (a, ra + rb)
        },
    )
    .expect("at least one chunk");
    let g = horizons.len();
    let column = |j: usize| sums.iter().skip(j).step_by(g).copied();
    let k = opts.samples as f64;
    let variances: Vec<f64> = (0..g)
        .map(|j| {
            let m = column(j).sum::<f64>() / k;
            column(j).map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0)
        })
        .collect();
    let xs: Vec<f64> = horizons.iter().map(|&m| m as f64).collect();
    let variance_slope = linear_fit(&xs, &variances).map_or(f64::NAN, |(_, b)| b);
    let root = (opts.horizon as f64).sqrt();
    let mut z: Vec<f64> = column(g - 1).map(|s| s / root).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(CltReport {
        horizon: opts.horizon,
        samples: opts.samples,
        seed: opts.seed,
        mean,
        sigma2,
        ks: ks_distance(&z, &normal),
        ks_threshold: 3.0 * 1.36 / k.sqrt(),
        horizons,
        variances,
        variance_slope,
        restarts,
        warnings,
    })
}

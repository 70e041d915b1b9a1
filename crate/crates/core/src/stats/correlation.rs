use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::observable::{expectation, integrate_against, Observable, EPS_SING};
use super::quadrature::RuleCache;
use super::sampling::{invariant_density, map_orbit_chunks, DensitySource, OrbitSampler};
use crate::error::{Error, Result};
use crate::fit::{geometric_fit, GeometricFit};
use crate::interval::Interval;
use crate::maps::{BranchAction, MapModel};
use crate::measure::{transfer_step, PiecewiseDensity, DEFAULT_BREAKPOINT_CAP};

/// Gauss–Jacobi points per subinterval in the cell quadrature.
pub const QUADRATURE_POINTS: usize = 24;
/// Cell budget for the quadrature route.
pub const CORRELATION_CELL_CAP: usize = 1 << 22;
const MC_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationRoute {
    /// Transfer of `f·h` as a piecewise polynomial.
    Transfer,
    /// Gauss–Jacobi quadrature over the cells of `ξ_n`.
    CellQuadrature,
    MonteCarlo,
}

/// `Cov_μ(f, g∘T^n)` for `n = 0..=n_max`.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationSeries {
    pub route: CorrelationRoute,
    pub density_source: DensitySource,
    pub values: Vec<f64>,
    /// Standard errors (Monte Carlo only).
    pub stderr: Vec<f64>,
    /// Measure of the points whose orbit left the truncated branches, or the
    /// analytic bound on the part of the singularity below `EPS_SING`.
    pub error_bar: Vec<f64>,
    pub mean_f: f64,
    pub mean_g: f64,
    pub coarsened: bool,
    pub fit: Option<GeometricFit>,
}

impl CorrelationSeries {
    /// Geometric fit of `|Cov_n|` over `lo ≤ n ≤ hi`.
    pub fn fit_range(&self, lo: usize, hi: usize) -> Option<GeometricFit> {
        let pts: Vec<(usize, f64)> = self
            .values
            .iter()
            .copied()
            .enumerate()
            .filter(|(n, _)| *n >= lo && *n <= hi)
            .collect();
        geometric_fit(&pts, 1e-300)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("n,cov,stderr\n");
        for (n, v) in self.values.iter().enumerate() {
            let e = self.stderr.get(n).copied().unwrap_or(0.0);
            s.push_str(&format!("{n},{v:.16e},{e:.16e}\n"));
        }
        s
    }
}

fn default_fit(values: &[f64]) -> Option<GeometricFit> {
    let floor = values.first().map_or(0.0, |v| v.abs() * 1e-13);
    let pts: Vec<(usize, f64)> = values.iter().copied().enumerate().skip(1).collect();
    geometric_fit(&pts, floor)
}

pub fn correlation_series(
    map: &MapModel,
    f: &Observable,
    g: &Observable,
    n_max: usize,
    method: &CorrelationMethod,
) -> Result<CorrelationSeries> {
    f.validate()?;
    g.validate()?;
    let inv = invariant_density(map)?;
    let h = &inv.density;
    let mean_f = expectation(h, f)?;
    let mean_g = expectation(h, g)?;
    let mut series = match method {
        CorrelationMethod::MonteCarlo { samples, seed } => {
            monte_carlo(map, h, f, g, n_max, *samples, *seed, mean_f, mean_g)?
        }
        CorrelationMethod::Exact => match f.as_piecewise_poly() {
            Some(_) if map.is_affine() => transfer_route(map, h, f, g, n_max, mean_f * mean_g)?,
            _ => cell_route(map, h, f, g, n_max, mean_f * mean_g)?,
        },
    };
    series.density_source = inv.source;
    series.mean_f = mean_f;
    series.mean_g = mean_g;
    series.fit = default_fit(&series.values);
    Ok(series)
}

fn empty(route: CorrelationRoute) -> CorrelationSeries {
    CorrelationSeries {
        route,
        density_source: DensitySource::Lebesgue,
        values: Vec::new(),
        stderr: Vec::new(),
        error_bar: Vec::new(),
        mean_f: 0.0,
        mean_g: 0.0,
        coarsened: false,
        fit: None,
    }
}

fn transfer_route(
    map: &MapModel,
    h: &PiecewiseDensity,
    f: &Observable,
    g: &Observable,
    n_max: usize,
    product_of_means: f64,
) -> Result<CorrelationSeries> {
    let mut out = empty(CorrelationRoute::Transfer);
    let mut cur = h.times(&f.as_piecewise_poly().expect("polynomial observable"));
    let mut lost = 0.0;
    for n in 0..=n_max {
        out.values.push(integrate_against(g, &cur)? - product_of_means);
        out.error_bar.push(lost);
        if n == n_max {
            break;
        }
        let (next, l) = transfer_step(map, &cur)?;
        lost += l.abs();
        cur = next;
        if cur.len() > DEFAULT_BREAKPOINT_CAP {
            cur = cur.coarsened(DEFAULT_BREAKPOINT_CAP / 2);
            out.coarsened = true;
        }
    }
    Ok(out)
}

/// `∫_I f(x) g(A x) h(x) dx` over one cell, cut at every discontinuity of
/// the integrand and integrated with Jacobi weights at singular endpoints.
fn cell_integral(
    rules: &RuleCache,
    cell: Interval,
    action: &BranchAction,
    h: &PiecewiseDensity,
    f: &Observable,
    g: &Observable,
) -> Result<f64> {
    let mut cuts: Vec<f64> = vec![cell.left, cell.right];
    cuts.extend(
        h.breakpoints()
            .iter()
            .chain(f.breakpoints().iter())
            .copied()
            .filter(|&p| p > cell.left && p < cell.right),
    );
    let image = action.image(cell);
    for y in g.breakpoints() {
        if y > image.left && y < image.right {
            cuts.push(action.inverse_on(y, cell));
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let increasing = action.apply(cell.right) >= action.apply(cell.left);
    let tau_f = f.singularity().unwrap_or(0.0);
    let tau_g = g.singularity().unwrap_or(0.0);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let v = h.value_at(0.5 * (a + b));
        if v == 0.0 {
            continue;
        }
        let mut left_exp = 0.0;
        let mut right_exp = 0.0;
        if a <= 0.0 {
            left_exp -= tau_f;
        }
        if image.left <= 0.0 {
            if increasing && a == cell.left {
                left_exp -= tau_g;
            } else if !increasing && b == cell.right {
                right_exp -= tau_g;
            }
        }
        if left_exp <= -1.0 || right_exp <= -1.0 {
            return Err(Error::NonIntegrable(format!(
                "product singularity of order {} at a cell end",
                -(left_exp.min(right_exp))
            )));
        }
        let rule = rules.get(right_exp, left_exp)?;
        total += v * rule.integrate(a, b, |x| {
            f.eval(x) * g.eval(action.apply(x)) / ((x - a).powf(left_exp) * (b - x).powf(right_exp))
        });
    }
    Ok(total)
}

fn cell_route(
    map: &MapModel,
    h: &PiecewiseDensity,
    f: &Observable,
    g: &Observable,
    n_max: usize,
    product_of_means: f64,
) -> Result<CorrelationSeries> {
    let rules = RuleCache::new(QUADRATURE_POINTS);
    let identity = BranchAction::affine(1.0, 0.0);
    let sup_h = h.value_range().1;
    // ∫_0^ε x^{-τ} h dx ≤ sup h · ε^{1-τ}/(1-τ)
    let sing_bound = f
        .singularity()
        .map_or(0.0, |t| sup_h * EPS_SING.powf(1.0 - t) / (1.0 - t));
    let rows: Vec<Result<(f64, f64)>> = (0..=n_max)
        .into_par_iter()
        .map(|n| {
            if n == 0 {
                let v = cell_integral(&rules, Interval::UNIT, &identity, h, f, g)?;
                return Ok((v, 0.0));
            }
            let mut acc = 0.0;
            let tail = map.visit_cells(Interval::UNIT, n, CORRELATION_CELL_CAP, |c| {
                acc += cell_integral(&rules, c.interval, c.action, h, f, g)?;
                Ok(())
            })?;
            Ok((acc, tail))
        })
        .collect();
    let mut out = empty(CorrelationRoute::CellQuadrature);
    for r in rows {
        let (v, tail) = r?;
        out.values.push(v - product_of_means);
        out.error_bar.push(tail + sing_bound);
    }
    Ok(out)
}

#[derive(Clone)]
struct McAcc {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: usize,
}

#[allow(clippy::too_many_arguments)]
fn monte_carlo(
    map: &MapModel,
    h: &PiecewiseDensity,
    f: &Observable,
    g: &Observable,
    n_max: usize,
    samples: usize,
    seed: u64,
    mean_f: f64,
    mean_g: f64,
) -> Result<CorrelationSeries> {
    if samples < 2 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least 2 samples".into()));
    }
    let sampler = OrbitSampler::new(map, h);
    let acc = map_orbit_chunks(
        samples,
        MC_CHUNK,
        |range| {
            let mut acc = McAcc {
                sum: vec![0.0; n_max + 1],
                sum_sq: vec![0.0; n_max + 1],
                count: 0,
            };
            for i in range {
                let mut orbit = sampler.orbit(seed, i as u64);
                let f0 = f.eval(orbit.value()) - mean_f;
                for n in 0..=n_max {
                    if n > 0 {
                        orbit.step();
                    }
                    let psi = f0 * (g.eval(orbit.value()) - mean_g);
                    acc.sum[n] += psi;
                    acc.sum_sq[n] += psi * psi;
                }
                acc.count += 1;
            }
            acc
        },
        |mut a, b| {
            for n in 0..a.sum.len() {
                a.sum[n] += b.sum[n];
                a.sum_sq[n] += b.sum_sq[n];
            }
            a.count += b.count;
            a
        },
    )
    .expect("at least one chunk");
    let k = acc.count as f64;
    let mut out = empty(CorrelationRoute::MonteCarlo);
    for n in 0..=n_max {
        let mean = acc.sum[n] / k;
        let var = (acc.sum_sq[n] / k - mean * mean).max(0.0) * k / (k - 1.0);
        out.values.push(mean);
        out.stderr.push((var / k).sqrt());
        out.error_bar.push(0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;
    use crate::stats::observable::ObservablePiece;

    #[test]
    fn doubling_identity_covariances() {
        let m = MapModel::doubling();
        let f = Observable::identity();
        let s = correlation_series(&m, &f, &f, 20, &CorrelationMethod::Exact).unwrap();
        assert_eq!(s.route, CorrelationRoute::Transfer);
        for (n, v) in s.values.iter().enumerate() {
            let oracle = 0.5f64.powi(n as i32) / 12.0;
            assert!((v - oracle).abs() < 1e-15, "n = {n}: {v}");
        }
        let fit = s.fit.unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-9);
    }

    #[test]
    fn constant_has_no_covariance() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let s = correlation_series(
            &m,
            &Observable::constant(3.0),
            &Observable::identity(),
            10,
            &CorrelationMethod::Exact,
        )
        .unwrap();
        // the truncated density misses (λ/(1−λ))^K ≈ 2.7e-11 of invariant mass
        let tail = (0.4f64 / 0.6).powi(60);
        assert!(s.values.iter().all(|v| v.abs() < 10.0 * tail), "{:?}", s.values);
        let d = correlation_series(
            &MapModel::doubling(),
            &Observable::constant(3.0),
            &Observable::power(0.3),
            6,
            &CorrelationMethod::Exact,
        )
        .unwrap();
        assert!(d.values.iter().all(|v| v.abs() < 1e-12), "{:?}", d.values);
    }

    #[test]
    fn quadrature_route_agrees_with_transfer() {
        let m = MapModel::vssv(0.4, 30).unwrap();
        let f = Observable::Indicator {
            interval: Interval::new(0.3, 0.7),
        };
        let g = Observable::Piecewise {
            pieces: vec![ObservablePiece {
                interval: Interval::new(0.1, 0.9),
                coefficients: vec![0.5, -1.0, 2.0],
            }],
        };
        let h = invariant_density(&m).unwrap().density;
        let exact = transfer_route(&m, &h, &f, &g, 3, 0.0).unwrap();
        let quad = cell_route(&m, &h, &f, &g, 3, 0.0).unwrap();
        for n in 0..=3 {
            assert!((exact.values[n] - quad.values[n]).abs() < 1e-12, "n = {n}");
        }
    }

    /// `∫_0^1 u^{-τ} φ(u) du` through `u = v^{1/(1-τ)}` and composite Simpson.
    fn weighted_oracle(tau: f64, phi: impl Fn(f64) -> f64) -> f64 {
        let p = 1.0 / (1.0 - tau);
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let v = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * phi(v.powf(p));
        }
        p * s * h / 3.0
    }

    #[test]
    fn singular_covariance_against_substitution_oracle() {
        // on the doubling map, Cov(x^{-τ}, x^{-τ}∘T^n) =
        // 2^{-n(1-τ)} Σ_j ∫_0^1 (u+j)^{-τ} u^{-τ} du − (1/(1-τ))²
        let tau = 0.3;
        let m = MapModel::doubling();
        let f = Observable::power(tau);
        let s = correlation_series(&m, &f, &f, 4, &CorrelationMethod::Exact).unwrap();
        assert_eq!(s.route, CorrelationRoute::CellQuadrature);
        for n in 0..=4usize {
            let cells = 1usize << n;
            let sum: f64 = (0..cells)
                .map(|j| match j {
                    0 => 1.0 / (1.0 - 2.0 * tau),
                    _ => weighted_oracle(tau, |u| (u + j as f64).powf(-tau)),
                })
                .sum();
            let oracle = 2f64.powf(-(n as f64) * (1.0 - tau)) * sum - (1.0 / (1.0 - tau)).powi(2);
            assert!((s.values[n] - oracle).abs() < 1e-6, "n = {n}: {} vs {oracle}", s.values[n]);
        }
    }

    #[test]
    fn monte_carlo_brackets_exact() {
        let m = MapModel::doubling();
        let f = Observable::identity();
        let mc = correlation_series(
            &m,
            &f,
            &f,
            5,
            &CorrelationMethod::MonteCarlo {
                samples: 50_000,
                seed: 9,
            },
        )
        .unwrap();
        for n in 0..=5 {
            let exact = 0.5f64.powi(n as i32) / 12.0;
            assert!((mc.values[n] - exact).abs() < 4.0 * mc.stderr[n], "n = {n}");
        }
    }
}

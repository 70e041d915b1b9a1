//! Executable checks of the one-step expansion, log-Jacobian regularity and
//! magnet assumptions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::maps::{MapModel, DEFAULT_CELL_CAP};

/// Margin below 1 required for a one-step expansion verdict.
pub const H1_PASS_MARGIN: f64 = 1e-6;

/// Fraction of the value above which the truncation error bar is fatal.
pub const TAIL_DOMINANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OneStepSum {
    pub window: Interval,
    pub value: f64,
    /// Estimated contribution of the branches beyond the truncation.
    pub error_bar: f64,
}

fn raw_one_step_sum(map: &MapModel, window: &Interval, q: f64) -> f64 {
    let w = window.len();
    map.branches_meeting(window)
        .filter_map(|i| {
            let b = &map.branches()[i];
            let piece = b.domain.intersect(window)?;
            let image = b.action.image(piece).len();
            Some((w / image).powf(q) * piece.len() / w)
        })
        .sum()
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!("q = {q} not in (0,1]")));
    }
    Ok(())
}

fn one_step_with(
    map: &MapModel,
    extended: Option<&MapModel>,
    window: Interval,
    q: f64,
) -> Result<OneStepSum> {
    check_q(q)?;
    if !(window.len() > 0.0) {
        return Err(Error::InvalidParameter(format!("degenerate window {window}")));
    }
    let value = raw_one_step_sum(map, &window, q);
    let error_bar = match extended {
        Some(ext) if window.left < map.tail_edge() => {
            (raw_one_step_sum(ext, &window, q) - value).abs()
        }
        _ => 0.0,
    };
    if error_bar > TAIL_DOMINANCE * value {
        return Err(Error::TailDominates { value, error_bar });
    }
    Ok(OneStepSum {
        window,
        value,
        error_bar,
    })
}

/// `Σ_{α ∈ W/ξ_1} (|W|/|TW_α|)^q |W_α|/|W|` with a truncation error bar.
pub fn one_step_sum(map: &MapModel, window: Interval, q: f64) -> Result<OneStepSum> {
    one_step_with(map, map.extended().as_ref(), window, q)
}

/// Lower bound on the untruncated one-step sum: the sum itself when the
/// truncation error is small, otherwise the deeper-truncation sum (all terms
/// are positive). Enough to certify a failing window.
pub fn one_step_lower_bound(map: &MapModel, window: Interval, q: f64) -> Result<f64> {
    match one_step_sum(map, window, q) {
        Ok(s) => Ok(s.value),
        Err(Error::TailDominates { value, error_bar }) => Ok(value + error_bar),
        Err(e) => Err(e),
    }
}

/// Tail value `λ^q(1−λ)/(1−λ^{1−q})` of the one-step sum for the vSSV family.
pub fn vssv_h1_closed_form(lambda: f64, q: f64) -> f64 {
    lambda.powf(q) * (1.0 - lambda) / (1.0 - lambda.powf(1.0 - q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Straddle,
    Interior,
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Probe {
    pub kind: ProbeKind,
    #[serde(flatten)]
    pub sum: OneStepSum,
}

#[derive(Clone, Debug, Serialize)]
pub struct H1Report {
    pub q: f64,
    pub delta: f64,
    pub theta_hat: f64,
    pub worst_window: Interval,
    pub worst_error_bar: f64,
    pub pass: bool,
    pub probes: Vec<Probe>,
}

/// Sum over a two-piece window `(p − t w, p + (1−t) w]`.
fn straddle_window(p: f64, t: f64, w: f64) -> Interval {
    Interval::new(p - t * w, p + (1.0 - t) * w)
}

/// Probes straddles of every partition point, one interior window per
/// branch, and tail windows `(0, b_N]`; reports the largest sum.
pub fn estimate_theta0(map: &MapModel, q: f64, delta: f64) -> Result<H1Report> {
    check_q(q)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    let extended = map.extended();
    let ext = extended.as_ref();
    let branches = map.branches();
    let mut probes = Vec::new();

    for pair in branches.windows(2) {
        let (l, r) = (&pair[0], &pair[1]);
        let p = l.domain.right;
        let candidates: Vec<(f64, f64)> = match (l.slope(), r.slope()) {
            (Some(sl), Some(sr)) => {
                let t = sr.abs() / (sl.abs() + sr.abs());
                vec![(t, 0.999 * delta.min(l.domain.len() / t).min(r.domain.len() / (1.0 - t)))]
            }
            _ => {
                let cap = delta.min(l.domain.len()).min(r.domain.len());
                (1..20)
                    .flat_map(|i| {
                        let t = i as f64 / 20.0;
                        [0.999, 0.5, 0.1].map(|f| (t, f * cap.min(l.domain.len() / t).min(r.domain.len() / (1.0 - t))))
                    })
                    .collect()
            }
        };
        for (t, w) in candidates {
            if w > 0.0 {
                let sum = one_step_with(map, ext, straddle_window(p, t, w), q)?;
                probes.push(Probe {
                    kind: ProbeKind::Straddle,
                    sum,
                });
            }
        }
    }

    for b in branches {
        let w = 0.5 * delta.min(b.domain.len());
        let c = b.domain.midpoint();
        let sum = one_step_with(map, ext, Interval::new(c - 0.5 * w, c + 0.5 * w), q)?;
        probes.push(Probe {
            kind: ProbeKind::Interior,
            sum,
        });
    }

    if map.tail_edge() > 0.0 {
        let mut tail_probes = 0;
        let mut last_err = None;
        for b in branches.iter().rev() {
            let right = b.domain.left;
            if right >= delta || right <= map.tail_edge() {
                continue;
            }
            match one_step_with(map, ext, Interval::new(0.0, right), q) {
                Ok(sum) => {
                    tail_probes += 1;
                    probes.push(Probe {
                        kind: ProbeKind::Tail,
                        sum,
                    });
                }
                Err(e @ Error::TailDominates { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        if tail_probes == 0 {
            if let Some(e) = last_err {
                return Err(e);
            }
        }
    }

    let worst = probes
        .iter()
        .max_by(|a, b| a.sum.value.total_cmp(&b.sum.value))
        .ok_or_else(|| Error::InvalidParameter("no window probed".into()))?;
    Ok(H1Report {
        q,
        delta,
        theta_hat: worst.sum.value,
        worst_window: worst.sum.window,
        worst_error_bar: worst.sum.error_bar,
        pass: worst.sum.value < 1.0 - H1_PASS_MARGIN,
        probes,
    })
}

/// `theta_hat` from [`estimate_theta0`], or, when every tail window is
/// dominated by its truncation error, the deeper-truncation lower bound on
/// the largest tail sum.
pub fn theta0_lower_bound(map: &MapModel, q: f64, delta: f64) -> Result<f64> {
    match estimate_theta0(map, q, delta) {
        Ok(r) => Ok(r.theta_hat),
        Err(Error::TailDominates { value, error_bar }) => Ok(value + error_bar),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedRecord {
    pub seed: Interval,
    /// Least `n` with a component containing the magnet at every step in
    /// `[n, n_max]`.
    pub n_w: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct H3Report {
    pub magnet: Interval,
    pub n_max: usize,
    pub seeds: Vec<SeedRecord>,
    /// Largest `n_W`, when every seed succeeded.
    pub n_c: Option<usize>,
}

/// Distinct components of `T^n W` for `n = 1..=n_max`.
pub fn component_orbit(
    map: &MapModel,
    seed: Interval,
    n_max: usize,
    cap: usize,
) -> Result<Vec<Vec<Interval>>> {
    let mut out = Vec::with_capacity(n_max);
    let mut current = vec![seed];
    for depth in 1..=n_max {
        let mut next: Vec<Interval> = current
            .iter()
            .flat_map(|j| map.step_components(j).into_iter().map(|(_, c)| c))
            .collect();
        next.sort_by(|a, b| a.left.total_cmp(&b.left).then(a.right.total_cmp(&b.right)));
        next.dedup_by(|a, b| a.approx_eq(b));
        if next.len() > cap {
            return Err(Error::CellExplosion { cap, depth });
        }
        out.push(next.clone());
        current = next;
    }
    Ok(out)
}

/// Magnet check: for each seed the least `n_W` after which some component
/// of `T^n W` contains `magnet` up to `n_max`.
pub fn check_h3(
    map: &MapModel,
    magnet: Interval,
    seeds: &[Interval],
    n_max: usize,
) -> Result<H3Report> {
    if !Interval::UNIT.contains(&magnet) || magnet.len() <= 0.0 {
        return Err(Error::InvalidParameter(format!("magnet {magnet} not inside (0,1]")));
    }
    let mut records = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let orbit = component_orbit(map, seed, n_max, DEFAULT_CELL_CAP)?;
        let hits: Vec<bool> = orbit
            .iter()
            .map(|comps| comps.iter().any(|c| c.contains(&magnet)))
            .collect();
        let tail_start = hits.iter().rposition(|h| !h).map_or(0, |i| i + 1);
        let n_w = (tail_start < hits.len()).then_some(tail_start + 1);
        records.push(SeedRecord { seed, n_w });
    }
    let n_c = records
        .iter()
        .map(|r| r.n_w)
        .collect::<Option<Vec<_>>>()
        .and_then(|v| v.into_iter().max());
    Ok(H3Report {
        magnet,
        n_max,
        seeds: records,
        n_c,
    })
}

/// Default depth for regularity estimates.
pub const DEFAULT_REGULARITY_DEPTH: usize = 10;

/// Estimate of `max_W |log|T′||_{W,γ}` from the oscillation of `log|T′|`
/// across sibling cells of `W/ξ_{d+1}` inside each cell of `W/ξ_d`,
/// `d ≤ depth`. Exactly zero for piecewise-affine maps.
pub fn estimate_log_jacobian_holder(map: &MapModel, gamma: f64, depth: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} not in (0,1)")));
    }
    if map.is_affine() {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for b in map.branches() {
        if b.slope().is_some() {
            continue;
        }
        let log_jac = |x: f64| b.derivative(x).abs().ln();
        for d in 1..=depth {
            let mut group: Vec<usize> = Vec::new();
            let mut ranges: Vec<(f64, f64)> = Vec::new();
            let mut flush = |ranges: &mut Vec<(f64, f64)>| {
                if ranges.len() > 1 {
                    let hi = ranges.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
                    let lo = ranges.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
                    // extremes in the same child do not count
                    let cross = ranges
                        .iter()
                        .enumerate()
                        .flat_map(|(i, a)| {
                            ranges
                                .iter()
                                .enumerate()
                                .filter(move |(j, _)| *j != i)
                                .map(move |(_, c)| (a.1 - c.0).abs().max((c.1 - a.0).abs()))
                        })
                        .fold(0.0, f64::max);
                    best = best.max(cross.min(hi - lo) / gamma.powi(d as i32 + 1));
                }
                ranges.clear();
            };
            map.visit_cells(b.domain, d + 1, DEFAULT_CELL_CAP, |c| {
                let prefix = &c.word[..d];
                if group.as_slice() != prefix {
                    flush(&mut ranges);
                    group = prefix.to_vec();
                }
                let i = c.interval;
                let samples = [i.left + 1e-9 * i.len(), i.midpoint(), i.right];
                let vals = samples.map(log_jac);
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ranges.push((lo, hi));
                Ok(())
            })?;
            flush(&mut ranges);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{ExplicitBranch, SlopeRule};

    #[test]
    fn doubling_one_step_sums() {
        let m = MapModel::doubling();
        let s = one_step_sum(&m, Interval::new(0.3, 0.4), 1.0).unwrap();
        assert!((s.value - 0.5).abs() < 1e-15);
        let s = one_step_sum(&m, Interval::new(0.45, 0.55), 0.5).unwrap();
        assert!((s.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn vssv_tail_window_matches_closed_form() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let s = one_step_sum(&m, Interval::new(0.0, 0.4f64.powi(10)), 0.3).unwrap();
        let oracle: f64 = (11..400)
            .map(|k| {
                let bn = 0.4f64.powi(10);
                let ak = 0.4f64.powi(k - 1) * 0.6;
                let img = 0.4f64.powi(k - 2);
                (bn / img).powf(0.3) * ak / bn
            })
            .sum();
        assert!((s.value - oracle).abs() < 1e-10, "{} vs {oracle}", s.value);
        assert!((s.value - vssv_h1_closed_form(0.4, 0.3)).abs() < 1e-6);
        assert!(s.error_bar < 1e-10);
    }

    #[test]
    fn closed_form_values() {
        assert!((vssv_h1_closed_form(0.4, 0.3) - 0.962_715_07).abs() < 1e-7);
        assert!((vssv_h1_closed_form(0.5, 0.5) - 1.207_106_78).abs() < 1e-7);
        assert!((vssv_h1_closed_form(0.3, 1e-9) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn theta0_doubling_iterate_two() {
        let m = MapModel::doubling().with_iterate(2).unwrap();
        let r = estimate_theta0(&m, 0.5, 0.25).unwrap();
        assert!((r.theta_hat - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(r.pass);
        let m1 = MapModel::doubling();
        let r1 = estimate_theta0(&m1, 0.5, 0.25).unwrap();
        assert!((r1.theta_hat - 1.0).abs() < 1e-12);
        assert!(!r1.pass);
    }

    #[test]
    fn theta0_vssv_attained_on_tail() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let r = estimate_theta0(&m, 0.3, 0.1).unwrap();
        assert!((r.theta_hat - vssv_h1_closed_form(0.4, 0.3)).abs() < 1e-5);
        assert!(r.pass);
        assert_eq!(r.worst_window.left, 0.0);
        let straddles: Vec<f64> = r
            .probes
            .iter()
            .filter(|p| p.kind == ProbeKind::Straddle)
            .map(|p| p.sum.value)
            .collect();
        let top = straddles.iter().copied().fold(0.0, f64::max);
        assert!((top - 0.84f64.powf(0.3)).abs() < 1e-12);
        assert!(straddles.iter().any(|v| (v - 0.48f64.powf(0.3)).abs() < 1e-12));
    }

    #[test]
    fn rychlik_tail_fails() {
        let m = MapModel::geometric_tail(0.5, SlopeRule::Constant(2.0), 200).unwrap();
        let r = estimate_theta0(&m, 0.5, 0.1).unwrap();
        assert!(r.theta_hat >= 1.707_106 && !r.pass);
    }

    #[test]
    fn h3_examples() {
        let m = MapModel::doubling();
        let u = Interval::new(0.25, 0.5);
        let r = check_h3(&m, u, &[Interval::new(0.0, 0.5), Interval::new(0.3, 0.31)], 20).unwrap();
        assert_eq!(r.seeds[0].n_w, Some(1));
        assert_eq!(r.seeds[1].n_w, Some(6));
        assert_eq!(r.n_c, Some(6));
        let v = MapModel::vssv(0.4, 60).unwrap();
        let r = check_h3(&v, Interval::new(0.16, 0.4), &[Interval::new(0.064, 0.16)], 30).unwrap();
        assert_eq!(r.seeds[0].n_w, Some(1));
    }

    #[test]
    fn affine_maps_have_zero_log_jacobian_oscillation() {
        assert_eq!(estimate_log_jacobian_holder(&MapModel::doubling(), 0.5, 10).unwrap(), 0.0);
        let v = MapModel::vssv(0.3, 60).unwrap();
        assert_eq!(estimate_log_jacobian_holder(&v, 0.5, 10).unwrap(), 0.0);
    }

    fn quadratic_map(c1: f64) -> MapModel {
        // x ↦ c1·x + x²/2 on (0, r] with c1·r + r²/2 = 1, then an affine full branch
        let r = -c1 + (c1 * c1 + 2.0).sqrt();
        MapModel::explicit(vec![
            ExplicitBranch::polynomial(Interval::new(0.0, r), vec![0.0, c1, 0.5]),
            ExplicitBranch::affine(Interval::new(r, 1.0), 1.0 / (1.0 - r), -r / (1.0 - r)),
        ])
        .unwrap()
    }

    fn brute_force_holder(map: &MapModel, gamma: f64, depth: usize) -> f64 {
        let b = &map.branches()[0];
        let d = b.domain;
        let mut pts: Vec<f64> = (1..1500).map(|i| d.left + d.len() * i as f64 / 1500.0).collect();
        pts.extend((0..1500).map(|i| d.right * 10f64.powf(-6.0 * i as f64 / 1500.0)));
        pts.retain(|&x| d.contains_point(x));
        let lj: Vec<f64> = pts.iter().map(|&x| b.derivative(x).abs().ln()).collect();
        let mut best: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let diff = (lj[i] - lj[j]).abs();
                if diff == 0.0 {
                    continue;
                }
                if let Some(s) = map.separation_time(pts[i], pts[j], depth + 1).unwrap() {
                    best = best.max(diff / gamma.powi(s as i32));
                }
            }
        }
        best
    }

    #[test]
    fn log_jacobian_estimate_matches_dense_pairs() {
        for c1 in [1.0, 2.0] {
            let m = quadratic_map(c1);
            let est = estimate_log_jacobian_holder(&m, 0.5, 10).unwrap();
            let oracle = brute_force_holder(&m, 0.5, 10);
            assert!(est > 0.0 && est.is_finite());
            assert!((est - oracle).abs() <= 0.2 * oracle, "c1={c1}: {est} vs {oracle}");
        }
    }
}

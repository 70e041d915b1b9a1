//! Magnet coupling of standard families and the equidistribution diagnostics
//! built on it.

use serde::{Deserialize, Serialize};

use crate::checks::{check_h3, estimate_log_jacobian_holder, estimate_theta0, DEFAULT_REGULARITY_DEPTH};
use crate::error::{Error, Result};
use crate::families::{properness_steps, StandardFamily, StandardPair, DEFAULT_GAMMA, DEFAULT_PAIR_CAP};
use crate::fit::{geometric_fit, GeometricFit};
use crate::interval::Interval;
use crate::maps::MapModel;
use crate::measure::{pushforward, PiecewiseDensity, PushOptions};

/// Largest number of equal Lebesgue pairs the proof construction may use.
pub const PROOF_PAIR_LIMIT: usize = 4096;
/// Equal Lebesgue pairs used to measure `n_c` and `d_c` empirically.
pub const EMPIRICAL_PROBE_PAIRS: usize = 16;
/// Horizon for magnet searches.
pub const MAGNET_HORIZON: usize = 200;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    #[default]
    Empirical,
    Proof,
}

impl std::str::FromStr for CouplingMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "empirical" => Ok(CouplingMode::Empirical),
            "proof" => Ok(CouplingMode::Proof),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingConstants {
    pub mode: CouplingMode,
    pub q0: f64,
    pub delta0: f64,
    pub theta0: f64,
    pub gamma: f64,
    pub c_j: f64,
    pub c_r: f64,
    pub c0: f64,
    pub c_p: f64,
    pub n_p: usize,
    pub magnet: Interval,
    pub n_c: usize,
    pub d_c: f64,
    pub rho_bar_c: f64,
    pub theta_c: f64,
    /// `N_c = 1 + n_p + n_c`.
    pub big_n_c: usize,
}

/// `C_r = max{1, 2C_J/(γ⁻¹ − 1)}`.
pub fn regular_constant(c_j: f64, gamma: f64) -> f64 {
    (2.0 * c_j / (1.0 / gamma - 1.0)).max(1.0)
}

/// `c₀ = max{1, 2θ₀δ₀^{−q₀}/(1 − θ₀)}`.
pub fn growth_constant(theta0: f64, delta0: f64, q0: f64) -> f64 {
    (2.0 * theta0 * delta0.powf(-q0) / (1.0 - theta0)).max(1.0)
}

impl CouplingConstants {
    /// Constants from `θ₀` and `C_J` alone; `n_c`, `d_c` still unset.
    pub fn base(q0: f64, delta0: f64, theta0: f64, c_j: f64, gamma: f64, magnet: Interval) -> Self {
        let c_r = regular_constant(c_j, gamma);
        let c0 = growth_constant(theta0, delta0, q0);
        let c_p = 10.0 * c0 * (7.0 * c_r).exp();
        let n_p = properness_steps(c_p, theta0);
        CouplingConstants {
            mode: CouplingMode::Empirical,
            q0,
            delta0,
            theta0,
            gamma,
            c_j,
            c_r,
            c0,
            c_p,
            n_p,
            magnet,
            n_c: 0,
            d_c: 0.0,
            rho_bar_c: 0.5 * (-c_r).exp(),
            theta_c: 0.0,
            big_n_c: 1 + n_p,
        }
    }
}

fn equal_lebesgue_pairs(k: usize) -> Vec<StandardFamily> {
    (0..k)
        .map(|i| {
            StandardFamily::lebesgue(Interval::new(i as f64 / k as f64, (i + 1) as f64 / k as f64))
        })
        .collect()
}

/// Evaluates the coupling constants. Proof mode follows the covering-lemma
/// construction literally and fails when it needs more than
/// [`PROOF_PAIR_LIMIT`] pairs; empirical mode measures `n_c` and `d_c` on
/// [`EMPIRICAL_PROBE_PAIRS`] equal Lebesgue pairs.
pub fn derive_constants(
    map: &MapModel,
    q0: f64,
    delta0: f64,
    magnet: Interval,
    mode: CouplingMode,
) -> Result<CouplingConstants> {
    let h1 = estimate_theta0(map, q0, delta0)?;
    if !h1.pass {
        return Err(Error::H1Failure(h1.theta_hat));
    }
    let gamma = DEFAULT_GAMMA;
    let c_j = estimate_log_jacobian_holder(map, gamma, DEFAULT_REGULARITY_DEPTH)?;
    let mut k = CouplingConstants::base(q0, delta0, h1.theta_hat, c_j, gamma, magnet);
    k.mode = mode;
    let pairs = match mode {
        CouplingMode::Proof => {
            let needed = 3.0 * (2.0 * k.c_p).powf(1.0 / q0);
            if !(needed <= PROOF_PAIR_LIMIT as f64) {
                return Err(Error::ProofConstantsInfeasible(format!(
                    "covering construction needs {needed:.3e} equal pairs (C_p = {:.6e})",
                    k.c_p
                )));
            }
            needed.ceil() as usize
        }
        CouplingMode::Empirical => EMPIRICAL_PROBE_PAIRS,
    };
    let seeds: Vec<Interval> = equal_lebesgue_pairs(pairs)
        .iter()
        .map(|f| f.entries[0].0.support)
        .collect();
    let h3 = check_h3(map, magnet, &seeds, MAGNET_HORIZON)?;
    let n_seeds = h3
        .n_c
        .ok_or_else(|| Error::CoveringRatioZero { round: 0 })?;
    k.n_c = match mode {
        CouplingMode::Proof => n_seeds.max(k.n_p),
        CouplingMode::Empirical => n_seeds,
    };
    let mut d = f64::INFINITY;
    for fam in equal_lebesgue_pairs(pairs) {
        d = d.min(fam.iterate(map, k.n_c)?.covering_ratio(&magnet));
    }
    if !(d > 0.0) {
        return Err(Error::CoveringRatioZero { round: 0 });
    }
    k.d_c = match mode {
        CouplingMode::Proof => (-k.c_r).exp() * d / (2.0 * pairs as f64),
        CouplingMode::Empirical => d,
    };
    k.theta_c = (-k.c_r).exp() * magnet.len() * k.d_c * k.rho_bar_c;
    k.big_n_c = 1 + k.n_p + k.n_c;
    Ok(k)
}

/// Branch domain with the largest covering ratio of `T^horizon(M, m)`.
pub fn find_magnet(map: &MapModel, horizon: usize) -> Result<Interval> {
    let fam = StandardFamily::lebesgue(Interval::UNIT).iterate(map, horizon)?;
    map.branches()
        .iter()
        .map(|b| (b.domain, fam.covering_ratio(&b.domain)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(a.0.len().total_cmp(&b.0.len())))
        .map(|(d, _)| d)
        .ok_or_else(|| Error::InvalidMap("map has no branches".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingRound {
    pub round: usize,
    /// Number of map steps at which the chunk is extracted.
    pub time: usize,
    pub coupled_mass: f64,
    pub cumulative: f64,
    pub residual: f64,
    pub residual_z: f64,
    /// `δ(G′)` before cutting at the magnet's endpoints.
    pub delta_observed: f64,
    pub rho_bar: f64,
    /// `ρ̄·δ̄`, the fraction of the residual extracted in this round.
    pub extraction_ratio: f64,
    /// `|1 − cumulative − residual − dropped|`.
    pub accounting_defect: f64,
    pub dropped: f64,
    /// Largest relative deviation of the chunk density from a constant on U.
    pub chunk_nonuniformity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingLedger {
    pub constants: CouplingConstants,
    /// Steps spent making the initial family proper.
    pub warmup: usize,
    pub rounds: Vec<CouplingRound>,
    /// `(1 − Θ_c)^{t/N_c}` at each round time.
    pub tail_bound_series: Vec<f64>,
    /// Smallest per-round extraction ratio.
    pub theta_hat: f64,
    /// Chunk densities (on `U`, absolute mass) with their extraction times.
    #[serde(skip)]
    pub chunks: Vec<(usize, PiecewiseDensity)>,
    /// Residual measure at the final time.
    #[serde(skip)]
    pub residual_family: StandardFamily,
    pub final_time: usize,
}

impl CouplingLedger {
    /// `‖T^t_*ν_G − Σ_k T^{t−t_k}_*(chunk_k) − residual_t‖_{L¹}` at the final time.
    pub fn decomposition_defect(&self, map: &MapModel, initial: &StandardFamily) -> Result<f64> {
        let opts = PushOptions::default();
        let t = self.final_time;
        let (target, _) = pushforward(map, &initial.measure_density(), t, &opts)?;
        let mut terms: Vec<PiecewiseDensity> = Vec::new();
        for (tk, chunk) in &self.chunks {
            terms.push(pushforward(map, chunk, t - tk, &opts)?.0);
        }
        let residual = self.residual_family.measure_density().scale(self.residual_scale());
        terms.push(residual);
        let refs: Vec<(f64, &PiecewiseDensity)> = terms.iter().map(|d| (1.0, d)).collect();
        Ok(target.l1_distance(&PiecewiseDensity::combine(&refs), None))
    }

    fn residual_scale(&self) -> f64 {
        self.rounds.last().map_or(1.0, |r| {
            let w = self.residual_family.total_weight();
            if w > 0.0 {
                r.residual / w
            } else {
                0.0
            }
        })
    }
}

fn restore(map: &MapModel, fam: StandardFamily, k: &CouplingConstants) -> Result<(StandardFamily, usize)> {
    match k.mode {
        CouplingMode::Proof => Ok((fam.iterate(map, 1 + k.n_p)?, 1 + k.n_p)),
        CouplingMode::Empirical => {
            let mut cur = fam.step(map, DEFAULT_PAIR_CAP)?;
            let mut steps = 1;
            while cur.z_value(k.q0) > k.c_p {
                cur = cur.step(map, DEFAULT_PAIR_CAP)?;
                steps += 1;
                if steps > 1 + k.n_p {
                    break;
                }
            }
            Ok((cur, steps))
        }
    }
}

/// Runs `rounds` rounds of iterate / cut / split on `family`. A family with
/// `Z > C_p` is rejected unless `preiterate` is set, in which case it is
/// first pushed forward `n_p(G)` steps.
pub fn run_coupling(
    map: &MapModel,
    family: &StandardFamily,
    k: &CouplingConstants,
    rounds: usize,
    preiterate: bool,
) -> Result<CouplingLedger> {
    let z = family.z_value(k.q0);
    if !z.is_finite() {
        return Err(Error::InfiniteZ);
    }
    let mut time = 0;
    let mut fam = family.clone();
    if z > k.c_p {
        let required = properness_steps(z, k.theta0);
        if !preiterate {
            return Err(Error::NotProper {
                z,
                c_p: k.c_p,
                required,
            });
        }
        fam = fam.iterate(map, required)?;
        time += required;
    }
    let warmup = time;
    let u = k.magnet;
    let mut scale = 1.0;
    let mut cumulative = 0.0;
    let mut ledger_rounds = Vec::with_capacity(rounds);
    let mut chunks = Vec::with_capacity(rounds);
    let mut tail_bound_series = Vec::with_capacity(rounds);
    let mut theta_hat: f64 = 1.0;
    for round in 1..=rounds {
        let g1 = fam.iterate(map, k.n_c)?;
        time += k.n_c;
        let delta_observed = g1.covering_ratio(&u);
        let cut = g1.cut(&[u.left, u.right]).merged();
        let delta_bar: f64 = cut
            .entries
            .iter()
            .filter(|(p, _)| p.support.approx_eq(&u))
            .map(|(_, w)| w)
            .sum();
        if !(delta_bar > 0.0) {
            return Err(Error::CoveringRatioZero { round });
        }
        let positivity = cut
            .entries
            .iter()
            .filter(|(p, _)| p.support.approx_eq(&u))
            .map(|(p, _)| p.normalized_range().0)
            .fold(f64::INFINITY, f64::min);
        let rho_bar = match k.mode {
            CouplingMode::Proof => (k.theta_c / delta_observed).min(k.rho_bar_c),
            CouplingMode::Empirical => k.rho_bar_c,
        }
        .min(positivity * (1.0 - 1e-9));
        let split = cut.split_over_magnet(&u, rho_bar)?;
        let before = cut.measure_density();
        let after = split.split_part.measure_density();
        let chunk_density = PiecewiseDensity::combine(&[(1.0, &before), (-(1.0 - split.lebesgue_weight), &after)]);
        let chunk_nonuniformity = nonuniformity(&chunk_density, &u);
        let coupled = scale * split.lebesgue_weight;
        chunks.push((time, chunk_density.scale(scale)));
        cumulative += coupled;
        scale *= 1.0 - split.lebesgue_weight;
        theta_hat = theta_hat.min(split.lebesgue_weight);
        let (restored, steps) = restore(map, split.split_part, k)?;
        fam = restored;
        let residual = scale * fam.total_weight();
        let dropped = scale * fam.dropped_mass;
        ledger_rounds.push(CouplingRound {
            round,
            time,
            coupled_mass: coupled,
            cumulative,
            residual,
            residual_z: fam.z_value(k.q0),
            delta_observed,
            rho_bar,
            extraction_ratio: split.lebesgue_weight,
            accounting_defect: (1.0 - cumulative - residual - dropped).abs(),
            dropped,
            chunk_nonuniformity,
        });
        tail_bound_series.push((1.0 - k.theta_c).powf(time as f64 / k.big_n_c as f64));
        time += steps;
    }
    Ok(CouplingLedger {
        constants: k.clone(),
        warmup,
        rounds: ledger_rounds,
        tail_bound_series,
        theta_hat,
        chunks,
        residual_family: fam,
        final_time: time,
    })
}

/// Max relative deviation from the mean on `u`, plus any mass outside `u`.
fn nonuniformity(d: &PiecewiseDensity, u: &Interval) -> f64 {
    let mean = d.mass_on(u) / u.len();
    if mean == 0.0 {
        return 0.0;
    }
    let inside = d
        .pieces()
        // slivers left by breakpoint drift carry no mass
        .filter(|(p, _)| p.overlap(u) > 1e-9 * u.len())
        .map(|(_, v)| (v - mean).abs() / mean)
        .fold(0.0, f64::max);
    let outside = (d.mass() - d.mass_on(u)).abs() / d.mass_on(u);
    inside.max(outside)
}

#[derive(Clone, Debug, Serialize)]
pub struct TvSeries {
    pub tv: Vec<f64>,
    pub fit: Option<GeometricFit>,
}

fn series_fit(tv: &[f64]) -> Option<GeometricFit> {
    let pts: Vec<(usize, f64)> = tv.iter().copied().enumerate().skip(1).collect();
    geometric_fit(&pts, 1e-14)
}

/// `‖T^n_*ν₁ − T^n_*ν₂‖_TV` for `n = 0..=n_max`.
pub fn equidistribution_test(
    map: &MapModel,
    fam1: &StandardFamily,
    fam2: &StandardFamily,
    n_max: usize,
) -> Result<TvSeries> {
    let opts = PushOptions::default();
    let mut a = fam1.measure_density();
    let mut b = fam2.measure_density();
    let mut tv = vec![a.tv_distance(&b)];
    for _ in 0..n_max {
        a = pushforward(map, &a, 1, &opts)?.0;
        b = pushforward(map, &b, 1, &opts)?.0;
        tv.push(a.tv_distance(&b));
    }
    let fit = series_fit(&tv);
    Ok(TvSeries { tv, fit })
}

/// `‖T^n_*ν_G − μ‖_TV` for `n = 0..=n_max` against a reference density.
pub fn acip_convergence(
    map: &MapModel,
    family: &StandardFamily,
    n_max: usize,
    reference: &PiecewiseDensity,
) -> Result<TvSeries> {
    let opts = PushOptions::default();
    let mut a = family.measure_density();
    let mut tv = vec![a.tv_distance(reference)];
    for _ in 0..n_max {
        a = pushforward(map, &a, 1, &opts)?.0;
        tv.push(a.tv_distance(reference));
    }
    let fit = series_fit(&tv);
    Ok(TvSeries { tv, fit })
}

#[derive(Clone, Debug, Serialize)]
pub struct BatteryEntry {
    pub support: Interval,
    pub z: f64,
    pub fit: Option<GeometricFit>,
}

/// Convergence fits for Lebesgue pairs on each support, for comparing the
/// fitted prefactor with `Z(G)`.
pub fn acip_battery(
    map: &MapModel,
    supports: &[Interval],
    q0: f64,
    n_max: usize,
    reference: &PiecewiseDensity,
) -> Result<Vec<BatteryEntry>> {
    supports
        .iter()
        .map(|&s| {
            let fam = StandardFamily::single(StandardPair::lebesgue(s));
            let series = acip_convergence(map, &fam, n_max, reference)?;
            Ok(BatteryEntry {
                support: s,
                z: fam.z_value(q0),
                fit: series.fit,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::SlopeRule;

    #[test]
    fn doubling_proof_constants() {
        let m = MapModel::doubling().with_iterate(2).unwrap();
        let k = CouplingConstants::base(0.5, 0.25, 0.5f64.sqrt(), 0.0, 0.5, Interval::new(0.25, 0.5));
        assert_eq!(k.c_r, 1.0);
        assert!((k.c0 - 9.656_854).abs() < 1e-5);
        assert!((k.c_p / 1.059_002_7e5 - 1.0).abs() < 1e-6);
        assert_eq!(k.n_p, 34);
        let err = derive_constants(&m, 0.5, 0.25, Interval::new(0.25, 0.5), CouplingMode::Proof)
            .unwrap_err();
        assert!(matches!(err, Error::ProofConstantsInfeasible(_)));
    }

    #[test]
    fn rychlik_constants_fail_h1() {
        let m = MapModel::geometric_tail(0.5, SlopeRule::Constant(2.0), 200).unwrap();
        let err = derive_constants(&m, 0.5, 0.1, Interval::new(0.5, 1.0), CouplingMode::Empirical)
            .unwrap_err();
        assert!(matches!(err, Error::H1Failure(t) if t >= 1.0));
    }

    #[test]
    fn doubling_coupling_accounts_for_all_mass() {
        let m = MapModel::doubling().with_iterate(2).unwrap();
        let u = Interval::new(0.25, 0.5);
        let k = derive_constants(&m, 0.5, 0.25, u, CouplingMode::Empirical).unwrap();
        let fam = StandardFamily::lebesgue(Interval::UNIT);
        let ledger = run_coupling(&m, &fam, &k, 3, false).unwrap();
        for r in &ledger.rounds {
            assert!(r.accounting_defect < 1e-12);
            assert!(r.chunk_nonuniformity < 1e-10);
        }
        assert!(ledger.decomposition_defect(&m, &fam).unwrap() < 1e-10);
    }

    #[test]
    fn improper_family_rejected() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let k = CouplingConstants::base(0.3, 0.1, 0.96, 0.0, 0.5, Interval::new(0.16, 0.4));
        let tiny = StandardFamily::lebesgue(Interval::new(1e-21, 2e-21));
        let err = run_coupling(&m, &tiny, &k, 1, false).unwrap_err();
        let z = tiny.z_value(0.3);
        match err {
            Error::NotProper { required, .. } => {
                assert_eq!(required, properness_steps(z, 0.96))
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn identical_families_have_zero_tv() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let f = StandardFamily::lebesgue(Interval::UNIT);
        let s = equidistribution_test(&m, &f, &f, 5).unwrap();
        assert!(s.tv.iter().all(|&t| t == 0.0));
        let d = MapModel::doubling();
        let g = StandardFamily::lebesgue(Interval::new(0.0, 0.5));
        let s = equidistribution_test(&d, &f, &g, 5).unwrap();
        assert!(s.tv[0] > 0.0 && s.tv[1..].iter().all(|&t| t < 1e-15));
    }
}

//! Standard pairs and standard families: iteration, cutting, merging,
//! splitting over a magnet, the Z-function and growth diagnostics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingConstants;
use crate::error::{Error, Result};
use crate::interval::{close, Interval};
use crate::maps::{BranchAction, MapModel};
use crate::measure::PiecewiseDensity;

pub const DEFAULT_PAIR_CAP: usize = 100_000;
pub const WEIGHT_FLOOR: f64 = 1e-12;
pub const DEFAULT_GAMMA: f64 = 0.5;

/// An interval with a probability density supported on it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StandardPair {
    pub support: Interval,
    /// Density of mass 1, zero outside `support`.
    pub density: PiecewiseDensity,
}

impl StandardPair {
    /// Restricts `density` to `support` and normalises it.
    pub fn new(support: Interval, density: &PiecewiseDensity) -> Result<Self> {
        let restricted = density.restrict(&support);
        let mass = restricted.mass();
        if !(mass > 0.0) {
            return Err(Error::ZeroDensity(support));
        }
        Ok(StandardPair {
            support,
            density: restricted.scale(1.0 / mass),
        })
    }

    /// `(W, m_W)`.
    pub fn lebesgue(support: Interval) -> Self {
        StandardPair {
            support,
            density: PiecewiseDensity::uniform(support),
        }
    }

    pub fn is_lebesgue(&self) -> bool {
        let (lo, hi) = self.density.value_range();
        close(lo, hi) && close(lo * self.support.len(), 1.0)
    }

    /// Minimum and maximum of `ρ·|W|`.
    pub fn normalized_range(&self) -> (f64, f64) {
        let (lo, hi) = self.density.value_range();
        (lo * self.support.len(), hi * self.support.len())
    }

    /// Lower estimate of `|log ρ|_{W,γ}`: oscillation of `log ρ` across the
    /// children of each cell of `W/ξ_d`, divided by `γ^{d+1}`, for `d < depth`.
    /// Only cells with a density breakpoint in their interior are refined.
    pub fn regularity_seminorm(&self, map: &MapModel, gamma: f64, depth: usize) -> Result<f64> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} not in (0,1)")));
        }
        let (lo, _) = self.density.value_range();
        if !(lo > 0.0) || !self.density.support().contains(&self.support) {
            return Err(Error::ZeroDensity(self.support));
        }
        let mut best: f64 = 0.0;
        let identity = BranchAction::affine(1.0, 0.0);
        regularity_descend(
            map,
            &self.density,
            self.support,
            self.support,
            &identity,
            0,
            depth,
            gamma,
            &mut best,
        );
        Ok(best)
    }
}

fn log_range(density: &PiecewiseDensity, cell: &Interval) -> (f64, f64) {
    density
        .pieces()
        .filter(|(p, _)| p.intersect(cell).is_some())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| {
            (lo.min(v.ln()), hi.max(v.ln()))
        })
}

fn has_interior_breakpoint(density: &PiecewiseDensity, cell: &Interval) -> bool {
    density
        .breakpoints()
        .iter()
        .any(|&b| b > cell.left && b < cell.right && !close(b, cell.left) && !close(b, cell.right))
}

#[allow(clippy::too_many_arguments)]
fn regularity_descend(
    map: &MapModel,
    density: &PiecewiseDensity,
    cell: Interval,
    image: Interval,
    action: &BranchAction,
    d: usize,
    depth: usize,
    gamma: f64,
    best: &mut f64,
) {
    if d >= depth {
        return;
    }
    let mut children = Vec::new();
    for i in map.branches_meeting(&image) {
        let b = &map.branches()[i];
        if let Some(sub) = b.domain.intersect(&image) {
            children.push((action.preimage(sub, cell), b.action.image(sub), action.then(&b.action)));
        }
    }
    let ranges: Vec<(f64, f64)> = children.iter().map(|c| log_range(density, &c.0)).collect();
    for (i, a) in ranges.iter().enumerate() {
        for (j, c) in ranges.iter().enumerate() {
            if i != j {
                let diff = (a.1 - c.0).abs().max((c.1 - a.0).abs());
                *best = best.max(diff / gamma.powi(d as i32 + 1));
            }
        }
    }
    for (child, child_image, child_action) in &children {
        if has_interior_breakpoint(density, child) {
            regularity_descend(map, density, *child, *child_image, child_action, d + 1, depth, gamma, best);
        }
    }
}

/// Weighted pairs with identical supports combined into one pair.
pub fn merge_pairs(pairs: &[(StandardPair, f64)]) -> Result<(StandardPair, f64)> {
    let (first, _) = pairs
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to merge".into()))?;
    let support = first.support;
    if let Some((p, _)) = pairs.iter().find(|(p, _)| !p.support.approx_eq(&support)) {
        return Err(Error::SupportMismatch {
            expected: support,
            found: p.support,
        });
    }
    if pairs.len() == 1 {
        return Ok(pairs[0].clone());
    }
    let total: f64 = pairs.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Ok((first.clone(), 0.0));
    }
    let terms: Vec<(f64, &PiecewiseDensity)> =
        pairs.iter().map(|(p, w)| (w / total, &p.density)).collect();
    let density = PiecewiseDensity::combine(&terms);
    Ok((StandardPair { support, density }, total))
}

/// Result of splitting a family over a magnet.
#[derive(Clone, Debug, Serialize)]
pub struct MagnetSplit {
    /// `ρ̄·δ̄`, the mass moved into the Lebesgue part.
    pub lebesgue_weight: f64,
    /// `(U, m_U)` with weight 1, or empty when no pair sits on `U`.
    pub lebesgue_part: StandardFamily,
    pub split_part: StandardFamily,
}

/// Convex combination of standard pairs, truncated to finitely many entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StandardFamily {
    pub entries: Vec<(StandardPair, f64)>,
    /// Mass removed by truncation or by the weight floor.
    pub dropped_mass: f64,
}

impl StandardFamily {
    pub fn new(entries: Vec<(StandardPair, f64)>) -> Self {
        StandardFamily {
            entries,
            dropped_mass: 0.0,
        }
    }

    pub fn single(pair: StandardPair) -> Self {
        Self::new(vec![(pair, 1.0)])
    }

    pub fn lebesgue(support: Interval) -> Self {
        Self::single(StandardPair::lebesgue(support))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// `Z(G) = Σ λ_α |W_α|^{−q₀}`; infinite when positive weight sits on a
    /// degenerate interval.
    pub fn z_value(&self, q0: f64) -> f64 {
        self.entries
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| {
                let len = p.support.len();
                if len > 0.0 {
                    w * len.powf(-q0)
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    }

    /// `δ(G)`: total weight of pairs whose support contains `magnet`.
    pub fn covering_ratio(&self, magnet: &Interval) -> f64 {
        self.entries
            .iter()
            .filter(|(p, _)| p.support.contains(magnet))
            .map(|(_, w)| w)
            .sum()
    }

    /// Density of `ν_G = Σ λ_α ν_α`.
    pub fn measure_density(&self) -> PiecewiseDensity {
        let terms: Vec<(f64, &PiecewiseDensity)> =
            self.entries.iter().map(|(p, w)| (*w, &p.density)).collect();
        PiecewiseDensity::combine(&terms)
    }

    pub fn scaled(&self, k: f64) -> Self {
        StandardFamily {
            entries: self.entries.iter().map(|(p, w)| (p.clone(), w * k)).collect(),
            dropped_mass: self.dropped_mass * k,
        }
    }

    /// Pairs with identical supports merged into one.
    pub fn merged(&self) -> Self {
        let mut entries: Vec<(StandardPair, f64)> = self.entries.clone();
        entries.sort_by(|a, b| {
            a.0.support
                .left
                .total_cmp(&b.0.support.left)
                .then(a.0.support.right.total_cmp(&b.0.support.right))
        });
        let mut out: Vec<(StandardPair, f64)> = Vec::with_capacity(entries.len());
        let mut group: Vec<(StandardPair, f64)> = Vec::new();
        for e in entries {
            if let Some(g) = group.first() {
                if !g.0.support.approx_eq(&e.0.support) {
                    out.push(merge_pairs(&group).expect("same support"));
                    group.clear();
                }
            }
            group.push(e);
        }
        if !group.is_empty() {
            out.push(merge_pairs(&group).expect("same support"));
        }
        StandardFamily {
            entries: out,
            dropped_mass: self.dropped_mass,
        }
    }

    /// Pairs with identical support to `support` merged; others untouched.
    pub fn merge_support(&self, support: &Interval) -> Result<Self> {
        let (same, rest): (Vec<_>, Vec<_>) = self
            .entries
            .iter()
            .cloned()
            .partition(|(p, _)| p.support.approx_eq(support));
        if same.is_empty() {
            return Err(Error::SupportMismatch {
                expected: *support,
                found: self.entries.first().map_or(*support, |e| e.0.support),
            });
        }
        let mut entries = rest;
        entries.push(merge_pairs(&same)?);
        Ok(StandardFamily {
            entries,
            dropped_mass: self.dropped_mass,
        })
    }

    /// One step of `T`: every pair is cut along `ξ_1` and each piece pushed
    /// forward exactly. Pairs with identical supports are merged; past
    /// `pair_cap` the smallest weights below [`WEIGHT_FLOOR`] are dropped.
    pub fn step(&self, map: &MapModel, pair_cap: usize) -> Result<Self> {
        if !map.is_affine() {
            return Err(Error::RequiresAffine);
        }
        let edge = map.tail_edge();
        let mut dropped = self.dropped_mass;
        let mut entries = Vec::new();
        for (pair, w) in &self.entries {
            if *w == 0.0 {
                continue;
            }
            if pair.support.left < edge {
                dropped += w * pair.density.mass_on(&Interval::new(0.0, edge));
            }
            for i in map.branches_meeting(&pair.support) {
                let b = &map.branches()[i];
                let Some(sub) = b.domain.intersect(&pair.support) else {
                    continue;
                };
                let piece = pair.density.restrict(&sub);
                let mass = piece.mass();
                if !(mass > 0.0) {
                    continue;
                }
                let (s, c) = b.action.as_affine().expect("affine map");
                let density = piece.transported(s, c).scale(1.0 / mass);
                entries.push((
                    StandardPair {
                        support: b.action.image(sub),
                        density,
                    },
                    w * mass,
                ));
            }
        }
        let mut fam = StandardFamily {
            entries,
            dropped_mass: dropped,
        }
        .merged();
        if fam.entries.len() > pair_cap {
            fam.apply_weight_floor();
        }
        Ok(fam)
    }

    fn apply_weight_floor(&mut self) {
        let mut dropped = 0.0;
        self.entries.retain(|(_, w)| {
            let keep = *w >= WEIGHT_FLOOR;
            if !keep {
                dropped += w;
            }
            keep
        });
        self.dropped_mass += dropped;
    }

    /// `T^n G`.
    pub fn iterate(&self, map: &MapModel, n: usize) -> Result<Self> {
        let mut cur = self.clone();
        for _ in 0..n {
            cur = cur.step(map, DEFAULT_PAIR_CAP)?;
        }
        Ok(cur)
    }

    /// Cut every pair at the given points; sub-pairs are reweighted by their
    /// mass and renormalised. Points at or outside a support are ignored.
    pub fn cut(&self, points: &[f64]) -> Self {
        let mut entries = Vec::new();
        for (pair, w) in &self.entries {
            let s = pair.support;
            let mut cuts: Vec<f64> = points
                .iter()
                .copied()
                .filter(|&p| p > s.left && p < s.right && !close(p, s.left) && !close(p, s.right))
                .collect();
            if cuts.is_empty() {
                entries.push((pair.clone(), *w));
                continue;
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| close(*a, *b));
            let mut edges = vec![s.left];
            edges.extend(cuts);
            edges.push(s.right);
            for e in edges.windows(2) {
                let sub = Interval::new(e[0], e[1]);
                let piece = pair.density.restrict(&sub);
                let mass = piece.mass();
                if mass > 0.0 {
                    entries.push((
                        StandardPair {
                            support: sub,
                            density: piece.scale(1.0 / mass),
                        },
                        w * mass,
                    ));
                }
            }
        }
        StandardFamily {
            entries,
            dropped_mass: self.dropped_mass,
        }
    }

    /// Split over the magnet `U` with Lebesgue ratio `rho_bar`:
    /// `ν_G = ρ̄δ̄·m_U + (1 − ρ̄δ̄)·ν_Ĝ`, where `δ̄` is the weight of pairs
    /// supported exactly on `U`.
    pub fn split_over_magnet(&self, magnet: &Interval, rho_bar: f64) -> Result<MagnetSplit> {
        if !(rho_bar > 0.0 && rho_bar < 1.0) {
            return Err(Error::InvalidParameter(format!("rho_bar = {rho_bar} not in (0,1)")));
        }
        let delta_bar: f64 = self
            .entries
            .iter()
            .filter(|(p, _)| p.support.approx_eq(magnet))
            .map(|(_, w)| w)
            .sum();
        if delta_bar == 0.0 {
            return Ok(MagnetSplit {
                lebesgue_weight: 0.0,
                lebesgue_part: StandardFamily::default(),
                split_part: self.clone(),
            });
        }
        let lw = rho_bar * delta_bar;
        let norm = 1.0 - lw;
        let floor = rho_bar / magnet.len();
        let mut entries = Vec::with_capacity(self.entries.len());
        for (pair, w) in &self.entries {
            if pair.support.approx_eq(magnet) {
                let (lo, _) = pair.density.value_range();
                if lo < floor * (1.0 - 1e-12) {
                    return Err(Error::InvalidParameter(format!(
                        "rho_bar = {rho_bar} exceeds min ρ·|U| = {}",
                        lo * magnet.len()
                    )));
                }
                let uniform = PiecewiseDensity::constant(pair.support, floor);
                let density = PiecewiseDensity::combine(&[(1.0, &pair.density), (-1.0, &uniform)])
                    .scale(1.0 / (1.0 - rho_bar));
                entries.push((
                    StandardPair {
                        support: pair.support,
                        density,
                    },
                    (1.0 - rho_bar) * w / norm,
                ));
            } else {
                entries.push((pair.clone(), w / norm));
            }
        }
        Ok(MagnetSplit {
            lebesgue_weight: lw,
            lebesgue_part: StandardFamily::lebesgue(*magnet),
            split_part: StandardFamily {
                entries,
                dropped_mass: self.dropped_mass / norm,
            },
        })
    }

    /// Largest regularity estimate over the pairs.
    pub fn max_regularity(&self, map: &MapModel, gamma: f64, depth: usize) -> Result<f64> {
        self.entries
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, _)| p.regularity_seminorm(map, gamma, depth))
            .try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Vec<FamilyEntryDoc> = serde_json::from_str(text)?;
        let entries = doc
            .into_iter()
            .map(|e| {
                let pair = match e.density {
                    DensityDoc::Named(n) if n == "uniform" => StandardPair::lebesgue(e.support),
                    DensityDoc::Named(n) => {
                        return Err(Error::Parse(format!("unknown density `{n}`")))
                    }
                    DensityDoc::Pieces(rows) => {
                        let contribs = rows
                            .into_iter()
                            .map(|[l, r, v]| (Interval::new(l, r), v))
                            .collect();
                        StandardPair::new(e.support, &PiecewiseDensity::from_contributions(contribs))?
                    }
                };
                Ok((pair, e.weight))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc: Vec<FamilyEntryDoc> = self
            .entries
            .iter()
            .map(|(p, w)| FamilyEntryDoc {
                support: p.support,
                density: DensityDoc::Pieces(
                    p.density.rows().into_iter().map(|(l, r, v)| [l, r, v]).collect(),
                ),
                weight: *w,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

#[derive(Serialize, Deserialize)]
struct FamilyEntryDoc {
    support: Interval,
    #[serde(default = "uniform_doc")]
    density: DensityDoc,
    weight: f64,
}

fn uniform_doc() -> DensityDoc {
    DensityDoc::Named("uniform".into())
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DensityDoc {
    Named(String),
    Pieces(Vec<[f64; 3]>),
}

/// Seeded random family: `pairs` supports with log-uniform lengths in
/// `[min_len, 1]`, piecewise-constant densities on 1–4 pieces whose values
/// differ by at most the factor `e^{log_oscillation}`, and random weights.
pub fn random_family<R: rand::Rng>(
    rng: &mut R,
    pairs: usize,
    min_len: f64,
    log_oscillation: f64,
) -> Result<StandardFamily> {
    if pairs == 0 || !(min_len > 0.0 && min_len <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "random family needs pairs > 0 and min_len in (0,1], got {pairs}, {min_len}"
        )));
    }
    let mut entries = Vec::with_capacity(pairs);
    let mut weights = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let len = (min_len.ln() * rng.gen::<f64>()).exp();
        let left = (1.0 - len) * rng.gen::<f64>();
        let support = Interval::new(left, left + len);
        let pieces = rng.gen_range(1..=4usize);
        let mut cuts: Vec<f64> = (1..pieces).map(|_| rng.gen::<f64>()).collect();
        cuts.sort_by(f64::total_cmp);
        let mut pts = vec![support.left];
        pts.extend(cuts.iter().map(|c| support.left + c * len));
        pts.push(support.right);
        let contribs = pts
            .windows(2)
            .map(|w| {
                (
                    Interval::new(w[0], w[1]),
                    (log_oscillation * rng.gen::<f64>()).exp(),
                )
            })
            .collect();
        let density = PiecewiseDensity::from_contributions(contribs);
        entries.push(StandardPair::new(support, &density)?);
        weights.push(rng.gen::<f64>() + 0.01);
    }
    let total: f64 = weights.iter().sum();
    Ok(StandardFamily::new(
        entries
            .into_iter()
            .zip(weights)
            .map(|(p, w)| (p, w / total))
            .collect(),
    ))
}

/// Steps needed for `Z(T^n G) ≤ C_p`: `⌊−ln Z / ln θ₀⌋ + 1`.
pub fn properness_steps(z: f64, theta0: f64) -> usize {
    ((-z.ln() / theta0.ln()).floor() + 1.0).max(0.0) as usize
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthStep {
    pub n: usize,
    pub z: f64,
    /// `e^{2C_r}(Z(G)θ₀^n + c₀)`.
    pub bound: f64,
    pub slack: f64,
    /// `θ₀^n Z(G) + 2δ₀^{−q₀}(θ₀ + … + θ₀^n)`, for Lebesgue pairs.
    pub lebesgue_bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub steps: Vec<GrowthStep>,
    /// First `n` with `Z(T^n G) ≤ C_p`.
    pub proper_at: Option<usize>,
    pub violations: usize,
}

/// Tracks `Z(T^n G)` against the growth bounds for `n = 0..=n_max`.
pub fn growth_report(
    family: &StandardFamily,
    map: &MapModel,
    n_max: usize,
    k: &CouplingConstants,
) -> Result<GrowthReport> {
    let z0 = family.z_value(k.q0);
    if !z0.is_finite() {
        return Err(Error::InfiniteZ);
    }
    let lebesgue = family.entries.len() == 1 && family.entries[0].0.is_lebesgue();
    let mut steps = Vec::with_capacity(n_max + 1);
    let mut cur = family.clone();
    let mut proper_at = None;
    let mut violations = 0;
    let mut geometric = 0.0;
    for n in 0..=n_max {
        if n > 0 {
            cur = cur.step(map, DEFAULT_PAIR_CAP)?;
            geometric += k.theta0.powi(n as i32);
        }
        let z = cur.z_value(k.q0);
        let tn = k.theta0.powi(n as i32);
        let bound = (2.0 * k.c_r).exp() * (z0 * tn + k.c0);
        let slack = bound - z;
        if slack < 0.0 {
            violations += 1;
        }
        if proper_at.is_none() && z <= k.c_p {
            proper_at = Some(n);
        }
        steps.push(GrowthStep {
            n,
            z,
            bound,
            slack,
            lebesgue_bound: lebesgue
                .then(|| tn * z0 + 2.0 * k.delta0.powf(-k.q0) * geometric),
        });
    }
    Ok(GrowthReport {
        steps,
        proper_at,
        violations,
    })
}

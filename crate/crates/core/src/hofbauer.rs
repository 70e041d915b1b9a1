//! Hofbauer tower: the Markov extension whose nodes are the distinct
//! components of the images `T^n M`, and the lift of `T^n_* m` to it.
//!
//! Nodes are identified up to the relative endpoint tolerance; interval
//! closures are ignored (endpoints are a null set).

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::StandardPair;
use crate::interval::{tol, Interval};
use crate::maps::MapModel;
use crate::measure::{pushforward, PiecewiseDensity, PushOptions, DEFAULT_BREAKPOINT_CAP};

pub const DEFAULT_NODE_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TowerNode {
    pub interval: Interval,
    pub level: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TowerEdge {
    pub from: usize,
    /// Branch index k (1-based).
    pub branch: usize,
    pub to: usize,
    /// `D ∩ W_k`.
    #[serde(skip)]
    pub source: Interval,
    #[serde(skip)]
    position: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tower {
    pub nodes: Vec<TowerNode>,
    pub edges: Vec<TowerEdge>,
    /// Depth the closure was asked for.
    pub depth: usize,
    /// True when the node cap stopped the closure.
    pub partial: bool,
    /// True when every node has been expanded.
    pub closed: bool,
    #[serde(skip)]
    out: Vec<Option<Range<usize>>>,
}

/// Index of nodes by right endpoint for tolerant lookup.
#[derive(Default)]
struct NodeIndex(BTreeMap<u64, Vec<usize>>);

impl NodeIndex {
    fn find(&self, nodes: &[TowerNode], d: &Interval) -> Option<usize> {
        let t = tol(d.right, d.right);
        let lo = (d.right - t).max(0.0).to_bits();
        let hi = (d.right + t).to_bits();
        self.0
            .range(lo..=hi)
            .flat_map(|(_, ids)| ids)
            .copied()
            .find(|&id| nodes[id].interval.approx_eq(d))
    }

    fn insert(&mut self, d: &Interval, id: usize) {
        self.0.entry(d.right.max(0.0).to_bits()).or_default().push(id);
    }
}

impl Tower {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_level(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// Nodes at the given level.
    pub fn level(&self, level: usize) -> Vec<&TowerNode> {
        self.nodes.iter().filter(|n| n.level == level).collect()
    }

    pub fn find(&self, d: &Interval) -> Option<usize> {
        self.nodes.iter().position(|n| n.interval.approx_eq(d))
    }

    /// Outgoing edges, or `None` when the node was never expanded.
    pub fn outgoing(&self, node: usize) -> Option<&[TowerEdge]> {
        self.out[node].clone().map(|r| &self.edges[r])
    }

    /// Checks that every edge lands on a full node: `T(D ∩ W_k)` equals the
    /// target interval.
    pub fn check_markov(&self, map: &MapModel) -> Result<()> {
        for e in &self.edges {
            let image = map.branches()[e.position].action.image(e.source);
            let target = self.nodes[e.to].interval;
            if !image.approx_eq(&target) {
                return Err(Error::SupportMismatch {
                    expected: target,
                    found: image,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Breadth-first closure of `{M}` under `D ↦ T(D ∩ W_k)`. Nodes first seen
/// at step `n` get level `n`; nodes at level `depth` are not expanded. When
/// more than `node_cap` nodes would be created the tower is returned with
/// `partial` set.
pub fn build_tower(map: &MapModel, depth: usize, node_cap: usize) -> Result<Tower> {
    if node_cap == 0 {
        return Err(Error::InvalidParameter("node cap must be positive".into()));
    }
    let mut nodes = vec![TowerNode {
        interval: Interval::UNIT,
        level: 0,
    }];
    let mut index = NodeIndex::default();
    index.insert(&Interval::UNIT, 0);
    let mut edges = Vec::new();
    let mut out: Vec<Option<Range<usize>>> = vec![None];
    let mut queue = VecDeque::from([0usize]);
    let mut partial = false;
    'bfs: while let Some(id) = queue.pop_front() {
        let node = nodes[id];
        if node.level >= depth {
            continue;
        }
        let start = edges.len();
        let mut pending = Vec::new();
        for i in map.branches_meeting(&node.interval) {
            let b = &map.branches()[i];
            let Some(source) = b.domain.intersect(&node.interval) else {
                continue;
            };
            let image = b.action.image(source);
            let to = match index.find(&nodes, &image) {
                Some(to) => to,
                None => {
                    if nodes.len() >= node_cap {
                        partial = true;
                        edges.truncate(start);
                        break 'bfs;
                    }
                    let to = nodes.len();
                    nodes.push(TowerNode {
                        interval: image,
                        level: node.level + 1,
                    });
                    index.insert(&image, to);
                    out.push(None);
                    pending.push(to);
                    to
                }
            };
            edges.push(TowerEdge {
                from: id,
                branch: b.index,
                to,
                source,
                position: i,
            });
        }
        out[id] = Some(start..edges.len());
        queue.extend(pending);
    }
    let closed = out.iter().all(Option::is_some);
    Ok(Tower {
        nodes,
        edges,
        depth,
        partial,
        closed,
        out,
    })
}

/// Level masses of the lifted measure `m̄_n` and of its Cesàro mean
/// `m̂_n = (1/n) Σ_{k<n} m̄_k`.
#[derive(Clone, Debug, Serialize)]
pub struct LiftProfile {
    pub n: usize,
    /// `m̄_n(level = ℓ)` for `ℓ = 0..=max_level`.
    pub levels: Vec<f64>,
    /// `m̂_n(level = ℓ)`; empty for `n = 0`.
    pub cesaro: Vec<f64>,
    pub node_mass: Vec<f64>,
    /// Mass lost to the truncated tail of the branch partition.
    pub tail_loss: f64,
    /// Mass that reached unexpanded nodes and could not be moved further.
    pub unresolved: f64,
    pub coarsened: bool,
    #[serde(skip)]
    pub densities: Vec<PiecewiseDensity>,
}

impl LiftProfile {
    /// Mass of `m̄_n` strictly above `level`.
    pub fn mass_above(&self, level: usize) -> f64 {
        self.levels.iter().skip(level + 1).sum()
    }

    /// `π_* m̄_n`.
    pub fn projection(&self) -> PiecewiseDensity {
        let terms: Vec<(f64, &PiecewiseDensity)> = self
            .densities
            .iter()
            .filter(|d| !d.is_empty())
            .map(|d| (1.0, d))
            .collect();
        PiecewiseDensity::combine(&terms)
    }

    /// Per-node normalised densities with their masses.
    pub fn pairs(&self, tower: &Tower) -> Vec<(usize, StandardPair, f64)> {
        self.densities
            .iter()
            .enumerate()
            .filter(|(_, d)| d.mass() > 0.0)
            .filter_map(|(i, d)| {
                StandardPair::new(tower.nodes[i].interval, d)
                    .ok()
                    .map(|p| (i, p, d.mass()))
            })
            .collect()
    }
}

fn level_masses(tower: &Tower, node_mass: &[f64]) -> Vec<f64> {
    let mut levels = vec![0.0; tower.max_level() + 1];
    for (node, m) in tower.nodes.iter().zip(node_mass) {
        levels[node.level] += m;
    }
    levels
}

/// One step of `T̂` on per-node densities. Returns the new densities, the
/// tail loss and the mass stuck on unexpanded nodes.
fn lift_step(
    map: &MapModel,
    tower: &Tower,
    cur: &[PiecewiseDensity],
) -> (Vec<PiecewiseDensity>, f64, f64) {
    let edge = map.tail_edge();
    let per_node: Vec<(Vec<(usize, Interval, f64)>, f64, f64)> = cur
        .par_iter()
        .enumerate()
        .map(|(id, d)| {
            if d.is_empty() {
                return (Vec::new(), 0.0, 0.0);
            }
            let Some(out) = tower.outgoing(id) else {
                return (Vec::new(), 0.0, d.mass());
            };
            let lost = d.mass_on(&Interval::new(0.0, edge));
            let mut contribs = Vec::new();
            for e in out {
                let b = &map.branches()[e.position];
                let (s, _) = b.action.as_affine().expect("affine map");
                for (p, v) in d.restrict(&e.source).pieces() {
                    if *v == 0.0 {
                        continue;
                    }
                    let image = b.action.image(p);
                    contribs.push((e.to, image, v / s.abs()));
                }
            }
            (contribs, lost, 0.0)
        })
        .collect();
    let mut grouped: Vec<Vec<(Interval, f64)>> = vec![Vec::new(); cur.len()];
    let (mut lost, mut stuck) = (0.0, 0.0);
    for (contribs, l, s) in per_node {
        lost += l;
        stuck += s;
        for (to, i, v) in contribs {
            grouped[to].push((i, v));
        }
    }
    let next = grouped
        .into_par_iter()
        .map(|c| {
            if c.is_empty() {
                PiecewiseDensity::zero()
            } else {
                PiecewiseDensity::from_contributions(c)
            }
        })
        .collect();
    (next, lost, stuck)
}

/// Propagates Lebesgue measure on the base node `n` times along the tower
/// edges. Requires an affine map so that every node density stays piecewise
/// constant.
pub fn lift_mass_profile(map: &MapModel, tower: &Tower, n: usize) -> Result<LiftProfile> {
    if !map.is_affine() {
        return Err(Error::RequiresAffine);
    }
    let mut cur = vec![PiecewiseDensity::zero(); tower.len()];
    cur[0] = PiecewiseDensity::lebesgue();
    let mass_of = |d: &[PiecewiseDensity]| d.iter().map(|x| x.mass()).collect::<Vec<_>>();
    let mut cesaro_sum = vec![0.0; tower.max_level() + 1];
    let (mut tail_loss, mut unresolved, mut coarsened) = (0.0, 0.0, false);
    for _ in 0..n {
        for (acc, m) in cesaro_sum.iter_mut().zip(level_masses(tower, &mass_of(&cur))) {
            *acc += m;
        }
        let (next, lost, stuck) = lift_step(map, tower, &cur);
        tail_loss += lost;
        unresolved += stuck;
        cur = next;
        let pieces: usize = cur.iter().map(|d| d.len()).sum();
        if pieces > DEFAULT_BREAKPOINT_CAP {
            let bins = (DEFAULT_BREAKPOINT_CAP / (2 * tower.len())).max(16);
            cur = cur.par_iter().map(|d| d.coarsened(bins)).collect();
            coarsened = true;
        }
    }
    let node_mass = mass_of(&cur);
    let levels = level_masses(tower, &node_mass);
    let cesaro = if n == 0 {
        Vec::new()
    } else {
        cesaro_sum.iter().map(|s| s / n as f64).collect()
    };
    Ok(LiftProfile {
        n,
        levels,
        cesaro,
        node_mass,
        tail_loss,
        unresolved,
        coarsened,
        densities: cur,
    })
}

/// `‖π_* m̄_n − T^n_* m‖_TV`.
pub fn projection_defect(map: &MapModel, profile: &LiftProfile) -> Result<f64> {
    let (direct, _) = pushforward(
        map,
        &PiecewiseDensity::lebesgue(),
        profile.n,
        &PushOptions::default(),
    )?;
    Ok(profile.projection().tv_distance(&direct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::SlopeRule;

    #[test]
    fn doubling_is_one_node() {
        let m = MapModel::doubling();
        let t = build_tower(&m, 50, 100).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.closed && !t.partial);
        assert_eq!(t.edges.len(), 2);
        assert!(t.edges.iter().all(|e| e.from == 0 && e.to == 0));
        let p = lift_mass_profile(&m, &t, 7).unwrap();
        assert!((p.levels[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn vssv_nodes_are_powers() {
        let lambda = 0.4;
        let m = MapModel::vssv(lambda, 10).unwrap();
        let t = build_tower(&m, 20, 100).unwrap();
        assert!(t.closed);
        assert_eq!(t.len(), 9);
        assert_eq!(t.max_level(), 1);
        for j in 1..=8 {
            let d = Interval::new(0.0, lambda.powi(j));
            let id = t.find(&d).unwrap_or_else(|| panic!("missing (0, 0.4^{j}]"));
            assert_eq!(t.nodes[id].level, 1);
        }
        t.check_markov(&m).unwrap();
        // the top branch of (0, b_j] is W_{j+1}, sent onto (0, b_{j-1}]
        for j in 2..=8 {
            let from = t.find(&Interval::new(0.0, lambda.powi(j))).unwrap();
            let to = t.find(&Interval::new(0.0, lambda.powi(j - 1))).unwrap();
            assert!(t.edges.iter().any(|e| e.from == from && e.branch == j as usize + 1 && e.to == to));
        }
        let from = t.find(&Interval::new(0.0, lambda)).unwrap();
        assert!(t.edges.iter().any(|e| e.from == from && e.branch == 2 && e.to == 0));
    }

    #[test]
    fn vssv_one_step_levels() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let t = build_tower(&m, 10, 1000).unwrap();
        let p = lift_mass_profile(&m, &t, 1).unwrap();
        assert!((p.levels[0] - 0.84).abs() < 1e-12);
        assert!((p.levels[1] + p.tail_loss - 0.16).abs() < 1e-12);
        assert!(p.unresolved == 0.0);
    }

    #[test]
    fn projection_matches_pushforward() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let t = build_tower(&m, 10, 1000).unwrap();
        for n in [0, 1, 5, 20] {
            let p = lift_mass_profile(&m, &t, n).unwrap();
            assert!(projection_defect(&m, &p).unwrap() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn vssv_lifted_levels_settle() {
        let m = MapModel::vssv(0.4, 400).unwrap();
        let t = build_tower(&m, 500, 10_000).unwrap();
        let a = lift_mass_profile(&m, &t, 200).unwrap();
        let b = lift_mass_profile(&m, &t, 400).unwrap();
        for (x, y) in a.levels.iter().zip(&b.levels) {
            assert!((x - y).abs() < 1e-4);
        }
        // base mass of m̄_{n+1} is T^n_* m(W_1 ∪ W_2) → μ((λ², 1])
        let h = crate::measure::closed_form_vssv_density(0.4, 400).unwrap();
        let base = h.density.mass_on(&Interval::new(0.16, 1.0));
        assert!((b.levels[0] - base).abs() < 1e-8, "{} vs {base}", b.levels[0]);
        // Cesàro means carry the level-0 transient as a 1/n correction
        let ga = a.cesaro[0] - base;
        let gb = b.cesaro[0] - base;
        assert!((ga / gb - 2.0).abs() < 1e-3);
    }

    #[test]
    fn linear_tail_images_at_level_one() {
        let m = MapModel::geometric_tail(0.5, SlopeRule::Linear, 30).unwrap();
        let t = build_tower(&m, 3, 5000).unwrap();
        for k in 2..=20 {
            let d = Interval::new(0.0, k as f64 * 0.5f64.powi(k as i32));
            let id = t.find(&d).unwrap_or_else(|| panic!("missing image of W_{k}"));
            assert_eq!(t.nodes[id].level, 1);
        }
        t.check_markov(&m).unwrap();
    }

    #[test]
    fn node_cap_flags_partial() {
        let m = MapModel::geometric_tail(0.5, SlopeRule::Linear, 30).unwrap();
        let t = build_tower(&m, 10, 5).unwrap();
        assert!(t.partial && t.len() == 5);
        let p = lift_mass_profile(&m, &t, 3).unwrap();
        assert!(p.unresolved > 0.0);
    }

    #[test]
    fn json_has_nodes_and_edges() {
        let t = build_tower(&MapModel::doubling(), 3, 10).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(v["nodes"][0]["interval"], serde_json::json!([0.0, 1.0]));
        assert_eq!(v["edges"][1]["branch"], 2);
    }
}

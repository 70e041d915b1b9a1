use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::piecewise::PiecewiseDensity;
use crate::error::{Error, Result};
use crate::interval::{close, Interval};
use crate::maps::MapModel;

pub const ULAM_MAX_ITERATIONS: usize = 100_000;
pub const ULAM_RESIDUAL: f64 = 1e-12;

/// How the bins of an Ulam discretisation are laid out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UlamPartition {
    /// `B` equal bins.
    Uniform,
    /// `B` equal bins, further cut at every branch endpoint.
    #[default]
    BranchAligned,
}

/// Sparse row-stochastic Ulam matrix. Bins inside the truncated tail are
/// left out, so rows whose image reaches the tail are substochastic.
#[derive(Clone, Debug)]
pub struct UlamMatrix {
    bins: Vec<Interval>,
    rows: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Stationary {
    pub density: PiecewiseDensity,
    pub iterations: usize,
    pub residual: f64,
}

impl UlamMatrix {
    pub fn bins(&self) -> &[Interval] {
        &self.bins
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|(k, _)| *k == j)
            .map_or(0.0, |(_, p)| *p)
    }

    /// `π ↦ π P`.
    fn apply_left(&self, pi: &[f64], columns: &[Vec<(usize, f64)>]) -> Vec<f64> {
        columns
            .par_iter()
            .map(|col| col.iter().map(|&(i, p)| pi[i] * p).sum())
            .collect()
    }

    fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.bins.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                cols[j].push((i, p));
            }
        }
        cols
    }

    /// Left fixed vector by power iteration, renormalised each step,
    /// returned as a density of mass 1.
    pub fn stationary_density(&self) -> Result<Stationary> {
        let cols = self.columns();
        let mut pi: Vec<f64> = self.bins.iter().map(|b| b.len()).collect();
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        let mut residual = f64::INFINITY;
        for it in 1..=ULAM_MAX_ITERATIONS {
            let mut next = self.apply_left(&pi, &cols);
            let s: f64 = next.iter().sum();
            if !(s > 0.0) {
                return Err(Error::NonConvergence {
                    residual,
                    iterations: it,
                });
            }
            next.iter_mut().for_each(|p| *p /= s);
            residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if residual < ULAM_RESIDUAL {
                let contribs = self
                    .bins
                    .iter()
                    .zip(&pi)
                    .map(|(b, p)| (*b, p / b.len()))
                    .collect();
                return Ok(Stationary {
                    density: PiecewiseDensity::from_contributions(contribs),
                    iterations: it,
                    residual,
                });
            }
        }
        Err(Error::NonConvergence {
            residual,
            iterations: ULAM_MAX_ITERATIONS,
        })
    }
}

fn bin_edges(map: &MapModel, bins: usize, layout: UlamPartition) -> Vec<f64> {
    let edge = map.tail_edge();
    let mut pts: Vec<f64> = (0..=bins).map(|j| j as f64 / bins as f64).collect();
    if layout == UlamPartition::BranchAligned {
        pts.extend(map.branches().iter().map(|b| b.domain.left));
    }
    pts.push(edge);
    pts.retain(|&p| p >= edge);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| close(*a, *b));
    pts
}

/// Entry `(i, j) = m(bin_i ∩ T⁻¹ bin_j) / m(bin_i)`, computed exactly for
/// affine branches and through exact branch inverses otherwise.
pub fn ulam_matrix(map: &MapModel, bins: usize, layout: UlamPartition) -> Result<UlamMatrix> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    let edges = bin_edges(map, bins, layout);
    let cells: Vec<Interval> = edges.windows(2).map(|w| Interval::new(w[0], w[1])).collect();
    let rows = cells
        .par_iter()
        .map(|cell| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for i in map.branches_meeting(cell) {
                let b = &map.branches()[i];
                let Some(sub) = b.domain.intersect(cell) else {
                    continue;
                };
                let image = b.action.image(sub);
                let start = edges.partition_point(|&e| e <= image.left).saturating_sub(1);
                for j in start..cells.len() {
                    let target = cells[j];
                    if target.left >= image.right {
                        break;
                    }
                    if let Some(t) = target.intersect(&image) {
                        let pre = b.action.preimage(t, sub).len();
                        row.push((j, pre / cell.len()));
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            row.dedup_by(|a, b| {
                if a.0 == b.0 {
                    b.1 += a.1;
                    true
                } else {
                    false
                }
            });
            row
        })
        .collect();
    Ok(UlamMatrix { bins: cells, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_four_bins() {
        let m = MapModel::doubling();
        let u = ulam_matrix(&m, 4, UlamPartition::Uniform).unwrap();
        assert_eq!(u.rows()[0], vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(u.rows()[1], vec![(2, 0.5), (3, 0.5)]);
        assert_eq!(u.rows()[3], vec![(2, 0.5), (3, 0.5)]);
        let s = u.stationary_density().unwrap();
        assert!(s.density.l1_distance(&PiecewiseDensity::lebesgue(), None) < 1e-12);
    }

    #[test]
    fn rows_are_stochastic_away_from_tail() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let u = ulam_matrix(&m, 256, UlamPartition::BranchAligned).unwrap();
        for (cell, row) in u.bins().iter().zip(u.rows()) {
            let s: f64 = row.iter().map(|e| e.1).sum();
            if cell.left > 1e-10 {
                assert!((s - 1.0).abs() < 1e-12, "{cell}: {s}");
            }
        }
    }

    #[test]
    fn too_few_bins() {
        assert!(ulam_matrix(&MapModel::doubling(), 1, UlamPartition::Uniform).is_err());
    }
}

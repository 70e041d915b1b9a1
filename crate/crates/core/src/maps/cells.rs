use serde::Serialize;

use super::{BranchAction, MapModel};
use crate::error::{Error, Result};
use crate::interval::Interval;

pub const DEFAULT_CELL_CAP: usize = 1_000_000;

/// Element of the relative partition `W/ξ_n`.
#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    /// Branch indices `(α_0, …, α_{n-1})` visited by the first `n` iterates.
    pub word: Vec<usize>,
    pub interval: Interval,
    /// The component `T^n(interval)`.
    pub image: Interval,
    /// `T^n` restricted to the cell.
    #[serde(skip)]
    pub action: BranchAction,
}

impl Cell {
    pub fn depth(&self) -> usize {
        self.word.len()
    }
}

/// Cells of a window plus the source measure lost to the truncated tail.
#[derive(Clone, Debug, Serialize)]
pub struct CellSet {
    pub cells: Vec<Cell>,
    pub tail_measure: f64,
}

impl CellSet {
    pub fn covered_measure(&self) -> f64 {
        self.cells.iter().map(|c| c.interval.len()).sum()
    }
}

/// Borrowed view of a cell handed to [`MapModel::visit_cells`].
pub struct CellVisit<'a> {
    pub interval: Interval,
    pub image: Interval,
    pub action: &'a BranchAction,
    pub word: &'a [usize],
}

impl MapModel {
    /// Cells of `window/ξ_n` over the truncated branches.
    pub fn cells(&self, window: Interval, n: usize, cap: usize) -> Result<CellSet> {
        let mut cells = Vec::new();
        let tail_measure = self.visit_cells(window, n, cap, |c| {
            cells.push(Cell {
                word: c.word.to_vec(),
                interval: c.interval,
                image: c.image,
                action: c.action.clone(),
            });
            Ok(())
        })?;
        Ok(CellSet {
            cells,
            tail_measure,
        })
    }

    /// Components `T^n W_α` paired with their cells.
    pub fn image_components(
        &self,
        window: Interval,
        n: usize,
        cap: usize,
    ) -> Result<Vec<(Cell, Interval)>> {
        Ok(self
            .cells(window, n, cap)?
            .cells
            .into_iter()
            .map(|c| {
                let image = c.image;
                (c, image)
            })
            .collect())
    }

    /// Depth-first enumeration of `window/ξ_n` without materialising the list.
    /// Returns the source measure that fell into the truncated tail.
    pub fn visit_cells<F>(&self, window: Interval, n: usize, cap: usize, mut f: F) -> Result<f64>
    where
        F: FnMut(&CellVisit<'_>) -> Result<()>,
    {
        if n == 0 {
            return Err(Error::InvalidParameter("cell depth must be at least 1".into()));
        }
        let window = match window.intersect(&Interval::UNIT) {
            Some(w) => w,
            None => return Ok(0.0),
        };
        let mut state = Walk {
            map: self,
            depth: n,
            cap,
            emitted: 0,
            tail: 0.0,
            word: Vec::with_capacity(n),
        };
        let identity = BranchAction::affine(1.0, 0.0);
        state.descend(window, window, &identity, &mut f)?;
        Ok(state.tail)
    }
}

struct Walk<'m> {
    map: &'m MapModel,
    depth: usize,
    cap: usize,
    emitted: usize,
    tail: f64,
    word: Vec<usize>,
}

impl Walk<'_> {
    fn descend<F>(
        &mut self,
        source: Interval,
        image: Interval,
        action: &BranchAction,
        f: &mut F,
    ) -> Result<()>
    where
        F: FnMut(&CellVisit<'_>) -> Result<()>,
    {
        if self.word.len() == self.depth {
            self.emitted += 1;
            if self.emitted > self.cap {
                return Err(Error::CellExplosion {
                    cap: self.cap,
                    depth: self.depth,
                });
            }
            return f(&CellVisit {
                interval: source,
                image,
                action,
                word: &self.word,
            });
        }
        let edge = self.map.tail_edge();
        if image.left < edge {
            let lost = Interval::new(image.left, edge.min(image.right));
            if lost.len() > 0.0 {
                self.tail += action.preimage(lost, source).len();
            }
        }
        for i in self.map.branches_meeting(&image) {
            let branch = &self.map.branches()[i];
            let Some(sub) = branch.domain.intersect(&image) else {
                continue;
            };
            let child_source = action.preimage(sub, source);
            let child_action = action.then(&branch.action);
            let child_image = branch.action.image(sub);
            self.word.push(branch.index);
            let r = self.descend(child_source, child_image, &child_action, f);
            self.word.pop();
            r?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapModel;

    #[test]
    fn doubling_depth_two_quarters() {
        let m = MapModel::doubling();
        let set = m.cells(Interval::UNIT, 2, DEFAULT_CELL_CAP).unwrap();
        let words: Vec<_> = set.cells.iter().map(|c| c.word.clone()).collect();
        assert_eq!(words, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
        for (i, c) in set.cells.iter().enumerate() {
            assert!(c
                .interval
                .approx_eq(&Interval::new(i as f64 / 4.0, (i + 1) as f64 / 4.0)));
        }
    }

    #[test]
    fn doubling_single_cut() {
        let m = MapModel::doubling();
        let set = m.cells(Interval::new(0.4, 0.6), 1, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(set.cells.len(), 2);
        assert!(set.cells[0].interval.approx_eq(&Interval::new(0.4, 0.5)));
        assert!(set.cells[1].interval.approx_eq(&Interval::new(0.5, 0.6)));
    }

    #[test]
    fn vssv_cells_below_first_cut() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let set = m.cells(Interval::new(0.0, 0.4), 1, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(set.cells.len(), 59);
        let mut cells = set.cells.clone();
        cells.sort_by(|a, b| b.interval.left.total_cmp(&a.interval.left));
        assert!(cells[0].interval.approx_eq(&Interval::new(0.16, 0.4)));
        assert!(cells[1].interval.approx_eq(&Interval::new(0.064, 0.16)));
        assert_eq!(cells[0].word, vec![2]);
        assert!((set.covered_measure() + set.tail_measure - 0.4).abs() < 1e-12);
    }

    #[test]
    fn image_component_examples() {
        let m = MapModel::doubling();
        let comps = m
            .image_components(Interval::new(0.0, 0.5), 1, DEFAULT_CELL_CAP)
            .unwrap();
        assert_eq!(comps.len(), 1);
        assert!(comps[0].1.approx_eq(&Interval::UNIT));

        let v = MapModel::vssv(0.4, 60).unwrap();
        let w3 = Interval::new(0.064, 0.16);
        let comps = v.image_components(w3, 1, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(comps.len(), 1);
        assert!(comps[0].1.approx_eq(&Interval::new(0.0, 0.4)));

        let comps = m
            .image_components(Interval::new(0.3, 0.31), 6, DEFAULT_CELL_CAP)
            .unwrap();
        let lo = comps.iter().map(|c| c.1.left).fold(f64::INFINITY, f64::min);
        let hi = comps.iter().map(|c| c.1.right).fold(0.0, f64::max);
        assert!((lo - 0.2).abs() < 1e-9 && (hi - 0.84).abs() < 1e-9);
        assert!(comps
            .iter()
            .any(|c| c.1.contains(&Interval::new(0.25, 0.5))));
    }

    #[test]
    fn cell_cap_is_enforced() {
        let m = MapModel::doubling();
        let err = m.cells(Interval::UNIT, 12, 1000).unwrap_err();
        assert!(matches!(err, Error::CellExplosion { cap: 1000, .. }));
    }
}

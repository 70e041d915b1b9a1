use rayon::prelude::*;
use serde::Serialize;

use super::piecewise::{PieceValue, Piecewise, PiecewiseDensity};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::maps::MapModel;

/// Breakpoint count above which results are projected onto a uniform grid.
pub const DEFAULT_BREAKPOINT_CAP: usize = 200_000;

/// Grid used for maps with non-affine branches.
pub const DEFAULT_GRID_BINS: usize = 1 << 14;

/// Bookkeeping attached to a pushed-forward function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PushReport {
    pub steps: usize,
    /// Mass that sat in the truncated tail `(0, b_K]` at the start of a step.
    pub tail_loss: f64,
    /// Whether the breakpoint cap forced a grid projection at some step.
    pub coarsened: bool,
    /// Whether the non-affine grid fallback was used.
    pub grid_fallback: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct PushOptions {
    pub breakpoint_cap: usize,
    pub grid_bins: usize,
}

impl Default for PushOptions {
    fn default() -> Self {
        PushOptions {
            breakpoint_cap: DEFAULT_BREAKPOINT_CAP,
            grid_bins: DEFAULT_GRID_BINS,
        }
    }
}

/// One application of the transfer operator to a piecewise function under an
/// affine map. Returns the image and the integral lost to the tail.
pub fn transfer_step<V: PieceValue>(map: &MapModel, f: &Piecewise<V>) -> Result<(Piecewise<V>, f64)> {
    if !map.is_affine() {
        return Err(Error::RequiresAffine);
    }
    let edge = map.tail_edge();
    let pieces: Vec<(Interval, &V)> = f.pieces().filter(|(_, v)| !v.is_zero()).collect();
    let per_piece: Vec<(Vec<(Interval, V)>, f64)> = pieces
        .par_iter()
        .map(|(p, v)| {
            let mut out = Vec::new();
            let mut lost = 0.0;
            if p.left < edge {
                lost += v.integral(p.left, p.right.min(edge));
            }
            for i in map.branches_meeting(p) {
                let b = &map.branches()[i];
                if let Some(sub) = b.domain.intersect(p) {
                    let (s, c) = b.action.as_affine().expect("affine map");
                    out.push((b.action.image(sub), v.transport(s, c)));
                }
            }
            (out, lost)
        })
        .collect();
    let mut lost = 0.0;
    let mut contribs = Vec::new();
    for (c, l) in per_piece {
        contribs.extend(c);
        lost += l;
    }
    if contribs.is_empty() {
        return Ok((Piecewise::zero(), lost));
    }
    Ok((Piecewise::from_contributions(contribs), lost))
}

/// `n` applications of the transfer operator, with coarsening past the cap.
pub fn transfer<V: PieceValue>(
    map: &MapModel,
    f: &Piecewise<V>,
    n: usize,
    opts: &PushOptions,
) -> Result<(Piecewise<V>, PushReport)> {
    let mut report = PushReport::default();
    let mut cur = f.clone();
    for _ in 0..n {
        let (next, lost) = transfer_step(map, &cur)?;
        report.tail_loss += lost;
        report.steps += 1;
        cur = next;
        if cur.len() > opts.breakpoint_cap {
            cur = cur.coarsened(opts.breakpoint_cap / 2);
            report.coarsened = true;
        }
    }
    Ok((cur, report))
}

/// `T^n_* ν` for `dν = ρ dm`. Exact for affine maps; for general monotone
/// branches the image is projected onto a uniform grid after every step,
/// using exact preimages of the grid cells.
pub fn pushforward(
    map: &MapModel,
    density: &PiecewiseDensity,
    n: usize,
    opts: &PushOptions,
) -> Result<(PiecewiseDensity, PushReport)> {
    if map.is_affine() {
        return transfer(map, density, n, opts);
    }
    let mut report = PushReport {
        grid_fallback: true,
        ..Default::default()
    };
    let mut cur = density.clone();
    for _ in 0..n {
        let (next, lost) = grid_step(map, &cur, opts.grid_bins);
        report.tail_loss += lost;
        report.steps += 1;
        cur = next;
    }
    Ok((cur, report))
}

fn grid_step(map: &MapModel, d: &PiecewiseDensity, bins: usize) -> (PiecewiseDensity, f64) {
    let h = 1.0 / bins as f64;
    let masses: Vec<f64> = (0..bins)
        .into_par_iter()
        .map(|j| {
            let cell = Interval::new(j as f64 * h, (j + 1) as f64 * h);
            map.branches()
                .iter()
                .filter_map(|b| b.image.intersect(&cell).map(|t| d.mass_on(&b.preimage(t))))
                .sum()
        })
        .collect();
    let lost = d.mass_on(&Interval::new(0.0, map.tail_edge()));
    let contribs = masses
        .iter()
        .enumerate()
        .map(|(j, m)| (Interval::new(j as f64 * h, (j + 1) as f64 * h), m / h))
        .collect();
    (PiecewiseDensity::from_contributions(contribs), lost)
}

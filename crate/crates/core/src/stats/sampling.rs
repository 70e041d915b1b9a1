//! Seeded orbits started from the invariant measure.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::maps::{Generator, MapModel};
use crate::measure::{
    closed_form_vssv_density, ulam_matrix, PiecewiseDensity, UlamPartition, DEFAULT_GRID_BINS,
};

/// Where the invariant density came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensitySource {
    /// Every branch is affine and onto: Lebesgue is invariant.
    Lebesgue,
    ClosedForm,
    Ulam,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantDensity {
    pub density: PiecewiseDensity,
    pub source: DensitySource,
}

fn full_affine(map: &MapModel) -> bool {
    map.tail_edge() == 0.0
        && map.is_affine()
        && map
            .branches()
            .iter()
            .all(|b| b.image.approx_eq(&crate::interval::Interval::UNIT))
}

pub fn invariant_density(map: &MapModel) -> Result<InvariantDensity> {
    if full_affine(map) {
        return Ok(InvariantDensity {
            density: PiecewiseDensity::lebesgue(),
            source: DensitySource::Lebesgue,
        });
    }
    if let Generator::Vssv { lambda } = map.generator() {
        let h = closed_form_vssv_density(*lambda, map.truncation())?;
        return Ok(InvariantDensity {
            density: h.density,
            source: DensitySource::ClosedForm,
        });
    }
    let s = ulam_matrix(map, DEFAULT_GRID_BINS, UlamPartition::BranchAligned)?.stationary_density()?;
    Ok(InvariantDensity {
        density: s.density,
        source: DensitySource::Ulam,
    })
}

/// Inverse-CDF sampler for a piecewise-constant density.
#[derive(Clone, Debug)]
pub struct DensitySampler {
    pieces: Vec<(f64, f64, f64)>,
    cumulative: Vec<f64>,
}

impl DensitySampler {
    pub fn new(density: &PiecewiseDensity) -> Self {
        let pieces: Vec<(f64, f64, f64)> = density
            .rows()
            .into_iter()
            .filter(|r| r.2 > 0.0 && r.1 > r.0)
            .collect();
        let mut acc = 0.0;
        let cumulative = pieces
            .iter()
            .map(|(a, b, v)| {
                acc += v * (b - a);
                acc
            })
            .collect();
        DensitySampler { pieces, cumulative }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().expect("density with mass");
        let u = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.pieces.len() - 1);
        let (a, b, v) = self.pieces[i];
        let before = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        (a + (u - before) / v).clamp(a, b).max(f64::MIN_POSITIVE)
    }
}

/// How orbits are advanced.
#[derive(Clone, Debug)]
enum Engine {
    /// `x ↦ 2^s x mod 1` on a 64-bit window of binary digits; fresh random
    /// digits enter at the bottom, so orbits never collapse to 0.
    Digits { shift: u32 },
    Float,
}

/// Orbit generator for a map, started from its invariant measure.
#[derive(Clone, Debug)]
pub struct OrbitSampler {
    map: MapModel,
    sampler: DensitySampler,
    engine: Engine,
}

pub struct Orbit<'a> {
    owner: &'a OrbitSampler,
    rng: ChaCha8Rng,
    state: u64,
    x: f64,
    pub restarts: usize,
}

fn digit_shift(map: &MapModel) -> Option<u32> {
    let per_step = match map.generator() {
        Generator::Doubling => 1,
        Generator::Dyadic { branches } if branches.is_power_of_two() && *branches > 1 => {
            branches.trailing_zeros()
        }
        _ => return None,
    };
    let s = per_step * map.iterate() as u32;
    (s < 53).then_some(s)
}

impl OrbitSampler {
    pub fn new(map: &MapModel, density: &PiecewiseDensity) -> Self {
        let engine = match digit_shift(map) {
            Some(shift) => Engine::Digits { shift },
            None => Engine::Float,
        };
        OrbitSampler {
            map: map.clone(),
            sampler: DensitySampler::new(density),
            engine,
        }
    }

    pub fn uses_digits(&self) -> bool {
        matches!(self.engine, Engine::Digits { .. })
    }

    /// Orbit for sample `index`, reproducible from `(seed, index)`.
    pub fn orbit(&self, seed: u64, index: u64) -> Orbit<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut o = Orbit {
            owner: self,
            rng,
            state: 0,
            x: 0.0,
            restarts: 0,
        };
        o.start();
        o
    }
}

impl Orbit<'_> {
    fn start(&mut self) {
        match self.owner.engine {
            Engine::Digits { .. } => {
                self.state = self.rng.next_u64();
                self.x = digits_value(self.state);
            }
            Engine::Float => self.x = self.owner.sampler.sample(&mut self.rng),
        }
    }

    pub fn value(&self) -> f64 {
        self.x
    }

    pub fn step(&mut self) {
        match self.owner.engine {
            Engine::Digits { shift } => {
                let fresh = self.rng.next_u64() >> (64 - shift);
                self.state = (self.state << shift) | fresh;
                self.x = digits_value(self.state);
            }
            Engine::Float => match self.owner.map.apply(self.x) {
                Ok(y) if y > 0.0 && y <= 1.0 => self.x = y,
                _ => {
                    self.restarts += 1;
                    self.start();
                }
            },
        }
    }
}

fn digits_value(state: u64) -> f64 {
    ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Runs `samples` orbits in fixed-size chunks and reduces the per-chunk
/// results in order, so the output does not depend on the thread count.
pub fn map_orbit_chunks<T, F, R>(samples: usize, chunk: usize, per_chunk: F, reduce: R) -> Option<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    R: Fn(T, T) -> T,
{
    let chunks: Vec<std::ops::Range<usize>> = (0..samples)
        .step_by(chunk.max(1))
        .map(|s| s..(s + chunk).min(samples))
        .collect();
    let parts: Vec<T> = chunks.into_par_iter().map(per_chunk).collect();
    parts.into_iter().reduce(reduce)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lebesgue_for_full_branches() {
        let d = invariant_density(&MapModel::doubling()).unwrap();
        assert_eq!(d.source, DensitySource::Lebesgue);
        let v = invariant_density(&MapModel::vssv(0.4, 60).unwrap()).unwrap();
        assert_eq!(v.source, DensitySource::ClosedForm);
    }

    #[test]
    fn sampler_matches_mass() {
        let h = closed_form_vssv_density(0.4, 60).unwrap().density;
        let s = DensitySampler::new(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let hits = (0..n).filter(|_| s.sample(&mut rng) > 0.6).count() as f64 / n as f64;
        let expect = h.mass_on(&crate::interval::Interval::new(0.6, 1.0));
        assert!((hits - expect).abs() < 5.0 * (expect * (1.0 - expect) / n as f64).sqrt());
    }

    #[test]
    fn doubling_orbits_are_shifts() {
        let m = MapModel::doubling();
        let s = OrbitSampler::new(&m, &PiecewiseDensity::lebesgue());
        assert!(s.uses_digits());
        let mut o = s.orbit(7, 0);
        for _ in 0..500 {
            let x = o.value();
            o.step();
            let y = o.value();
            assert!(y > 0.0 && y < 1.0);
            assert!((y - (2.0 * x).fract()).abs() < 1e-12);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let m = MapModel::vssv(0.4, 60).unwrap();
        let h = invariant_density(&m).unwrap().density;
        let s = OrbitSampler::new(&m, &h);
        let run = |i| {
            let mut o = s.orbit(11, i);
            (0..50).map(|_| {
                o.step();
                o.value()
            })
            .collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }
}

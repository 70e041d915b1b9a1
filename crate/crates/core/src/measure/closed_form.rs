use serde::Serialize;

use super::piecewise::PiecewiseDensity;
use crate::error::{Error, Result};

/// Invariant density of the vSSV map truncated at `K` branches.
#[derive(Clone, Debug, Serialize)]
pub struct VssvDensity {
    pub density: PiecewiseDensity,
    /// `Σ_{k≤K} v_k`.
    pub mass: f64,
    /// `Σ_{k>K} v_k = (λ/(1−λ))^K`.
    pub tail_bound: f64,
}

/// Branch mass `v_k = ((1−2λ)/λ)(λ/(1−λ))^k`.
pub fn vssv_branch_mass(lambda: f64, k: usize) -> f64 {
    (1.0 - 2.0 * lambda) / lambda * (lambda / (1.0 - lambda)).powi(k as i32)
}

/// Density on `W_k`: `v_k / a_k = (1−2λ)(1−λ)^{−(k+1)}`.
pub fn vssv_branch_density(lambda: f64, k: usize) -> f64 {
    (1.0 - 2.0 * lambda) * (1.0 - lambda).powi(-(k as i32 + 1))
}

pub fn closed_form_vssv_density(lambda: f64, truncation: usize) -> Result<VssvDensity> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} not in (0,1)")));
    }
    if lambda >= 0.5 {
        return Err(Error::NoAcip(lambda));
    }
    if truncation == 0 {
        return Err(Error::InvalidParameter("truncation must be positive".into()));
    }
    let mut breakpoints: Vec<f64> = (0..=truncation).rev().map(|k| lambda.powi(k as i32)).collect();
    breakpoints[truncation] = 1.0;
    let values = (1..=truncation)
        .rev()
        .map(|k| vssv_branch_density(lambda, k))
        .collect();
    let density = PiecewiseDensity::new(breakpoints, values)?;
    let mass = (1..=truncation).map(|k| vssv_branch_mass(lambda, k)).sum();
    Ok(VssvDensity {
        density,
        mass,
        tail_bound: (lambda / (1.0 - lambda)).powi(truncation as i32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_branches() {
        let d = closed_form_vssv_density(0.4, 60).unwrap();
        assert!((d.density.value_at(0.7) - 0.2 / 0.36).abs() < 1e-14);
        assert!((d.density.value_at(0.3) - 0.2 / 0.216).abs() < 1e-14);
        assert!((vssv_branch_mass(0.4, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.mass + d.tail_bound - 1.0).abs() < 1e-14);
        assert!((d.density.mass() - d.mass).abs() < 1e-14);
    }

    #[test]
    fn branch_masses_sum_to_one() {
        for lambda in [0.1, 0.3, 0.45] {
            let s: f64 = (1..2000).map(|k| vssv_branch_mass(lambda, k)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_acip_at_half() {
        assert_eq!(closed_form_vssv_density(0.5, 60).unwrap_err(), Error::NoAcip(0.5));
    }
}

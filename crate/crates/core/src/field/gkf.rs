use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::space::{flag_coefficient, lkc, ParamSpace, SpatialCov};
use crate::error::{invalid, Result};
use crate::gmf::{gmf_surface_mc, GmfVector, RegionSpec, SurfaceEstimate, SurfaceMc};
use crate::rng;
use crate::wiener::{CylFunctional, Potential};

fn gauss_factor(j: usize) -> f64 {
    (2.0 * PI).powf(-(j as f64) / 2.0)
}

fn combine(coeffs: &[f64], gmf: &GmfVector) -> (f64, f64) {
    let value = coeffs.iter().zip(&gmf.values).map(|(c, m)| c * m).sum();
    (value, gmf.combination_stderr(coeffs))
}

/// `Σ_{j=0..dim} (2π)^{−j/2} L_j M_j`, with its standard error.
pub fn gkf_from_parts(lkc: &[f64], gmf: &GmfVector) -> Result<(f64, f64)> {
    let dim = lkc.len() - 1;
    if gmf.order() < dim {
        return Err(invalid(format!("need GMFs up to order {dim}, got {}", gmf.order())));
    }
    let coeffs: Vec<f64> = (0..=dim).map(|j| gauss_factor(j) * lkc[j]).collect();
    Ok(combine(&coeffs, gmf))
}

/// `Σ_j [i+j, j] (2π)^{−j/2} L_{i+j} M_j` with flag coefficients
/// `[i+j, j] = C(i+j, j)·ω_{i+j}/(ω_i ω_j)`.
pub fn crofton_from_parts(i: usize, lkc: &[f64], gmf: &GmfVector) -> Result<(f64, f64)> {
    let dim = lkc.len() - 1;
    if i > dim {
        return Err(invalid(format!("LKC index {i} exceeds dimension {dim}")));
    }
    if gmf.order() < dim - i {
        return Err(invalid(format!(
            "need GMFs up to order {}, got {}",
            dim - i,
            gmf.order()
        )));
    }
    let coeffs: Vec<f64> = (0..=dim - i)
        .map(|j| flag_coefficient(i, j) * (gauss_factor(j) * lkc[i + j]))
        .collect();
    Ok(combine(&coeffs, gmf))
}

/// Inputs for the right-hand side: GMFs of `{F_n ≥ u}` by the surface
/// estimator, paired with the LKCs of the space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsStudy {
    pub space: ParamSpace,
    pub cov: SpatialCov,
    pub potential: Potential,
    pub level: f64,
    /// Cylindrical size; matches the field's time grid.
    pub n: usize,
    pub order: usize,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsEstimate {
    pub value: f64,
    pub stderr: f64,
    pub lkc: Vec<f64>,
    pub surface: SurfaceEstimate,
}

fn rhs_inputs(study: &RhsStudy) -> Result<(Vec<f64>, SurfaceEstimate)> {
    if study.order < study.space.dim() {
        return Err(invalid(format!(
            "order {} below space dimension {}",
            study.order,
            study.space.dim()
        )));
    }
    study.cov.validate(&study.space)?;
    let l = lkc(&study.space, &study.cov)?;
    let region = RegionSpec::excursion(CylFunctional::new(study.n, study.potential.clone())?, study.level);
    let mut opts = SurfaceMc::new(study.order, study.samples, rng::derive_seed(study.seed, "gkf-rhs", 0));
    opts.bandwidth = study.bandwidth;
    Ok((l, gmf_surface_mc(&region, &opts)?))
}

pub fn gkf_rhs(study: &RhsStudy) -> Result<RhsEstimate> {
    let (lkc, surface) = rhs_inputs(study)?;
    let (value, stderr) = gkf_from_parts(&lkc, &surface.gmf)?;
    Ok(RhsEstimate {
        value,
        stderr,
        lkc,
        surface,
    })
}

pub fn crofton_lkc_rhs(i: usize, study: &RhsStudy) -> Result<RhsEstimate> {
    let (lkc, surface) = rhs_inputs(study)?;
    let (value, stderr) = crofton_from_parts(i, &lkc, &surface.gmf)?;
    Ok(RhsEstimate {
        value,
        stderr,
        lkc,
        surface,
    })
}

/// Numerical evidence for the regularity assumptions on `V` and `B^x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Largest relative finite-difference mismatch of `V', …, V⁗`.
    pub derivative_error: f64,
    /// Polynomial growth degree of `V`.
    pub growth_degree: usize,
    /// `max 2(1 − C(x, y)) / (λ₂‖x − y‖²)` over grid pairs; at most 1
    /// means `E|B^x(s) − B^y(s)|^r ≤ m_r‖x − y‖^r`.
    pub increment_ratio: f64,
    /// `Σ w‖ω‖⁴`, finite so the same bound holds for `∇B^x`, `∇²B^x`.
    pub fourth_moment: f64,
}

pub fn check_assumptions(space: &ParamSpace, cov: &SpatialCov, potential: &Potential) -> Result<AssumptionReport> {
    let lambda2 = cov.validate(space)?;
    let derivative_error = potential.derivative_check();
    if derivative_error > 1e-5 {
        return Err(invalid(format!(
            "potential derivatives fail the finite-difference check ({derivative_error:.2e})"
        )));
    }
    let origin = space.point(0);
    let stride = (space.num_points() / 500).max(1);
    let increment_ratio = (1..space.num_points())
        .step_by(stride)
        .map(|idx| {
            let x = space.point(idx);
            let d2: f64 = x.iter().zip(&origin).map(|(a, b)| (a - b).powi(2)).sum();
            2.0 * (1.0 - cov.covariance(&x, &origin)) / (lambda2 * d2)
        })
        .fold(0.0, f64::max);
    let fourth_moment = cov
        .waves(space.dim())
        .iter()
        .map(|w| w.weight * w.freq.iter().map(|f| f * f).sum::<f64>().powi(2))
        .sum();
    Ok(AssumptionReport {
        derivative_error,
        growth_degree: potential.growth_degree(),
        increment_ratio,
        fourth_moment,
    })
}

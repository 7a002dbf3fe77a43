//! Direct Monte Carlo of Gaussian tube volumes `γ_k(Tube(A, ρ))`.
//!
//! Distances are Euclidean. Canonical regions use closed forms; general
//! convex regions are projected onto numerically.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gmf::{assemble_tube_series, CanonicalRegion, GmfVector, RegionSpec};
use crate::rng;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAXITER: usize = 500;
/// Fraction of solver failures that aborts a tube run.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

const CONVEXITY_PROBES: usize = 100;

#[derive(Debug, Clone)]
pub enum DistanceMethod {
    ClosedForm(CanonicalRegion),
    Projection {
        region: RegionSpec,
        tol: f64,
        maxiter: usize,
    },
}

/// Distance from a point to a region.
#[derive(Debug, Clone)]
pub struct DistanceOracle {
    method: DistanceMethod,
    dim: usize,
}

impl DistanceOracle {
    pub fn closed_form(region: CanonicalRegion) -> Result<Self> {
        region.validate()?;
        Ok(Self {
            dim: region.dim(),
            method: DistanceMethod::ClosedForm(region),
        })
    }

    /// Projection oracle for a convex region. The defining functional (or
    /// its negation for excursion sets) must be convex; this is checked once
    /// by requiring a positive semi-definite Hessian at Gaussian probes.
    pub fn projection(region: RegionSpec, tol: f64, seed: u64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(invalid(format!("projection tolerance must be positive, got {tol}")));
        }
        check_convexity(&region, seed)?;
        Ok(Self {
            dim: region.dim(),
            method: DistanceMethod::Projection {
                region,
                tol,
                maxiter: DEFAULT_MAXITER,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn method(&self) -> &DistanceMethod {
        &self.method
    }
}

fn check_convexity(region: &RegionSpec, seed: u64) -> Result<()> {
    let sign = region.kind.sign();
    let mut rng = rng::stream(rng::derive_seed(seed, "convexity", 0));
    let dim = region.dim();
    let mut x = vec![0.0; dim];
    for _ in 0..CONVEXITY_PROBES {
        x.iter_mut()
            .for_each(|v| *v = 2.0 * rng.sample::<f64, _>(StandardNormal));
        let h = region.functional.hess(&x) * sign;
        let scale = 1.0 + h.amax();
        let min = SymmetricEigen::new(h).eigenvalues.min();
        if min < -1e-8 * scale {
            return Err(Error::NotConvex { min_eigenvalue: min });
        }
    }
    Ok(())
}

/// Euclidean distance from `x` to the oracle's region (0 inside).
pub fn dist_to_region(oracle: &DistanceOracle, x: &[f64]) -> Result<f64> {
    match &oracle.method {
        DistanceMethod::ClosedForm(region) => Ok(closed_form_distance(region, x)),
        DistanceMethod::Projection { region, tol, maxiter } => project(region, x, *tol, *maxiter),
    }
}

fn closed_form_distance(region: &CanonicalRegion, x: &[f64]) -> f64 {
    match *region {
        CanonicalRegion::HalfSpace { level, .. } => (level - x[0]).max(0.0),
        CanonicalRegion::Ball { radius, .. } => (x.iter().map(|v| v * v).sum::<f64>().sqrt() - radius).max(0.0),
        CanonicalRegion::TwoSided { threshold, .. } => (threshold - x[0].abs()).max(0.0),
    }
}

/// Projection onto `{G ≤ c}` with `G = s·F`, `c = s·u`, `s = +1` for
/// sub-level and `−1` for excursion sets.
///
/// Solves the dual problem: for a multiplier λ, `y(λ)` minimises
/// `½‖y − x‖² + λ G(y)` (damped Newton with Armijo backtracking), and λ is
/// driven to the root of `G(y(λ)) = c` by safeguarded Newton / bisection.
fn project(region: &RegionSpec, x: &[f64], tol: f64, maxiter: usize) -> Result<f64> {
    let s = region.kind.sign();
    let c = s * region.level;
    let g = |y: &[f64]| s * region.functional.value(y);
    if g(x) <= c {
        return Ok(0.0);
    }
    let dim = x.len();
    let xv = DVector::from_column_slice(x);
    let mut y = xv.clone();
    let mut iterations = 0usize;

    let inner_tol = 1e-13 * (1.0 + xv.norm());
    // Inner solve; returns the residual of the stationarity condition.
    let inner = |y: &mut DVector<f64>, lambda: f64, iterations: &mut usize| -> Result<f64> {
        loop {
            *iterations += 1;
            let grad_g = region.functional.grad(y.as_slice()) * s;
            let r = &*y - &xv + &grad_g * lambda;
            let rn = r.norm();
            if rn <= inner_tol {
                return Ok(rn);
            }
            if *iterations > maxiter {
                return Err(Error::SolverDivergence {
                    iterations: *iterations,
                    residual: rn,
                });
            }
            let hess = region.functional.hess(y.as_slice()) * (s * lambda) + DMatrix::identity(dim, dim);
            let step = match hess.cholesky() {
                Some(ch) => ch.solve(&r),
                None => r.clone(),
            };
            let obj = |z: &DVector<f64>| 0.5 * (z - &xv).norm_squared() + lambda * g(z.as_slice());
            let f0 = obj(y);
            let slope = r.dot(&step);
            let mut t = 1.0;
            loop {
                let cand = &*y - &step * t;
                // near the optimum objective decreases drown in roundoff;
                // a halved stationarity residual is accepted instead
                let resid = || (&cand - &xv + region.functional.grad(cand.as_slice()) * (s * lambda)).norm();
                if obj(&cand) <= f0 - 1e-4 * t * slope || resid() <= 0.5 * rn {
                    *y = cand;
                    break;
                }
                if t < 1e-12 {
                    // stalled at roundoff level
                    return Ok(rn);
                }
                t *= 0.5;
            }
        }
    };

    let level_tol = tol * (1.0 + c.abs());
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut lambda = 1.0;
    loop {
        inner(&mut y, lambda, &mut iterations)?;
        let h = g(y.as_slice()) - c;
        if h.abs() <= level_tol || (hi.is_finite() && hi - lo <= 1e-15 * hi) {
            return Ok((&y - &xv).norm());
        }
        if h > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if iterations > maxiter || lo > 1e12 {
            return Err(Error::SolverDivergence {
                iterations,
                residual: h.abs(),
            });
        }
        // dh/dλ = −∇Gᵀ (I + λ∇²G)⁻¹ ∇G
        let grad_g = region.functional.grad(y.as_slice()) * s;
        let hess = region.functional.hess(y.as_slice()) * (s * lambda) + DMatrix::identity(dim, dim);
        let dh = match hess.cholesky() {
            Some(ch) => -grad_g.dot(&ch.solve(&grad_g)),
            None => -grad_g.norm_squared(),
        };
        let newton = if dh < 0.0 { lambda - h / dh } else { f64::NAN };
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * lambda.max(lo)
        };
    }
}

/// Hit-fraction estimate of a tube volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
    pub failures: u64,
}

/// `(1/N) Σ 1{d(X_i) ≤ ρ}` for `X_i` canonical Gaussian in ℝᵏ.
pub fn tube_volume_mc(oracle: &DistanceOracle, rho: f64, samples: usize, seed: u64) -> Result<TubeEstimate> {
    if !(rho >= 0.0) {
        return Err(invalid(format!("tube radius must be non-negative, got {rho}")));
    }
    if samples == 0 {
        return Err(invalid("tube_volume_mc needs at least one sample"));
    }
    let dim = oracle.dim();
    let parts = rng::par_chunks(samples, seed, "tube", |rng, len| {
        let mut x = vec![0.0; dim];
        let (mut hits, mut failures) = (0u64, 0u64);
        for _ in 0..len {
            x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            match dist_to_region(oracle, &x) {
                Ok(d) if d <= rho => hits += 1,
                Ok(_) => {}
                Err(_) => failures += 1,
            }
        }
        (hits, failures)
    });
    let (hits, failures) = parts.iter().fold((0u64, 0u64), |(h, f), (a, b)| (h + a, f + b));
    if failures as f64 > MAX_FAILURE_FRACTION * samples as f64 {
        return Err(Error::TooManyFailures {
            failures,
            samples: samples as u64,
        });
    }
    let n = samples as u64 - failures;
    let p = hits as f64 / n as f64;
    Ok(TubeEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
        samples: n,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubePoint {
    pub rho: f64,
    pub measured: f64,
    pub stderr: f64,
    pub series: f64,
    pub residual: f64,
}

/// Measured tube volumes against the truncated tube series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub order: usize,
    pub points: Vec<TubePoint>,
    pub max_abs_residual: f64,
    /// Least-squares slope of `log|r(ρ)|` against `log ρ` over points whose
    /// residual exceeds 4 standard errors; `None` when fewer than two do.
    pub loglog_slope: Option<f64>,
}

impl ValidationReport {
    /// `true` when every residual lies within `k` standard errors.
    pub fn within_noise(&self, k: f64) -> bool {
        self.points.iter().all(|p| p.residual.abs() <= k * p.stderr)
    }
}

pub fn validate_tube_series(
    oracle: &DistanceOracle,
    gmf: &GmfVector,
    rho_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let mut points = Vec::with_capacity(rho_grid.len());
    for (i, &rho) in rho_grid.iter().enumerate() {
        let est = tube_volume_mc(oracle, rho, samples, rng::derive_seed(seed, "tube-grid", i as u64))?;
        let series = assemble_tube_series(gmf, rho);
        points.push(TubePoint {
            rho,
            measured: est.estimate,
            stderr: est.stderr,
            series,
            residual: est.estimate - series,
        });
    }
    let max_abs_residual = points.iter().map(|p| p.residual.abs()).fold(0.0, f64::max);
    let above: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.rho > 0.0 && p.residual.abs() > 4.0 * p.stderr)
        .map(|p| (p.rho.ln(), p.residual.abs().ln()))
        .collect();
    let loglog_slope = (above.len() >= 2).then(|| {
        let n = above.len() as f64;
        let mx = above.iter().map(|p| p.0).sum::<f64>() / n;
        let my = above.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = above.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = above.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(ValidationReport {
        order: gmf.order(),
        points,
        max_abs_residual,
        loglog_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{Coordinate, HalfNormSq, Norm, Quadratic};
    use crate::gmf::{gmf_ball, gmf_halfspace, gmf_two_sided};
    use crate::series::gaussian_tail;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma_lr;

    #[test]
    fn closed_form_examples() {
        let half = DistanceOracle::closed_form(CanonicalRegion::HalfSpace { dim: 3, level: 1.0 }).unwrap();
        assert_eq!(dist_to_region(&half, &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(dist_to_region(&half, &[2.0, 0.0, 0.0]).unwrap(), 0.0);
        let ball = DistanceOracle::closed_form(CanonicalRegion::Ball { dim: 2, radius: 2.0 }).unwrap();
        assert_relative_eq!(dist_to_region(&ball, &[3.0, 0.0]).unwrap(), 1.0);
        let two = DistanceOracle::closed_form(CanonicalRegion::TwoSided { dim: 2, threshold: 1.5 }).unwrap();
        assert_relative_eq!(dist_to_region(&two, &[-0.5, 9.0]).unwrap(), 1.0);
    }

    #[test]
    fn projection_onto_ball() {
        let region = RegionSpec::sub_level(HalfNormSq::new(2), 2.0);
        let oracle = DistanceOracle::projection(region, DEFAULT_TOL, 1).unwrap();
        assert_relative_eq!(dist_to_region(&oracle, &[3.0, 0.0]).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn projection_matches_closed_forms() {
        let mut r = rng::stream(4);
        let cases: Vec<(RegionSpec, CanonicalRegion)> = vec![
            (
                RegionSpec::excursion(Coordinate::new(4, 0), 0.7),
                CanonicalRegion::HalfSpace { dim: 4, level: 0.7 },
            ),
            (
                RegionSpec::sub_level(Norm::new(3), 1.3),
                CanonicalRegion::Ball { dim: 3, radius: 1.3 },
            ),
            (
                RegionSpec::sub_level(HalfNormSq::new(3), 0.5 * 1.3 * 1.3),
                CanonicalRegion::Ball { dim: 3, radius: 1.3 },
            ),
        ];
        for (region, canon) in cases {
            let proj = DistanceOracle::projection(region, DEFAULT_TOL, 2).unwrap();
            let closed = DistanceOracle::closed_form(canon).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = (0..canon.dim())
                    .map(|_| 2.0 * r.sample::<f64, _>(StandardNormal))
                    .collect();
                let a = dist_to_region(&proj, &x).unwrap();
                let b = dist_to_region(&closed, &x).unwrap();
                assert!((a - b).abs() < 1e-6, "{canon:?} {x:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn distance_is_lipschitz_and_zero_inside() {
        let mut r = rng::stream(6);
        let region = RegionSpec::sub_level(Quadratic::random(3, &mut r), 0.8);
        let oracle = DistanceOracle::projection(region.clone(), DEFAULT_TOL, 3).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = (0..3).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
            let (dx, dy) = (
                dist_to_region(&oracle, &x).unwrap(),
                dist_to_region(&oracle, &y).unwrap(),
            );
            let gap = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!((dx - dy).abs() <= gap + 1e-7);
            assert_eq!(dx == 0.0, region.contains(&x));
        }
    }

    #[test]
    fn projection_distance_lower_bound() {
        // F = ‖x‖ is 1-Lipschitz, so d(x) ≥ (F(x) − u)⁺
        let mut r = rng::stream(9);
        let region = RegionSpec::sub_level(Norm::new(4), 1.0);
        let oracle = DistanceOracle::projection(region, DEFAULT_TOL, 1).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
            let f = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(dist_to_region(&oracle, &x).unwrap() >= (f - 1.0).max(0.0) - 1e-8);
        }
    }

    #[test]
    fn nonconvex_region_rejected() {
        let region = RegionSpec::excursion(HalfNormSq::new(2), 1.0);
        assert!(matches!(
            DistanceOracle::projection(region, DEFAULT_TOL, 1),
            Err(Error::NotConvex { .. })
        ));
    }

    #[test]
    fn tube_mc_examples() {
        let half = DistanceOracle::closed_form(CanonicalRegion::HalfSpace { dim: 2, level: 1.0 }).unwrap();
        let est = tube_volume_mc(&half, 0.3, 200_000, 1).unwrap();
        assert_relative_eq!(gaussian_tail(0.7), 0.241_963_652_2, epsilon = 1e-10);
        assert!((est.estimate - gaussian_tail(0.7)).abs() < 4.0 * est.stderr);
        let at0 = tube_volume_mc(&half, 0.0, 200_000, 2).unwrap();
        assert!((at0.estimate - gmf_halfspace(1.0, 0).values[0]).abs() < 4.0 * at0.stderr);
        let ball = DistanceOracle::closed_form(CanonicalRegion::Ball { dim: 2, radius: 1.0 }).unwrap();
        let est = tube_volume_mc(&ball, 0.5, 200_000, 3).unwrap();
        assert!((est.estimate - gamma_lr(1.0, 1.125)).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn tube_volume_nondecreasing_in_rho() {
        let ball = DistanceOracle::closed_form(CanonicalRegion::Ball { dim: 3, radius: 1.0 }).unwrap();
        let mut prev = 0.0;
        for i in 0..6 {
            // same seed: monotone sample by sample
            let est = tube_volume_mc(&ball, 0.1 * i as f64, 50_000, 7).unwrap();
            assert!(est.estimate >= prev);
            prev = est.estimate;
        }
    }

    #[test]
    fn validate_halfspace_and_two_sided() {
        let half = DistanceOracle::closed_form(CanonicalRegion::HalfSpace { dim: 2, level: 1.0 }).unwrap();
        let grid = [0.1, 0.2, 0.3, 0.4, 0.5];
        let rep = validate_tube_series(&half, &gmf_halfspace(1.0, 4), &grid, 200_000, 5).unwrap();
        assert!(rep.loglog_slope.is_none_or(|s| s >= 4.5), "{rep:?}");
        let two = DistanceOracle::closed_form(CanonicalRegion::TwoSided { dim: 2, threshold: 1.5 }).unwrap();
        let rep = validate_tube_series(&two, &gmf_two_sided(1.5, 14).unwrap(), &[0.2, 0.6, 1.0], 200_000, 6).unwrap();
        assert!(rep.within_noise(4.0), "{rep:?}");
        let ball = DistanceOracle::closed_form(CanonicalRegion::Ball { dim: 3, radius: 1.0 }).unwrap();
        let rep = validate_tube_series(&ball, &gmf_ball(1.0, 3, 16).unwrap(), &[0.1, 0.3], 200_000, 7).unwrap();
        assert!(rep.within_noise(4.0), "{rep:?}");
    }
}

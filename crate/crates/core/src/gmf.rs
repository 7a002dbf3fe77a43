//! Gaussian Minkowski functionals of regions `{F ≤ u}` / `{F ≥ u}`.
//!
//! Conventions: `γ(Tube(A, ρ)) = M_0 + Σ_{j≥1} ρʲ/j! · M_j`, and
//! `M_{j+1} = ∫_{∂A} j!·c_j da`, where `c_j` is coefficient `j` of
//! [`jacobian_series`](crate::malliavin::jacobian_series) and `da` the
//! Gaussian-weighted surface measure.
//!
//! The Monte Carlo estimator realises the surface integral through the
//! co-area identity `E[g ‖∇F‖ δ_u(F)] = ∫_{F=u} g da`, with the delta
//! replaced by a Gaussian kernel of bandwidth `eps`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::functional::{Coordinate, HalfCoordinateSq, Norm};
use crate::malliavin::{surface_jet, RegionKind, SmoothFunctional, DEFAULT_GRAD_FLOOR};
use crate::rng::{self, CoMoments, Moments};
use crate::series::{gaussian_pdf, gaussian_tail, hermite_all};

/// Samples with `|F − u| > KERNEL_CUTOFF · eps` get zero kernel weight.
pub const KERNEL_CUTOFF: f64 = 8.0;

/// Skip fraction above which a warning is attached to the estimate.
pub const SKIP_WARN: f64 = 0.01;
/// Skip fraction above which the estimate is rejected.
pub const SKIP_FAIL: f64 = 0.10;

/// Minimum sample count accepted by [`gmf_surface_mc`].
pub const MIN_SURFACE_SAMPLES: usize = 10_000;

/// A region `{F ≤ level}` or `{F ≥ level}`.
#[derive(Clone)]
pub struct RegionSpec {
    pub functional: Arc<dyn SmoothFunctional>,
    pub level: f64,
    pub kind: RegionKind,
}

impl std::fmt::Debug for RegionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegionSpec")
            .field("dim", &self.functional.dim())
            .field("level", &self.level)
            .field("kind", &self.kind)
            .finish()
    }
}

impl RegionSpec {
    pub fn new(functional: Arc<dyn SmoothFunctional>, level: f64, kind: RegionKind) -> Self {
        Self {
            functional,
            level,
            kind,
        }
    }

    pub fn excursion<F: SmoothFunctional + 'static>(functional: F, level: f64) -> Self {
        Self::new(Arc::new(functional), level, RegionKind::Excursion)
    }

    pub fn sub_level<F: SmoothFunctional + 'static>(functional: F, level: f64) -> Self {
        Self::new(Arc::new(functional), level, RegionKind::SubLevel)
    }

    pub fn dim(&self) -> usize {
        self.functional.dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.kind.contains(self.functional.value(x), self.level)
    }

    /// Same level set, other side.
    pub fn complement(&self) -> Self {
        Self {
            kind: self.kind.complement(),
            ..self.clone()
        }
    }
}

/// `M_0..M_J` with per-coefficient standard errors (zero for closed forms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmfVector {
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Joint covariance of Monte Carlo estimates drawn from one sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl GmfVector {
    pub fn exact(values: Vec<f64>) -> Self {
        let stderr = vec![0.0; values.len()];
        Self {
            values,
            stderr,
            covariance: None,
        }
    }

    /// Standard error of `Σ c_j M̂_j`: exact from the joint covariance when
    /// present, otherwise the conservative `Σ |c_j|·se_j`.
    pub fn combination_stderr(&self, coeffs: &[f64]) -> f64 {
        match &self.covariance {
            Some(cov) => {
                let mut v = 0.0;
                for (i, ci) in coeffs.iter().enumerate() {
                    for (j, cj) in coeffs.iter().enumerate() {
                        v += ci * cj * cov[i][j];
                    }
                }
                v.max(0.0).sqrt()
            }
            None => coeffs.iter().zip(&self.stderr).map(|(c, s)| c.abs() * s).sum(),
        }
    }

    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, j: usize) -> f64 {
        self.values[j]
    }
}

/// `γ(Tube(A, ρ)) ≈ M_0 + Σ_{j=1..J} ρʲ/j! · M_j`.
pub fn assemble_tube_series(gmf: &GmfVector, rho: f64) -> f64 {
    let mut term = 1.0;
    let mut total = gmf.values[0];
    for (j, m) in gmf.values.iter().enumerate().skip(1) {
        term *= rho / j as f64;
        total += term * m;
    }
    total
}

/// GMFs of the half-space `{z ≥ u}`: `M_0 = Ψ(u)`, `M_j = He_{j−1}(u) φ(u)`.
pub fn gmf_halfspace(u: f64, order: usize) -> GmfVector {
    let phi = gaussian_pdf(u);
    let mut values = vec![gaussian_tail(u)];
    if order >= 1 {
        values.extend(hermite_all(order - 1, u).into_iter().map(|h| h * phi));
    }
    GmfVector::exact(values)
}

/// GMFs of `{|z| ≥ a}`, two parallel sheets; a formal expansion for `ρ < a`.
pub fn gmf_two_sided(a: f64, order: usize) -> Result<GmfVector> {
    if !(a > 0.0) {
        return Err(invalid(format!("two-sided threshold must be positive, got {a}")));
    }
    let mut g = gmf_halfspace(a, order);
    g.values.iter_mut().for_each(|m| *m *= 2.0);
    Ok(g)
}

/// GMFs of the centred ball of radius `R` in ℝᵏ:
/// `M_j = dʲ/dρʲ P(χ_k ≤ R + ρ)` at `ρ = 0`.
pub fn gmf_ball(radius: f64, dim: usize, order: usize) -> Result<GmfVector> {
    if !(radius > 0.0) || dim == 0 {
        return Err(invalid(format!("ball needs R > 0 and k ≥ 1, got R={radius}, k={dim}")));
    }
    let k = dim as f64;
    let mut values = vec![gamma_lr(k / 2.0, radius * radius / 2.0)];
    // chi density c_k r^{k−1} e^{−r²/2} as a polynomial times the exponential;
    // d/dr [p e^{−r²/2}] = (p' − r p) e^{−r²/2}
    let ln_c = (1.0 - k / 2.0) * std::f64::consts::LN_2 - ln_gamma(k / 2.0);
    let mut poly = vec![0.0; dim];
    poly[dim - 1] = 1.0;
    let ln_r = radius.ln();
    for _ in 1..=order {
        let value: f64 = poly
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(p, c): (usize, &f64)| {
                c.signum() * (c.abs().ln() + p as f64 * ln_r - radius * radius / 2.0 + ln_c).exp()
            })
            .sum();
        values.push(value);
        let mut next = vec![0.0; poly.len() + 1];
        for (p, c) in poly.iter().enumerate() {
            if p > 0 {
                next[p - 1] += p as f64 * c;
            }
            next[p + 1] -= c;
        }
        poly = next;
    }
    Ok(GmfVector::exact(values))
}

/// Regions with closed-form GMFs and distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CanonicalRegion {
    /// `{x₁ ≥ level}` in ℝ^dim.
    HalfSpace { dim: usize, level: f64 },
    /// `{‖x‖ ≤ radius}` in ℝ^dim.
    Ball { dim: usize, radius: f64 },
    /// `{|x₁| ≥ threshold}` in ℝ^dim.
    TwoSided { dim: usize, threshold: f64 },
}

impl CanonicalRegion {
    pub fn dim(&self) -> usize {
        match *self {
            CanonicalRegion::HalfSpace { dim, .. }
            | CanonicalRegion::Ball { dim, .. }
            | CanonicalRegion::TwoSided { dim, .. } => dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(invalid("region dimension must be at least 1"));
        }
        match *self {
            CanonicalRegion::Ball { radius, .. } if !(radius > 0.0) => {
                Err(invalid(format!("ball radius must be positive, got {radius}")))
            }
            CanonicalRegion::TwoSided { threshold, .. } if !(threshold > 0.0) => Err(invalid(format!(
                "two-sided threshold must be positive, got {threshold}"
            ))),
            _ => Ok(()),
        }
    }

    /// The region as a level set of a smooth functional.
    pub fn region_spec(&self) -> RegionSpec {
        match *self {
            CanonicalRegion::HalfSpace { dim, level } => RegionSpec::excursion(Coordinate::new(dim, 0), level),
            CanonicalRegion::Ball { dim, radius } => RegionSpec::sub_level(Norm::new(dim), radius),
            CanonicalRegion::TwoSided { dim, threshold } => {
                RegionSpec::excursion(HalfCoordinateSq::new(dim, 0), 0.5 * threshold * threshold)
            }
        }
    }

    pub fn closed_form_gmf(&self, order: usize) -> Result<GmfVector> {
        self.validate()?;
        match *self {
            CanonicalRegion::HalfSpace { level, .. } => Ok(gmf_halfspace(level, order)),
            CanonicalRegion::Ball { dim, radius } => gmf_ball(radius, dim, order),
            CanonicalRegion::TwoSided { threshold, .. } => gmf_two_sided(threshold, order),
        }
    }

    /// Exact `γ(Tube(A, ρ))`.
    pub fn exact_tube_volume(&self, rho: f64) -> f64 {
        match *self {
            CanonicalRegion::HalfSpace { level, .. } => gaussian_tail(level - rho),
            CanonicalRegion::Ball { dim, radius } => {
                let r = radius + rho;
                gamma_lr(dim as f64 / 2.0, r * r / 2.0)
            }
            CanonicalRegion::TwoSided { threshold, .. } => {
                if rho >= threshold {
                    1.0
                } else {
                    2.0 * gaussian_tail(threshold - rho)
                }
            }
        }
    }
}

/// Options for [`gmf_surface_mc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMc {
    pub order: usize,
    pub samples: usize,
    /// Kernel bandwidth; `None` selects `1.06 σ̂_F N^{−1/5}`.
    pub bandwidth: Option<f64>,
    pub seed: u64,
    pub grad_floor: f64,
}

impl SurfaceMc {
    pub fn new(order: usize, samples: usize, seed: u64) -> Self {
        Self {
            order,
            samples,
            bandwidth: None,
            seed,
            grad_floor: DEFAULT_GRAD_FLOOR,
        }
    }

    pub fn with_bandwidth(mut self, eps: f64) -> Self {
        self.bandwidth = Some(eps);
        self
    }
}

/// Output of [`gmf_surface_mc`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEstimate {
    pub gmf: GmfVector,
    pub bandwidth: f64,
    /// Samples inside the kernel window.
    pub active: u64,
    /// Kernel-active samples dropped as degenerate points.
    pub skipped: u64,
    pub warnings: Vec<String>,
}

impl SurfaceEstimate {
    pub fn skip_fraction(&self) -> f64 {
        if self.active == 0 {
            0.0
        } else {
            self.skipped as f64 / self.active as f64
        }
    }
}

fn gaussian_point<R: Rng + ?Sized>(rng: &mut R, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Silverman bandwidth `1.06 σ̂_F N^{−1/5}` from a pilot sample.
pub fn silverman_bandwidth(functional: &dyn SmoothFunctional, samples: usize, seed: u64) -> f64 {
    let pilot = samples.clamp(2, 20_000);
    let mut rng = rng::stream(rng::derive_seed(seed, "gmf-pilot", 0));
    let mut x = vec![0.0; functional.dim()];
    let m: Moments = (0..pilot)
        .map(|_| {
            gaussian_point(&mut rng, &mut x);
            functional.value(&x)
        })
        .collect();
    1.06 * m.variance().sqrt() * (samples as f64).powf(-0.2)
}

struct ChunkAcc {
    moments: CoMoments,
    active: u64,
    skipped: u64,
}

/// Kernel-smoothed co-area estimate of `M_0..M_J` for a region.
///
/// `M̂_0` is the hit fraction; for `j ≥ 1`,
/// `M̂_j = mean[(j−1)!·c_{j−1}(X)·‖∇F(X)‖·κ_eps(F(X) − u)]`.
pub fn gmf_surface_mc(region: &RegionSpec, opts: &SurfaceMc) -> Result<SurfaceEstimate> {
    if opts.samples < MIN_SURFACE_SAMPLES {
        return Err(invalid(format!(
            "surface estimator needs at least {MIN_SURFACE_SAMPLES} samples, got {}",
            opts.samples
        )));
    }
    let eps = match opts.bandwidth {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(invalid(format!("bandwidth must be positive, got {e}"))),
        None => silverman_bandwidth(region.functional.as_ref(), opts.samples, opts.seed),
    };
    if !(eps > 0.0) {
        return Err(invalid("functional is constant under the Gaussian measure; no surface"));
    }
    let order = opts.order;
    let dim = region.dim();
    let functional = region.functional.as_ref();
    let factorials: Vec<f64> = (0..order.max(1))
        .scan(1.0, |f, j| {
            if j > 0 {
                *f *= j as f64;
            }
            Some(*f)
        })
        .collect();

    let chunks = rng::par_chunks(opts.samples, opts.seed, "gmf-surface", |rng, len| {
        let mut acc = ChunkAcc {
            moments: CoMoments::new(order + 1),
            active: 0,
            skipped: 0,
        };
        let mut x = vec![0.0; dim];
        let mut w = vec![0.0; order + 1];
        for _ in 0..len {
            gaussian_point(rng, &mut x);
            let value = functional.value(&x);
            w.iter_mut().for_each(|v| *v = 0.0);
            w[0] = if region.kind.contains(value, region.level) {
                1.0
            } else {
                0.0
            };
            let z = (value - region.level) / eps;
            if order > 0 && z.abs() <= KERNEL_CUTOFF {
                acc.active += 1;
                let grad = functional.grad(&x);
                match surface_jet(functional, region.kind, &x, grad, order - 1, opts.grad_floor) {
                    Ok((grad_norm, series)) => {
                        let base = grad_norm * gaussian_pdf(z) / eps;
                        for j in 1..=order {
                            w[j] = factorials[j - 1] * series.coeff(j - 1) * base;
                        }
                    }
                    Err(Error::DegeneratePoint { .. }) => acc.skipped += 1,
                    Err(e) => unreachable!("surface_jet only fails on degenerate points: {e}"),
                }
            }
            acc.moments.push(&w);
        }
        acc
    });

    let mut moments = CoMoments::new(order + 1);
    let (mut active, mut skipped) = (0u64, 0u64);
    for c in &chunks {
        moments.merge(&c.moments);
        active += c.active;
        skipped += c.skipped;
    }
    let covariance = moments.mean_covariance();
    let mut estimate = SurfaceEstimate {
        gmf: GmfVector {
            stderr: (0..=order).map(|j| covariance[j][j].sqrt()).collect(),
            values: moments.mean,
            covariance: Some(covariance),
        },
        bandwidth: eps,
        active,
        skipped,
        warnings: Vec::new(),
    };
    let fraction = estimate.skip_fraction();
    if fraction > SKIP_FAIL {
        return Err(Error::DegenerateSurface {
            skipped,
            active,
            fraction,
        });
    }
    if fraction > SKIP_WARN {
        estimate.warnings.push(format!(
            "{skipped} of {active} kernel-active samples were degenerate ({fraction:.3})"
        ));
    }
    Ok(estimate)
}

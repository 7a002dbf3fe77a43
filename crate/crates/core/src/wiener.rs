//! Cylindrical approximation of the Itô functional `∫₀¹ V(ω_s) dω_s`.
//!
//! With increments `y ∈ ℝⁿ` scaled so that `y ~ N(0, I_n)` (i.e.
//! `y_i = √n·ΔB_i`) and `s_m = n^{−1/2} Σ_{j≤m} y_j`,
//!
//! ```text
//! F_n(y) = n^{−1/2} Σ_i V(s_{i−1}) y_i
//! ```
//!
//! which puts the whole Gaussian-functional toolkit to work in ℝⁿ.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gmf::{gmf_halfspace, gmf_surface_mc, gmf_two_sided, GmfVector, RegionSpec, SurfaceMc};
use crate::malliavin::{SmoothFunctional, DEFAULT_GRAD_FLOOR};
use crate::rng;
use crate::series::gaussian_tail;

/// Largest time grid accepted by the convergence study.
pub const MAX_GRID: usize = 256;

/// A C⁴ potential with derivatives up to order four.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    Constant {
        value: f64,
    },
    Identity,
    Sine,
    Cube,
    /// `Σ c_k b^k`
    Polynomial {
        coeffs: Vec<f64>,
    },
}

impl Potential {
    /// `V^{(k)}(b)` for `k ≤ 4`.
    pub fn derivative(&self, k: usize, b: f64) -> f64 {
        assert!(k <= 4, "potentials carry derivatives up to order 4");
        match self {
            Potential::Constant { value } => {
                if k == 0 {
                    *value
                } else {
                    0.0
                }
            }
            Potential::Identity => match k {
                0 => b,
                1 => 1.0,
                _ => 0.0,
            },
            Potential::Sine => match k % 4 {
                0 => b.sin(),
                1 => b.cos(),
                2 => -b.sin(),
                _ => -b.cos(),
            },
            Potential::Cube => match k {
                0 => b * b * b,
                1 => 3.0 * b * b,
                2 => 6.0 * b,
                3 => 6.0,
                _ => 0.0,
            },
            Potential::Polynomial { coeffs } => {
                // Horner on the k-th derivative's coefficients
                let mut acc = 0.0;
                for (i, c) in coeffs.iter().enumerate().skip(k).rev() {
                    let falling: f64 = (i - k + 1..=i).map(|m| m as f64).product();
                    acc = acc * b + c * falling;
                }
                acc
            }
        }
    }

    pub fn value(&self, b: f64) -> f64 {
        self.derivative(0, b)
    }

    /// Polynomial growth degree (0 for bounded potentials).
    pub fn growth_degree(&self) -> usize {
        match self {
            Potential::Constant { .. } | Potential::Sine => 0,
            Potential::Identity => 1,
            Potential::Cube => 3,
            Potential::Polynomial { coeffs } => coeffs.len().saturating_sub(1),
        }
    }

    /// Largest relative mismatch between `V^{(k)}` and the central difference
    /// of `V^{(k−1)}`, over `k = 1..4` and a grid on `[−6, 6]`.
    pub fn derivative_check(&self) -> f64 {
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for k in 1..=4 {
            let grid = (0..=120).map(|i| -6.0 + 0.1 * i as f64);
            let mut scale: f64 = 1.0;
            let mut err: f64 = 0.0;
            for b in grid {
                let exact = self.derivative(k, b);
                let fd = (self.derivative(k - 1, b + h) - self.derivative(k - 1, b - h)) / (2.0 * h);
                scale = scale.max(exact.abs());
                err = err.max((fd - exact).abs());
            }
            worst = worst.max(err / scale);
        }
        worst
    }
}

/// `F_n` as a smooth functional on ℝⁿ.
#[derive(Debug, Clone)]
pub struct CylFunctional {
    n: usize,
    potential: Potential,
}

impl CylFunctional {
    pub fn new(n: usize, potential: Potential) -> Result<Self> {
        if n == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self { n, potential })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Scaled partial sums `s_0..s_{n−1}` (with `s_0 = 0`).
    fn prefix(&self, y: &[f64]) -> Vec<f64> {
        let scale = (self.n as f64).sqrt().recip();
        let mut s = Vec::with_capacity(self.n);
        let mut acc = 0.0;
        for &yi in y {
            s.push(acc * scale);
            acc += yi;
        }
        s
    }
}

impl SmoothFunctional for CylFunctional {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, y: &[f64]) -> f64 {
        let s = self.prefix(y);
        let sum: f64 = s.iter().zip(y).map(|(si, yi)| self.potential.value(*si) * yi).sum();
        sum / (self.n as f64).sqrt()
    }

    // ∂_m F = n^{−1/2} V(s_{m−1}) + n^{−1} Σ_{i>m} V'(s_{i−1}) y_i
    fn grad(&self, y: &[f64]) -> DVector<f64> {
        let n = self.n as f64;
        let s = self.prefix(y);
        let mut g = DVector::zeros(self.n);
        let mut tail = 0.0;
        for m in (0..self.n).rev() {
            g[m] = self.potential.value(s[m]) / n.sqrt() + tail / n;
            tail += self.potential.derivative(1, s[m]) * y[m];
        }
        g
    }

    // H_ml = n^{−1} V'(s_{k−1}) 1{m≠l} + n^{−3/2} Σ_{i>k} V''(s_{i−1}) y_i, k = max(m, l)
    fn hess(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.n as f64;
        let s = self.prefix(y);
        let mut diag_part = vec![0.0; self.n];
        let mut off = vec![0.0; self.n];
        let mut tail = 0.0;
        for k in (0..self.n).rev() {
            diag_part[k] = tail / n.powf(1.5);
            off[k] = self.potential.derivative(1, s[k]) / n + diag_part[k];
            tail += self.potential.derivative(2, s[k]) * y[k];
        }
        DMatrix::from_fn(self.n, self.n, |m, l| match m.cmp(&l) {
            std::cmp::Ordering::Equal => diag_part[m],
            std::cmp::Ordering::Less => off[l],
            std::cmp::Ordering::Greater => off[m],
        })
    }
}

/// GMFs of the limiting region `{(ω(1)² − 1)/2 ≥ u}` reached by `V(b) = b`.
pub fn limit_gmf_chisq(u: f64, order: usize) -> Result<GmfVector> {
    if !(u > -0.5) {
        return Err(invalid(format!(
            "level {u} ≤ −1/2 makes the limit region the whole space"
        )));
    }
    gmf_two_sided((2.0 * u + 1.0).sqrt(), order)
}

/// Closed-form GMFs of `{F_n ≥ u}` where they exist independently of `n`
/// (constant potentials) or in the `n → ∞` limit (identity potential).
pub fn reference_gmf(potential: &Potential, u: f64, order: usize) -> Result<Option<GmfVector>> {
    match potential {
        // F_n = c·Z with Z standard normal
        Potential::Constant { value } if *value != 0.0 => Ok(Some(gmf_halfspace(u / value.abs(), order))),
        Potential::Identity => limit_gmf_chisq(u, order).map(Some),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceStudy {
    pub potential: Potential,
    pub level: f64,
    pub order: usize,
    pub n_grid: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Kernel bandwidth; Silverman's rule when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub gmf: GmfVector,
    pub bandwidth: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub target: Option<GmfVector>,
}

impl ConvergenceReport {
    /// `M̂_j(n) − M_j(target)` per row, when a target exists.
    pub fn deviations(&self) -> Option<Vec<Vec<f64>>> {
        let target = self.target.as_ref()?;
        Some(
            self.rows
                .iter()
                .map(|r| {
                    r.gmf
                        .values
                        .iter()
                        .enumerate()
                        .map(|(j, v)| v - target.get(j))
                        .collect()
                })
                .collect(),
        )
    }
}

/// Surface estimates of `M_j({F_n ≥ u})` along a grid of `n`.
pub fn convergence_study(study: &ConvergenceStudy) -> Result<ConvergenceReport> {
    if study.n_grid.is_empty() || study.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n_grid must be non-empty and strictly increasing"));
    }
    if let Some(&n) = study.n_grid.iter().find(|&&n| n == 0 || n > MAX_GRID) {
        return Err(invalid(format!("grid size {n} outside 1..={MAX_GRID}")));
    }
    let target = reference_gmf(&study.potential, study.level, study.order)?;
    let mut rows = Vec::with_capacity(study.n_grid.len());
    for &n in &study.n_grid {
        let region = RegionSpec::excursion(CylFunctional::new(n, study.potential.clone())?, study.level);
        let mut opts = SurfaceMc::new(
            study.order,
            study.samples,
            rng::derive_seed(study.seed, "converge", n as u64),
        );
        opts.bandwidth = study.bandwidth;
        opts.grad_floor = DEFAULT_GRAD_FLOOR;
        let est = gmf_surface_mc(&region, &opts)?;
        rows.push(ConvergenceRow {
            n,
            gmf: est.gmf,
            bandwidth: est.bandwidth,
            warnings: est.warnings,
        });
    }
    Ok(ConvergenceReport { rows, target })
}

/// `F_n(Y_i)` for `Y_i ~ N(0, I_n)`.
pub fn sample_values(functional: &CylFunctional, samples: usize, seed: u64) -> Vec<f64> {
    let n = functional.n();
    rng::par_chunks(samples, seed, "wiener-values", |rng, len| {
        let mut y = vec![0.0; n];
        (0..len)
            .map(|_| {
                y.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                functional.value(&y)
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

/// CDF of `(Z² − 1)/2`, `Z` standard normal.
pub fn chisq_limit_cdf(t: f64) -> f64 {
    if t <= -0.5 {
        0.0
    } else {
        1.0 - 2.0 * gaussian_tail((2.0 * t + 1.0).sqrt())
    }
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Empirical `E[max_i |V^{(k)}(B_{t_i})|^p]` over a Brownian path on an
/// `n`-point grid, for each sample size in `sizes` (nested prefixes of one
/// stream, so successive values show whether the moment settles).
pub fn sup_moment(potential: &Potential, k: usize, p: f64, n: usize, sizes: &[usize], seed: u64) -> Vec<f64> {
    let total = sizes.iter().copied().max().unwrap_or(0);
    let mut rng = rng::stream(rng::derive_seed(seed, "sup-moment", k as u64));
    let step = (n as f64).recip().sqrt();
    let mut sums = Vec::with_capacity(sizes.len());
    let mut acc = 0.0;
    for draw in 1..=total {
        let mut b = 0.0f64;
        let mut sup = potential.derivative(k, 0.0).abs();
        for _ in 0..n {
            b += step * rng.sample::<f64, _>(StandardNormal);
            sup = sup.max(potential.derivative(k, b).abs());
        }
        acc += sup.powf(p);
        if sizes.contains(&draw) {
            sums.push((draw, acc / draw as f64));
        }
    }
    sizes
        .iter()
        .map(|s| sums.iter().find(|(d, _)| d == s).map_or(f64::NAN, |(_, m)| *m))
        .collect()
}

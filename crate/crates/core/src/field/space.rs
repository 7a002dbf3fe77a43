use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Flat parameter space sampled on a regular grid (`grid` points per axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ParamSpace {
    Interval { length: f64, grid: usize },
    Circle { length: f64, grid: usize },
    Torus { lengths: [f64; 2], grid: usize },
}

impl ParamSpace {
    pub fn dim(&self) -> usize {
        match self {
            ParamSpace::Interval { .. } | ParamSpace::Circle { .. } => 1,
            ParamSpace::Torus { .. } => 2,
        }
    }

    pub fn grid(&self) -> usize {
        match *self {
            ParamSpace::Interval { grid, .. } | ParamSpace::Circle { grid, .. } | ParamSpace::Torus { grid, .. } => {
                grid
            }
        }
    }

    pub fn periodic(&self) -> bool {
        !matches!(self, ParamSpace::Interval { .. })
    }

    pub fn lengths(&self) -> Vec<f64> {
        match *self {
            ParamSpace::Interval { length, .. } | ParamSpace::Circle { length, .. } => vec![length],
            ParamSpace::Torus { lengths, .. } => lengths.to_vec(),
        }
    }

    pub fn num_points(&self) -> usize {
        self.grid().pow(self.dim() as u32)
    }

    /// Grid spacing per axis. Interval grids include both end points;
    /// periodic grids identify them.
    pub fn spacing(&self) -> Vec<f64> {
        let g = self.grid() as f64;
        match self {
            ParamSpace::Interval { length, .. } => vec![length / (g - 1.0)],
            _ => self.lengths().iter().map(|l| l / g).collect(),
        }
    }

    /// Coordinates of grid point `idx`; axis 0 varies fastest.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let g = self.grid();
        let h = self.spacing();
        let mut rest = idx;
        h.iter()
            .map(|hk| {
                let i = rest % g;
                rest /= g;
                i as f64 * hk
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let min_grid = if self.periodic() { 3 } else { 2 };
        if self.grid() < min_grid {
            return Err(invalid(format!(
                "grid needs at least {min_grid} points per axis, got {}",
                self.grid()
            )));
        }
        if let Some(l) = self.lengths().iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(invalid(format!("side length must be positive and finite, got {l}")));
        }
        Ok(())
    }
}

/// One cosine wave `w·cos(ω·(x − y))` of a stationary covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub weight: f64,
    pub freq: Vec<f64>,
}

/// Unit-variance stationary covariance `C(x, y) = Σ w_k cos(ω_k·(x − y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpatialCov {
    /// `cos(ω(x − y))` in one dimension; on the torus, the average of one
    /// such wave per axis.
    Cosine {
        frequency: f64,
    },
    WaveSum {
        waves: Vec<Wave>,
    },
}

impl SpatialCov {
    pub fn waves(&self, dim: usize) -> Vec<Wave> {
        match self {
            SpatialCov::Cosine { frequency } => (0..dim)
                .map(|axis| {
                    let mut freq = vec![0.0; dim];
                    freq[axis] = *frequency;
                    Wave {
                        weight: 1.0 / dim as f64,
                        freq,
                    }
                })
                .collect(),
            SpatialCov::WaveSum { waves } => waves.clone(),
        }
    }

    pub fn covariance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.waves(x.len())
            .iter()
            .map(|w| {
                w.weight
                    * w.freq
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(o, (a, b))| o * (a - b))
                        .sum::<f64>()
                        .cos()
            })
            .sum()
    }

    /// Second spectral moment matrix `Σ w ω ωᵀ`.
    pub fn spectral_moments(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; dim]; dim];
        for w in self.waves(dim) {
            for i in 0..dim {
                for j in 0..dim {
                    m[i][j] += w.weight * w.freq[i] * w.freq[j];
                }
            }
        }
        m
    }

    /// Scalar `λ₂`; fails unless the spectral moment matrix is `λ₂·I`.
    pub fn lambda2(&self, dim: usize) -> Result<f64> {
        let m = self.spectral_moments(dim);
        let l = m[0][0];
        let scale = l.abs().max(f64::MIN_POSITIVE);
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { l } else { 0.0 };
                if (v - want).abs() > 1e-9 * scale {
                    return Err(invalid(format!("covariance is not isotropic: spectral moments {m:?}")));
                }
            }
        }
        if !(l > 0.0) {
            return Err(invalid("covariance has zero second spectral moment"));
        }
        Ok(l)
    }

    /// Checks unit variance, isotropy, periodicity and grid resolution.
    pub fn validate(&self, space: &ParamSpace) -> Result<f64> {
        space.validate()?;
        let dim = space.dim();
        let waves = self.waves(dim);
        if waves.is_empty() {
            return Err(invalid("covariance needs at least one wave"));
        }
        for w in &waves {
            if w.freq.len() != dim {
                return Err(invalid(format!(
                    "wave frequency {:?} does not match dimension {dim}",
                    w.freq
                )));
            }
            if !(w.weight > 0.0) || w.freq.iter().any(|f| !f.is_finite()) {
                return Err(invalid(format!("bad wave {w:?}")));
            }
        }
        let total: f64 = waves.iter().map(|w| w.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "wave weights sum to {total}, need 1 for unit variance"
            )));
        }
        let lambda2 = self.lambda2(dim)?;
        if space.periodic() {
            for w in &waves {
                for (f, l) in w.freq.iter().zip(space.lengths()) {
                    let cycles = f * l / (2.0 * PI);
                    if (cycles - cycles.round()).abs() > 1e-9 * (1.0 + cycles.abs()) {
                        return Err(invalid(format!(
                            "frequency {f} is not periodic on a side of length {l}"
                        )));
                    }
                }
            }
        }
        let h = space.spacing().into_iter().fold(0.0, f64::max);
        let guard = 4.0 * h * lambda2.sqrt();
        if !(guard < 1.0) {
            return Err(Error::Resolution { value: guard });
        }
        Ok(lambda2)
    }
}

/// LKCs `L_0..L_dim` of the space under the metric `λ₂·(flat)`.
pub fn lkc(space: &ParamSpace, cov: &SpatialCov) -> Result<Vec<f64>> {
    let l2 = cov.lambda2(space.dim())?;
    let s = l2.sqrt();
    Ok(match *space {
        ParamSpace::Interval { length, .. } => vec![1.0, length * s],
        ParamSpace::Circle { length, .. } => vec![0.0, length * s],
        ParamSpace::Torus { lengths, .. } => vec![0.0, 0.0, lengths[0] * lengths[1] * l2],
    })
}

/// Volume of the unit ball in ℝˡ.
pub fn unit_ball_volume(l: usize) -> f64 {
    match l {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(l - 2) * 2.0 * PI / l as f64,
    }
}

/// Flag coefficient `C(i+j, j)·ω_{i+j}/(ω_i ω_j)`.
pub fn flag_coefficient(i: usize, j: usize) -> f64 {
    let binom = (1..=j).fold(1.0, |acc, k| acc * (i + k) as f64 / k as f64);
    binom * unit_ball_volume(i + j) / (unit_ball_volume(i) * unit_ball_volume(j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn interval(length: f64, grid: usize) -> ParamSpace {
        ParamSpace::Interval { length, grid }
    }

    #[test]
    fn lkc_examples() {
        let cos1 = SpatialCov::Cosine { frequency: 1.0 };
        assert_eq!(lkc(&interval(10.0, 400), &cos1).unwrap(), vec![1.0, 10.0]);
        assert_eq!(
            lkc(
                &ParamSpace::Circle {
                    length: 2.0 * PI,
                    grid: 100
                },
                &cos1
            )
            .unwrap()[0],
            0.0
        );
        // λ₂ = 4 from two axis waves of frequency 2√2 with weight ½
        let torus = ParamSpace::Torus {
            lengths: [2.0 * PI; 2],
            grid: 100,
        };
        let cov = SpatialCov::Cosine { frequency: 8f64.sqrt() };
        assert_relative_eq!(
            lkc(&torus, &cov).unwrap()[2],
            (2.0 * PI).powi(2) * 4.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn lambda2_matches_finite_differences() {
        let h = 1e-4;
        let covs = [
            (1, SpatialCov::Cosine { frequency: 1.7 }),
            (2, SpatialCov::Cosine { frequency: 2.0 }),
            (
                2,
                SpatialCov::WaveSum {
                    waves: (0..6)
                        .map(|k| {
                            let t = PI * k as f64 / 6.0;
                            Wave {
                                weight: 1.0 / 6.0,
                                freq: vec![3.0 * t.cos(), 3.0 * t.sin()],
                            }
                        })
                        .collect(),
                },
            ),
        ];
        for (dim, cov) in covs {
            let l2 = cov.lambda2(dim).unwrap();
            let x = vec![0.3; dim];
            assert_relative_eq!(cov.covariance(&x, &x), 1.0, epsilon = 1e-15);
            for axis in 0..dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[axis] += h;
                xm[axis] -= h;
                // ∂²C/∂x∂y at the diagonal, i.e. Var of the derivative field
                let fd = (cov.covariance(&xp, &xp) - cov.covariance(&xp, &xm) - cov.covariance(&xm, &xp)
                    + cov.covariance(&xm, &xm))
                    / (4.0 * h * h);
                assert!((fd - l2).abs() < 1e-6 * (1.0 + l2), "{cov:?}: {fd} vs {l2}");
            }
        }
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let cos = SpatialCov::Cosine { frequency: 1.0 };
        assert!(matches!(
            cos.validate(&interval(10.0, 30)),
            Err(Error::Resolution { .. })
        ));
        assert!(cos.validate(&interval(10.0, 400)).is_ok());
        let circle = ParamSpace::Circle {
            length: 10.0,
            grid: 400,
        };
        assert!(cos.validate(&circle).unwrap_err().is_validation());
        let aniso = SpatialCov::WaveSum {
            waves: vec![Wave {
                weight: 1.0,
                freq: vec![1.0, 0.0],
            }],
        };
        let torus = ParamSpace::Torus {
            lengths: [2.0 * PI; 2],
            grid: 100,
        };
        assert!(aniso.validate(&torus).unwrap_err().is_validation());
        let heavy = SpatialCov::WaveSum {
            waves: vec![Wave {
                weight: 2.0,
                freq: vec![1.0],
            }],
        };
        assert!(heavy.validate(&interval(10.0, 400)).is_err());
    }

    #[test]
    fn grid_points() {
        let s = interval(2.0, 5);
        assert_eq!(s.point(4), vec![2.0]);
        let t = ParamSpace::Torus {
            lengths: [1.0, 2.0],
            grid: 4,
        };
        assert_eq!(t.point(5), vec![0.25, 0.5]);
        assert_eq!(t.num_points(), 16);
    }

    #[test]
    fn flag_coefficients() {
        for j in 0..4 {
            assert_eq!(flag_coefficient(0, j), 1.0);
        }
        assert_relative_eq!(flag_coefficient(1, 1), PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-15);
    }
}

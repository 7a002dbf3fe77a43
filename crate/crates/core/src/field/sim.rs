use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::space::{ParamSpace, SpatialCov};
use crate::error::{invalid, Error, Result};
use crate::malliavin::SmoothFunctional;
use crate::rng;
use crate::wiener::{CylFunctional, Potential};

/// Current version of the field CSV layout.
pub const FIELD_FORMAT: &str = "gkf-field-csv/1";

/// One realisation of `f(x) = Σ_i V(B^x(t_i))·ΔB^x_i` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub space: ParamSpace,
    pub time_n: usize,
    /// Row-major values, axis 0 fastest.
    pub values: Vec<f64>,
    pub seed: u64,
}

/// Basis `√w cos(ω·x)`, `√w sin(ω·x)` at every grid point (`points × 2K`),
/// so that `Σ_k e_k(x) e_k(y) = C(x, y)`.
pub(crate) fn basis(space: &ParamSpace, cov: &SpatialCov) -> Vec<Vec<f64>> {
    let waves = cov.waves(space.dim());
    (0..space.num_points())
        .map(|idx| {
            let x = space.point(idx);
            waves
                .iter()
                .flat_map(|w| {
                    let phase: f64 = w.freq.iter().zip(&x).map(|(o, xi)| o * xi).sum();
                    let a = w.weight.sqrt();
                    [a * phase.cos(), a * phase.sin()]
                })
                .collect()
        })
        .collect()
}

/// Reusable simulator; validation and basis evaluation happen once.
#[derive(Debug, Clone)]
pub struct FieldSimulator {
    space: ParamSpace,
    functional: CylFunctional,
    basis: Vec<Vec<f64>>,
}

impl FieldSimulator {
    pub fn new(space: &ParamSpace, cov: &SpatialCov, potential: &Potential, time_n: usize) -> Result<Self> {
        if time_n < 2 {
            return Err(invalid(format!("time grid needs at least 2 steps, got {time_n}")));
        }
        cov.validate(space)?;
        Ok(Self {
            space: space.clone(),
            functional: CylFunctional::new(time_n, potential.clone())?,
            basis: basis(space, cov),
        })
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    /// Simulates with `W_k` driven by a stream seeded from `seed`.
    ///
    /// Increments are scaled as `y_i(x) = √n·ΔB^x_i ~ N(0, 1)` and pushed
    /// through the same `F_n` as the surface estimator.
    pub fn simulate(&self, seed: u64) -> Result<FieldSample> {
        let n = self.functional.n();
        let xi = self.increments(seed);
        let mut y = vec![0.0; n];
        let mut values = Vec::with_capacity(self.basis.len());
        for e in &self.basis {
            y.iter_mut().for_each(|v| *v = 0.0);
            for (ek, row) in e.iter().zip(&xi) {
                for (yi, r) in y.iter_mut().zip(row) {
                    *yi += ek * r;
                }
            }
            let f = self.functional.value(&y);
            if !f.is_finite() {
                return Err(invalid(format!("non-finite field value {f}")));
            }
            values.push(f);
        }
        Ok(FieldSample {
            space: self.space.clone(),
            time_n: n,
            values,
            seed,
        })
    }

    /// `xi[k][i]`: i-th standardised increment of `W_k`.
    fn increments(&self, seed: u64) -> Vec<Vec<f64>> {
        let n = self.functional.n();
        let k = self.basis.first().map_or(0, Vec::len);
        let mut rng = rng::stream(seed);
        (0..k)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    /// `B^x(t_1..t_n)` at grid point `idx`, from the same draws as
    /// [`FieldSimulator::simulate`] with this seed.
    pub fn path(&self, seed: u64, idx: usize) -> Vec<f64> {
        let n = self.functional.n();
        let xi = self.increments(seed);
        let scale = (n as f64).sqrt().recip();
        let mut b = 0.0;
        (0..n)
            .map(|i| {
                b += scale * self.basis[idx].iter().zip(&xi).map(|(e, row)| e * row[i]).sum::<f64>();
                b
            })
            .collect()
    }
}

pub fn simulate_field(
    space: &ParamSpace,
    cov: &SpatialCov,
    potential: &Potential,
    time_n: usize,
    seed: u64,
) -> Result<FieldSample> {
    FieldSimulator::new(space, cov, potential, time_n)?.simulate(seed)
}

impl FieldSample {
    /// Writes the versioned CSV layout:
    ///
    /// ```text
    /// # gkf-field-csv/1
    /// # space=<json>
    /// # time_n=<int>
    /// # seed=<int>
    /// # levels=<comma-separated, may be empty>
    /// value            (one line per grid point, axis 0 fastest)
    /// ```
    pub fn write_csv<W: Write>(&self, mut out: W, levels: &[f64]) -> Result<()> {
        let space = serde_json::to_string(&self.space).map_err(|e| Error::Format(e.to_string()))?;
        let levels: Vec<String> = levels.iter().map(f64::to_string).collect();
        writeln!(out, "# {FIELD_FORMAT}")?;
        writeln!(out, "# space={space}")?;
        writeln!(out, "# time_n={}", self.time_n)?;
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# levels={}", levels.join(","))?;
        writeln!(out, "value")?;
        for v in &self.values {
            writeln!(out, "{v:?}")?;
        }
        Ok(())
    }

    /// Reads a sample written by [`FieldSample::write_csv`], returning the levels too.
    pub fn read_csv<R: BufRead>(input: R) -> Result<(Self, Vec<f64>)> {
        let bad = |m: &str| Error::Format(m.to_string());
        let mut lines = input.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))??;
            let body = line.strip_prefix("# ").ok_or_else(|| bad("missing header line"))?;
            if key.is_empty() {
                return Ok(body.to_string());
            }
            body.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| Error::Format(format!("expected header key {key}")))
        };
        let version = header("")?;
        if version != FIELD_FORMAT {
            return Err(Error::Format(format!("unsupported field format {version}")));
        }
        let space: ParamSpace = serde_json::from_str(&header("space")?).map_err(|e| Error::Format(e.to_string()))?;
        let time_n = header("time_n")?.parse().map_err(|_| bad("bad time_n"))?;
        let seed = header("seed")?.parse().map_err(|_| bad("bad seed"))?;
        let levels_raw = header("levels")?;
        let levels = if levels_raw.is_empty() {
            Vec::new()
        } else {
            levels_raw
                .split(',')
                .map(|s| s.parse().map_err(|_| bad("bad level")))
                .collect::<Result<_>>()?
        };
        if lines.next().transpose()?.as_deref() != Some("value") {
            return Err(bad("missing column header"));
        }
        let values: Vec<f64> = lines
            .map(|l| {
                l.map_err(Error::from)
                    .and_then(|l| l.trim().parse().map_err(|_| bad("bad value")))
            })
            .collect::<Result<_>>()?;
        if values.len() != space.num_points() {
            return Err(Error::Format(format!(
                "expected {} values, found {}",
                space.num_points(),
                values.len()
            )));
        }
        Ok((
            FieldSample {
                space,
                time_n,
                values,
                seed,
            },
            levels,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Moments;
    use std::f64::consts::PI;

    fn circle() -> ParamSpace {
        ParamSpace::Circle {
            length: 2.0 * PI,
            grid: 64,
        }
    }

    #[test]
    fn constant_potential_gives_terminal_value() {
        // telescoping: f(x) = B^x(1) = Σ_k e_k(x) W_k(1)
        let space = ParamSpace::Interval { length: 3.0, grid: 50 };
        let cov = SpatialCov::Cosine { frequency: 1.0 };
        let sim = FieldSimulator::new(&space, &cov, &Potential::Constant { value: 1.0 }, 8).unwrap();
        let s = sim.simulate(3).unwrap();
        let mut r = rng::stream(3);
        let xi: Vec<f64> = (0..16).map(|_| r.sample(StandardNormal)).collect();
        let (w1, w2) = (
            xi[..8].iter().sum::<f64>() / 8f64.sqrt(),
            xi[8..].iter().sum::<f64>() / 8f64.sqrt(),
        );
        for (idx, v) in s.values.iter().enumerate() {
            let x = space.point(idx)[0];
            assert!((v - (w1 * x.cos() + w2 * x.sin())).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_covariance_matches() {
        let space = circle();
        let cov = SpatialCov::Cosine { frequency: 2.0 };
        let sim = FieldSimulator::new(&space, &cov, &Potential::Constant { value: 1.0 }, 4).unwrap();
        let pairs = [(0, 5), (3, 40), (10, 11), (20, 52), (7, 7)];
        let mut m = vec![Moments::default(); pairs.len()];
        for rep in 0..10_000 {
            let s = sim.simulate(rng::derive_seed(5, "cov-test", rep)).unwrap();
            for (mm, (a, b)) in m.iter_mut().zip(pairs) {
                mm.push(s.values[a] * s.values[b]);
            }
        }
        for (mm, (a, b)) in m.iter().zip(pairs) {
            let want = cov.covariance(&space.point(a), &space.point(b));
            assert!(
                (mm.mean - want).abs() < 4.0 * mm.stderr(),
                "{a},{b}: {} vs {want}",
                mm.mean
            );
        }
    }

    #[test]
    fn path_variance_grows_linearly() {
        let space = circle();
        let cov = SpatialCov::Cosine { frequency: 1.0 };
        let sim = FieldSimulator::new(&space, &cov, &Potential::Constant { value: 1.0 }, 8).unwrap();
        let mut m = [Moments::default(), Moments::default(), Moments::default()];
        for rep in 0..20_000 {
            let seed = rng::derive_seed(2, "path-test", rep);
            let p = sim.path(seed, 17);
            for (mm, i) in m.iter_mut().zip([1, 3, 7]) {
                mm.push(p[i] * p[i]);
            }
            if rep == 0 {
                assert!((p[7] - sim.simulate(seed).unwrap().values[17]).abs() < 1e-12);
            }
        }
        for (mm, t) in m.iter().zip([0.25, 0.5, 1.0]) {
            assert!((mm.mean - t).abs() < 4.0 * mm.stderr(), "t={t}: {}", mm.mean);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cov = SpatialCov::Cosine { frequency: 1.0 };
        let a = simulate_field(&circle(), &cov, &Potential::Identity, 16, 99).unwrap();
        let b = simulate_field(&circle(), &cov, &Potential::Identity, 16, 99).unwrap();
        assert_eq!(a, b);
        assert!(simulate_field(&circle(), &cov, &Potential::Identity, 1, 99)
            .unwrap_err()
            .is_validation());
    }

    #[test]
    fn csv_round_trip() {
        let cov = SpatialCov::Cosine { frequency: 1.0 };
        let s = simulate_field(&circle(), &cov, &Potential::Sine, 8, 4).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &[0.5, 1.0]).unwrap();
        let (back, levels) = FieldSample::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert_eq!(levels, vec![0.5, 1.0]);
        let text = String::from_utf8(buf).unwrap().replace(FIELD_FORMAT, "gkf-field-csv/9");
        assert!(matches!(FieldSample::read_csv(text.as_bytes()), Err(Error::Format(_))));
    }
}

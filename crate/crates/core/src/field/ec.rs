use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sim::{FieldSample, FieldSimulator};
use super::space::{lkc, ParamSpace, SpatialCov};
use crate::error::{invalid, Result};
use crate::rng::{self, Moments};
use crate::wiener::Potential;

/// Euler characteristic of the vertex-thresholded cubical complex of
/// `{f ≥ u}`.
pub fn euler_char(sample: &FieldSample, u: f64) -> i64 {
    let above: Vec<bool> = sample.values.iter().map(|v| *v >= u).collect();
    let g = sample.space.grid();
    match sample.space {
        ParamSpace::Interval { .. } => (0..g).filter(|&i| above[i] && (i == 0 || !above[i - 1])).count() as i64,
        ParamSpace::Circle { .. } => {
            if above.iter().all(|a| *a) {
                return 0;
            }
            (0..g).filter(|&i| above[i] && !above[(i + g - 1) % g]).count() as i64
        }
        ParamSpace::Torus { .. } => {
            let at = |i: usize, j: usize| above[(i % g) + g * (j % g)];
            let (mut v, mut e, mut f) = (0i64, 0i64, 0i64);
            for j in 0..g {
                for i in 0..g {
                    if !at(i, j) {
                        continue;
                    }
                    v += 1;
                    let right = at(i + 1, j);
                    let up = at(i, j + 1);
                    e += right as i64 + up as i64;
                    f += (right && up && at(i + 1, j + 1)) as i64;
                }
            }
            v - e + f
        }
    }
}

/// Fraction of grid points with `f ≥ u`.
pub fn volume_fraction(sample: &FieldSample, u: f64) -> f64 {
    sample.values.iter().filter(|v| **v >= u).count() as f64 / sample.values.len() as f64
}

/// Half the flat length of the level curve `{f = u}` on a torus, by
/// marching squares with linear interpolation; `None` in one dimension.
pub fn half_boundary_length(sample: &FieldSample, u: f64) -> Option<f64> {
    let ParamSpace::Torus { .. } = sample.space else {
        return None;
    };
    let g = sample.space.grid();
    let h = sample.space.spacing();
    let val = |i: usize, j: usize| sample.values[(i % g) + g * (j % g)] - u;
    let cross = |p: f64, q: f64| -> Option<f64> { ((p >= 0.0) != (q >= 0.0)).then(|| p / (p - q)) };
    let mut total = 0.0;
    for j in 0..g {
        for i in 0..g {
            let (a, b, c, d) = (val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1));
            // crossing points on bottom, right, top, left edges (cell units)
            let pts = [
                cross(a, b).map(|t| (t, 0.0)),
                cross(b, c).map(|t| (1.0, t)),
                cross(d, c).map(|t| (t, 1.0)),
                cross(a, d).map(|t| (0.0, t)),
            ];
            let len = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0) * h[0]).hypot((p.1 - q.1) * h[1]);
            let found: Vec<(f64, f64)> = pts.iter().flatten().copied().collect();
            total += match found.len() {
                2 => len(found[0], found[1]),
                4 => {
                    let p = pts.map(Option::unwrap);
                    let centre_above = (a + b + c + d) >= 0.0;
                    if centre_above == (a >= 0.0) {
                        len(p[0], p[1]) + len(p[2], p[3])
                    } else {
                        len(p[0], p[3]) + len(p[1], p[2])
                    }
                }
                _ => 0.0,
            };
        }
    }
    Some(0.5 * total)
}

/// Mean of a per-replication statistic; `stderr = sd/√reps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: u64,
}

impl From<&Moments> for EcEstimate {
    fn from(m: &Moments) -> Self {
        Self {
            mean: m.mean,
            stderr: m.stderr(),
            reps: m.count,
        }
    }
}

/// Per-level excursion statistics in the induced metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionStats {
    pub level: f64,
    /// `L_0(A_u)`
    pub ec: EcEstimate,
    /// `L_dim(A_u)` = volume fraction × `L_dim(M)`
    pub top: EcEstimate,
    /// `L_1(A_u)` = half boundary length × `√λ₂` (torus only)
    pub half_boundary: Option<EcEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldStudy {
    pub space: ParamSpace,
    pub cov: SpatialCov,
    pub potential: Potential,
    pub time_n: usize,
    pub reps: usize,
    pub seed: u64,
}

pub const MIN_REPS: usize = 100;

/// Replicated excursion statistics at every level; replication `r` uses
/// its own substream, so results do not depend on the worker count.
pub fn excursion_mc(study: &FieldStudy, levels: &[f64]) -> Result<Vec<ExcursionStats>> {
    if study.reps < MIN_REPS {
        return Err(invalid(format!(
            "need at least {MIN_REPS} replications, got {}",
            study.reps
        )));
    }
    let sim = FieldSimulator::new(&study.space, &study.cov, &study.potential, study.time_n)?;
    let l = lkc(&study.space, &study.cov)?;
    let top_lkc = *l.last().unwrap();
    let scale = study.cov.lambda2(study.space.dim())?.sqrt();
    let torus = matches!(study.space, ParamSpace::Torus { .. });
    let per_rep: Vec<Vec<[f64; 3]>> = (0..study.reps as u64)
        .into_par_iter()
        .map(|r| {
            let s = sim.simulate(rng::derive_seed(study.seed, "field-rep", r))?;
            Ok(levels
                .iter()
                .map(|&u| {
                    let hb = half_boundary_length(&s, u).map_or(0.0, |b| b * scale);
                    [euler_char(&s, u) as f64, volume_fraction(&s, u) * top_lkc, hb]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let mut m = [Moments::default(); 3];
            for rep in &per_rep {
                for (mm, v) in m.iter_mut().zip(rep[k]) {
                    mm.push(v);
                }
            }
            ExcursionStats {
                level,
                ec: (&m[0]).into(),
                top: (&m[1]).into(),
                half_boundary: torus.then(|| (&m[2]).into()),
            }
        })
        .collect())
}

/// Mean Euler characteristic of `{f ≥ u}` at each level.
pub fn ec_mc(study: &FieldStudy, levels: &[f64]) -> Result<Vec<EcEstimate>> {
    Ok(excursion_mc(study, levels)?.into_iter().map(|s| s.ec).collect())
}

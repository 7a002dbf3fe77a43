use std::collections::BTreeMap;
use std::time::Instant;

use gkf_core::field::{self, FieldStudy, ParamSpace, RhsStudy};
use gkf_core::gmf::{gmf_surface_mc, SurfaceMc};
use gkf_core::rng::derive_seed;
use gkf_core::tube::{self, DistanceOracle};
use gkf_core::wiener::{self, ConvergenceStudy};
use serde::{Deserialize, Serialize};

use crate::config::{DistanceMethod, Experiment, ExperimentConfig, FieldExperiment};
use crate::error::HarnessError;

/// One estimated quantity at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub quantity: String,
    pub point: BTreeMap<String, f64>,
    pub value: f64,
    pub stderr: f64,
    #[serde(default)]
    pub target: Option<f64>,
}

impl Estimate {
    fn new(quantity: &str, point: &[(&str, f64)], value: f64, stderr: f64, target: Option<f64>) -> Self {
        Self {
            quantity: quantity.to_string(),
            point: point.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            stderr,
            target,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Kernel-active surface samples.
    pub active: u64,
    /// Samples skipped at degenerate points.
    pub skipped: u64,
    /// Distance-solver failures.
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub experiment: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_clock_secs: f64,
    pub counters: Counters,
    pub estimates: Vec<Estimate>,
    pub warnings: Vec<String>,
}

impl RunResult {
    /// Equality of every deterministic field (all but wall-clock time).
    pub fn same_payload(&self, other: &RunResult) -> bool {
        let strip = |r: &RunResult| RunResult {
            wall_clock_secs: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    pub fn find(&self, quantity: &str) -> impl Iterator<Item = &Estimate> {
        let q = quantity.to_string();
        self.estimates.iter().filter(move |e| e.quantity == q)
    }
}

/// Runs an experiment inside a dedicated pool of `config.workers` threads.
pub fn run(config: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Io(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mut out = Outcome::default();
    pool.install(|| dispatch(config, &mut out))
        .map_err(|e| e.context(config.experiment.name()))?;
    Ok(RunResult {
        experiment: config.experiment.name().to_string(),
        config_hash: config.hash(),
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        counters: out.counters,
        estimates: out.estimates,
        warnings: out.warnings,
    })
}

#[derive(Default)]
struct Outcome {
    counters: Counters,
    estimates: Vec<Estimate>,
    warnings: Vec<String>,
}

fn dispatch(config: &ExperimentConfig, out: &mut Outcome) -> Result<(), HarnessError> {
    let seed = config.seed;
    match &config.experiment {
        Experiment::Gmf {
            region,
            order,
            samples,
            bandwidth,
        } => {
            region.validate()?;
            let target = region.closed_form_gmf(*order)?;
            let mut opts = SurfaceMc::new(*order, *samples, seed);
            opts.bandwidth = *bandwidth;
            let est = gmf_surface_mc(&region.region_spec(), &opts)?;
            out.counters.active = est.active;
            out.counters.skipped = est.skipped;
            out.warnings = est.warnings;
            for j in 0..=*order {
                out.estimates.push(Estimate::new(
                    "M",
                    &[("j", j as f64)],
                    est.gmf.values[j],
                    est.gmf.stderr[j],
                    Some(target.values[j]),
                ));
            }
            out.estimates
                .push(Estimate::new("bandwidth", &[], est.bandwidth, 0.0, None));
        }
        Experiment::Tube {
            region,
            order,
            samples,
            rho_grid,
            method,
        } => {
            let oracle = match method {
                DistanceMethod::ClosedForm => DistanceOracle::closed_form(*region)?,
                DistanceMethod::Projection => {
                    region.validate()?;
                    DistanceOracle::projection(region.region_spec(), tube::DEFAULT_TOL, seed)?
                }
            };
            let gmf = region.closed_form_gmf(*order)?;
            let report = tube::validate_tube_series(&oracle, &gmf, rho_grid, *samples, seed)?;
            for p in &report.points {
                let at = [("rho", p.rho)];
                out.estimates
                    .push(Estimate::new("tube", &at, p.measured, p.stderr, Some(p.series)));
                out.estimates
                    .push(Estimate::new("exact", &at, region.exact_tube_volume(p.rho), 0.0, None));
            }
            if let Some(slope) = report.loglog_slope {
                out.estimates.push(Estimate::new("loglog_slope", &[], slope, 0.0, None));
            }
        }
        Experiment::Converge {
            potential,
            level,
            order,
            n_grid,
            samples,
            bandwidth,
        } => {
            let report = wiener::convergence_study(&ConvergenceStudy {
                potential: potential.clone(),
                level: *level,
                order: *order,
                n_grid: n_grid.clone(),
                samples: *samples,
                seed,
                bandwidth: *bandwidth,
            })?;
            for row in &report.rows {
                for j in 0..=*order {
                    out.estimates.push(Estimate::new(
                        "M",
                        &[("n", row.n as f64), ("j", j as f64)],
                        row.gmf.values[j],
                        row.gmf.stderr[j],
                        report.target.as_ref().map(|t| t.values[j]),
                    ));
                }
                out.warnings
                    .extend(row.warnings.iter().map(|w| format!("n={}: {w}", row.n)));
            }
        }
        Experiment::Gkf(f) => field_experiment(f, None, seed, out)?,
        Experiment::Crofton { index, field } => field_experiment(field, Some(*index), seed, out)?,
    }
    Ok(())
}

fn field_experiment(
    f: &FieldExperiment,
    index: Option<usize>,
    seed: u64,
    out: &mut Outcome,
) -> Result<(), HarnessError> {
    let dim = f.space.dim();
    if let Some(i) = index {
        let has_lhs = i == 0 || i == dim || (i == 1 && matches!(f.space, ParamSpace::Torus { .. }));
        if !has_lhs {
            return Err(HarnessError::Validation(format!(
                "no direct estimator for L_{i} on this space"
            )));
        }
    }
    let study = FieldStudy {
        space: f.space.clone(),
        cov: f.cov.clone(),
        potential: f.potential.clone(),
        time_n: f.time_n,
        reps: f.reps,
        seed: derive_seed(seed, "field", 0),
    };
    let stats = field::excursion_mc(&study, &f.u_levels)?;
    for (k, (s, &u)) in stats.iter().zip(&f.u_levels).enumerate() {
        let rhs_study = RhsStudy {
            space: f.space.clone(),
            cov: f.cov.clone(),
            potential: f.potential.clone(),
            level: u,
            n: f.time_n,
            order: f.order,
            samples: f.samples,
            seed: derive_seed(seed, "rhs", k as u64),
            bandwidth: f.bandwidth,
        };
        let (lhs, rhs, at) = match index {
            None => (s.ec, field::gkf_rhs(&rhs_study)?, vec![("u", u)]),
            Some(i) => {
                let lhs = if i == 0 {
                    s.ec
                } else if i == dim {
                    s.top
                } else {
                    s.half_boundary.expect("checked above")
                };
                (
                    lhs,
                    field::crofton_lkc_rhs(i, &rhs_study)?,
                    vec![("u", u), ("i", i as f64)],
                )
            }
        };
        out.counters.active += rhs.surface.active;
        out.counters.skipped += rhs.surface.skipped;
        out.warnings
            .extend(rhs.surface.warnings.iter().map(|w| format!("u={u}: {w}")));
        out.estimates
            .push(Estimate::new("lhs", &at, lhs.mean, lhs.stderr, None));
        out.estimates
            .push(Estimate::new("rhs", &at, rhs.value, rhs.stderr, None));
    }
    Ok(())
}

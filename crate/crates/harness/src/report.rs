use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::HarnessError;
use crate::run::{Estimate, RunResult};

/// Files written by [`report`] and the summary text.
#[derive(Debug, Default)]
pub struct Report {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

fn at(e: &Estimate, key: &str) -> f64 {
    e.point.get(key).copied().unwrap_or(f64::NAN)
}

fn z_score(lhs: &Estimate, rhs: &Estimate) -> f64 {
    (lhs.value - rhs.value) / lhs.stderr.hypot(rhs.stderr)
}

fn stem(r: &RunResult) -> String {
    format!("{}-{}", r.experiment, &r.config_hash[..12.min(r.config_hash.len())])
}

/// Writes one plot-ready CSV per result plus `summary.txt` into `out`.
/// An empty list writes nothing.
pub fn report(results: &[RunResult], out: &Path) -> Result<Report, HarnessError> {
    let mut rep = Report::default();
    if results.is_empty() {
        return Ok(rep);
    }
    std::fs::create_dir_all(out)?;
    for r in results {
        let path = out.join(format!("{}.csv", stem(r)));
        let mut w = csv::Writer::from_path(&path)?;
        let line = match r.experiment.as_str() {
            "gmf" => {
                w.write_record(["j", "estimate", "stderr", "target"])?;
                let mut worst: f64 = 0.0;
                for e in r.find("M") {
                    let t = e.target.unwrap_or(f64::NAN);
                    w.serialize((at(e, "j") as usize, e.value, e.stderr, t))?;
                    worst = worst.max((e.value - t).abs() / e.stderr.max(f64::MIN_POSITIVE));
                }
                format!("max |M̂_j − M_j|/stderr = {worst:.2}")
            }
            "tube" => {
                w.write_record(["rho", "measured", "stderr", "series", "residual", "exact"])?;
                let exact: Vec<&Estimate> = r.find("exact").collect();
                let mut max_r: f64 = 0.0;
                for (e, x) in r.find("tube").zip(exact) {
                    let s = e.target.unwrap_or(f64::NAN);
                    w.serialize((at(e, "rho"), e.value, e.stderr, s, e.value - s, x.value))?;
                    max_r = max_r.max((e.value - s).abs());
                }
                format!("max |residual| = {max_r:.3e}")
            }
            "converge" => {
                w.write_record(["n", "j", "estimate", "stderr", "target"])?;
                for e in r.find("M") {
                    w.serialize((at(e, "n") as usize, at(e, "j") as usize, e.value, e.stderr, e.target))?;
                }
                format!("{} rows", r.find("M").count())
            }
            "gkf" | "crofton" => {
                w.write_record(["u", "i", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "z"])?;
                let mut worst: f64 = 0.0;
                for (l, h) in r.find("lhs").zip(r.find("rhs")) {
                    let i = l.point.get("i").map_or(0, |v| *v as usize);
                    let z = z_score(l, h);
                    w.serialize((at(l, "u"), i, l.value, l.stderr, h.value, h.stderr, z))?;
                    worst = worst.max(z.abs());
                }
                format!("max |z| = {worst:.2}")
            }
            other => {
                return Err(HarnessError::Validation(format!(
                    "unknown experiment {other} in results"
                )))
            }
        };
        w.flush()?;
        let _ = writeln!(
            rep.summary,
            "{} seed={} {} ({:.1}s, {} warnings) -> {}",
            stem(r),
            r.config.seed,
            line,
            r.wall_clock_secs,
            r.warnings.len(),
            path.display()
        );
        rep.files.push(path);
    }
    let summary = out.join("summary.txt");
    std::fs::write(&summary, &rep.summary)?;
    rep.files.push(summary);
    Ok(rep)
}

/// Writes the full result as JSON next to the CSVs.
pub fn write_result(result: &RunResult, out: &Path) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{}.json", stem(result)));
    let text = serde_json::to_string_pretty(result).map_err(|e| HarnessError::Io(e.to_string()))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn read_result(path: &Path) -> Result<RunResult, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))
}

//! Reproducible studies on top of the solver and the simulators, and the
//! command-line front end that drives them.
//!
//! Each `run_*` function returns its report and, given an output directory,
//! writes plot-ready CSV tables plus JSON sidecars there.

pub mod cli;
mod studies;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::Grid;
use crate::problem::Problem;

pub use studies::{
    run_audit, run_check_convexity, run_coupling_study, run_optimality_gap, run_rate_study,
    run_simulate, run_solve, ConvexityRequest, CouplingReport, CouplingRow, GapReport, RateReport,
    SimulateOutcome, SolveOutcome,
};

/// Grid overrides in the form `nx=..,nt=..,box=lo:hi[,periodic]`. Missing
/// entries fall back to the grid carried by the config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridFlags {
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub periodic: Option<bool>,
}

fn flag_error(message: impl Into<String>) -> Error {
    Error::config("--grid", message)
}

impl FromStr for GridFlags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut g = GridFlags::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part.split_once('=').unwrap_or((part, ""));
            let num = |v: &str| v.parse::<f64>().map_err(|_| flag_error(format!("bad number `{v}`")));
            match key {
                "nx" => g.nx = Some(val.parse().map_err(|_| flag_error(format!("bad nx `{val}`")))?),
                "nt" => g.nt = Some(val.parse().map_err(|_| flag_error(format!("bad nt `{val}`")))?),
                "box" => {
                    let (lo, hi) = val
                        .split_once(':')
                        .ok_or_else(|| flag_error("box must be lo:hi"))?;
                    g.lo = Some(num(lo)?);
                    g.hi = Some(num(hi)?);
                }
                "periodic" => {
                    g.periodic = Some(match val {
                        "" | "true" | "1" => true,
                        "false" | "0" => false,
                        _ => return Err(flag_error(format!("bad periodic `{val}`"))),
                    })
                }
                _ => return Err(flag_error(format!("unknown key `{key}`"))),
            }
        }
        Ok(g)
    }
}

/// Grid over `[start_time, horizon]` from the config's grid with `flags`
/// applied on top.
pub fn resolve_grid(p: &Problem, flags: &GridFlags) -> Result<Grid> {
    let base = p.grid.as_ref();
    fn need<T>(v: Option<T>, name: &str) -> Result<T> {
        v.ok_or_else(|| Error::config("grid", format!("no {name}: pass --grid or add a grid to the config")))
    }
    let nx = need(flags.nx.or(base.map(|g| g.nx)), "nx")?;
    let nt = need(flags.nt.or(base.map(|g| g.nt)), "nt")?;
    let lo = need(flags.lo.or(base.map(|g| g.lo)), "box")?;
    let hi = need(flags.hi.or(base.map(|g| g.hi)), "box")?;
    let periodic = flags.periodic.or(base.map(|g| g.periodic)).unwrap_or(false);
    Grid::uniform(p.dim, lo, hi, nx, nt, p.start_time, p.horizon, periodic)
        .map_err(|e| flag_error(e.to_string()))
}

pub(crate) fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub(crate) fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Contents of `run.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunInfo {
    pub subcommand: String,
    pub config_path: String,
    pub config: serde_json::Value,
    pub flags: serde_json::Value,
    pub seed: u64,
    pub delta: f64,
    pub grid: Option<Grid>,
    pub version: &'static str,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunInfo {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(dir, "run.json", self)
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

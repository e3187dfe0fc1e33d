//! `fbsde-control` command line.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 stability refusal, 4 inconclusive study. Failures print an error JSON
//! on standard error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::{
    resolve_grid, run_audit, run_check_convexity, run_coupling_study, run_optimality_gap,
    run_rate_study, run_simulate, run_solve, ConvexityRequest, GridFlags, RunInfo,
};
use crate::convexity::Assumption;
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::sim::SimConfig;

#[derive(Debug, Parser)]
#[command(name = "fbsde-control", version, about = "Mollified HJB solves, FBSDE simulation and convexity audits")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Problem config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Regularisation level.
    #[arg(long, global = true, default_value_t = 0.1)]
    pub delta: f64,
    /// Grid overrides: nx=..,nt=..,box=lo:hi[,periodic]
    #[arg(long, global = true)]
    pub grid: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum AssumptionArg {
    H1,
    H2,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Solve the regularised HJB equation and extract the feedback policy.
    Solve,
    /// Simulate feedback-controlled paths and estimate the cost.
    Simulate {
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Paths written to paths.csv.
        #[arg(long, default_value_t = 100)]
        max_paths: usize,
        #[arg(long)]
        antithetic: bool,
    },
    /// |V_delta - V_0| over a delta ladder with a log-log slope.
    RateStudy {
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
        deltas: Vec<f64>,
    },
    /// Sup-moments between the regularised and the auxiliary systems.
    CouplingStudy {
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Feedback policy against seeded random challengers.
    OptimalityGap {
        #[arg(long, default_value_t = 20)]
        challengers: usize,
    },
    /// Pointwise audit of (H1) or (H2).
    CheckConvexity {
        #[arg(long, value_enum)]
        assumption: AssumptionArg,
        /// x=..,y=.. (use x=a:b in two dimensions)
        #[arg(long)]
        probe: String,
        /// Ball radius for (H1); default lip_x(V) * M.
        #[arg(long = "K")]
        radius_k: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Pairs for (H2), w-draws for (H1).
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Sample the standing bounds and Lipschitz conditions.
    Audit {
        #[arg(long, default_value_t = 4000)]
        samples: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate { .. } => "simulate",
            Command::RateStudy { .. } => "rate-study",
            Command::CouplingStudy { .. } => "coupling-study",
            Command::OptimalityGap { .. } => "optimality-gap",
            Command::CheckConvexity { .. } => "check-convexity",
            Command::Audit { .. } => "audit",
        }
    }
}

fn parse_probe(s: &str, dim: usize) -> Result<(Vec<f64>, f64)> {
    let bad = |m: &str| Error::config("--probe", m.to_string());
    let (mut x, mut y) = (None, 0.0);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('=') {
            Some(("x", v)) => {
                x = Some(
                    v.split(':')
                        .map(|c| c.parse::<f64>().map_err(|_| bad("bad x coordinate")))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            Some(("y", v)) => y = v.parse().map_err(|_| bad("bad y"))?,
            _ => return Err(bad("expected x=..,y=..")),
        }
    }
    let x = x.ok_or_else(|| bad("missing x"))?;
    if x.len() != dim {
        return Err(bad(&format!("x needs {dim} coordinates")));
    }
    Ok((x, y))
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn report_error(e: &Error) -> i32 {
    let code = e.exit_code();
    let body = ErrorJson {
        error: e.kind(),
        message: e.to_string(),
        exit_code: code,
    };
    eprintln!("{}", serde_json::to_string(&body).expect("serializable"));
    code
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

/// Parse `args` (including the program name) and run; returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            return report_error(&Error::config("<arguments>", e.to_string().trim().to_string()));
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let g = &cli.global;
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config", "missing --config PATH"))?;
    let p = Problem::load(path)?;
    let flags: GridFlags = g.grid.as_deref().unwrap_or("").parse()?;
    let out: &Path = &g.out;
    let mut code = 0;

    let grid = match &cli.command {
        Command::Audit { .. } | Command::CheckConvexity { .. } => resolve_grid(&p, &flags).ok(),
        _ => Some(resolve_grid(&p, &flags)?),
    };
    let need_grid = || grid.as_ref().expect("resolved above");

    match &cli.command {
        Command::Solve => {
            let s = run_solve(&p, g.delta, need_grid(), Some(out))?;
            println!("{}", s.value);
        }
        Command::Simulate {
            n_paths,
            dt,
            max_paths,
            antithetic,
        } => {
            let mut cfg = SimConfig::new(*n_paths, *dt, g.seed, g.delta);
            cfg.antithetic = *antithetic;
            print_json(&run_simulate(&p, need_grid(), &cfg, *max_paths, Some(out))?)?;
        }
        Command::RateStudy { deltas } => {
            let r = run_rate_study(&p, deltas, need_grid(), Some(out))?;
            print_json(&r)?;
            if r.inconclusive {
                code = report_error(&Error::Inconclusive(format!(
                    "gaps indistinguishable from grid error (floor {:.3e})",
                    r.grid_error_floor
                )));
            }
        }
        Command::CouplingStudy { deltas, n_paths, dt } => {
            let r = run_coupling_study(&p, deltas, need_grid(), *n_paths, *dt, g.seed, Some(out))?;
            print_json(&r)?;
        }
        Command::OptimalityGap { challengers } => {
            let r = run_optimality_gap(&p, g.delta, need_grid(), *challengers, g.seed, Some(out))?;
            print_json(&r)?;
        }
        Command::CheckConvexity {
            assumption,
            probe,
            radius_k,
            tol,
            samples,
        } => {
            let (x, y) = parse_probe(probe, p.dim)?;
            let req = ConvexityRequest {
                assumption: match assumption {
                    AssumptionArg::H1 => Assumption::H1,
                    AssumptionArg::H2 => Assumption::H2,
                },
                x,
                y,
                radius_k: *radius_k,
                tol: *tol,
                samples: *samples,
                seed: g.seed,
                delta: g.delta,
            };
            print_json(&run_check_convexity(&p, &req, grid.as_ref(), Some(out))?)?;
        }
        Command::Audit { samples } => {
            print_json(&run_audit(&p, *samples, g.seed, Some(out))?)?;
        }
    }

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    RunInfo {
        subcommand: cli.command.name().to_string(),
        config_path: path.display().to_string(),
        config: serde_json::to_value(p.config())?,
        flags: serde_json::json!({ "global": g, "command": &cli.command }),
        seed: g.seed,
        delta: g.delta,
        grid,
        version: env!("CARGO_PKG_VERSION"),
        timestamp,
    }
    .write(out)?;
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_parsing() {
        assert_eq!(parse_probe("x=0.5,y=-1", 1).unwrap(), (vec![0.5], -1.0));
        assert_eq!(parse_probe("x=1:2", 2).unwrap(), (vec![1.0, 2.0], 0.0));
        assert!(parse_probe("x=1:2", 1).is_err());
        assert!(parse_probe("y=1", 1).is_err());
    }

    #[test]
    fn missing_config_is_a_config_error() {
        let code = run(["fbsde-control", "solve", "--config", "/nonexistent/cfg.json"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn unknown_flag_is_a_config_error() {
        assert_eq!(run(["fbsde-control", "solve", "--bogus"]), 2);
    }
}

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{create, log_log_slope, write_json};
use crate::convexity::{check_h1, check_h2, Assumption, ConvexityReport};
use crate::error::{Error, Result};
use crate::hjb::{solve, solve_initial_value, FeedbackPolicy, Grid, ValueField};
use crate::mollifier::MollifiedProblem;
use crate::problem::{audit_assumptions, AssumptionReport, Coefficients, Problem};
use crate::sim::{
    check_value_identity, evaluate_cost_frozen, evaluate_cost_mc, mean_and_se, simulate_auxiliary,
    simulate_forward, sup_sq_difference, sup_sq_difference_y, BasisSpec, Control, CostEstimate,
    IdentityReport, SimConfig,
};

/// Roughly 50 exported time levels per field.
fn export_stride(nt: usize) -> usize {
    (nt / 50).max(1)
}

fn start_value(p: &Problem, field: &ValueField) -> Result<f64> {
    Ok(field.interpolate(p.start_time, &p.start_state)?.value)
}

pub struct SolveOutcome {
    /// `V_delta(t0, x0)`.
    pub value: f64,
    pub field: ValueField,
    pub policy: FeedbackPolicy,
}

/// `run_solve`: value field and feedback policy, exported as
/// `value.csv`/`value.json` and `policy.csv`/`policy.json`.
pub fn run_solve(p: &Problem, delta: f64, grid: &Grid, out: Option<&Path>) -> Result<SolveOutcome> {
    let mp = MollifiedProblem::at(p, delta)?;
    let (field, policy) = solve(&mp, grid)?;
    let value = start_value(p, &field)?;
    if let Some(dir) = out {
        let stride = export_stride(grid.nt);
        let mut w = create(dir, "value.csv")?;
        field.write_csv(&mut w, stride)?;
        w.flush()?;
        let mut side = field.sidecar();
        side["value_at_start"] = value.into();
        write_json(dir, "value.json", &side)?;
        let mut w = create(dir, "policy.csv")?;
        policy.write_csv(&mut w, stride)?;
        w.flush()?;
        write_json(dir, "policy.json", &policy.sidecar())?;
    }
    Ok(SolveOutcome { value, field, policy })
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateOutcome {
    pub value_pde: f64,
    pub cost: CostEstimate,
    pub identity: IdentityReport,
    pub paths: serde_json::Value,
}

/// `simulate`: feedback-controlled paths of the regularised system with
/// the value process attached, the regression estimate of the cost and the
/// backward-equation residual. Writes `paths.csv`, `paths.json`,
/// `cost.json` and `identity.json`.
pub fn run_simulate(
    p: &Problem,
    grid: &Grid,
    cfg: &SimConfig,
    max_paths: usize,
    out: Option<&Path>,
) -> Result<SimulateOutcome> {
    let mp = MollifiedProblem::at(p, cfg.delta)?;
    let (field, policy) = solve(&mp, grid)?;
    let bundle = simulate_forward(&mp, Control::Feedback(&policy), cfg, Some(&field))?;
    let identity = check_value_identity(&mp, &field, &bundle)?;
    let cost = evaluate_cost_mc(&mp, Control::Feedback(&policy), cfg, &BasisSpec::default())?;
    let outcome = SimulateOutcome {
        value_pde: start_value(p, &field)?,
        cost,
        identity,
        paths: bundle.metadata(),
    };
    if let Some(dir) = out {
        let mut w = create(dir, "paths.csv")?;
        bundle.write_csv(&mut w, max_paths)?;
        w.flush()?;
        write_json(dir, "paths.json", &outcome.paths)?;
        write_json(dir, "cost.json", &outcome.cost)?;
        write_json(dir, "identity.json", &outcome.identity)?;
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub deltas: Vec<f64>,
    /// `V_delta(t0, x0)` per delta.
    pub values: Vec<f64>,
    /// `V_0(t0, x0)` on the same grid.
    pub reference: f64,
    pub gaps: Vec<f64>,
    /// Whether each gap clears ten times the grid-error floor.
    pub retained: Vec<bool>,
    pub fitted_slope: Option<f64>,
    /// Change of the smallest-delta gap under one refinement step.
    pub grid_error_floor: f64,
    pub inconclusive: bool,
    pub grid: Grid,
    pub refined_grid: Grid,
}

fn check_ladder(deltas: &[f64], allow_zero: bool) -> Result<()> {
    if deltas.iter().any(|d| !(d.is_finite() && *d <= 1.0 && (*d > 0.0 || (allow_zero && *d == 0.0)))) {
        return Err(Error::invalid("deltas", "every delta must lie in (0, 1]"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("deltas", "ladder must be strictly decreasing"));
    }
    Ok(())
}

/// Relative level below which value differences are rounding noise.
const ROUNDOFF: f64 = 1e-10;

/// `run_rate_study`: `|V_delta - V_0|` at the start point over a delta
/// ladder, with `V_0` the unmollified solve on the same grid.
///
/// The grid-error floor is the change of the smallest-delta gap when the
/// grid is refined once, but never below rounding level. Gaps within ten
/// times the floor are left out of the log-log fit; fewer than two
/// remaining points make the study inconclusive. Writes `rate.csv` and `rate.json`.
pub fn run_rate_study(p: &Problem, deltas: &[f64], grid: &Grid, out: Option<&Path>) -> Result<RateReport> {
    if deltas.len() < 3 {
        return Err(Error::invalid("deltas", "ladder too short: need at least 3 deltas"));
    }
    check_ladder(deltas, false)?;
    let x0 = &p.start_state;
    let at = |delta: f64, g: &Grid| -> Result<f64> {
        solve_initial_value(&MollifiedProblem::at(p, delta)?, g, x0)
    };
    let reference = at(0.0, grid)?;
    let values = deltas.iter().map(|&d| at(d, grid)).collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = values.iter().map(|v| (v - reference).abs()).collect();

    let refined = grid.refined(2);
    let dmin = *deltas.last().unwrap();
    let fine_gap = (at(dmin, &refined)? - at(0.0, &refined)?).abs();
    let floor = (fine_gap - gaps[gaps.len() - 1])
        .abs()
        .max(ROUNDOFF * (1.0 + reference.abs()));

    let retained: Vec<bool> = gaps.iter().map(|&g| g > 10.0 * floor).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = deltas
        .iter()
        .zip(&gaps)
        .zip(&retained)
        .filter(|(_, &keep)| keep)
        .map(|((d, g), _)| (*d, *g))
        .unzip();
    let fitted_slope = if xs.len() >= 2 { log_log_slope(&xs, &ys) } else { None };
    let report = RateReport {
        deltas: deltas.to_vec(),
        values,
        reference,
        gaps,
        retained,
        fitted_slope,
        grid_error_floor: floor,
        inconclusive: fitted_slope.is_none(),
        grid: grid.clone(),
        refined_grid: refined,
    };
    if let Some(dir) = out {
        let mut w = create(dir, "rate.csv")?;
        writeln!(w, "delta,value,gap")?;
        for i in 0..deltas.len() {
            writeln!(w, "{},{},{}", report.deltas[i], report.values[i], report.gaps[i])?;
        }
        w.flush()?;
        write_json(dir, "rate.json", &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Challenger {
    pub policy_seed: u64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `J_delta(u_delta)` from the frozen-policy equation.
    pub optimal_value: f64,
    /// `V_delta(t0, x0)` from the solve.
    pub hjb_value: f64,
    /// Largest nodewise `|J_delta(u_delta) - V_delta|` over the grid.
    pub max_nodewise_difference: f64,
    pub challenger_values: Vec<Challenger>,
    /// `min_u J(u) - J(u_delta)`; `None` (null) without challengers.
    pub min_gap: Option<f64>,
}

/// `run_optimality_gap`: the feedback policy against `n_challengers`
/// uniformly random policies seeded `seed, seed + 1, ...`. Writes
/// `gap.csv` and `gap.json`.
pub fn run_optimality_gap(
    p: &Problem,
    delta: f64,
    grid: &Grid,
    n_challengers: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<GapReport> {
    let mp = MollifiedProblem::at(p, delta)?;
    let (field, policy) = solve(&mp, grid)?;
    let (frozen, est) = evaluate_cost_frozen(&mp, &policy, grid)?;
    let mut max_diff = 0.0f64;
    for level in 0..=grid.nt {
        for (a, b) in frozen.level(level).iter().zip(field.level(level)) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    let mut challengers = Vec::with_capacity(n_challengers);
    for i in 0..n_challengers {
        let s = seed.wrapping_add(i as u64);
        let u = FeedbackPolicy::random(grid.clone(), delta, mp.n_controls(), s);
        let (_, j) = evaluate_cost_frozen(&mp, &u, grid)?;
        challengers.push(Challenger {
            policy_seed: s,
            value: j.value,
        });
    }
    let min_gap = challengers
        .iter()
        .map(|c| c.value - est.value)
        .reduce(f64::min);
    let report = GapReport {
        optimal_value: est.value,
        hjb_value: start_value(p, &field)?,
        max_nodewise_difference: max_diff,
        challenger_values: challengers,
        min_gap,
    };
    if let Some(dir) = out {
        let mut w = create(dir, "gap.csv")?;
        writeln!(w, "policy_seed,value,gap")?;
        for c in &report.challenger_values {
            writeln!(w, "{},{},{}", c.policy_seed, c.value, c.value - report.optimal_value)?;
        }
        w.flush()?;
        write_json(dir, "gap.json", &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub delta: f64,
    /// `E[sup_t |X_delta - X_n|^2]` and its standard error.
    pub x_sup_sq: f64,
    pub x_se: f64,
    /// `E[sup_t |Y_delta - Y_n|^2]` and its standard error.
    pub y_sup_sq: f64,
    pub y_se: f64,
    pub taint_count: usize,
    pub tainted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub rows: Vec<CouplingRow>,
    /// Log-log slope of the X moment against delta over `delta > 0`.
    pub x_slope: Option<f64>,
    pub y_slope: Option<f64>,
    /// Start value of `Y_n`: the unmollified solve on the same grid.
    pub reference_value: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// `run_coupling_study`: sup-moments between the regularised and the
/// auxiliary systems per delta, on shared increments. Writes
/// `coupling.csv` and `coupling.json`.
pub fn run_coupling_study(
    p: &Problem,
    deltas: &[f64],
    grid: &Grid,
    n_paths: usize,
    dt: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<CouplingReport> {
    if deltas.is_empty() {
        return Err(Error::invalid("deltas", "empty ladder"));
    }
    check_ladder(deltas, true)?;
    let reference_value = solve_initial_value(&MollifiedProblem::unmollified(p), grid, &p.start_state)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mp = MollifiedProblem::at(p, delta)?;
        let (field, policy) = solve(&mp, grid)?;
        let cfg = SimConfig::new(n_paths, dt, seed, delta);
        let (reg, aux) = simulate_auxiliary(p, &mp, &field, &policy, &cfg, reference_value)?;
        let (x_sup_sq, x_se) = mean_and_se(&sup_sq_difference(&reg, &aux));
        let (y_sup_sq, y_se) = mean_and_se(&sup_sq_difference_y(&reg, &aux));
        let taint_count = reg.n_clamped().max(aux.n_clamped());
        rows.push(CouplingRow {
            delta,
            x_sup_sq,
            x_se,
            y_sup_sq,
            y_se,
            taint_count,
            tainted: reg.tainted || aux.tainted,
        });
    }
    let fit = |f: fn(&CouplingRow) -> f64| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.delta > 0.0)
            .map(|r| (r.delta, f(r)))
            .unzip();
        log_log_slope(&xs, &ys)
    };
    let report = CouplingReport {
        x_slope: fit(|r| r.x_sup_sq),
        y_slope: fit(|r| r.y_sup_sq),
        rows,
        reference_value,
        n_paths,
        dt,
        seed,
    };
    if let Some(dir) = out {
        let mut w = create(dir, "coupling.csv")?;
        writeln!(w, "delta,x_sup_sq,x_se,y_sup_sq,y_se,tainted")?;
        for r in &report.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.delta, r.x_sup_sq, r.x_se, r.y_sup_sq, r.y_se, r.tainted
            )?;
        }
        w.flush()?;
        write_json(dir, "coupling.json", &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityRequest {
    pub assumption: Assumption,
    pub x: Vec<f64>,
    pub y: f64,
    /// Ball radius for (H1); defaults to `lip_x(V_delta) * M` from a solve
    /// on `grid` at `delta`.
    pub radius_k: Option<f64>,
    pub tol: f64,
    /// Pairs for (H2), `w` draws for (H1).
    pub samples: usize,
    pub seed: u64,
    pub delta: f64,
}

/// `check-convexity`: writes `convexity.json`.
pub fn run_check_convexity(
    p: &Problem,
    req: &ConvexityRequest,
    grid: Option<&Grid>,
    out: Option<&Path>,
) -> Result<ConvexityReport> {
    if req.x.len() != p.dim {
        return Err(Error::invalid("probe", format!("x needs {} coordinates", p.dim)));
    }
    let report = match req.assumption {
        Assumption::H2 => check_h2(p, &req.x, req.y, req.tol, req.samples, req.seed)?,
        Assumption::H1 => {
            let k = match req.radius_k {
                Some(k) => k,
                None => {
                    let grid = grid.ok_or_else(|| Error::invalid("K", "pass --K or a grid for the default"))?;
                    let (field, _) = solve(&MollifiedProblem::at(p, req.delta)?, grid)?;
                    field.lipschitz_x_estimate() * p.bounds.m
                }
            };
            check_h1(p, &req.x, req.y, k, req.samples, req.tol, req.seed)?
        }
    };
    if let Some(dir) = out {
        write_json(dir, "convexity.json", &report)?;
    }
    Ok(report)
}

/// `audit`: writes `audit.json`.
pub fn run_audit(p: &Problem, n_samples: usize, seed: u64, out: Option<&Path>) -> Result<AssumptionReport> {
    let report = audit_assumptions(p, n_samples, seed);
    if let Some(dir) = out {
        write_json(dir, "audit.json", &report)?;
    }
    Ok(report)
}

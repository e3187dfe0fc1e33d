use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regression::{BasisSpec, Design};
use super::{simulate_forward, Control, PathBundle, SimConfig};
use crate::error::{Error, Result};
use crate::hjb::{march, FeedbackPolicy, Grid, Selection, ValueField};
use crate::mollifier::MollifiedProblem;
use crate::problem::Coefficients;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMethod {
    FrozenPde,
    RegressionMc,
}

/// Estimate of the cost `J(u) = Y_{t0}` at the problem's start point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: CostMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

/// `evaluate_cost_frozen`: the linear-in-control PDE with the policy's
/// atom substituted for the minimum, marched by the HJB scheme.
pub fn evaluate_cost_frozen(
    mp: &MollifiedProblem,
    policy: &FeedbackPolicy,
    grid: &Grid,
) -> Result<(ValueField, CostEstimate)> {
    if policy.grid() != grid {
        return Err(Error::GridMismatch("policy is defined on another grid".into()));
    }
    if policy.n_controls() != mp.n_controls() {
        return Err(Error::GridMismatch("policy and problem meshes differ".into()));
    }
    let out = march(mp, grid, Selection::Fixed(policy.choices()), true)?;
    let field = ValueField::from_levels(grid.clone(), mp.delta(), out.values);
    let p = mp.base();
    let value = field.interpolate(p.start_time.max(grid.t0), &p.start_state)?.value;
    Ok((
        field,
        CostEstimate {
            value,
            std_error: 0.0,
            method: CostMethod::FrozenPde,
            n_paths: None,
            grid: Some(grid.clone()),
        },
    ))
}

/// Backward regression over the paths in `ids`; returns `Y_0`.
fn backward(
    mp: &MollifiedProblem,
    bundle: &PathBundle,
    ids: &[usize],
    basis: &BasisSpec,
) -> Result<f64> {
    let d = bundle.dim;
    let n = ids.len();
    let k_steps = bundle.n_steps;
    let dt = bundle.dt;
    let gather = |k: usize| -> Vec<f64> {
        let mut xs = Vec::with_capacity(n * d);
        for &p in ids {
            xs.extend_from_slice(bundle.x(p, k));
        }
        xs
    };
    let xs_t = gather(k_steps);
    let mut y: Vec<f64> = xs_t.par_chunks(d).map(|x| mp.terminal(x)).collect();
    let mut z = vec![0.0; n * d];

    for k in (0..k_steps).rev() {
        let xs = gather(k);
        let phi: Option<Vec<f64>> = basis
            .include_terminal
            .then(|| xs.par_chunks(d).map(|x| mp.terminal(x)).collect());
        let des = Design::build(&xs, d, phi.as_deref(), basis)
            .or_else(|| Design::build(&xs, d, None, basis))
            .ok_or_else(|| Error::RankDeficient {
                step: k,
                basis: basis.describe(),
            })?;

        if y.iter().all(|&v| v == y[0]) {
            z.iter_mut().for_each(|v| *v = 0.0);
        } else {
            for j in 0..d {
                let t: Vec<f64> = ids
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| y[i] * bundle.dw(p, k)[j] / dt)
                    .collect();
                for (i, v) in des.fit(&t).into_iter().enumerate() {
                    z[i * d + j] = v;
                }
            }
        }
        let guess = des.fit(&y);
        let target: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let p = ids[i];
                let x = &xs[i * d..(i + 1) * d];
                y[i] + mp.driver(x, guess[i], &z[i * d..(i + 1) * d], bundle.control(p, k)) * dt
            })
            .collect();
        y = des.fit(&target);
    }
    if y.iter().all(|&v| v == y[0]) {
        return Ok(y[0]);
    }
    Ok(y.iter().sum::<f64>() / n as f64)
}

/// Number of resampling batches for the standard error.
const BATCHES: usize = 20;
const MIN_BATCH: usize = 50;

/// `evaluate_cost_mc`: least-squares Monte Carlo for the backward equation
/// along simulated forward paths.
///
/// `Z_k` regresses `Y_{k+1} dW_k / dt`; `Y_k` regresses
/// `Y_{k+1} + f(X_k, Y'_k, Z_k, v_k) dt` where `Y'_k` is the projection of
/// `Y_{k+1}` (one fixed-point pass). The standard error comes from rerunning
/// the recursion on disjoint path batches.
pub fn evaluate_cost_mc(
    mp: &MollifiedProblem,
    control: Control<'_>,
    cfg: &SimConfig,
    basis: &BasisSpec,
) -> Result<CostEstimate> {
    let bundle = simulate_forward(mp, control, cfg, None)?;
    let all: Vec<usize> = (0..bundle.n_paths).collect();
    let value = backward(mp, &bundle, &all, basis)?;
    let b = (bundle.n_paths / MIN_BATCH).clamp(2, BATCHES);
    let std_error = if bundle.n_paths >= 2 * b {
        let size = bundle.n_paths / b;
        let vals = all
            .chunks(size)
            .take(b)
            .map(|ids| backward(mp, &bundle, ids, basis))
            .collect::<Result<Vec<f64>>>()?;
        if vals.iter().all(|&v| v == vals[0]) {
            return Ok(CostEstimate {
                value,
                std_error: 0.0,
                method: CostMethod::RegressionMc,
                n_paths: Some(bundle.n_paths),
                grid: None,
            });
        }
        let m = vals.iter().sum::<f64>() / b as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (b - 1) as f64;
        (var / b as f64).sqrt()
    } else {
        0.0
    };
    Ok(CostEstimate {
        value,
        std_error,
        method: CostMethod::RegressionMc,
        n_paths: Some(bundle.n_paths),
        grid: None,
    })
}

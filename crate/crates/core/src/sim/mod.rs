//! Euler-Maruyama simulation of the controlled forward equation
//!
//! ```text
//! dX = b_delta(X, v) dt + s_delta(X, v) dW + delta dB
//! ```
//!
//! together with the backward cost (`cost`), the value identity
//! `Y_s = V(s, X_s)` and the auxiliary undelta'd system driven by the same
//! noise and controls.
//!
//! The orthogonal martingale part of the backward equation is identically
//! zero here: the simulated filtration is generated by (W, B) alone.

mod cost;
mod regression;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cost::{evaluate_cost_frozen, evaluate_cost_mc, CostEstimate, CostMethod};
pub use regression::BasisSpec;

use crate::error::{Error, Result};
use crate::hjb::{FeedbackPolicy, Grid, ValueField};
use crate::mollifier::MollifiedProblem;
use crate::problem::{Coefficients, Problem};

/// Share of clamped paths above which a bundle is tainted.
pub const TAINT_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub delta: f64,
    /// Pair path `2k + 1` with the negated increments of path `2k`.
    #[serde(default)]
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64, delta: f64) -> Self {
        SimConfig {
            n_paths,
            dt,
            seed,
            delta,
            antithetic: false,
        }
    }

    /// Number of steps covering `[t0, T]`; `dt` must divide the span.
    pub fn steps(&self, t0: f64, t1: f64) -> Result<usize> {
        let span = t1 - t0;
        if self.n_paths < 1 {
            return Err(Error::invalid("n_paths", "need at least one path"));
        }
        if !(self.dt > 0.0) || self.dt > span / 10.0 * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "dt",
                format!("need 0 < dt <= horizon/10 = {}", span / 10.0),
            ));
        }
        let k = (span / self.dt).round();
        if (k * self.dt - span).abs() > 1e-9 * span {
            return Err(Error::invalid("dt", "dt must divide T - t0"));
        }
        Ok(k as usize)
    }

    fn check_delta(&self, mp: &MollifiedProblem) -> Result<()> {
        if self.delta != mp.delta() {
            return Err(Error::invalid(
                "delta",
                format!("config has {}, problem is mollified at {}", self.delta, mp.delta()),
            ));
        }
        Ok(())
    }
}

/// Where the control comes from along a path.
#[derive(Clone, Copy, Debug)]
pub enum Control<'a> {
    Feedback(&'a FeedbackPolicy),
    /// One mesh atom for the whole horizon.
    Fixed(usize),
}

impl Control<'_> {
    fn at(&self, t: f64, x: &[f64]) -> usize {
        match self {
            Control::Feedback(p) => p.control_at(t, x),
            Control::Fixed(i) => *i,
        }
    }

    fn grid(&self) -> Option<&Grid> {
        match self {
            Control::Feedback(p) => Some(p.grid()),
            Control::Fixed(_) => None,
        }
    }
}

/// Simulated paths. Per-path arrays are laid out path-major:
/// `x_paths[(path * (n_steps + 1) + step) * dim + k]`.
#[derive(Clone, Debug)]
pub struct PathBundle {
    pub dim: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub delta: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    pub x_paths: Vec<f64>,
    /// `Y_k` at steps `0..=n_steps`, when a value field was supplied.
    pub y_paths: Option<Vec<f64>>,
    /// `Z_k` at steps `0..n_steps`.
    pub z_paths: Option<Vec<f64>>,
    pub w_increments: Vec<f64>,
    pub b_increments: Vec<f64>,
    /// Mesh index used on `[t_k, t_{k+1})`.
    pub control_trace: Vec<u32>,
    pub clamped: Vec<bool>,
    pub tainted: bool,
}

impl PathBundle {
    pub fn x(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * (self.n_steps + 1) + step) * self.dim;
        &self.x_paths[o..o + self.dim]
    }

    pub fn y(&self, path: usize, step: usize) -> Option<f64> {
        self.y_paths
            .as_ref()
            .map(|y| y[path * (self.n_steps + 1) + step])
    }

    pub fn z(&self, path: usize, step: usize) -> Option<&[f64]> {
        let o = (path * self.n_steps + step) * self.dim;
        self.z_paths.as_ref().map(|z| &z[o..o + self.dim])
    }

    pub fn dw(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * self.n_steps + step) * self.dim;
        &self.w_increments[o..o + self.dim]
    }

    pub fn db(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * self.n_steps + step) * self.dim;
        &self.b_increments[o..o + self.dim]
    }

    pub fn control(&self, path: usize, step: usize) -> usize {
        self.control_trace[path * self.n_steps + step] as usize
    }

    pub fn n_clamped(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }

    /// Terminal states of every path.
    pub fn terminal_states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_paths).map(move |p| self.x(p, self.n_steps))
    }

    /// CSV `path_id,step,t,x1..xd,y,control_index`; `y` is empty without a
    /// value field and `control_index` is empty at the final step.
    pub fn write_csv<W: Write>(&self, mut w: W, max_paths: usize) -> Result<()> {
        let d = self.dim;
        let mut head = vec!["path_id".to_string(), "step".into(), "t".into()];
        head.extend((1..=d).map(|k| format!("x{k}")));
        head.push("y".into());
        head.push("control_index".into());
        writeln!(w, "{}", head.join(","))?;
        for p in 0..self.n_paths.min(max_paths) {
            for k in 0..=self.n_steps {
                write!(w, "{p},{k},{}", self.times[k])?;
                for xi in self.x(p, k) {
                    write!(w, ",{xi}")?;
                }
                match self.y(p, k) {
                    Some(y) => write!(w, ",{y}")?,
                    None => write!(w, ",")?,
                }
                if k < self.n_steps {
                    writeln!(w, ",{}", self.control(p, k))?;
                } else {
                    writeln!(w, ",")?;
                }
            }
        }
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "dt": self.dt,
            "delta": self.delta,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "t0": self.times[0],
            "T": self.times[self.n_steps],
            "taint_count": self.n_clamped(),
            "tainted": self.tainted,
        })
    }
}

/// Axis-aligned box paths are held inside.
#[derive(Clone, Debug)]
struct ClampBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
    periodic: Vec<bool>,
}

impl ClampBox {
    fn from_grid(g: &Grid) -> Self {
        ClampBox {
            lo: g.box_lo.clone(),
            hi: g.box_hi.clone(),
            periodic: g.periodic.clone(),
        }
    }

    fn pick(p: &Problem, field: Option<&ValueField>, control: &Control<'_>) -> Option<Self> {
        if let Some(f) = field {
            return Some(Self::from_grid(f.grid()));
        }
        if let Some(g) = control.grid() {
            return Some(Self::from_grid(g));
        }
        p.grid.as_ref().map(|g| ClampBox {
            lo: vec![g.lo; p.dim],
            hi: vec![g.hi; p.dim],
            periodic: vec![g.periodic; p.dim],
        })
    }

    /// Clamp non-periodic coordinates; returns whether anything moved.
    fn apply(&self, x: &mut [f64]) -> bool {
        let mut hit = false;
        for k in 0..x.len() {
            if self.periodic[k] {
                continue;
            }
            if x[k] < self.lo[k] {
                x[k] = self.lo[k];
                hit = true;
            } else if x[k] > self.hi[k] {
                x[k] = self.hi[k];
                hit = true;
            }
        }
        hit
    }
}

/// Gaussian increments of one path: `dw` then `db` per step, each scaled by
/// `sqrt(dt)`. Path `p` draws from stream `p` of the seeded generator (or
/// `p / 2`, negated for odd `p`, with antithetic pairing).
fn fill_noise(cfg: &SimConfig, path: usize, d: usize, dw: &mut [f64], db: &mut [f64]) {
    let (stream, sign) = if cfg.antithetic {
        (path / 2, if path % 2 == 1 { -1.0 } else { 1.0 })
    } else {
        (path, 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream as u64);
    let s = sign * cfg.dt.sqrt();
    for (w, b) in dw.chunks_mut(d).zip(db.chunks_mut(d)) {
        for wi in w.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *wi = s * g;
        }
        for bi in b.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *bi = s * g;
        }
    }
}

fn check_field(field: &ValueField, mp: &MollifiedProblem, t0: f64, t1: f64) -> Result<()> {
    let g = field.grid();
    if g.dim() != mp.dim() {
        return Err(Error::GridMismatch("field and problem dimensions differ".into()));
    }
    if !g.contains_time(t0) || !g.contains_time(t1) {
        return Err(Error::GridMismatch(format!(
            "field covers [{}, {}], paths need [{t0}, {t1}]",
            g.t0, g.t1
        )));
    }
    Ok(())
}

/// `z_j = sum_k p_k s_kj` for row-major `s`.
pub(crate) fn row_times(p: &[f64], s: &[f64], out: &mut [f64]) {
    let d = p.len();
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..d).map(|k| p[k] * s[k * d + j]).sum();
    }
}

/// `simulate_forward`: Euler-Maruyama paths from `(t0, x0)` of the problem
/// under `control`. With a value field, `Y_k = V(t_k, X_k)` and
/// `Z_k = DV(t_k, X_k) s_delta(X_k, v_k)` are recorded as well.
pub fn simulate_forward(
    mp: &MollifiedProblem,
    control: Control<'_>,
    cfg: &SimConfig,
    field: Option<&ValueField>,
) -> Result<PathBundle> {
    cfg.check_delta(mp)?;
    let p = mp.base();
    let t0 = p.start_time;
    let t1 = p.horizon;
    let k_steps = cfg.steps(t0, t1)?;
    if let Control::Fixed(i) = control {
        if i >= mp.n_controls() {
            return Err(Error::invalid("control", format!("no atom with index {i}")));
        }
    }
    if let Some(f) = field {
        check_field(f, mp, t0, t1)?;
    }
    if let Some(g) = control.grid() {
        if g.dim() != mp.dim() {
            return Err(Error::GridMismatch("policy and problem dimensions differ".into()));
        }
    }
    let d = mp.dim();
    let n = cfg.n_paths;
    let dt = cfg.dt;
    let delta = mp.delta();
    let times: Vec<f64> = (0..=k_steps)
        .map(|k| if k == k_steps { t1 } else { t0 + k as f64 * dt })
        .collect();
    let clamp = ClampBox::pick(p, field, &control);

    let mut x_paths = vec![0.0; n * (k_steps + 1) * d];
    let mut w_inc = vec![0.0; n * k_steps * d];
    let mut b_inc = vec![0.0; n * k_steps * d];
    let mut trace = vec![0u32; n * k_steps];
    let mut clamped = vec![false; n];
    let mut y_paths = field.map(|_| vec![0.0; n * (k_steps + 1)]);
    let mut z_paths = field.map(|_| vec![0.0; n * k_steps * d]);
    let mut y_chunks: Vec<Option<&mut [f64]>> = match y_paths.as_mut() {
        Some(y) => y.chunks_mut(k_steps + 1).map(Some).collect(),
        None => (0..n).map(|_| None).collect(),
    };
    let mut z_chunks: Vec<Option<&mut [f64]>> = match z_paths.as_mut() {
        Some(z) => z.chunks_mut(k_steps * d).map(Some).collect(),
        None => (0..n).map(|_| None).collect(),
    };

    let result: Result<()> = x_paths
        .par_chunks_mut((k_steps + 1) * d)
        .zip(w_inc.par_chunks_mut(k_steps * d))
        .zip(b_inc.par_chunks_mut(k_steps * d))
        .zip(trace.par_chunks_mut(k_steps))
        .zip(clamped.par_iter_mut())
        .zip(y_chunks.par_iter_mut())
        .zip(z_chunks.par_iter_mut())
        .enumerate()
        .try_for_each(|(path, ((((((xs, dw), db), tr), cl), ys), zs))| {
            fill_noise(cfg, path, d, dw, db);
            xs[..d].copy_from_slice(&p.start_state);
            let mut b = vec![0.0; d];
            let mut s = vec![0.0; d * d];
            for k in 0..k_steps {
                let (cur, next) = xs[k * d..(k + 2) * d].split_at_mut(d);
                let v = control.at(times[k], cur);
                tr[k] = v as u32;
                mp.drift(cur, v, &mut b);
                mp.diffusion(cur, v, &mut s);
                if let Some(f) = field {
                    let r = f.interpolate(times[k], cur)?;
                    if let Some(ys) = ys.as_deref_mut() {
                        ys[k] = r.value;
                    }
                    if let Some(zs) = zs.as_deref_mut() {
                        row_times(&r.gradient, &s, &mut zs[k * d..(k + 1) * d]);
                    }
                }
                let dwk = &dw[k * d..(k + 1) * d];
                let dbk = &db[k * d..(k + 1) * d];
                for i in 0..d {
                    let mut inc = b[i] * dt + delta * dbk[i];
                    for j in 0..d {
                        inc += s[i * d + j] * dwk[j];
                    }
                    next[i] = cur[i] + inc;
                }
                if let Some(c) = &clamp {
                    *cl |= c.apply(next);
                }
            }
            if let (Some(f), Some(ys)) = (field, ys.as_deref_mut()) {
                ys[k_steps] = f.interpolate(t1, &xs[k_steps * d..])?.value;
            }
            Ok(())
        });
    result?;
    drop(y_chunks);
    drop(z_chunks);

    let n_clamped = clamped.iter().filter(|&&c| c).count();
    Ok(PathBundle {
        dim: d,
        n_paths: n,
        n_steps: k_steps,
        dt,
        delta,
        seed: cfg.seed,
        times,
        x_paths,
        y_paths,
        z_paths,
        w_increments: w_inc,
        b_increments: b_inc,
        control_trace: trace,
        tainted: n_clamped as f64 > TAINT_FRACTION * n as f64,
        clamped,
    })
}

/// Summary of the discrete backward-equation residual along paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// Largest `|sum_k r_k|` over retained paths.
    pub max_abs: f64,
    /// Mean of `|sum_k r_k|` over retained paths.
    pub mean_abs: f64,
    pub paths_used: usize,
    pub paths_excluded: usize,
    pub tainted: bool,
}

/// `check_value_identity`: with `Y_k = V(t_k, X_k)` the residual
/// `r_k = Y_{k+1} - Y_k + f(X_k, Y_k, Z_k, v_k) dt - Z_k dW_k - delta DV dB_k`
/// is summed along each path. Clamped paths are excluded.
pub fn check_value_identity(
    mp: &MollifiedProblem,
    field: &ValueField,
    bundle: &PathBundle,
) -> Result<IdentityReport> {
    let (Some(_), Some(_)) = (&bundle.y_paths, &bundle.z_paths) else {
        return Err(Error::GridMismatch(
            "bundle was simulated without a value field".into(),
        ));
    };
    if field.grid().dim() != bundle.dim || bundle.dim != mp.dim() {
        return Err(Error::GridMismatch("dimension mismatch".into()));
    }
    if !field.grid().contains_time(bundle.times[0])
        || !field.grid().contains_time(bundle.times[bundle.n_steps])
    {
        return Err(Error::GridMismatch("bundle times outside the field".into()));
    }
    if field.delta() != bundle.delta || mp.delta() != bundle.delta {
        return Err(Error::GridMismatch("delta differs between field and bundle".into()));
    }
    let d = bundle.dim;
    let delta = bundle.delta;
    let sums: Vec<Option<f64>> = (0..bundle.n_paths)
        .into_par_iter()
        .map(|p| -> Result<Option<f64>> {
            if bundle.clamped[p] {
                return Ok(None);
            }
            let mut total = 0.0;
            for k in 0..bundle.n_steps {
                let x = bundle.x(p, k);
                let y = bundle.y(p, k).unwrap();
                let y1 = bundle.y(p, k + 1).unwrap();
                let z = bundle.z(p, k).unwrap();
                let v = bundle.control(p, k);
                let grad = field.interpolate(bundle.times[k], x)?.gradient;
                let f = mp.driver(x, y, z, v);
                let dw = bundle.dw(p, k);
                let db = bundle.db(p, k);
                let mut r = y1 - y + f * bundle.dt;
                for i in 0..d {
                    r -= z[i] * dw[i] + delta * grad[i] * db[i];
                }
                total += r;
            }
            Ok(Some(total.abs()))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = sums.iter().flatten().copied().collect();
    let used = kept.len();
    Ok(IdentityReport {
        max_abs: kept.iter().fold(0.0, |m, &v| m.max(v)),
        mean_abs: if used > 0 {
            kept.iter().sum::<f64>() / used as f64
        } else {
            0.0
        },
        paths_used: used,
        paths_excluded: bundle.n_paths - used,
        tainted: bundle.tainted,
    })
}

/// `simulate_auxiliary`: the regularised system and the auxiliary system
/// with unsmoothed coefficients, on the same increments and controls.
///
/// Both `Y` components run a forward Euler recursion with gradient
/// `w_k = DV_delta(t_k, X^delta_k)`:
///
/// ```text
/// Y^delta_{k+1} = Y^delta_k - f_delta(X^delta, Y^delta, w s_delta, v) dt + w s_delta dW + delta w dB
/// Y^n_{k+1}     = Y^n_k     - f(X^n, Y^n, w s(X^n, v), v) dt           + w s(X^n, v) dW
/// ```
///
/// started from `V_delta(t0, x0)` and `reference_value` respectively.
pub fn simulate_auxiliary(
    p: &Problem,
    mp: &MollifiedProblem,
    field: &ValueField,
    policy: &FeedbackPolicy,
    cfg: &SimConfig,
    reference_value: f64,
) -> Result<(PathBundle, PathBundle)> {
    let mut reg = simulate_forward(mp, Control::Feedback(policy), cfg, Some(field))?;
    let raw = MollifiedProblem::unmollified(p);
    let d = reg.dim;
    let k_steps = reg.n_steps;
    let dt = reg.dt;
    let delta = reg.delta;
    let clamp = ClampBox::from_grid(field.grid());
    let t0 = reg.times[0];
    let y0 = field.interpolate(t0, &p.start_state)?.value;

    let mut ax = vec![0.0; reg.x_paths.len()];
    let mut ay = vec![0.0; reg.n_paths * (k_steps + 1)];
    let mut az = vec![0.0; reg.n_paths * k_steps * d];
    let mut ry = vec![0.0; reg.n_paths * (k_steps + 1)];
    let mut aclamp = vec![false; reg.n_paths];
    let reg_ref = &reg;
    ax.par_chunks_mut((k_steps + 1) * d)
        .zip(ay.par_chunks_mut(k_steps + 1))
        .zip(az.par_chunks_mut(k_steps * d))
        .zip(ry.par_chunks_mut(k_steps + 1))
        .zip(aclamp.par_iter_mut())
        .enumerate()
        .try_for_each(|(path, ((((xs, ys), zs), yd), cl))| -> Result<()> {
            xs[..d].copy_from_slice(&p.start_state);
            ys[0] = reference_value;
            yd[0] = y0;
            let mut b = vec![0.0; d];
            let mut s = vec![0.0; d * d];
            let mut sd = vec![0.0; d * d];
            let mut zd = vec![0.0; d];
            for k in 0..k_steps {
                let v = reg_ref.control(path, k);
                let xd = reg_ref.x(path, k);
                let w = field.interpolate(reg_ref.times[k], xd)?.gradient;
                let dw = reg_ref.dw(path, k);
                let db = reg_ref.db(path, k);

                mp.diffusion(xd, v, &mut sd);
                row_times(&w, &sd, &mut zd);
                let mut incd = -mp.driver(xd, yd[k], &zd, v) * dt;
                for i in 0..d {
                    incd += zd[i] * dw[i] + delta * w[i] * db[i];
                }
                yd[k + 1] = yd[k] + incd;

                let (cur, next) = xs[k * d..(k + 2) * d].split_at_mut(d);
                raw.drift(cur, v, &mut b);
                raw.diffusion(cur, v, &mut s);
                let z = &mut zs[k * d..(k + 1) * d];
                row_times(&w, &s, z);
                let mut incy = -raw.driver(cur, ys[k], z, v) * dt;
                for i in 0..d {
                    incy += z[i] * dw[i];
                }
                ys[k + 1] = ys[k] + incy;
                for i in 0..d {
                    let mut inc = b[i] * dt;
                    for j in 0..d {
                        inc += s[i * d + j] * dw[j];
                    }
                    next[i] = cur[i] + inc;
                }
                *cl |= clamp.apply(next);
            }
            Ok(())
        })?;

    reg.y_paths = Some(ry);
    let n_clamped = aclamp.iter().filter(|&&c| c).count();
    let aux = PathBundle {
        x_paths: ax,
        y_paths: Some(ay),
        z_paths: Some(az),
        tainted: n_clamped as f64 > TAINT_FRACTION * reg.n_paths as f64,
        clamped: aclamp,
        ..reg.clone()
    };
    Ok((reg, aux))
}

/// Per-path `sup_k |a_k - b_k|^2` between two bundles on the same times.
pub fn sup_sq_difference(a: &PathBundle, b: &PathBundle) -> Vec<f64> {
    (0..a.n_paths)
        .map(|p| {
            (0..=a.n_steps)
                .map(|k| {
                    a.x(p, k)
                        .iter()
                        .zip(b.x(p, k))
                        .map(|(u, v)| (u - v) * (u - v))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Per-path `sup_k |Y^a_k - Y^b_k|^2`; zero when either bundle has no `Y`.
pub fn sup_sq_difference_y(a: &PathBundle, b: &PathBundle) -> Vec<f64> {
    let (Some(ya), Some(yb)) = (&a.y_paths, &b.y_paths) else {
        return vec![0.0; a.n_paths];
    };
    let n = a.n_steps + 1;
    ya.chunks(n)
        .zip(yb.chunks(n))
        .map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).fold(0.0, f64::max))
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(drift: f64, sigma: f64) -> Problem {
        Problem::from_json_str(&format!(
            r#"{{"dimension":1,"horizon":1,"start_state":[0.25],
            "drift":{{"family":"constant-drift","params":{{"value":{drift}}}}},
            "diffusion":{{"family":"identity-diffusion","params":{{"scale":{sigma}}}}},
            "driver":{{"family":"constant-driver","params":{{"value":0}}}},
            "terminal":{{"family":"constant-terminal","params":{{"value":0}}}},
            "control_mesh":[0],"bounds":{{"M":1,"C":1,"F":1}}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn no_dynamics_stays_put() {
        let p = problem(0.0, 0.0);
        let mp = MollifiedProblem::unmollified(&p);
        let b = simulate_forward(&mp, Control::Fixed(0), &SimConfig::new(20, 0.01, 1, 0.0), None)
            .unwrap();
        assert!(b.x_paths.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn drift_only_moves_by_horizon() {
        let p = problem(1.0, 0.0);
        let mp = MollifiedProblem::unmollified(&p);
        let b = simulate_forward(&mp, Control::Fixed(0), &SimConfig::new(5, 0.01, 1, 0.0), None)
            .unwrap();
        for x in b.terminal_states() {
            assert!((x[0] - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_dt_rejected() {
        let p = problem(0.0, 1.0);
        let mp = MollifiedProblem::unmollified(&p);
        for dt in [0.2, 0.03, -1.0] {
            let r = simulate_forward(&mp, Control::Fixed(0), &SimConfig::new(5, dt, 1, 0.0), None);
            assert!(r.is_err(), "dt = {dt}");
        }
    }

    #[test]
    fn antithetic_pairs_mirror() {
        let p = problem(0.0, 1.0);
        let mp = MollifiedProblem::unmollified(&p);
        let mut cfg = SimConfig::new(4, 0.1, 9, 0.0);
        cfg.antithetic = true;
        let b = simulate_forward(&mp, Control::Fixed(0), &cfg, None).unwrap();
        for k in 0..b.n_steps {
            assert_eq!(b.dw(0, k)[0], -b.dw(1, k)[0]);
            assert_eq!(b.dw(2, k)[0], -b.dw(3, k)[0]);
        }
    }

    #[test]
    fn csv_layout() {
        let p = problem(0.0, 1.0);
        let mp = MollifiedProblem::unmollified(&p);
        let b = simulate_forward(&mp, Control::Fixed(0), &SimConfig::new(2, 0.1, 9, 0.0), None)
            .unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf, 10).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next(), Some("path_id,step,t,x1,y,control_index"));
        assert_eq!(s.lines().count(), 1 + 2 * 11);
    }
}

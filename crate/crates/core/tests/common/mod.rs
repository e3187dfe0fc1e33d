#![allow(dead_code)]

use fbsde_control::hjb::Grid;
use fbsde_control::problem::{Bounds, CoefficientFamily, Coefficients, ControlPoint, Problem, ProblemConfig};

pub fn config_path(name: &str) -> String {
    format!("{}/configs/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

pub fn load(name: &str) -> Problem {
    Problem::load(config_path(name)).unwrap()
}

pub fn grid_of(p: &Problem) -> Grid {
    let g = p.grid.as_ref().expect("config carries a grid");
    Grid::uniform(p.dim, g.lo, g.hi, g.nx, g.nt, p.start_time, p.horizon, g.periodic).unwrap()
}

/// `E[sin(x + W_tau)]`.
pub fn heat_exact(t: f64, x: f64, horizon: f64) -> f64 {
    x.sin() * (-(horizon - t) / 2.0).exp()
}

/// Dynamic programming on a recombining trinomial lattice for a d = 1
/// problem with constant diffusion `sigma` and `f` independent of (y, z):
/// steps of `+-h, 0` with `h = sqrt(3) sigma sqrt(dt)`, drift matched by
/// tilting the up/down probabilities. Minimises over every mesh atom, or
/// uses atom `fixed` throughout.
///
/// Returns the lattice spacing, the lattice origin and the value at every
/// time level on the lattice.
pub struct Lattice {
    pub h: f64,
    pub lo: f64,
    pub values: Vec<Vec<f64>>,
}

impl Lattice {
    /// Linear interpolation at `x` on level `n`.
    pub fn at(&self, n: usize, x: f64) -> f64 {
        let v = &self.values[n];
        let s = ((x - self.lo) / self.h).clamp(0.0, (v.len() - 1) as f64);
        let i = (s.floor() as usize).min(v.len() - 2);
        let w = s - i as f64;
        (1.0 - w) * v[i] + w * v[i + 1]
    }
}

pub fn trinomial_dp(p: &Problem, dt: f64, nt: usize, sigma: f64, lo: f64, hi: f64, fixed: Option<usize>) -> Lattice {
    assert_eq!(p.dim, 1);
    let h = 3f64.sqrt() * sigma * dt.sqrt();
    let m = ((hi - lo) / h).ceil() as usize + 1;
    let xs: Vec<f64> = (0..m).map(|i| lo + i as f64 * h).collect();
    let mut values = vec![vec![0.0; m]; nt + 1];
    values[nt] = xs.iter().map(|&x| p.terminal(&[x])).collect();
    let atoms: Vec<usize> = match fixed {
        Some(i) => vec![i],
        None => (0..p.n_controls()).collect(),
    };
    let mut b = [0.0];
    for n in (0..nt).rev() {
        let (head, tail) = values.split_at_mut(n + 1);
        let next = &tail[0];
        let cur = &mut head[n];
        for i in 0..m {
            let up = next[(i + 1).min(m - 1)];
            let dn = next[i.saturating_sub(1)];
            let mid = next[i];
            let mut best = f64::INFINITY;
            for &v in &atoms {
                p.drift(&[xs[i]], v, &mut b);
                let q = sigma * sigma * dt / (2.0 * h * h);
                let tilt = b[0] * dt / (2.0 * h);
                let e = (q + tilt) * up + (q - tilt) * dn + (1.0 - 2.0 * q) * mid;
                let f = p.driver(&[xs[i]], 0.0, &[0.0], v);
                best = best.min(e + f * dt);
            }
            cur[i] = best;
        }
    }
    Lattice { h, lo, values }
}

fn fam(name: &str, params: &[(&str, f64)]) -> CoefficientFamily {
    CoefficientFamily::new(name, params)
}

/// One problem per catalog family, the other slots filled with simple
/// members; declared bounds are the catalog's own.
pub fn catalog_problems() -> Vec<(String, Problem)> {
    let drifts = [
        fam("constant-drift", &[("value", 0.3)]),
        fam("bang-drift", &[("gain", 0.8)]),
        fam("trig-drift", &[("amplitude", 0.5), ("gain", 0.4)]),
    ];
    let diffusions = [
        fam("identity-diffusion", &[("scale", 0.6)]),
        fam("rotation-diffusion", &[("scale", 0.5), ("frequency", 1.5)]),
        fam("control-diffusion", &[("scale", 0.7)]),
        fam("diagonal-diffusion", &[("scale", 0.9), ("rest", 0.2)]),
    ];
    let drivers = [
        fam("constant-driver", &[("value", 0.2)]),
        fam("linear-in-y-driver", &[("rate", 0.3), ("offset", 0.1)]),
        fam("z-coupled-driver", &[("z_gain", 0.4), ("y_gain", 0.2)]),
        fam("control-linear-driver", &[("gain", 0.5), ("offset", 0.0)]),
        fam("control-quadratic-driver", &[("weight", 0.3), ("offset", 0.1)]),
        fam("linear-z-driver", &[("gain", 0.6)]),
        fam("convex-z-driver", &[("gain", 0.5)]),
        fam("trig-driver", &[("amplitude", 0.7), ("offset", 0.0)]),
    ];
    let terminals = [
        fam("trig-terminal", &[("amplitude", 1.2)]),
        fam("constant-terminal", &[("value", 0.4)]),
        fam("capped-abs-terminal", &[("cap", 1.0)]),
    ];
    let build = |dim: usize, b: &CoefficientFamily, s: &CoefficientFamily, f: &CoefficientFamily, t: &CoefficientFamily| {
        let cfg = ProblemConfig {
            dimension: Some(dim),
            horizon: Some(0.5),
            drift: Some(b.clone()),
            diffusion: Some(s.clone()),
            driver: Some(f.clone()),
            terminal: Some(t.clone()),
            control_mesh: Some(vec![ControlPoint::scalar(-1.0), ControlPoint::scalar(0.5), ControlPoint::scalar(1.0)]),
            bounds: Some(Bounds { m: 1.0, c: 1.0, f: 1.0 }),
            ..Default::default()
        };
        let p = Problem::from_config(cfg.clone()).unwrap();
        // constant families give a zero constant, which a config cannot declare
        let cb = p.catalog_bounds();
        let cfg = ProblemConfig {
            bounds: Some(Bounds { m: cb.m.max(1e-3), c: cb.c.max(1e-3), f: cb.f.max(1e-3) }),
            ..cfg
        };
        Problem::from_config(cfg).unwrap()
    };
    let mut out = Vec::new();
    for b in &drifts {
        out.push((b.family_name.clone(), build(1, b, &diffusions[0], &drivers[0], &terminals[0])));
    }
    for s in &diffusions {
        let dim = if s.family_name == "rotation-diffusion" { 2 } else { 1 };
        out.push((s.family_name.clone(), build(dim, &drifts[2], s, &drivers[0], &terminals[0])));
    }
    for f in &drivers {
        out.push((f.family_name.clone(), build(1, &drifts[0], &diffusions[0], f, &terminals[0])));
    }
    for t in &terminals {
        out.push((t.family_name.clone(), build(1, &drifts[0], &diffusions[0], &drivers[0], t)));
    }
    out
}

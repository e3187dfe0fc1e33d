//! Backward explicit finite differences for the regularised HJB equation
//!
//! ```text
//! V_t + min_v { 1/2 tr((s s* + delta^2 I) D2V) + b.DV + f(x, V, DV s, v) } = 0,
//! V(T, .) = Phi_delta
//! ```
//!
//! Drift is upwinded, diffusion uses central second differences, and the
//! driver sees the central gradient. On a non-periodic face the value is
//! extrapolated linearly (constant gradient), which zeroes the second
//! difference there.

mod field;
mod grid;
mod policy;

use rayon::prelude::*;

pub use field::{interpolate_layer, Interpolated, ValueField};
pub use grid::Grid;
pub use policy::FeedbackPolicy;

use crate::error::{Error, Result};
use crate::mollifier::MollifiedProblem;
use crate::problem::Coefficients;

/// Discrete first and second differences at one node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stencil {
    pub forward: [f64; 2],
    pub backward: [f64; 2],
    pub central: [f64; 2],
    pub second: [[f64; 2]; 2],
}

impl Stencil {
    pub fn at(grid: &Grid, values: &[f64], node: usize) -> Stencil {
        let d = grid.dim();
        let mut st = Stencil::default();
        let c = values[node];
        for k in 0..d {
            let h = grid.dx(k);
            let up = grid.neighbor(node, k, 1).map(|j| values[j]);
            let dn = grid.neighbor(node, k, -1).map(|j| values[j]);
            match (dn, up) {
                (Some(a), Some(b)) => {
                    st.forward[k] = (b - c) / h;
                    st.backward[k] = (c - a) / h;
                    st.central[k] = (b - a) / (2.0 * h);
                    st.second[k][k] = (b - 2.0 * c + a) / (h * h);
                }
                (None, Some(b)) => {
                    let g = (b - c) / h;
                    st.forward[k] = g;
                    st.backward[k] = g;
                    st.central[k] = g;
                }
                (Some(a), None) => {
                    let g = (c - a) / h;
                    st.forward[k] = g;
                    st.backward[k] = g;
                    st.central[k] = g;
                }
                (None, None) => {}
            }
        }
        if d == 2 {
            let corner = |s0: i32, s1: i32| {
                grid.neighbor(node, 0, s0)
                    .and_then(|j| grid.neighbor(j, 1, s1))
                    .map(|j| values[j])
            };
            if let (Some(pp), Some(pm), Some(mp), Some(mm)) =
                (corner(1, 1), corner(1, -1), corner(-1, 1), corner(-1, -1))
            {
                let x = (pp - pm - mp + mm) / (4.0 * grid.dx(0) * grid.dx(1));
                st.second[0][1] = x;
                st.second[1][0] = x;
            }
        }
        st
    }
}

/// `H^delta(x, y, p, A, v) = 1/2 tr((s s* + delta^2 I) A) + b.p + f(x, y, p s, v)`
/// for the coefficients of `c` (mollified or raw) at control index `v`.
/// `a` is a row-major symmetric d x d matrix.
pub fn hamiltonian_delta<C: Coefficients + ?Sized>(
    c: &C,
    x: &[f64],
    y: f64,
    p: &[f64],
    a: &[f64],
    v: usize,
) -> f64 {
    let d = c.dim();
    let delta = c.delta();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * d];
    c.drift(x, v, &mut b);
    c.diffusion(x, v, &mut s);
    let mut h = 0.0;
    for k in 0..d {
        for l in 0..d {
            let mut ss = (0..d).map(|j| s[k * d + j] * s[l * d + j]).sum::<f64>();
            if k == l {
                ss += delta * delta;
            }
            h += 0.5 * ss * a[l * d + k];
        }
        h += b[k] * p[k];
    }
    let z: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|k| p[k] * s[k * d + j]).sum())
        .collect();
    h + c.driver(x, y, &z, v)
}

/// Per-node, per-control coefficient values on a grid; b and sigma do not
/// depend on time so they are evaluated once.
pub(crate) struct NodeCache {
    d: usize,
    nc: usize,
    x: Vec<f64>,
    drift: Vec<f64>,
    /// 1/2 (s s* + delta^2 I), row-major
    diff: Vec<f64>,
    sigma: Vec<f64>,
}

impl NodeCache {
    pub(crate) fn new<C: Coefficients + ?Sized>(c: &C, grid: &Grid) -> Self {
        let d = grid.dim();
        let nc = c.n_controls();
        let n = grid.n_nodes();
        let delta = c.delta();
        let mut x = vec![0.0; n * d];
        x.chunks_mut(d)
            .enumerate()
            .for_each(|(i, out)| grid.node_coords(i, out));
        let mut drift = vec![0.0; n * nc * d];
        let mut diff = vec![0.0; n * nc * d * d];
        let mut sigma = vec![0.0; n * nc * d * d];
        drift
            .par_chunks_mut(nc * d)
            .zip(diff.par_chunks_mut(nc * d * d))
            .zip(sigma.par_chunks_mut(nc * d * d))
            .enumerate()
            .for_each(|(i, ((b, a), s))| {
                let xi = &x[i * d..(i + 1) * d];
                for v in 0..nc {
                    c.drift(xi, v, &mut b[v * d..(v + 1) * d]);
                    let sv = &mut s[v * d * d..(v + 1) * d * d];
                    c.diffusion(xi, v, sv);
                    let av = &mut a[v * d * d..(v + 1) * d * d];
                    for k in 0..d {
                        for l in 0..d {
                            let mut ss = (0..d).map(|j| sv[k * d + j] * sv[l * d + j]).sum::<f64>();
                            if k == l {
                                ss += delta * delta;
                            }
                            av[k * d + l] = 0.5 * ss;
                        }
                    }
                }
            });
        NodeCache {
            d,
            nc,
            x,
            drift,
            diff,
            sigma,
        }
    }

    pub(crate) fn x(&self, node: usize) -> &[f64] {
        &self.x[node * self.d..(node + 1) * self.d]
    }

    /// Discrete Hamiltonian at `node` for control `v` given the stencil of
    /// the later time level and the node value `y`.
    pub(crate) fn hamiltonian<C: Coefficients + ?Sized>(
        &self,
        c: &C,
        st: &Stencil,
        node: usize,
        y: f64,
        v: usize,
    ) -> f64 {
        let d = self.d;
        let off = node * self.nc + v;
        let b = &self.drift[off * d..(off + 1) * d];
        let a = &self.diff[off * d * d..(off + 1) * d * d];
        let s = &self.sigma[off * d * d..(off + 1) * d * d];
        let mut h = 0.0;
        for k in 0..d {
            for l in 0..d {
                h += a[k * d + l] * st.second[k][l];
            }
        }
        for (k, &bk) in b.iter().enumerate() {
            h += if bk > 0.0 {
                bk * st.forward[k]
            } else {
                bk * st.backward[k]
            };
        }
        let mut z = [0.0; 2];
        for (j, zj) in z.iter_mut().enumerate().take(d) {
            for k in 0..d {
                *zj += st.central[k] * s[k * d + j];
            }
        }
        h + c.driver(self.x(node), y, &z[..d], v)
    }
}

/// The upwinded Hamiltonian the scheme minimises, recomputed from scratch
/// at `node` against the later level `next_level`. The solver picks, per
/// node, the control minimising this quantity.
pub fn discrete_hamiltonian(
    mp: &MollifiedProblem,
    grid: &Grid,
    next_level: &[f64],
    node: usize,
    v: usize,
) -> f64 {
    let d = grid.dim();
    let mut x = vec![0.0; d];
    grid.node_coords(node, &mut x);
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * d];
    mp.drift(&x, v, &mut b);
    mp.diffusion(&x, v, &mut s);
    let st = Stencil::at(grid, next_level, node);
    let delta = mp.delta();
    let mut h = 0.0;
    for k in 0..d {
        for l in 0..d {
            let mut ss = (0..d).map(|j| s[k * d + j] * s[l * d + j]).sum::<f64>();
            if k == l {
                ss += delta * delta;
            }
            h += 0.5 * ss * st.second[k][l];
        }
    }
    for (k, &bk) in b.iter().enumerate() {
        h += if bk > 0.0 {
            bk * st.forward[k]
        } else {
            bk * st.backward[k]
        };
    }
    let z: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|k| st.central[k] * s[k * d + j]).sum())
        .collect();
    h + mp.driver(&x, next_level[node], &z, v)
}

pub(crate) enum Selection<'a> {
    Minimize,
    /// Control index per (level, node), `nt * n_nodes` entries.
    Fixed(&'a [u32]),
}

pub(crate) struct March {
    /// All levels (`(nt + 1) * n_nodes`) or only the initial one.
    pub values: Vec<f64>,
    pub choices: Vec<u32>,
}

/// Backward time marching from the terminal layer.
pub(crate) fn march(
    mp: &MollifiedProblem,
    grid: &Grid,
    selection: Selection<'_>,
    store_all: bool,
) -> Result<March> {
    if grid.dim() != mp.dim() {
        return Err(Error::GridMismatch(format!(
            "grid dimension {} vs problem dimension {}",
            grid.dim(),
            mp.dim()
        )));
    }
    let bounds = mp.base().bounds;
    grid.check_stability(bounds.m, mp.delta(), bounds.c)?;
    let n = grid.n_nodes();
    let nt = grid.nt;
    let nc = mp.n_controls();
    if let Selection::Fixed(ch) = &selection {
        if ch.len() != nt * n || ch.iter().any(|&c| c as usize >= nc) {
            return Err(Error::GridMismatch("policy does not match grid".into()));
        }
    }
    let cache = NodeCache::new(mp, grid);
    let dt = grid.dt();

    let mut terminal = vec![0.0; n];
    terminal
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, v)| *v = mp.terminal(cache.x(i)));

    let minimize = matches!(selection, Selection::Minimize);
    let mut choices = if minimize { vec![0u32; nt * n] } else { Vec::new() };

    let step = |prev: &[f64], next: &mut [f64], level: usize, choices: &mut [u32]| -> Result<()> {
        match &selection {
            Selection::Minimize => {
                next.par_iter_mut()
                    .zip(choices.par_iter_mut())
                    .enumerate()
                    .with_min_len(64)
                    .for_each(|(i, (out, ch))| {
                        let st = Stencil::at(grid, prev, i);
                        let y = prev[i];
                        let mut best = cache.hamiltonian(mp, &st, i, y, 0);
                        let mut arg = 0u32;
                        for v in 1..nc {
                            let h = cache.hamiltonian(mp, &st, i, y, v);
                            if h < best {
                                best = h;
                                arg = v as u32;
                            }
                        }
                        *out = y + dt * best;
                        *ch = arg;
                    });
            }
            Selection::Fixed(fixed) => {
                let row = &fixed[level * n..(level + 1) * n];
                next.par_iter_mut()
                    .enumerate()
                    .with_min_len(64)
                    .for_each(|(i, out)| {
                        let st = Stencil::at(grid, prev, i);
                        let y = prev[i];
                        *out = y + dt * cache.hamiltonian(mp, &st, i, y, row[i] as usize);
                    });
            }
        }
        if let Some(node) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { level, node });
        }
        Ok(())
    };

    if store_all {
        let mut values = vec![0.0; (nt + 1) * n];
        values[nt * n..].copy_from_slice(&terminal);
        for level in (0..nt).rev() {
            let (head, tail) = values.split_at_mut((level + 1) * n);
            let ch = if minimize {
                &mut choices[level * n..(level + 1) * n]
            } else {
                &mut []
            };
            step(&tail[..n], &mut head[level * n..], level, ch)?;
        }
        Ok(March { values, choices })
    } else {
        let mut prev = terminal;
        let mut next = vec![0.0; n];
        for level in (0..nt).rev() {
            let ch = if minimize {
                &mut choices[level * n..(level + 1) * n]
            } else {
                &mut []
            };
            step(&prev, &mut next, level, ch)?;
            std::mem::swap(&mut prev, &mut next);
        }
        Ok(March {
            values: prev,
            choices,
        })
    }
}

/// `solve`: value field and minimising feedback policy of the regularised
/// HJB equation at the problem's own `delta`.
pub fn solve(mp: &MollifiedProblem, grid: &Grid) -> Result<(ValueField, FeedbackPolicy)> {
    let out = march(mp, grid, Selection::Minimize, true)?;
    let field = ValueField::from_levels(grid.clone(), mp.delta(), out.values);
    let policy = FeedbackPolicy::new(grid.clone(), mp.delta(), mp.n_controls(), out.choices)?;
    Ok((field, policy))
}

/// Value of the solution at `(t0, x)` without keeping the time history.
pub fn solve_initial_value(mp: &MollifiedProblem, grid: &Grid, x: &[f64]) -> Result<f64> {
    let out = march(mp, grid, Selection::Minimize, false)?;
    Ok(interpolate_layer(grid, &out.values, x).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;

    fn problem(json: &str) -> Problem {
        Problem::from_json_str(json).unwrap()
    }

    fn const_driver(c: f64) -> Problem {
        problem(&format!(
            r#"{{"dimension":1,"horizon":1,
            "drift":{{"family":"bang-drift","params":{{"gain":1}}}},
            "diffusion":{{"family":"identity-diffusion","params":{{"scale":1}}}},
            "driver":{{"family":"constant-driver","params":{{"value":{c}}}}},
            "terminal":{{"family":"constant-terminal","params":{{"value":0}}}},
            "control_mesh":[-1,1],"bounds":{{"M":1,"C":1,"F":1}}}}"#
        ))
    }

    #[test]
    fn hamiltonian_examples() {
        let p = problem(
            r#"{"dimension":1,"horizon":1,
            "drift":{"family":"constant-drift","params":{"value":0}},
            "diffusion":{"family":"identity-diffusion","params":{"scale":0}},
            "driver":{"family":"constant-driver","params":{"value":0.7}},
            "terminal":{"family":"constant-terminal","params":{"value":0}},
            "control_mesh":[0],"bounds":{"M":1,"C":1,"F":1}}"#,
        );
        let mp = MollifiedProblem::unmollified(&p);
        assert_eq!(hamiltonian_delta(&mp, &[0.3], 1.0, &[2.0], &[5.0], 0), 0.7);

        let q = problem(
            r#"{"dimension":1,"horizon":1,
            "drift":{"family":"constant-drift","params":{"value":0}},
            "diffusion":{"family":"identity-diffusion","params":{"scale":1}},
            "driver":{"family":"constant-driver","params":{"value":0}},
            "terminal":{"family":"constant-terminal","params":{"value":0}},
            "control_mesh":[0],"bounds":{"M":1,"C":1,"F":1}}"#,
        );
        let mq = MollifiedProblem::unmollified(&q);
        assert!((hamiltonian_delta(&mq, &[0.0], 0.0, &[0.0], &[2.0], 0) - 1.0).abs() < 1e-15);
        let mq = MollifiedProblem::at(&q, 0.5).unwrap();
        assert!((hamiltonian_delta(&mq, &[0.0], 0.0, &[0.0], &[2.0], 0) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn constant_driver_integrates_exactly() {
        let p = const_driver(0.3);
        let grid = Grid::uniform(1, -10.0, 10.0, 201, 400, 0.0, 1.0, false).unwrap();
        for delta in [0.0, 0.1, 0.4] {
            let mp = MollifiedProblem::at(&p, delta).unwrap();
            let (field, policy) = solve(&mp, &grid).unwrap();
            for level in 0..=grid.nt {
                let expect = 0.3 * (1.0 - grid.time(level));
                for &v in field.level(level) {
                    assert!((v - expect).abs() < 1e-10);
                }
            }
            // ties everywhere: lowest index wins
            assert!(policy.choices().iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn unstable_grid_refused() {
        let p = const_driver(0.3);
        let grid = Grid::uniform(1, -1.0, 1.0, 201, 10, 0.0, 1.0, false).unwrap();
        let mp = MollifiedProblem::unmollified(&p);
        assert!(matches!(solve(&mp, &grid), Err(Error::Unstable { .. })));
    }

    #[test]
    fn terminal_layer_is_phi_delta() {
        let p = problem(
            r#"{"dimension":1,"horizon":1,
            "drift":{"family":"bang-drift","params":{"gain":1}},
            "diffusion":{"family":"identity-diffusion","params":{"scale":0.5}},
            "driver":{"family":"constant-driver","params":{"value":0}},
            "terminal":{"family":"capped-abs-terminal","params":{"cap":1}},
            "control_mesh":[-1,1],"bounds":{"M":1,"C":1,"F":1}}"#,
        );
        let mp = MollifiedProblem::at(&p, 0.2).unwrap();
        let grid = Grid::uniform(1, -2.0, 2.0, 41, 200, 0.0, 1.0, false).unwrap();
        let (field, _) = solve(&mp, &grid).unwrap();
        let mut x = [0.0];
        for node in 0..grid.n_nodes() {
            grid.node_coords(node, &mut x);
            assert_eq!(field.value(grid.nt, node), mp.terminal(&x));
        }
    }
}

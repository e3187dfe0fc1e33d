use std::io::Write;

use serde::Serialize;

use super::{Grid, Stencil};
use crate::error::{Error, Result};

/// Solution of the HJB march: values and central gradients at every
/// (time level, node).
#[derive(Clone, Debug)]
pub struct ValueField {
    grid: Grid,
    delta: f64,
    values: Vec<f64>,
    gradients: Vec<f64>,
    sup_norm: f64,
    lipschitz_x_estimate: f64,
}

/// Result of `ValueField::interpolate`.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolated {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// The query point was outside the box and got clamped onto it.
    pub clamped: bool,
}

/// Cell index and fractional offset of `x` along axis `k`.
fn locate(grid: &Grid, k: usize, x: f64) -> (usize, f64, bool) {
    let lo = grid.box_lo[k];
    let hi = grid.box_hi[k];
    let n = grid.nx[k];
    let mut clamped = false;
    let x = if grid.periodic[k] {
        lo + (x - lo).rem_euclid(hi - lo)
    } else if x < lo {
        clamped = true;
        lo
    } else if x > hi {
        clamped = true;
        hi
    } else {
        x
    };
    let s = (x - lo) / grid.dx(k);
    let i = (s.floor() as usize).min(n - 2);
    (i, (s - i as f64).clamp(0.0, 1.0), clamped)
}

/// Corner nodes and multilinear weights of the cell containing `x`.
fn corners(grid: &Grid, x: &[f64]) -> ([(usize, f64); 4], usize, bool) {
    let d = grid.dim();
    let mut cell = [(0usize, 0.0f64); 2];
    let mut clamped = false;
    for (k, c) in cell.iter_mut().enumerate().take(d) {
        let (i, w, cl) = locate(grid, k, x[k]);
        *c = (i, w);
        clamped |= cl;
    }
    let mut out = [(0usize, 0.0f64); 4];
    let m = 1 << d;
    for (mask, o) in out.iter_mut().enumerate().take(m) {
        let mut idx = [0usize; 2];
        let mut w = 1.0;
        for k in 0..d {
            let up = (mask >> k) & 1 == 1;
            idx[k] = cell[k].0 + up as usize;
            w *= if up { cell[k].1 } else { 1.0 - cell[k].1 };
        }
        *o = (grid.linear_index(&idx[..d]), w);
    }
    (out, m, clamped)
}

/// Multilinear interpolation of one nodal layer at `x`; returns the value
/// and whether `x` was clamped onto the box.
pub fn interpolate_layer(grid: &Grid, layer: &[f64], x: &[f64]) -> (f64, bool) {
    let (cs, m, clamped) = corners(grid, x);
    let v = cs[..m].iter().map(|&(j, w)| w * layer[j]).sum();
    (v, clamped)
}

impl ValueField {
    pub(crate) fn from_levels(grid: Grid, delta: f64, values: Vec<f64>) -> Self {
        let n = grid.n_nodes();
        let d = grid.dim();
        let mut gradients = vec![0.0; values.len() * d];
        for (level, layer) in values.chunks(n).enumerate() {
            for node in 0..n {
                let st = Stencil::at(&grid, layer, node);
                let off = (level * n + node) * d;
                gradients[off..off + d].copy_from_slice(&st.central[..d]);
            }
        }
        let sup_norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut f = ValueField {
            grid,
            delta,
            values,
            gradients,
            sup_norm,
            lipschitz_x_estimate: 0.0,
        };
        f.lipschitz_x_estimate = f.holder_envelopes().0;
        f
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn lipschitz_x_estimate(&self) -> f64 {
        self.lipschitz_x_estimate
    }

    pub fn level(&self, level: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[level * n..(level + 1) * n]
    }

    pub fn value(&self, level: usize, node: usize) -> f64 {
        self.values[level * self.grid.n_nodes() + node]
    }

    pub fn gradient(&self, level: usize, node: usize) -> &[f64] {
        let d = self.grid.dim();
        let off = (level * self.grid.n_nodes() + node) * d;
        &self.gradients[off..off + d]
    }

    /// Second-difference matrix at a node (row-major `d x d`).
    pub fn hessian(&self, level: usize, node: usize) -> Vec<f64> {
        let d = self.grid.dim();
        let st = Stencil::at(&self.grid, self.level(level), node);
        let mut out = vec![0.0; d * d];
        for k in 0..d {
            for l in 0..d {
                out[k * d + l] = st.second[k][l];
            }
        }
        out
    }

    /// Value and gradient at `(t, x)`: multilinear in space, linear in time.
    pub fn interpolate(&self, t: f64, x: &[f64]) -> Result<Interpolated> {
        let g = &self.grid;
        if !g.contains_time(t) {
            return Err(Error::TimeOutOfRange {
                t,
                t0: g.t0,
                t1: g.t1,
            });
        }
        let s = ((t - g.t0) / g.dt()).clamp(0.0, g.nt as f64);
        let lvl = (s.floor() as usize).min(g.nt - 1);
        let theta = s - lvl as f64;
        let d = g.dim();
        let (cs, m, clamped) = corners(g, x);
        let mut value = 0.0;
        let mut gradient = vec![0.0; d];
        for (l, wt) in [(lvl, 1.0 - theta), (lvl + 1, theta)] {
            if wt == 0.0 {
                continue;
            }
            for &(j, w) in &cs[..m] {
                value += wt * w * self.value(l, j);
                for (gk, dv) in gradient.iter_mut().zip(self.gradient(l, j)) {
                    *gk += wt * w * dv;
                }
            }
        }
        Ok(Interpolated {
            value,
            gradient,
            clamped,
        })
    }

    /// Largest observed `|dV|/|dx|` over neighbouring nodes and
    /// `|dV| / ((1 + |x|) |dt|^(1/2))` over pairs of time levels.
    ///
    /// Time pairs use dyadic lags `1, 2, 4, ...` so the envelope does not
    /// shrink artificially with `dt` for smooth fields.
    pub fn holder_envelopes(&self) -> (f64, f64) {
        let g = &self.grid;
        let n = g.n_nodes();
        let d = g.dim();
        let mut lip = 0.0f64;
        for level in 0..=g.nt {
            let layer = self.level(level);
            for node in 0..n {
                for k in 0..d {
                    if let Some(j) = g.neighbor(node, k, 1) {
                        lip = lip.max((layer[j] - layer[node]).abs() / g.dx(k));
                    }
                }
            }
        }
        let mut hol = 0.0f64;
        let mut x = vec![0.0; d];
        let dt = g.dt();
        for node in 0..n {
            g.node_coords(node, &mut x);
            let w = 1.0 + x.iter().map(|u| u * u).sum::<f64>().sqrt();
            let mut lag = 1;
            while lag <= g.nt {
                let scale = w * (lag as f64 * dt).sqrt();
                for level in 0..=(g.nt - lag) {
                    let dv = (self.value(level + lag, node) - self.value(level, node)).abs();
                    hol = hol.max(dv / scale);
                }
                lag *= 2;
            }
        }
        (lip, hol)
    }

    /// CSV with columns `t,x1..xd,V,dV1..dVd`, one row per node on every
    /// `stride`-th time level (the final level is always included).
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> Result<()> {
        let g = &self.grid;
        let d = g.dim();
        let mut head = vec!["t".to_string()];
        head.extend((1..=d).map(|k| format!("x{k}")));
        head.push("V".into());
        head.extend((1..=d).map(|k| format!("dV{k}")));
        writeln!(w, "{}", head.join(","))?;
        let mut x = vec![0.0; d];
        for level in export_levels(g.nt, stride) {
            let t = g.time(level);
            for node in 0..g.n_nodes() {
                g.node_coords(node, &mut x);
                write!(w, "{t}")?;
                for xi in &x {
                    write!(w, ",{xi}")?;
                }
                write!(w, ",{}", self.value(level, node))?;
                for dv in self.gradient(level, node) {
                    write!(w, ",{dv}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn sidecar(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            kind: &'static str,
            grid: &'a Grid,
            delta: f64,
            sup_norm: f64,
            lipschitz_x_estimate: f64,
        }
        serde_json::to_value(Sidecar {
            kind: "value_field",
            grid: &self.grid,
            delta: self.delta,
            sup_norm: self.sup_norm,
            lipschitz_x_estimate: self.lipschitz_x_estimate,
        })
        .expect("serializable")
    }
}

pub(crate) fn export_levels(nt: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut out: Vec<usize> = (0..=nt).step_by(stride).collect();
    if out.last() != Some(&nt) {
        out.push(nt);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_from(grid: Grid, f: impl Fn(f64, &[f64]) -> f64) -> ValueField {
        let n = grid.n_nodes();
        let d = grid.dim();
        let mut values = vec![0.0; (grid.nt + 1) * n];
        let mut x = vec![0.0; d];
        for level in 0..=grid.nt {
            for node in 0..n {
                grid.node_coords(node, &mut x);
                values[level * n + node] = f(grid.time(level), &x);
            }
        }
        ValueField::from_levels(grid, 0.0, values)
    }

    #[test]
    fn node_query_returns_stored_value() {
        let g = Grid::uniform(2, -1.0, 1.0, 7, 4, 0.0, 1.0, false).unwrap();
        let f = field_from(g.clone(), |t, x| (x[0] * 3.0).sin() + x[1] * x[1] + t);
        let mut x = [0.0; 2];
        for level in 0..=g.nt {
            for node in 0..g.n_nodes() {
                g.node_coords(node, &mut x);
                let r = f.interpolate(g.time(level), &x).unwrap();
                assert!((r.value - f.value(level, node)).abs() < 1e-14);
                assert!(!r.clamped);
            }
        }
    }

    #[test]
    fn linear_field_reproduced() {
        let g = Grid::uniform(2, -1.0, 1.0, 5, 4, 0.0, 1.0, false).unwrap();
        let f = field_from(g, |t, x| 0.5 + 2.0 * x[0] - 0.7 * x[1] + 0.3 * t);
        let r = f.interpolate(0.37, &[0.123, -0.61]).unwrap();
        assert!((r.value - (0.5 + 0.246 + 0.427 + 0.111)).abs() < 1e-13);
        assert!((r.gradient[0] - 2.0).abs() < 1e-12);
        assert!((r.gradient[1] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn clamping_and_time_range() {
        let g = Grid::uniform(1, -1.0, 1.0, 5, 4, 0.0, 1.0, false).unwrap();
        let f = field_from(g, |_, _| 2.5);
        let r = f.interpolate(0.5, &[7.0]).unwrap();
        assert!(r.clamped);
        assert_eq!(r.value, 2.5);
        assert!(matches!(
            f.interpolate(1.5, &[0.0]),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn envelopes_of_simple_fields() {
        let g = Grid::uniform(1, -1.0, 1.0, 9, 16, 0.0, 1.0, false).unwrap();
        assert_eq!(field_from(g.clone(), |_, _| 1.0).holder_envelopes(), (0.0, 0.0));
        let (lip, hol) = field_from(g, |t, _| 0.3 * (1.0 - t)).holder_envelopes();
        assert!(lip < 1e-15);
        assert!(hol.is_finite() && hol > 0.0);
    }

    #[test]
    fn csv_has_expected_columns() {
        let g = Grid::uniform(2, 0.0, 1.0, 3, 2, 0.0, 1.0, false).unwrap();
        let f = field_from(g, |_, x| x[0]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf, 1).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,V,dV1,dV2"));
        assert_eq!(lines.count(), 3 * 9);
    }
}

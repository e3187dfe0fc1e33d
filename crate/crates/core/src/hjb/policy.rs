use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::field::export_levels;
use super::Grid;
use crate::error::{Error, Result};

/// Control-mesh index chosen at every (time level, node). Level `nt` has no
/// decision; rows run over levels `0..nt`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    grid: Grid,
    delta: f64,
    n_controls: usize,
    choice: Vec<u32>,
}

impl FeedbackPolicy {
    pub fn new(grid: Grid, delta: f64, n_controls: usize, choice: Vec<u32>) -> Result<Self> {
        if choice.len() != grid.nt * grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "policy has {} entries, grid needs {}",
                choice.len(),
                grid.nt * grid.n_nodes()
            )));
        }
        if let Some(&bad) = choice.iter().find(|&&c| c as usize >= n_controls) {
            return Err(Error::invalid(
                "policy",
                format!("index {bad} outside mesh of {n_controls} atoms"),
            ));
        }
        Ok(FeedbackPolicy {
            grid,
            delta,
            n_controls,
            choice,
        })
    }

    /// The same atom everywhere.
    pub fn constant(grid: Grid, delta: f64, n_controls: usize, index: usize) -> Result<Self> {
        let n = grid.nt * grid.n_nodes();
        Self::new(grid, delta, n_controls, vec![index as u32; n])
    }

    /// Uniformly random atom per (level, node).
    pub fn random(grid: Grid, delta: f64, n_controls: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.nt * grid.n_nodes();
        let choice = (0..n).map(|_| rng.random_range(0..n_controls as u32)).collect();
        FeedbackPolicy {
            grid,
            delta,
            n_controls,
            choice,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn choices(&self) -> &[u32] {
        &self.choice
    }

    pub fn choice(&self, level: usize, node: usize) -> usize {
        self.choice[level * self.grid.n_nodes() + node] as usize
    }

    /// Atom at `(t, x)`: the decision of the time level whose step contains
    /// `t`, at the nearest node (clamped onto the box).
    pub fn control_at(&self, t: f64, x: &[f64]) -> usize {
        let g = &self.grid;
        let s = ((t - g.t0) / g.dt()).floor();
        let level = (s.max(0.0) as usize).min(g.nt - 1);
        let mut idx = [0usize; 2];
        for k in 0..g.dim() {
            let lo = g.box_lo[k];
            let hi = g.box_hi[k];
            let xk = if g.periodic[k] {
                lo + (x[k] - lo).rem_euclid(hi - lo)
            } else {
                x[k].clamp(lo, hi)
            };
            idx[k] = (((xk - lo) / g.dx(k)).round() as usize).min(g.nx[k] - 1);
        }
        self.choice(level, g.linear_index(&idx[..g.dim()]))
    }

    /// Fraction of nodes where the policy picks `index` at `level`.
    pub fn share(&self, level: usize, index: usize) -> f64 {
        let n = self.grid.n_nodes();
        let row = &self.choice[level * n..(level + 1) * n];
        row.iter().filter(|&&c| c as usize == index).count() as f64 / n as f64
    }

    /// CSV with columns `t,x1..xd,control_index`.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> Result<()> {
        let g = &self.grid;
        let d = g.dim();
        let mut head = vec!["t".to_string()];
        head.extend((1..=d).map(|k| format!("x{k}")));
        head.push("control_index".into());
        writeln!(w, "{}", head.join(","))?;
        let mut x = vec![0.0; d];
        for level in export_levels(g.nt - 1, stride) {
            let t = g.time(level);
            for node in 0..g.n_nodes() {
                g.node_coords(node, &mut x);
                write!(w, "{t}")?;
                for xi in &x {
                    write!(w, ",{xi}")?;
                }
                writeln!(w, ",{}", self.choice(level, node))?;
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
            n_controls: usize,
        }
        serde_json::to_value(Sidecar {
            kind: "feedback_policy",
            grid: &self.grid,
            delta: self.delta,
            n_controls: self.n_controls,
        })
        .expect("serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_indices() {
        let g = Grid::uniform(1, 0.0, 1.0, 5, 2, 0.0, 1.0, false).unwrap();
        assert!(FeedbackPolicy::new(g.clone(), 0.0, 2, vec![0; 9]).is_err());
        assert!(FeedbackPolicy::new(g.clone(), 0.0, 2, vec![2; 10]).is_err());
        let r = FeedbackPolicy::random(g, 0.0, 3, 7);
        assert!(r.choices().iter().all(|&c| c < 3));
    }

    #[test]
    fn lookup_uses_nearest_node() {
        let g = Grid::uniform(1, 0.0, 1.0, 5, 2, 0.0, 1.0, false).unwrap();
        let mut choice = vec![0u32; 10];
        choice[2] = 1; // level 0, x = 0.5
        choice[5 + 4] = 1; // level 1, x = 1
        let p = FeedbackPolicy::new(g, 0.0, 2, choice).unwrap();
        assert_eq!(p.control_at(0.1, &[0.45]), 1);
        assert_eq!(p.control_at(0.1, &[0.3]), 0);
        assert_eq!(p.control_at(0.7, &[3.0]), 1);
        assert_eq!(p.control_at(1.0, &[0.5]), 0);
    }
}

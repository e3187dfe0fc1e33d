use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Space-time grid on a truncation box. Nodes include both box faces; in a
/// periodic direction the first and last node are the same point.
///
/// Nodes are numbered with the first coordinate running fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub nx: Vec<usize>,
    pub nt: usize,
    pub t0: f64,
    #[serde(rename = "T")]
    pub t1: f64,
    pub periodic: Vec<bool>,
}

impl Grid {
    pub fn new(
        box_lo: Vec<f64>,
        box_hi: Vec<f64>,
        nx: Vec<usize>,
        nt: usize,
        t0: f64,
        t1: f64,
        periodic: Vec<bool>,
    ) -> Result<Self> {
        let d = box_lo.len();
        if d == 0 || d > 2 {
            return Err(Error::invalid("grid", "grids support d = 1 or d = 2"));
        }
        if box_hi.len() != d || nx.len() != d || periodic.len() != d {
            return Err(Error::invalid("grid", "inconsistent dimensions"));
        }
        for k in 0..d {
            if !(box_lo[k] < box_hi[k]) {
                return Err(Error::invalid("grid", "box_lo must be < box_hi"));
            }
            if nx[k] < 3 {
                return Err(Error::invalid("grid", "need nx >= 3"));
            }
        }
        if nt < 1 {
            return Err(Error::invalid("grid", "need nt >= 1"));
        }
        if !(t0 < t1) {
            return Err(Error::invalid("grid", "need t0 < T"));
        }
        Ok(Grid {
            box_lo,
            box_hi,
            nx,
            nt,
            t0,
            t1,
            periodic,
        })
    }

    /// Same box and resolution in every direction.
    pub fn uniform(dim: usize, lo: f64, hi: f64, nx: usize, nt: usize, t0: f64, t1: f64, periodic: bool) -> Result<Self> {
        Self::new(
            vec![lo; dim],
            vec![hi; dim],
            vec![nx; dim],
            nt,
            t0,
            t1,
            vec![periodic; dim],
        )
    }

    pub fn dim(&self) -> usize {
        self.nx.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nx.iter().product()
    }

    pub fn dx(&self, k: usize) -> f64 {
        (self.box_hi[k] - self.box_lo[k]) / (self.nx[k] - 1) as f64
    }

    pub fn dx_min(&self) -> f64 {
        (0..self.dim()).map(|k| self.dx(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.nt as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.nt {
            self.t1
        } else {
            self.t0 + level as f64 * self.dt()
        }
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        let mut idx = [0usize; 2];
        let mut rest = node;
        for (k, &n) in self.nx.iter().enumerate() {
            idx[k] = rest % n;
            rest /= n;
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let mut node = 0;
        for k in (0..self.dim()).rev() {
            node = node * self.nx[k] + idx[k];
        }
        node
    }

    pub fn coord(&self, k: usize, i: usize) -> f64 {
        if i + 1 == self.nx[k] {
            self.box_hi[k]
        } else {
            self.box_lo[k] + i as f64 * self.dx(k)
        }
    }

    pub fn node_coords(&self, node: usize, out: &mut [f64]) {
        let idx = self.multi_index(node);
        for (k, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = self.coord(k, idx[k]);
        }
    }

    /// Neighbour of `node` one step along axis `k` (`dir` = +1 or -1).
    /// `None` on a non-periodic face.
    pub fn neighbor(&self, node: usize, k: usize, dir: i32) -> Option<usize> {
        let mut idx = self.multi_index(node);
        let n = self.nx[k];
        let i = idx[k];
        let j = if dir > 0 {
            if i + 1 < n {
                i + 1
            } else if self.periodic[k] {
                1
            } else {
                return None;
            }
        } else if i > 0 {
            i - 1
        } else if self.periodic[k] {
            n - 2
        } else {
            return None;
        };
        idx[k] = j;
        Some(self.linear_index(&idx[..self.dim()]))
    }

    /// Whether the node lies at least `margin` (fraction of the box width)
    /// away from every non-periodic face.
    pub fn is_interior(&self, node: usize, margin: f64) -> bool {
        let idx = self.multi_index(node);
        (0..self.dim()).all(|k| {
            if self.periodic[k] {
                return true;
            }
            let x = self.coord(k, idx[k]);
            let w = self.box_hi[k] - self.box_lo[k];
            x >= self.box_lo[k] + margin * w - 1e-12 && x <= self.box_hi[k] - margin * w + 1e-12
        })
    }

    /// Largest stable time step of the explicit scheme for diffusion/drift
    /// bound `m`, regularisation `delta` and driver Lipschitz constant `c`:
    /// `dx^2 / (d (M^2 + delta^2) + sqrt(d) M dx + C dx^2)`.
    pub fn stable_dt(&self, m: f64, delta: f64, c: f64) -> f64 {
        let d = self.dim() as f64;
        let h = self.dx_min();
        h * h / (d * (m * m + delta * delta) + d.sqrt() * m * h + c * h * h)
    }

    pub fn check_stability(&self, m: f64, delta: f64, c: f64) -> Result<()> {
        let bound = self.stable_dt(m, delta, c);
        let dt = self.dt();
        if dt > bound * (1.0 + 1e-12) {
            let required_nt = ((self.t1 - self.t0) / bound).ceil() as usize;
            return Err(Error::Unstable {
                dt,
                bound,
                required_nt,
            });
        }
        Ok(())
    }

    /// Same box and time range, `factor` times finer in space (per cell)
    /// and `factor^2` times finer in time.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid {
            nx: self.nx.iter().map(|n| (n - 1) * factor + 1).collect(),
            nt: self.nt * factor * factor,
            ..self.clone()
        }
    }

    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.t0 - 1e-12 && t <= self.t1 + 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip_2d() {
        let g = Grid::uniform(2, -1.0, 1.0, 5, 10, 0.0, 1.0, false).unwrap();
        for node in 0..g.n_nodes() {
            let idx = g.multi_index(node);
            assert_eq!(g.linear_index(&idx), node);
        }
        assert_eq!(g.neighbor(0, 0, -1), None);
        assert_eq!(g.neighbor(0, 0, 1), Some(1));
        assert_eq!(g.neighbor(0, 1, 1), Some(5));
    }

    #[test]
    fn periodic_neighbors_skip_duplicate_endpoint() {
        let g = Grid::uniform(1, 0.0, 1.0, 5, 1, 0.0, 1.0, true).unwrap();
        assert_eq!(g.neighbor(0, 0, -1), Some(3));
        assert_eq!(g.neighbor(4, 0, 1), Some(1));
    }

    #[test]
    fn instability_reports_required_steps() {
        let g = Grid::uniform(1, -1.0, 1.0, 201, 10, 0.0, 1.0, false).unwrap();
        match g.check_stability(1.0, 0.0, 0.0) {
            Err(Error::Unstable { required_nt, .. }) => {
                let ok = Grid { nt: required_nt, ..g.clone() };
                assert!(ok.check_stability(1.0, 0.0, 0.0).is_ok());
                let short = Grid { nt: required_nt - 1, ..g };
                assert!(short.check_stability(1.0, 0.0, 0.0).is_err());
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }
}

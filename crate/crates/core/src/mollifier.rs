//! Smoothing of Lipschitz coefficients by convolution with a scaled bump
//! kernel, evaluated with a fixed tensor-product midpoint quadrature.
//!
//! `l_delta(xi) = sum_k w_k l(xi - delta u_k)` where `u_k` are the midpoint
//! nodes inside the unit ball and `w_k` the bump values divided by their
//! discrete sum. Dividing by the discrete mass makes constants exact, and the
//! symmetric node set makes affine functions exact.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::problem::{Coefficients, Problem};

/// Largest joint dimension we mollify over: f is smoothed jointly in
/// (x, y, z), i.e. 2d + 1 coordinates, and d <= 2 is supported.
pub const MAX_JOINT_DIM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// exp(-1 / (1 - |u|^2)) on the open unit ball.
    Bump,
}

impl Kernel {
    pub fn id(&self) -> &'static str {
        match self {
            Kernel::Bump => "bump",
        }
    }

    /// Unnormalised kernel value.
    pub fn value(&self, u: &[f64]) -> f64 {
        let r2: f64 = u.iter().map(|a| a * a).sum();
        if r2 >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - r2)).exp()
        }
    }
}

/// Quadrature nodes in the unit ball of R^m with normalised weights.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelQuadrature {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl KernelQuadrature {
    /// Tensor-product midpoint rule with `nodes_per_dim` cells per axis on
    /// [-1, 1]^m, restricted to nodes where the kernel is positive.
    pub fn tensor(kernel: Kernel, dim: usize, nodes_per_dim: usize) -> Self {
        let n = nodes_per_dim.max(1);
        let axis: Vec<f64> = (0..n)
            .map(|i| (2 * i as i64 + 1 - n as i64) as f64 / n as f64)
            .collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; dim];
        let total = n.pow(dim as u32);
        let mut u = vec![0.0; dim];
        for _ in 0..total {
            for (a, i) in u.iter_mut().zip(&idx) {
                *a = axis[*i];
            }
            let w = kernel.value(&u);
            if w > 0.0 {
                points.extend_from_slice(&u);
                weights.push(w);
            }
            for a in idx.iter_mut() {
                *a += 1;
                if *a < n {
                    break;
                }
                *a = 0;
            }
        }
        let mass: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= mass);
        KernelQuadrature {
            dim,
            points,
            weights,
        }
    }

    /// The trivial rule on R^0: one node of weight one.
    pub fn identity() -> Self {
        KernelQuadrature {
            dim: 0,
            points: Vec::new(),
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |k| (self.point(k), self.weights[k]))
    }

    /// Marginal rule on the coordinates flagged in `keep`: weights of nodes
    /// that agree on the kept coordinates are summed. Convolving a function
    /// that ignores the dropped coordinates with the marginal rule gives the
    /// same value as with the full rule.
    pub fn marginal(&self, keep: &[bool]) -> Self {
        assert_eq!(keep.len(), self.dim);
        let kept: Vec<usize> = (0..self.dim).filter(|&i| keep[i]).collect();
        if kept.is_empty() {
            return Self::identity();
        }
        let mut acc: BTreeMap<Vec<u64>, (Vec<f64>, f64)> = BTreeMap::new();
        for (p, w) in self.nodes() {
            let sub: Vec<f64> = kept.iter().map(|&i| p[i]).collect();
            let key: Vec<u64> = sub.iter().map(|a| a.to_bits()).collect();
            acc.entry(key).or_insert((sub, 0.0)).1 += w;
        }
        let mut points = Vec::with_capacity(acc.len() * kept.len());
        let mut weights = Vec::with_capacity(acc.len());
        for (_, (p, w)) in acc {
            points.extend(p);
            weights.push(w);
        }
        KernelQuadrature {
            dim: kept.len(),
            points,
            weights,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MollifierSpec {
    pub delta: f64,
    pub nodes_per_dim: usize,
    pub kernel: Kernel,
}

impl MollifierSpec {
    pub const DEFAULT_NODES: usize = 9;

    pub fn new(delta: f64, nodes_per_dim: usize) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta", "must be finite and >= 0"));
        }
        if nodes_per_dim == 0 {
            return Err(Error::invalid("nodes_per_dim", "must be positive"));
        }
        Ok(MollifierSpec {
            delta,
            nodes_per_dim,
            kernel: Kernel::Bump,
        })
    }

    pub fn quadrature(&self, dim: usize) -> KernelQuadrature {
        KernelQuadrature::tensor(self.kernel, dim, self.nodes_per_dim)
    }
}

/// Mollified value of a scalar function at `xi`.
pub fn mollify_value(f: impl Fn(&[f64]) -> f64, xi: &[f64], delta: f64, rule: &KernelQuadrature) -> f64 {
    let m = xi.len();
    assert_eq!(rule.dim(), m, "quadrature dimension mismatch");
    let mut shifted = xi.to_vec();
    let mut acc = 0.0;
    for (u, w) in rule.nodes() {
        for i in 0..m {
            shifted[i] = xi[i] - delta * u[i];
        }
        acc += w * f(&shifted);
    }
    acc
}

/// Mollified value of a vector-valued function, written into `out`.
pub fn mollify_vector(
    f: impl Fn(&[f64], &mut [f64]),
    xi: &[f64],
    delta: f64,
    rule: &KernelQuadrature,
    out: &mut [f64],
) {
    let m = xi.len();
    assert_eq!(rule.dim(), m, "quadrature dimension mismatch");
    let mut shifted = xi.to_vec();
    let mut tmp = vec![0.0; out.len()];
    out.iter_mut().for_each(|o| *o = 0.0);
    for (u, w) in rule.nodes() {
        for i in 0..m {
            shifted[i] = xi[i] - delta * u[i];
        }
        f(&shifted, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += w * t;
        }
    }
}

/// The uniform gap bound `C_l * delta` between a Lipschitz function and its
/// mollification.
pub fn mollification_gap(lipschitz_c: f64, delta: f64) -> f64 {
    lipschitz_c * delta
}

/// A problem whose coefficients are replaced by their mollifications, with
/// `delta` also acting as the regularisation level of the generator.
///
/// b and sigma are smoothed in x per control atom, Phi in x, and f jointly
/// in (x, y, z) per control atom. Coordinates a family does not depend on
/// are integrated out of the rule beforehand (see
/// [`KernelQuadrature::marginal`]).
#[derive(Clone, Debug)]
pub struct MollifiedProblem {
    base: Problem,
    delta: f64,
    nodes_per_dim: usize,
    drift_rule: KernelQuadrature,
    diffusion_rule: KernelQuadrature,
    terminal_rule: KernelQuadrature,
    /// Rule over the driver's live coordinates and their joint indices
    /// (x_1..x_d, y, z_1..z_d).
    driver_rule: KernelQuadrature,
    driver_coords: Vec<usize>,
}

/// `mollify_problem`: smooth every coefficient of `p` at level `delta`.
pub fn mollify_problem(p: &Problem, delta: f64, spec: &MollifierSpec) -> Result<MollifiedProblem> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta", format!("{delta} outside (0, 1]")));
    }
    if p.dim > 2 {
        return Err(Error::invalid(
            "dimension",
            "mollification is supported for d <= 2 only",
        ));
    }
    let d = p.dim;
    let rule_x = spec.quadrature(d);
    let pick = |dep: bool| {
        if dep {
            rule_x.clone()
        } else {
            KernelQuadrature::identity()
        }
    };
    let dep = p.driver.dependence();
    let mut keep = vec![dep.x; d];
    keep.push(dep.y);
    keep.extend(std::iter::repeat_n(dep.z, d));
    let driver_coords: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    let driver_rule = if driver_coords.is_empty() {
        KernelQuadrature::identity()
    } else {
        spec.quadrature(2 * d + 1).marginal(&keep)
    };

    Ok(MollifiedProblem {
        drift_rule: pick(p.drift.depends_on_x()),
        diffusion_rule: pick(p.diffusion.depends_on_x()),
        terminal_rule: pick(p.terminal.depends_on_x()),
        driver_rule,
        driver_coords,
        base: p.clone(),
        delta,
        nodes_per_dim: spec.nodes_per_dim,
    })
}

impl MollifiedProblem {
    /// The raw problem viewed as a `delta = 0` member of the family: no
    /// smoothing and no regularisation.
    pub fn unmollified(p: &Problem) -> Self {
        MollifiedProblem {
            base: p.clone(),
            delta: 0.0,
            nodes_per_dim: 1,
            drift_rule: KernelQuadrature::identity(),
            diffusion_rule: KernelQuadrature::identity(),
            terminal_rule: KernelQuadrature::identity(),
            driver_rule: KernelQuadrature::identity(),
            driver_coords: Vec::new(),
        }
    }

    /// `delta = 0` gives [`MollifiedProblem::unmollified`], otherwise
    /// [`mollify_problem`] with the default quadrature.
    pub fn at(p: &Problem, delta: f64) -> Result<Self> {
        Self::with_nodes(p, delta, MollifierSpec::DEFAULT_NODES)
    }

    pub fn with_nodes(p: &Problem, delta: f64, nodes_per_dim: usize) -> Result<Self> {
        if delta == 0.0 {
            Ok(Self::unmollified(p))
        } else {
            mollify_problem(p, delta, &MollifierSpec::new(delta, nodes_per_dim)?)
        }
    }

    pub fn base(&self) -> &Problem {
        &self.base
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.nodes_per_dim
    }
}

impl Coefficients for MollifiedProblem {
    fn dim(&self) -> usize {
        self.base.dim
    }

    fn n_controls(&self) -> usize {
        self.base.n_controls()
    }

    fn drift(&self, x: &[f64], v: usize, out: &mut [f64]) {
        if self.drift_rule.dim() == 0 {
            return self.base.drift(x, v, out);
        }
        let base = &self.base;
        mollify_vector(|y, o| base.drift(y, v, o), x, self.delta, &self.drift_rule, out)
    }

    fn diffusion(&self, x: &[f64], v: usize, out: &mut [f64]) {
        if self.diffusion_rule.dim() == 0 {
            return self.base.diffusion(x, v, out);
        }
        let base = &self.base;
        mollify_vector(|y, o| base.diffusion(y, v, o), x, self.delta, &self.diffusion_rule, out)
    }

    fn driver(&self, x: &[f64], y: f64, z: &[f64], v: usize) -> f64 {
        if self.driver_rule.dim() == 0 {
            return self.base.driver(x, y, z, v);
        }
        let d = x.len();
        let mut joint = [0.0; MAX_JOINT_DIM];
        joint[..d].copy_from_slice(x);
        joint[d] = y;
        joint[d + 1..2 * d + 1].copy_from_slice(z);
        let mut shifted = joint;
        let mut acc = 0.0;
        for (u, w) in self.driver_rule.nodes() {
            for (k, &c) in self.driver_coords.iter().enumerate() {
                shifted[c] = joint[c] - self.delta * u[k];
            }
            acc += w
                * self
                    .base
                    .driver(&shifted[..d], shifted[d], &shifted[d + 1..2 * d + 1], v);
        }
        acc
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        if self.terminal_rule.dim() == 0 {
            return self.base.terminal(x);
        }
        let base = &self.base;
        mollify_value(|y| base.terminal(y), x, self.delta, &self.terminal_rule)
    }

    fn delta(&self) -> f64 {
        self.delta
    }
}

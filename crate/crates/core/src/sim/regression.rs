use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Regression basis for conditional expectations: monomials of the
/// standardised state up to `degree` (total degree), optionally plus the
/// terminal function evaluated at the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    pub include_terminal: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec {
            degree: 3,
            include_terminal: true,
        }
    }
}

impl BasisSpec {
    pub fn constant() -> Self {
        BasisSpec {
            degree: 0,
            include_terminal: false,
        }
    }

    pub fn describe(&self) -> String {
        if self.include_terminal {
            format!("monomials<={} + terminal", self.degree)
        } else {
            format!("monomials<={}", self.degree)
        }
    }
}

/// All exponent vectors over `d` variables with total degree in 1..=deg.
fn exponents(d: usize, deg: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn rec(d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            if cur.iter().sum::<usize>() > 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(d, left - e, cur, out);
            cur.pop();
        }
    }
    rec(d, deg, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| e.iter().sum::<usize>());
    out
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Least-squares projector onto the span of the basis columns at one
/// time step.
pub(crate) struct Design {
    a: DMatrix<f64>,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
}

/// Smallest admissible eigenvalue of the Gram matrix relative to the
/// largest.
const RANK_TOL: f64 = 1e-10;

impl Design {
    /// `xs` holds `n` states of dimension `d`; `phi` the terminal function
    /// at those states. Returns `None` when the columns are numerically
    /// dependent.
    pub(crate) fn build(xs: &[f64], d: usize, phi: Option<&[f64]>, spec: &BasisSpec) -> Option<Self> {
        let n = xs.len() / d;
        let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
        let mut live = Vec::new();
        let mut std_x = vec![0.0; n * d];
        for k in 0..d {
            let it = xs.iter().skip(k).step_by(d).copied();
            let (m, s) = mean_sd(it);
            if s > 1e-12 * (1.0 + m.abs()) {
                live.push(k);
                for i in 0..n {
                    std_x[i * d + k] = (xs[i * d + k] - m) / s;
                }
            }
        }
        if !live.is_empty() {
            for e in exponents(live.len(), spec.degree) {
                cols.push(
                    (0..n)
                        .map(|i| {
                            live.iter()
                                .zip(&e)
                                .map(|(&k, &p)| std_x[i * d + k].powi(p as i32))
                                .product()
                        })
                        .collect(),
                );
            }
        }
        if let Some(phi) = phi {
            let (m, s) = mean_sd(phi.iter().copied());
            if s > 1e-12 * (1.0 + m.abs()) {
                cols.push(phi.iter().map(|v| (v - m) / s).collect());
            }
        }
        let p = cols.len();
        let a = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
        let gram = a.tr_mul(&a) / n as f64;
        let eig = SymmetricEigen::new(gram);
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if n < p || !(min > RANK_TOL * max) {
            return None;
        }
        Some(Design { a, eig })
    }

    /// Fitted values of the projection of `target`.
    pub(crate) fn fit(&self, target: &[f64]) -> Vec<f64> {
        if is_constant(target) {
            return vec![target[0]; target.len()];
        }
        let n = target.len() as f64;
        let t = DVector::from_column_slice(target);
        let rhs = self.a.tr_mul(&t) / n;
        let q = &self.eig.eigenvectors;
        let mut c = q.tr_mul(&rhs);
        for (ci, l) in c.iter_mut().zip(self.eig.eigenvalues.iter()) {
            *ci /= l;
        }
        let coef = q * c;
        (&self.a * coef).iter().copied().collect()
    }
}

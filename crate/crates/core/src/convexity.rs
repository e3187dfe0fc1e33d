//! Pointwise audits of the convexity conditions on the lifted coefficients
//!
//! ```text
//! S = [[s(x,v), 0], [z*, theta*]],   S S* = [[s s*, s z], [z* s*, |z|^2 + |theta|^2]]
//! beta = (b(x,v), -f(x,y,z,v))
//! ```
//!
//! and the barycentric reduction of a finite measure on
//! `{(v, w) : |s*(x,v) w| <= K}` to a single triple `(z, theta, v)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ControlPoint, Problem};

/// Default tolerance in lifted coordinates.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTriple {
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub v: ControlPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LiftSource {
    Triple(ControlTriple),
    Pair { v: ControlPoint, w: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    /// Row-major `(d+1) x (d+1)`.
    pub big_sigma_sq: Vec<f64>,
    pub beta_vec: Vec<f64>,
    pub source: LiftSource,
}

impl LiftedPoint {
    pub fn dim(&self) -> usize {
        self.beta_vec.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.big_sigma_sq[i * self.dim() + j]
    }
}

/// Coefficients at a raw control value (not necessarily a mesh atom).
struct Coefs {
    b: Vec<f64>,
    s: Vec<f64>,
}

fn coefs(p: &Problem, x: &[f64], v: &[f64]) -> Coefs {
    let d = p.dim;
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * d];
    p.drift.eval(x, v, &mut b);
    p.diffusion.eval(x, v, &mut s);
    Coefs { b, s }
}

/// `s s*` row-major.
fn gram(s: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
        }
    }
    out
}

/// `s* w`.
fn sigma_t_w(s: &[f64], w: &[f64]) -> Vec<f64> {
    let d = w.len();
    (0..d).map(|j| (0..d).map(|i| s[i * d + j] * w[i]).sum()).collect()
}

fn mat_vec(a: &[f64], w: &[f64]) -> Vec<f64> {
    let d = w.len();
    (0..d).map(|i| (0..d).map(|j| a[i * d + j] * w[j]).sum()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|u| u * u).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// `lift`: `(S S*, beta)` for the triple at `(x, y)`.
pub fn lift(p: &Problem, x: &[f64], y: f64, triple: &ControlTriple) -> LiftedPoint {
    let d = p.dim;
    let c = coefs(p, x, &triple.v.0);
    let ss = gram(&c.s, d);
    let sz = mat_vec(&c.s, &triple.z);
    let n = d + 1;
    let mut big = vec![0.0; n * n];
    for i in 0..d {
        for j in 0..d {
            big[i * n + j] = ss[i * d + j];
        }
        big[i * n + d] = sz[i];
        big[d * n + i] = sz[i];
    }
    big[d * n + d] = triple.z.iter().map(|u| u * u).sum::<f64>()
        + triple.theta.iter().map(|u| u * u).sum::<f64>();
    let mut beta = c.b;
    beta.push(-p.driver.eval(x, y, &triple.z, &triple.v.0));
    LiftedPoint {
        big_sigma_sq: big,
        beta_vec: beta,
        source: LiftSource::Triple(triple.clone()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    H1,
    H2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledPoint {
    pub v: ControlPoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    pub image: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub first: SampledPoint,
    pub second: SampledPoint,
    pub lambda: f64,
    pub midpoint: Vec<f64>,
    /// Distance from the combination to the sampled image set.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub assumption_id: Assumption,
    pub satisfied: bool,
    pub deficiency: f64,
    pub witness: Option<Witness>,
    pub probe: Probe,
    pub samples_used: usize,
    #[serde(rename = "radius_K", skip_serializing_if = "Option::is_none")]
    pub radius_k: Option<f64>,
    pub tol: f64,
}

/// One sampled element of the audited set with its pre-image.
struct Sample {
    v: Vec<f64>,
    w: Option<Vec<f64>>,
    image: Vec<f64>,
}

/// Shared pair test: a combination `lambda P_i + (1 - lambda) P_j` is
/// realised when it lies within `tol` of a sampled image, or of the image
/// at the blended pre-image. Otherwise it is a witness whose distance to the
/// sampled set counts toward the deficiency.
fn pair_test(
    samples: &[Sample],
    image_at: &dyn Fn(&[f64], Option<&[f64]>) -> Vec<f64>,
    n_pairs: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, Option<Witness>) {
    let n = samples.len();
    let mut deficiency = 0.0f64;
    let mut witness: Option<Witness> = None;
    if n < 2 {
        return (0.0, None);
    }
    for _ in 0..n_pairs {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let lambda: f64 = rng.random_range(0.0..1.0);
        let (a, b) = (&samples[i], &samples[j]);
        let mid: Vec<f64> = a
            .image
            .iter()
            .zip(&b.image)
            .map(|(p, q)| lambda * p + (1.0 - lambda) * q)
            .collect();
        let near = samples
            .iter()
            .map(|s| dist(&s.image, &mid))
            .fold(f64::INFINITY, f64::min);
        if near <= tol {
            continue;
        }
        let vb: Vec<f64> = a.v.iter().zip(&b.v).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect();
        let wb: Option<Vec<f64>> = match (&a.w, &b.w) {
            (Some(wa), Some(wbb)) => Some(wa.iter().zip(wbb).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect()),
            _ => None,
        };
        if dist(&image_at(&vb, wb.as_deref()), &mid) <= tol {
            continue;
        }
        if near > deficiency {
            deficiency = near;
            witness = Some(Witness {
                first: SampledPoint {
                    v: ControlPoint(a.v.clone()),
                    w: a.w.clone(),
                    image: a.image.clone(),
                },
                second: SampledPoint {
                    v: ControlPoint(b.v.clone()),
                    w: b.w.clone(),
                    image: b.image.clone(),
                },
                lambda,
                midpoint: mid,
                distance: near,
            });
        }
    }
    (deficiency, witness)
}

/// Image `(s s*, b, f)` used by the (H2) audit.
fn h2_image(p: &Problem, x: &[f64], y: f64, v: &[f64]) -> Vec<f64> {
    let d = p.dim;
    let c = coefs(p, x, v);
    let mut out = gram(&c.s, d);
    out.extend_from_slice(&c.b);
    out.push(p.driver.eval(x, y, &vec![0.0; d], v));
    out
}

/// `check_H2`: convexity of `{(s s*, b, f)(x, v, y) : v in U}` when `f`
/// does not depend on `z`.
pub fn check_h2(p: &Problem, x: &[f64], y: f64, tol: f64, n_pairs: usize, seed: u64) -> Result<ConvexityReport> {
    if !p.driver.independent_of_z() {
        return Err(Error::Refused(
            "the driver depends on z; (H2) does not apply, use check_H1".into(),
        ));
    }
    let samples: Vec<Sample> = p
        .control_mesh
        .iter()
        .map(|v| Sample {
            v: v.0.clone(),
            w: None,
            image: h2_image(p, x, y, &v.0),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image_at = |v: &[f64], _: Option<&[f64]>| h2_image(p, x, y, v);
    let (deficiency, witness) = pair_test(&samples, &image_at, n_pairs, tol, &mut rng);
    Ok(ConvexityReport {
        assumption_id: Assumption::H2,
        satisfied: deficiency <= tol,
        deficiency,
        witness,
        probe: Probe { x: x.to_vec(), y },
        samples_used: samples.len(),
        radius_k: None,
        tol,
    })
}

/// Image `(s s*, s s* w, b, f(x, y, s* w, v))` used by the (H1) audit.
fn h1_image(p: &Problem, x: &[f64], y: f64, v: &[f64], w: &[f64]) -> Vec<f64> {
    let d = p.dim;
    let c = coefs(p, x, v);
    let ss = gram(&c.s, d);
    let mut out = ss.clone();
    out.extend(mat_vec(&ss, w));
    out.extend_from_slice(&c.b);
    out.push(p.driver.eval(x, y, &sigma_t_w(&c.s, w), v));
    out
}

/// Smallest non-zero singular value of `s`, or 1 when `s` vanishes.
fn sigma_min_proxy(s: &[f64], d: usize) -> f64 {
    let sv = DMatrix::from_row_slice(d, d, s).singular_values();
    let cut = 1e-12 * sv.max();
    let m = sv.iter().copied().filter(|&x| x > cut).fold(f64::INFINITY, f64::min);
    if m.is_finite() && m > 0.0 {
        m
    } else {
        1.0
    }
}

/// `check_H1`: convexity of the image of
/// `Gamma = {(v, w) : |s*(x,v) w| <= K}` under
/// `(v, w) -> (s s*, s s* w, b, f(x, y, s* w, v))`.
///
/// `w` is drawn uniformly from a ball of radius `K / sigma_min` for a
/// uniformly chosen atom and rejected outside `Gamma`.
pub fn check_h1(
    p: &Problem,
    x: &[f64],
    y: f64,
    radius_k: f64,
    n_w_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    if !(radius_k > 0.0) {
        return Err(Error::invalid("radius_K", "must be positive"));
    }
    let d = p.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for _ in 0..n_w_samples {
        let vi = rng.random_range(0..p.n_controls());
        let v = &p.control_mesh[vi].0;
        let c = coefs(p, x, v);
        let r = radius_k / sigma_min_proxy(&c.s, d);
        // uniform in the d-ball: Gaussian direction, radius U^(1/d)
        let dir: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let nd = norm(&dir).max(1e-300);
        let rad = r * rng.random_range(0.0f64..1.0).powf(1.0 / d as f64);
        let w: Vec<f64> = dir.iter().map(|u| u / nd * rad).collect();
        if norm(&sigma_t_w(&c.s, &w)) > radius_k {
            continue;
        }
        samples.push(Sample {
            v: v.clone(),
            image: h1_image(p, x, y, v, &w),
            w: Some(w),
        });
    }
    if samples.len() * 10 < n_w_samples {
        return Err(Error::Inconclusive(format!(
            "only {} of {n_w_samples} draws landed in Gamma",
            samples.len()
        )));
    }
    let image_at = |v: &[f64], w: Option<&[f64]>| h1_image(p, x, y, v, w.unwrap_or(&vec![0.0; d]));
    let n_pairs = samples.len();
    let (deficiency, witness) = pair_test(&samples, &image_at, n_pairs, tol, &mut rng);
    Ok(ConvexityReport {
        assumption_id: Assumption::H1,
        satisfied: deficiency <= tol,
        deficiency,
        witness,
        probe: Probe { x: x.to_vec(), y },
        samples_used: samples.len(),
        radius_k: Some(radius_k),
        tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureAtom {
    pub weight: f64,
    pub v: ControlPoint,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSample {
    pub atoms: Vec<MeasureAtom>,
    pub probe_x: Vec<f64>,
    pub probe_y: f64,
    #[serde(rename = "radius_K")]
    pub radius_k: f64,
}

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANGE_TOL: f64 = 1e-12;

/// Least-norm solution of `a w = m` for symmetric PSD `a` via `a = T L T*`,
/// restricted to the eigenvectors with non-zero eigenvalue. Also returns the
/// norm of the part of `m` in the null space, which must vanish for an exact
/// solution.
pub(crate) fn solve_on_range(a: &[f64], d: usize, m: &[f64]) -> (Vec<f64>, f64) {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, a));
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let m = DVector::from_column_slice(m);
    let mut w = DVector::zeros(d);
    let mut null = DVector::zeros(d);
    for k in 0..d {
        let t = eig.eigenvectors.column(k);
        let proj = t.dot(&m);
        let l = eig.eigenvalues[k];
        if l > RANGE_TOL * lmax.max(1.0) {
            w += t * (proj / l);
        } else {
            null += t * proj;
        }
    }
    (w.iter().copied().collect(), null.norm())
}

/// `barycentric_reduction`: a single triple `(z, theta, v)` whose lifted
/// image equals the `mu`-barycenter of the lifted atoms `(s* w, 0, v)`.
///
/// For each mesh atom `v` the equation `s s*(v) w = int s s* w dmu` is
/// solved on the range of `s s*(v)` (the eigenvectors with non-zero
/// eigenvalue); a component of the moment in the null space rules the atom
/// out. The first atom reproducing the barycenter within `tol` wins.
pub fn barycentric_reduction(p: &Problem, mu: &MeasureSample, tol: f64) -> Result<ControlTriple> {
    let d = p.dim;
    let (x, y) = (&mu.probe_x, mu.probe_y);
    if mu.atoms.is_empty() {
        return Err(Error::invalid("mu", "no atoms"));
    }
    let total: f64 = mu.atoms.iter().map(|a| a.weight).sum();
    if mu.atoms.iter().any(|a| !(a.weight > 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("mu", "weights must be positive and sum to 1"));
    }
    // barycenter of (s s*, s s* w, b, f(s* w)) and of w* s s* w
    let mut bary: Vec<f64> = Vec::new();
    let mut energy = 0.0;
    for a in &mu.atoms {
        p.control_index(&a.v)?;
        let c = coefs(p, x, &a.v.0);
        let zw = sigma_t_w(&c.s, &a.w);
        if norm(&zw) > mu.radius_k + tol {
            return Err(Error::invalid("mu", "atom outside Gamma: |s* w| > K"));
        }
        let img = h1_image(p, x, y, &a.v.0, &a.w);
        if bary.is_empty() {
            bary = vec![0.0; img.len()];
        }
        for (b, i) in bary.iter_mut().zip(&img) {
            *b += a.weight * i;
        }
        energy += a.weight * zw.iter().map(|u| u * u).sum::<f64>();
    }
    let moment = &bary[d * d..d * d + d];

    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (vi, v) in p.control_mesh.iter().enumerate() {
        let c = coefs(p, x, &v.0);
        let ss = gram(&c.s, d);
        let (w, null) = solve_on_range(&ss, d, moment);
        let miss = dist(&h1_image(p, x, y, &v.0, &w), &bary) + null;
        if best.as_ref().is_none_or(|b| miss < b.0) {
            best = Some((miss, vi, w));
        }
        if miss <= tol {
            break;
        }
    }
    let (miss, vi, w) = best.expect("mesh is non-empty");
    if miss > tol {
        return Err(Error::NoBarycenterMatch {
            miss,
            barycenter: bary,
        });
    }
    let v = p.control_mesh[vi].clone();
    let c = coefs(p, x, &v.0);
    let z = sigma_t_w(&c.s, &w);
    let alpha = energy - z.iter().map(|u| u * u).sum::<f64>();
    if alpha < -tol {
        return Err(Error::NegativeAlpha { alpha });
    }
    let mut theta = vec![0.0; d];
    theta[0] = alpha.max(0.0).sqrt();
    let lhs = energy;
    let rhs = z.iter().map(|u| u * u).sum::<f64>() + theta[0] * theta[0];
    if (lhs - rhs).abs() > tol || norm(&z) > mu.radius_k + tol || theta[0] > mu.radius_k + tol {
        return Err(Error::NegativeAlpha { alpha });
    }
    Ok(ControlTriple { z, theta, v })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(diffusion: &str, driver: &str, mesh: &str) -> Problem {
        Problem::from_json_str(&format!(
            r#"{{"dimension":1,"horizon":1,
            "drift":{{"family":"constant-drift","params":{{"value":0.3}}}},
            "diffusion":{diffusion},
            "driver":{driver},
            "terminal":{{"family":"constant-terminal","params":{{"value":0}}}},
            "control_mesh":{mesh},"bounds":{{"M":3,"C":3,"F":3}}}}"#
        ))
        .unwrap()
    }

    const ID: &str = r#"{"family":"identity-diffusion","params":{"scale":1}}"#;
    const F0: &str = r#"{"family":"constant-driver","params":{"value":0.5}}"#;

    #[test]
    fn lift_block_arithmetic() {
        let p = problem(ID, F0, "[0]");
        let t = ControlTriple {
            z: vec![3.0],
            theta: vec![4.0],
            v: ControlPoint::scalar(0.0),
        };
        let l = lift(&p, &[0.0], 0.0, &t);
        assert_eq!(l.entry(1, 1), 25.0);
        assert_eq!(l.entry(0, 1), 3.0);
        assert_eq!(l.entry(0, 0), 1.0);
        assert_eq!(l.beta_vec, vec![0.3, -0.5]);
        let t0 = ControlTriple {
            z: vec![0.0],
            theta: vec![0.0],
            v: ControlPoint::scalar(0.0),
        };
        assert_eq!(lift(&p, &[0.0], 0.0, &t0).big_sigma_sq, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn h2_refuses_z_dependent_driver() {
        let p = problem(ID, r#"{"family":"linear-z-driver","params":{"gain":1}}"#, "[0]");
        assert!(matches!(check_h2(&p, &[0.0], 0.0, 1e-6, 10, 0), Err(Error::Refused(_))));
    }

    #[test]
    fn range_solve_flags_null_component() {
        // a = diag(4, 0)
        let a = [4.0, 0.0, 0.0, 0.0];
        let (w, null) = solve_on_range(&a, 2, &[2.0, 0.0]);
        assert!((w[0] - 0.5).abs() < 1e-14 && w[1].abs() < 1e-14);
        assert!(null < 1e-14);
        let (_, null) = solve_on_range(&a, 2, &[2.0, 0.3]);
        assert!((null - 0.3).abs() < 1e-14);
    }

    #[test]
    fn point_mass_reduces_to_itself() {
        let p = problem(ID, F0, "[0, 1]");
        let mu = MeasureSample {
            atoms: vec![MeasureAtom {
                weight: 1.0,
                v: ControlPoint::scalar(0.0),
                w: vec![0.7],
            }],
            probe_x: vec![0.0],
            probe_y: 0.0,
            radius_k: 1.0,
        };
        let t = barycentric_reduction(&p, &mu, 1e-9).unwrap();
        assert_eq!(t.z, vec![0.7]);
        assert_eq!(t.theta, vec![0.0]);
        assert_eq!(t.v, ControlPoint::scalar(0.0));
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::families::PROBE_RADIUS;
use super::{operator_norm, Coefficients, Problem};

/// Distance of the antithetic nearby pairs.
const NEAR_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
    pub control_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// One of `bound_b`, `bound_sigma`, `bound_f`, `bound_phi`,
    /// `lipschitz_b_sigma`, `lipschitz_phi_f`.
    pub inequality: String,
    pub points: Vec<SamplePoint>,
    pub observed: f64,
    pub declared: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    #[serde(rename = "estimated_M")]
    pub estimated_m: f64,
    #[serde(rename = "estimated_C")]
    pub estimated_c: f64,
    /// Worst exceedance per inequality, largest slack first.
    pub violations: Vec<Violation>,
    pub samples_used: usize,
}

impl AssumptionReport {
    pub fn worst_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

fn exceeds(observed: f64, declared: f64) -> bool {
    observed > declared * (1.0 + 1e-9) + 1e-12
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

struct Tracker {
    declared: f64,
    worst: Option<Violation>,
    max_seen: f64,
}

impl Tracker {
    fn new(declared: f64) -> Self {
        Tracker {
            declared,
            worst: None,
            max_seen: 0.0,
        }
    }

    fn record(&mut self, id: &str, observed: f64, points: &[&SamplePoint]) {
        self.max_seen = self.max_seen.max(observed);
        if exceeds(observed, self.declared)
            && self.worst.as_ref().is_none_or(|w| observed > w.observed)
        {
            self.worst = Some(Violation {
                inequality: id.to_string(),
                points: points.iter().map(|p| (*p).clone()).collect(),
                observed,
                declared: self.declared,
                slack: observed - self.declared,
            });
        }
    }
}

/// Spot-check boundedness and Lipschitz continuity of the coefficients on
/// the probe box `[-5, 5]^d` (and the same range for `y`, `z`), cycling
/// through every control atom.
///
/// Even-indexed samples draw an independent partner point; odd-indexed
/// samples perturb the point by `1e-3` along one argument block (x, y or z
/// in turn) to catch local steepness.
pub fn audit_assumptions(p: &Problem, n_samples: usize, seed: u64) -> AssumptionReport {
    let n_samples = n_samples.max(2);
    let d = p.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = PROBE_RADIUS;

    let mut t_b = Tracker::new(p.bounds.m);
    let mut t_s = Tracker::new(p.bounds.m);
    let mut t_f = Tracker::new(p.bounds.f);
    let mut t_phi = Tracker::new(p.bounds.f);
    let mut t_l1 = Tracker::new(p.bounds.c);
    let mut t_l2 = Tracker::new(p.bounds.c);

    let draw = |rng: &mut ChaCha8Rng, v: usize| SamplePoint {
        x: (0..d).map(|_| rng.random_range(-r..=r)).collect(),
        y: rng.random_range(-r..=r),
        z: (0..d).map(|_| rng.random_range(-r..=r)).collect(),
        control_index: v,
    };

    let mut b_a = vec![0.0; d];
    let mut b_b = vec![0.0; d];
    let mut s_a = vec![0.0; d * d];
    let mut s_b = vec![0.0; d * d];

    for i in 0..n_samples {
        let v = i % p.n_controls();
        let a = draw(&mut rng, v);
        let b = if i % 2 == 0 {
            draw(&mut rng, v)
        } else {
            let block = (i / 2) % 3;
            let mut b = a.clone();
            let len = if block == 1 { 1 } else { d };
            let mut dir: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = dir.iter().map(|u| u * u).sum::<f64>().sqrt().max(1e-300);
            dir.iter_mut().for_each(|u| *u *= NEAR_STEP / n);
            match block {
                0 => b.x.iter_mut().zip(&dir).for_each(|(x, u)| *x += u),
                1 => b.y += dir[0],
                _ => b.z.iter_mut().zip(&dir).for_each(|(z, u)| *z += u),
            }
            b
        };

        p.drift(&a.x, v, &mut b_a);
        p.drift(&b.x, v, &mut b_b);
        p.diffusion(&a.x, v, &mut s_a);
        p.diffusion(&b.x, v, &mut s_b);
        let f_a = p.driver(&a.x, a.y, &a.z, v);
        let f_b = p.driver(&b.x, b.y, &b.z, v);
        let phi_a = p.terminal(&a.x);
        let phi_b = p.terminal(&b.x);

        for (pt, bv, sv, fv, phv) in [(&a, &b_a, &s_a, f_a, phi_a), (&b, &b_b, &s_b, f_b, phi_b)] {
            let bn = bv.iter().map(|u| u * u).sum::<f64>().sqrt();
            t_b.record("bound_b", bn, &[pt]);
            t_s.record("bound_sigma", operator_norm(sv, d), &[pt]);
            t_f.record("bound_f", fv.abs(), &[pt]);
            t_phi.record("bound_phi", phv.abs(), &[pt]);
        }

        let dx = diff_norm(&a.x, &b.x);
        if dx > 0.0 {
            let ds: Vec<f64> = s_a.iter().zip(&s_b).map(|(p, q)| p - q).collect();
            let q = (diff_norm(&b_a, &b_b) + operator_norm(&ds, d)) / dx;
            t_l1.record("lipschitz_b_sigma", q, &[&a, &b]);
        }
        let dj = dx + (a.y - b.y).abs() + diff_norm(&a.z, &b.z);
        if dj > 0.0 {
            let q = ((phi_a - phi_b).abs() + (f_a - f_b).abs()) / dj;
            t_l2.record("lipschitz_phi_f", q, &[&a, &b]);
        }
    }

    let estimated_m = t_b.max_seen.max(t_s.max_seen);
    let estimated_c = t_l1.max_seen.max(t_l2.max_seen);
    let mut violations: Vec<Violation> = [t_b, t_s, t_f, t_phi, t_l1, t_l2]
        .into_iter()
        .filter_map(|t| t.worst)
        .collect();
    violations.sort_by(|a, b| b.slack.total_cmp(&a.slack));

    AssumptionReport {
        estimated_m,
        estimated_c,
        violations,
        samples_used: n_samples,
    }
}

use fbsde_control::convexity::{
    barycentric_reduction, check_h1, check_h2, lift, ControlTriple, MeasureAtom, MeasureSample,
};
use fbsde_control::problem::{ControlPoint, Problem};
use fbsde_control::Error;

fn problem(dim: usize, drift: &str, diffusion: &str, driver: &str, mesh: &[f64]) -> Problem {
    let mesh: Vec<String> = mesh.iter().map(|v| format!("{v}")).collect();
    Problem::from_json_str(&format!(
        r#"{{"dimension":{dim},"horizon":1,
        "drift":{drift},"diffusion":{diffusion},"driver":{driver},
        "terminal":{{"family":"constant-terminal","params":{{"value":0}}}},
        "control_mesh":[{}],"bounds":{{"M":5,"C":5,"F":5}}}}"#,
        mesh.join(",")
    ))
    .unwrap()
}

const B0: &str = r#"{"family":"constant-drift","params":{"value":0}}"#;
const BV: &str = r#"{"family":"bang-drift","params":{"gain":1}}"#;
const S1: &str = r#"{"family":"identity-diffusion","params":{"scale":1}}"#;
const SV: &str = r#"{"family":"control-diffusion","params":{"scale":1}}"#;
const F0: &str = r#"{"family":"constant-driver","params":{"value":0}}"#;
const FV: &str = r#"{"family":"control-linear-driver","params":{"gain":2,"offset":0.1}}"#;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Independent audit of `{(v^2, 0, 0)}`-type images: every pairwise
/// combination on a lambda grid is tested for membership of the sampled
/// point cloud, or for realisation at the blended control.
fn curve_oracle(mesh: &[f64], image: impl Fn(f64) -> f64, tol: f64) -> (bool, f64) {
    let imgs: Vec<f64> = mesh.iter().map(|&v| image(v)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..mesh.len() {
        for j in 0..mesh.len() {
            if i == j {
                continue;
            }
            for k in 1..20 {
                let l = k as f64 / 20.0;
                let m = l * imgs[i] + (1.0 - l) * imgs[j];
                let near = imgs.iter().map(|q| (q - m).abs()).fold(f64::INFINITY, f64::min);
                let blend = image(l * mesh[i] + (1.0 - l) * mesh[j]);
                if near > tol && (blend - m).abs() > tol {
                    worst = worst.max(near);
                }
            }
        }
    }
    (worst <= tol, worst)
}

#[test]
fn lift_top_left_block_matches_dynamics() {
    let p = problem(1, BV, SV, FV, &[0.5, 2.0]);
    let t = ControlTriple {
        z: vec![0.4],
        theta: vec![-1.0],
        v: ControlPoint::scalar(2.0),
    };
    let l = lift(&p, &[0.3], 0.0, &t);
    let dynm = p.evaluate_dynamics(&[0.3], 0.0, &[0.0], &ControlPoint::scalar(2.0)).unwrap();
    let ss = &dynm.diffusion * dynm.diffusion.transpose();
    assert_eq!(l.entry(0, 0), ss[(0, 0)]);
    assert_eq!(l.entry(0, 1), l.entry(1, 0));
    assert!((l.entry(1, 1) - 1.16).abs() < 1e-15);
    assert_eq!(l.beta_vec[0], 2.0);
    assert!((l.beta_vec[1] + 4.1).abs() < 1e-15);
}

#[test]
fn h2_affine_family_on_augmented_mesh() {
    let p = problem(1, BV, S1, FV, &grid(0.0, 1.0, 11));
    let r = check_h2(&p, &[0.2], 0.0, 1e-6, 400, 3).unwrap();
    assert!(r.satisfied, "{r:?}");
    assert!(r.deficiency <= 1e-6);
    assert_eq!(r.samples_used, 11);
}

#[test]
fn h2_two_atom_quadratic_diffusion_is_violated() {
    let p = problem(1, B0, SV, F0, &[1.0, 2.0]);
    let r = check_h2(&p, &[0.0], 0.0, 1e-6, 200, 5).unwrap();
    assert!(!r.satisfied);
    assert!(r.deficiency >= 0.5, "deficiency {}", r.deficiency);
    let w = r.witness.unwrap();
    // hull oracle over the two-point set {1, 4}
    let m = w.midpoint[0];
    let oracle = (m - 1.0).abs().min((m - 4.0).abs());
    assert!((w.distance - oracle).abs() < 1e-12);
    assert!(w.distance <= 1.5 + 1e-12);
}

#[test]
fn h2_densified_quadratic_diffusion_verdict_matches_oracle() {
    let mesh = grid(1.0, 2.0, 11);
    let p = problem(1, B0, SV, F0, &mesh);
    let (ok, worst) = curve_oracle(&mesh, |v| v * v, 1e-6);
    assert!(!ok && worst > 1e-3);
    let r = check_h2(&p, &[0.0], 0.0, 1e-6, 400, 5).unwrap();
    assert_eq!(r.satisfied, ok);
    assert!(r.deficiency <= worst + 0.05);

    // the affine control-linear driver passes the same oracle and the checker
    let (ok, _) = curve_oracle(&mesh, |v| 2.0 * v + 0.1, 1e-6);
    assert!(ok);
}

#[test]
fn h2_refuses_z_dependent_driver() {
    let p = problem(1, B0, S1, r#"{"family":"convex-z-driver","params":{"gain":1}}"#, &[0.0]);
    let e = check_h2(&p, &[0.0], 0.0, 1e-6, 10, 0).unwrap_err();
    assert!(matches!(e, Error::Refused(_)));
    assert!(e.to_string().contains("check_H1"));
}

#[test]
fn h1_linear_z_driver_is_satisfied() {
    let p = problem(1, B0, S1, r#"{"family":"linear-z-driver","params":{"gain":0.7}}"#, &[0.0]);
    let r = check_h1(&p, &[0.0], 0.0, 2.0, 500, 1e-6, 9).unwrap();
    assert!(r.satisfied, "{r:?}");
    assert!(r.samples_used >= 50);
    assert_eq!(r.radius_k, Some(2.0));
}

#[test]
fn h1_convex_z_driver_yields_witness() {
    let p = problem(1, B0, S1, r#"{"family":"convex-z-driver","params":{"gain":1}}"#, &[0.0]);
    let r = check_h1(&p, &[0.0], 0.0, 2.0, 500, 1e-6, 9).unwrap();
    assert!(!r.satisfied);
    let w = r.witness.unwrap();
    // image = (1, w, 0, sqrt(1 + w^2)); oracle: Jensen gap at the witness
    let (w1, w2) = (w.first.w.clone().unwrap()[0], w.second.w.clone().unwrap()[0]);
    let l = w.lambda;
    let f = |u: f64| (1.0 + u * u).sqrt();
    let gap = l * f(w1) + (1.0 - l) * f(w2) - f(l * w1 + (1.0 - l) * w2);
    assert!(gap > 1e-6);
    assert!((w.midpoint[1] - (l * w1 + (1.0 - l) * w2)).abs() < 1e-12);
}

#[test]
fn h1_degenerate_sigma_collapses_to_h2() {
    let s0 = r#"{"family":"identity-diffusion","params":{"scale":0}}"#;
    let p = problem(1, BV, s0, FV, &grid(-1.0, 1.0, 5));
    let r = check_h1(&p, &[0.0], 0.0, 1.0, 400, 1e-6, 1).unwrap();
    assert!(r.satisfied, "{r:?}");
    let r2 = check_h2(&p, &[0.0], 0.0, 1e-6, 400, 1).unwrap();
    assert_eq!(r.satisfied, r2.satisfied);
}

#[test]
fn h1_rejects_nonpositive_radius() {
    let p = problem(1, B0, S1, F0, &[0.0]);
    assert!(check_h1(&p, &[0.0], 0.0, 0.0, 10, 1e-6, 0).is_err());
}

#[test]
fn symmetric_two_atom_reduction() {
    let p = problem(1, BV, S1, r#"{"family":"constant-driver","params":{"value":0.4}}"#, &[0.0, 1.0]);
    let w0 = 0.6;
    let mu = MeasureSample {
        atoms: vec![
            MeasureAtom { weight: 0.5, v: ControlPoint::scalar(1.0), w: vec![w0] },
            MeasureAtom { weight: 0.5, v: ControlPoint::scalar(1.0), w: vec![-w0] },
        ],
        probe_x: vec![0.0],
        probe_y: 0.0,
        radius_k: 1.0,
    };
    let t = barycentric_reduction(&p, &mu, 1e-9).unwrap();
    assert_eq!(t.v, ControlPoint::scalar(1.0));
    assert!(t.z[0].abs() < 1e-15);
    assert!((t.theta[0] - w0).abs() < 1e-12);
    let lhs = 0.5 * w0 * w0 + 0.5 * w0 * w0;
    let rhs = t.z[0] * t.z[0] + t.theta[0] * t.theta[0];
    assert!((lhs - rhs).abs() < 1e-8);
}

#[test]
fn rank_one_reduction_solves_on_range() {
    let diag = r#"{"family":"diagonal-diffusion","params":{"scale":2,"rest":0}}"#;
    let p = problem(2, B0, diag, F0, &[0.0]);
    let mu = MeasureSample {
        atoms: vec![
            MeasureAtom { weight: 0.25, v: ControlPoint::scalar(0.0), w: vec![0.3, 5.0] },
            MeasureAtom { weight: 0.75, v: ControlPoint::scalar(0.0), w: vec![-0.1, -2.0] },
        ],
        probe_x: vec![0.0, 0.0],
        probe_y: 0.0,
        radius_k: 1.0,
    };
    let t = barycentric_reduction(&p, &mu, 1e-9).unwrap();
    // direct projection: moment = 4 * (0.25*0.3 - 0.75*0.1) = 0 in the first axis
    let m1 = 4.0 * (0.25 * 0.3 + 0.75 * -0.1);
    assert!((t.z[0] - m1 / 2.0).abs() < 1e-12);
    assert_eq!(t.z[1], 0.0);
    let energy = 0.25 * (2.0f64 * 0.3).powi(2) + 0.75 * (2.0f64 * 0.1).powi(2);
    assert!((t.theta[0] * t.theta[0] + t.z[0] * t.z[0] - energy).abs() < 1e-12);
}

#[test]
fn mixed_controls_without_matching_atom_fail() {
    let p = problem(1, B0, SV, F0, &[1.0, 2.0]);
    let mu = MeasureSample {
        atoms: vec![
            MeasureAtom { weight: 0.5, v: ControlPoint::scalar(1.0), w: vec![0.1] },
            MeasureAtom { weight: 0.5, v: ControlPoint::scalar(2.0), w: vec![0.1] },
        ],
        probe_x: vec![0.0],
        probe_y: 0.0,
        radius_k: 1.0,
    };
    match barycentric_reduction(&p, &mu, 1e-9) {
        Err(Error::NoBarycenterMatch { miss, barycenter }) => {
            assert!(miss > 0.5);
            assert!((barycenter[0] - 2.5).abs() < 1e-12);
        }
        other => panic!("expected no match, got {other:?}"),
    }
}

#[test]
fn reduction_rejects_atoms_outside_gamma() {
    let p = problem(1, B0, S1, F0, &[0.0]);
    let mu = MeasureSample {
        atoms: vec![MeasureAtom { weight: 1.0, v: ControlPoint::scalar(0.0), w: vec![3.0] }],
        probe_x: vec![0.0],
        probe_y: 0.0,
        radius_k: 1.0,
    };
    assert!(barycentric_reduction(&p, &mu, 1e-9).is_err());
}

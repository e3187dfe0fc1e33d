//! Pointwise convexity audits and the barycentric reduction of a
//! two-atom measure.

use fbsde_control::convexity::{barycentric_reduction, check_h1, check_h2, MeasureAtom, MeasureSample};
use fbsde_control::problem::{ControlPoint, Problem};

fn problem(diffusion: &str, driver: &str, mesh: &str) -> fbsde_control::Result<Problem> {
    Problem::from_json_str(&format!(
        r#"{{"dimension":1,"horizon":1,
        "drift":{{"family":"bang-drift","params":{{"gain":1}}}},
        "diffusion":{diffusion},"driver":{driver},
        "terminal":{{"family":"constant-terminal","params":{{"value":0}}}},
        "control_mesh":{mesh},"bounds":{{"M":5,"C":5,"F":5}}}}"#
    ))
}

fn main() -> fbsde_control::Result<()> {
    let unit = r#"{"family":"identity-diffusion","params":{"scale":1}}"#;

    // affine in the control: every mixture is realised by a blended control
    let p = problem(unit, r#"{"family":"control-linear-driver","params":{"gain":2,"offset":0.1}}"#, "[0,0.5,1]")?;
    let r = check_h2(&p, &[0.2], 0.0, 1e-6, 400, 3)?;
    println!("H2, affine: satisfied={} deficiency={:.1e}", r.satisfied, r.deficiency);

    // sigma = v on two atoms: sigma^2 takes values 1 and 4, nothing between
    let p = problem(r#"{"family":"control-diffusion","params":{"scale":1}}"#, r#"{"family":"constant-driver","params":{"value":0}}"#, "[1,2]")?;
    let r = check_h2(&p, &[0.0], 0.0, 1e-6, 200, 5)?;
    let w = r.witness.expect("violated");
    println!("H2, sigma = v: satisfied={} witness midpoint {:?} at distance {:.3}", r.satisfied, w.midpoint, w.distance);

    // a driver convex in z fails (H1); the witness is a Jensen gap
    let p = problem(unit, r#"{"family":"convex-z-driver","params":{"gain":1}}"#, "[0]")?;
    let r = check_h1(&p, &[0.0], 0.0, 2.0, 500, 1e-6, 9)?;
    println!("H1, convex in z: satisfied={} deficiency={:.3}", r.satisfied, r.deficiency);

    let p = problem(unit, r#"{"family":"constant-driver","params":{"value":0.4}}"#, "[0,1]")?;
    let atom = |w: f64| MeasureAtom { weight: 0.5, v: ControlPoint::scalar(1.0), w: vec![w] };
    let mu = MeasureSample { atoms: vec![atom(0.6), atom(-0.6)], probe_x: vec![0.0], probe_y: 0.0, radius_k: 1.0 };
    let t = barycentric_reduction(&p, &mu, 1e-9)?;
    println!("reduction: v = {:?}, z = {:?}, theta = {:?}", t.v.as_slice(), t.z, t.theta);
    Ok(())
}

//! Solve the uncontrolled heat problem and compare against the closed form
//! `sin(x) exp(-(T - t) / 2)`.

use fbsde_control::hjb::{solve, Grid};
use fbsde_control::mollifier::MollifiedProblem;
use fbsde_control::problem::Problem;

fn main() -> fbsde_control::Result<()> {
    let p = Problem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/heat.json"))?;
    let grid = Grid::uniform(1, 0.0, std::f64::consts::TAU, 201, 400, p.start_time, p.horizon, true)?;

    for delta in [0.0, 0.1, 0.4] {
        let mp = MollifiedProblem::at(&p, delta)?;
        let (field, _) = solve(&mp, &grid)?;
        let v = field.interpolate(p.start_time, &p.start_state)?.value;
        let exact = p.start_state[0].sin() * (-p.horizon / 2.0).exp();
        let (lip, holder) = field.holder_envelopes();
        println!("delta {delta:<4} V = {v:.6}  (delta = 0 closed form {exact:.6})  lip_x {lip:.3}  holder_t {holder:.3}");
    }
    Ok(())
}

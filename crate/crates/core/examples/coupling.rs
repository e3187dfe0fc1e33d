//! Sup-distance between the regularised state and the auxiliary
//! unregularised one, driven by the same Brownian paths.

use fbsde_control::harness::run_coupling_study;
use fbsde_control::hjb::Grid;
use fbsde_control::problem::Problem;

fn main() -> fbsde_control::Result<()> {
    let p = Problem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/constant_coefficients.json"))?;
    let grid = Grid::uniform(1, -8.0, 8.0, 161, 1000, p.start_time, p.horizon, false)?;
    let r = run_coupling_study(&p, &[0.4, 0.2, 0.1, 0.05], &grid, 2000, 2e-3, 0, None)?;

    println!("{:>6} {:>14} {:>14}", "delta", "E sup|dX|^2", "E sup|dY|^2");
    for row in &r.rows {
        println!("{:>6} {:>14.4e} {:>14.4e}", row.delta, row.x_sup_sq, row.y_sup_sq);
    }
    // the state gap is delta * B exactly here, so the X slope is 2
    println!("X slope {:?}, Y slope {:?}", r.x_slope, r.y_slope);
    Ok(())
}

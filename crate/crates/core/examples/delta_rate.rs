//! How fast does the regularised value approach the unregularised one?
//! Fits the log-log slope of |V_delta - V_0| over a delta ladder.

use fbsde_control::harness::run_rate_study;
use fbsde_control::hjb::Grid;
use fbsde_control::problem::Problem;

fn main() -> fbsde_control::Result<()> {
    let p = Problem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/heat.json"))?;
    let grid = Grid::uniform(1, 0.0, std::f64::consts::TAU, 201, 400, p.start_time, p.horizon, true)?;
    let out = std::env::temp_dir().join("fbsde-delta-rate");
    let r = run_rate_study(&p, &[0.4, 0.2, 0.1, 0.05], &grid, Some(&out))?;

    println!("{:>6} {:>12} {:>12}", "delta", "V_delta", "gap");
    for ((d, v), g) in r.deltas.iter().zip(&r.values).zip(&r.gaps) {
        println!("{d:>6} {v:>12.8} {g:>12.3e}");
    }
    match r.fitted_slope {
        Some(s) if !r.inconclusive => println!("slope {s:.3} (grid-error floor {:.1e})", r.grid_error_floor),
        _ => println!("inconclusive: gaps sit below the grid-error floor {:.1e}", r.grid_error_floor),
    }
    println!("tables in {}", out.display());
    Ok(())
}

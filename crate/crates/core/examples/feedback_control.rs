//! Bang-bang drift control: solve for the feedback policy, then check it
//! three ways.
//!
//! 1. Freeze the policy and evaluate its cost on the grid.
//! 2. Simulate it forward and estimate the cost by regression.
//! 3. Pit it against random challenger policies.

use fbsde_control::harness::run_optimality_gap;
use fbsde_control::hjb::{solve, Grid};
use fbsde_control::mollifier::MollifiedProblem;
use fbsde_control::problem::Problem;
use fbsde_control::sim::{check_value_identity, evaluate_cost_frozen, evaluate_cost_mc, simulate_forward, BasisSpec, Control, SimConfig};

fn main() -> fbsde_control::Result<()> {
    let p = Problem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/bang_drift.json"))?;
    let delta = 0.1;
    let grid = Grid::uniform(1, -2.0, 2.0, 201, 1500, p.start_time, p.horizon, false)?;
    let mp = MollifiedProblem::at(&p, delta)?;
    let (field, policy) = solve(&mp, &grid)?;
    let v = field.interpolate(p.start_time, &p.start_state)?.value;

    let (_, frozen) = evaluate_cost_frozen(&mp, &policy, &grid)?;
    println!("HJB value {v:.5}, frozen-policy cost {:.5}", frozen.value);

    let cfg = SimConfig::new(4000, 2e-3, 1, delta);
    let mc = evaluate_cost_mc(&mp, Control::Feedback(&policy), &cfg, &BasisSpec::default())?;
    println!("regression MC {:.5} +- {:.5} (upwind grid bias is O(dx))", mc.value, mc.std_error);

    let bundle = simulate_forward(&mp, Control::Feedback(&policy), &cfg, Some(&field))?;
    let id = check_value_identity(&mp, &field, &bundle)?;
    println!("value identity: mean |residual| {:.2e}, max {:.2e}", id.mean_abs, id.max_abs);

    let gap = run_optimality_gap(&p, delta, &grid, 5, 0, None)?;
    for c in &gap.challenger_values {
        println!("  challenger seed {:>2}: J = {:.5}  (gap {:+.5})", c.policy_seed, c.value, c.value - gap.optimal_value);
    }
    Ok(())
}

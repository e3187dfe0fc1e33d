use fbsde_control::mollifier::MollifiedProblem;
use fbsde_control::problem::{audit_assumptions, Coefficients, Problem};

fn main() -> fbsde_control::Result<()> {
    let p = Problem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/recursive.json"))?;
    let rep = audit_assumptions(&p, 4000, 0);
    println!("estimated M {:.3}, estimated C {:.3}, violations {}", rep.estimated_m, rep.estimated_c, rep.violations.len());

    // smoothing a Lipschitz coefficient moves it by at most C delta
    let raw = MollifiedProblem::unmollified(&p);
    let lip = p.terminal.lipschitz();
    for delta in [0.4, 0.2, 0.1, 0.05] {
        let mp = MollifiedProblem::at(&p, delta)?;
        let worst = (0..=80)
            .map(|i| -2.0 + 0.05 * i as f64)
            .map(|x| (mp.terminal(&[x]) - raw.terminal(&[x])).abs())
            .fold(0.0, f64::max);
        println!("delta {delta:<4} max |Phi_delta - Phi| = {worst:.2e}  (bound {:.2e})", lip * delta);
    }
    Ok(())
}

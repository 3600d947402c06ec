//! Quadratic φ = |y|²/2 with F = 0 and η = B_T has the explicit solution
//! Y_t = e^{−(1−t)} B_t. Prints the RMS error of the limit scheme per time.

use bsvi::convex::ConvexSpec;
use bsvi::model::{DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::paths::{generate, TimeGrid};
use bsvi::solver::{solve_limit, SchemeConfig};

fn main() -> bsvi::Result<()> {
    let problem = Problem::new(
        ConvexSpec::quadratic(1.0, 1)?,
        DriverSpec::zero(1, 1),
        TerminalSpec::new(TerminalKind::Identity, 1),
        ForwardSpec::identity(1),
        1.0,
    )?;
    let grid = TimeGrid::new(1.0, 64)?;
    let ens = generate(grid, &problem.forward, 20_000, 1, 11)?;
    let sol = solve_limit(&problem, &ens, &SchemeConfig::default())?;
    let mut worst = 0.0_f64;
    for i in (0..=grid.steps).step_by(8) {
        let t = grid.t(i);
        let mse: f64 = (0..ens.paths)
            .map(|p| {
                let exact = (-(1.0 - t)).exp() * ens.x(i, p)[0];
                (sol.y(i, p)[0] - exact).powi(2)
            })
            .sum::<f64>()
            / ens.paths as f64;
        worst = worst.max(mse.sqrt());
        println!("t = {t:.3}  RMS = {:.5}", mse.sqrt());
    }
    println!("max RMS over printed times: {worst:.5}");
    Ok(())
}

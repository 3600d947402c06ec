//! Y confined to [−1, 1] with the outward driver F = 2y: the penalized
//! solution for several ε next to the limit (projection) scheme.

use bsvi::convex::ConvexSpec;
use bsvi::estimates::penetration_stats;
use bsvi::model::{DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::paths::{generate, TimeGrid};
use bsvi::report::mean;
use bsvi::solver::{solve_with, Mode, SchemeConfig};

fn main() -> bsvi::Result<()> {
    let problem = Problem::new(
        ConvexSpec::indicator_box(vec![-1.0], vec![1.0])?,
        DriverSpec::linear(2.0, 0.0, 0.0, 1, 1)?,
        TerminalSpec::new(TerminalKind::Tanh, 1),
        ForwardSpec::identity(1),
        1.0,
    )?;
    let ens = generate(TimeGrid::new(1.0, 64)?, &problem.forward, 20_000, 1, 7)?;
    let cfg = SchemeConfig::default();
    let modes = [0.1, 0.025, 0.00625].map(|epsilon| Mode::Penalized { epsilon });
    for mode in modes.into_iter().chain([Mode::Limit]) {
        let sol = solve_with(&problem, &ens, &cfg, mode)?;
        let tv: Vec<f64> = (0..sol.paths).map(|p| sol.total_variation(p)).collect();
        let pen = penetration_stats(&sol, &problem.phi);
        println!(
            "{mode:?}: Y0 = {:.4} ± {:.4}, E TV(K) = {:.4}, E max dist² = {:.2e}",
            mean(&sol.y0_values(0)),
            sol.y0_stderr(0),
            mean(&tv),
            pen.max_dist2
        );
    }
    Ok(())
}

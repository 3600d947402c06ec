//! Brownian-bridge refinement of one ensemble, N → 2N → 4N, with the
//! self-gaps of Y on the coarse times.

use bsvi::convex::ConvexSpec;
use bsvi::model::{DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::paths::{generate, TimeGrid};
use bsvi::schedule::run_refinement_schedule;
use bsvi::solver::{Mode, SchemeConfig};

fn main() -> bsvi::Result<()> {
    let problem = Problem::new(
        ConvexSpec::indicator_box(vec![-1.0], vec![1.0])?,
        DriverSpec::linear(2.0, 0.0, 0.0, 1, 1)?,
        TerminalSpec::new(TerminalKind::Tanh, 1),
        ForwardSpec::identity(1),
        1.0,
    )?;
    let ens = generate(TimeGrid::new(1.0, 16)?, &problem.forward, 10_000, 1, 13)?;
    let rep = run_refinement_schedule(&problem, &ens, &SchemeConfig::default(), Mode::Limit, 3)?;
    rep.write_csv(std::io::stdout())?;
    println!("checks: {:?}", rep.checks.status);
    Ok(())
}

//! The generic measure inequality behind all estimates, instantiated on a
//! discrete solution: premise checked pathwise, conclusion as a ratio.

use bsvi::convex::ConvexSpec;
use bsvi::estimates::{check_appendix_estimate, AppendixBundle, WeightProcess};
use bsvi::model::{DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::paths::{generate, TimeGrid};
use bsvi::report::mean;
use bsvi::solver::{solve_limit, SchemeConfig};

fn main() -> bsvi::Result<()> {
    let problem = Problem::new(
        ConvexSpec::indicator_box(vec![0.0], vec![f64::INFINITY])?,
        DriverSpec::linear(-1.0, 0.0, 0.0, 1, 1)?,
        TerminalSpec::new(TerminalKind::Sin, 1),
        ForwardSpec::identity(1),
        1.0,
    )?;
    let cfg = SchemeConfig::default();
    let ens = generate(TimeGrid::new(1.0, 32)?, &problem.forward, 5_000, 1, 9)?;
    let sol = solve_limit(&problem, &ens, &cfg)?;
    let w = WeightProcess::for_scheme(&problem.driver, ens.grid, &cfg)?;
    let bundle = AppendixBundle::prop1(&sol, &ens, &problem, &w)?;
    let sides = bundle.sides();
    println!("premise worst margin {:.3e}", bundle.premise(1e-9).margin);
    println!("E lhs core {:.4}, E lhs full {:.4}, E rhs {:.4}", mean(&sides.lhs_core), mean(&sides.lhs_full), mean(&sides.rhs));
    let rep = check_appendix_estimate(&bundle, 1e-9);
    println!("{}", rep.to_json());
    Ok(())
}

//! Monte Carlo against a binomial lattice on the half-line problem.

use bsvi::convex::ConvexSpec;
use bsvi::model::{DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::oracle::{compare_with_tree, tree_solve, TreeSpec};
use bsvi::paths::{generate, TimeGrid};
use bsvi::regression::Basis;
use bsvi::solver::{Mode, SchemeConfig};

fn main() -> bsvi::Result<()> {
    let problem = Problem::new(
        ConvexSpec::indicator_box(vec![0.0], vec![f64::INFINITY])?,
        DriverSpec::linear(-1.0, 0.0, 0.0, 1, 1)?,
        TerminalSpec::new(TerminalKind::Sin, 1),
        ForwardSpec::identity(1),
        1.0,
    )?;
    for steps in [64, 500, 2000] {
        let t = tree_solve(&problem, TreeSpec { steps }, Mode::Limit)?;
        println!("tree N = {steps:>4}: Y0 = {:.6}", t.root());
    }
    let cfg = SchemeConfig { basis: Basis::Hat { bins: 32 }, ..SchemeConfig::default() };
    let ens = generate(TimeGrid::new(1.0, 64)?, &problem.forward, 20_000, 1, 21)?;
    let cmp = compare_with_tree(&problem, &ens, &cfg, Mode::Limit, TreeSpec { steps: 2000 })?;
    cmp.write_csv(std::io::stdout())?;
    Ok(())
}

//! Sampled checks of the standing assumptions, before and after moving the
//! anchor to the origin.

use bsvi::convex::ConvexSpec;
use bsvi::model::{check_assumptions, DriverSpec, ForwardSpec, Problem, SamplingBudget, TerminalKind, TerminalSpec};

fn main() -> bsvi::Result<()> {
    let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0])?.with_anchor(vec![1.0], vec![0.75])?;
    let problem = Problem::new(phi, DriverSpec::new(bsvi::model::DriverKind::SinCubic, 1, 1)?, TerminalSpec::new(TerminalKind::Sin, 1), ForwardSpec::identity(1), 1.0)?;
    let budget = SamplingBudget { samples: 2_000, ..SamplingBudget::default() };
    for (label, p) in [("as given", problem.clone()), ("normalized", problem.normalized()?)] {
        let rep = check_assumptions(&p, &budget);
        println!("{label}: {:?}", rep.status);
        for e in &rep.entries {
            println!("  {:<28} worst margin {:+.3e}", e.clause, e.worst_margin);
        }
    }
    Ok(())
}

//! Truncating η and F at level n: inert above the bounded-data threshold,
//! visible below it.

use bsvi::convex::ConvexSpec;
use bsvi::model::{A5Params, DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::paths::{generate, TimeGrid};
use bsvi::schedule::run_truncation_schedule;
use bsvi::solver::{Mode, SchemeConfig};

fn main() -> bsvi::Result<()> {
    let problem = Problem::new(
        ConvexSpec::indicator_box(vec![-1.0], vec![1.0])?,
        DriverSpec::linear(-1.0, 0.3, 0.0, 1, 1)?.with_a5(A5Params { m_bound: 1.1, l_bound: 0.0 }),
        TerminalSpec::new(TerminalKind::Sin, 1).with_scale(0.8),
        ForwardSpec::identity(1),
        1.0,
    )?;
    let ens = generate(TimeGrid::new(1.0, 32)?, &problem.forward, 10_000, 1, 5)?;
    let rep = run_truncation_schedule(&problem, &ens, &SchemeConfig::default(), Mode::Limit, &[0.5, 1.0, 4.0, f64::INFINITY], None, false)?;
    println!("R0 = {:?}", rep.a_priori_bound);
    for l in &rep.levels {
        println!("{:<6} tail mass {:?}  gap {:?}  identical to untruncated: {:?}", l.label, l.tail_mass, l.gap, l.identical_to_reference);
    }
    Ok(())
}

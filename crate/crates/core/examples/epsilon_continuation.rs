//! ε → 0 on one shared ensemble: Cauchy gaps, agreement with the limit
//! solve and the penetration rate.

use bsvi::convex::ConvexSpec;
use bsvi::estimates::{penetration_rate_study, Penetration};
use bsvi::model::{DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::paths::{generate, TimeGrid};
use bsvi::schedule::{extract_solution, run_epsilon_schedule};
use bsvi::solver::SchemeConfig;

fn main() -> bsvi::Result<()> {
    let problem = Problem::new(
        ConvexSpec::indicator_box(vec![-1.0], vec![1.0])?,
        DriverSpec::linear(2.0, 0.0, 0.0, 1, 1)?,
        TerminalSpec::new(TerminalKind::Tanh, 1),
        ForwardSpec::identity(1),
        1.0,
    )?;
    let ens = generate(TimeGrid::new(1.0, 64)?, &problem.forward, 20_000, 1, 7)?;
    let rep = run_epsilon_schedule(&problem, &ens, &SchemeConfig::default(), 0.1, 4)?;
    rep.write_csv(std::io::stdout())?;
    for e in &rep.checks.entries {
        println!("{:<18} {}", e.clause, if e.pass { "pass" } else { "FAIL" });
    }
    let levels: Vec<(f64, Penetration)> = rep.levels.iter().filter_map(|l| l.parameter.zip(l.penetration)).collect();
    let pen = penetration_rate_study(&levels)?;
    println!("penetration slope {:?}, energy spread {:?}", pen.term_value("slope"), pen.term_value("energy_spread"));
    let finest = extract_solution(rep)?;
    println!("finest level ε = {:?} with {} evidence terms", finest.solution.epsilon(), finest.evidence.terms.len());
    Ok(())
}

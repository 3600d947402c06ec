//! The a priori bound, the stability bound under terminal perturbations and
//! the total variation bound, each as a ratio that should stay put when the
//! grid is refined or the perturbation grows.

use bsvi::convex::ConvexSpec;
use bsvi::estimates::{check_prop1, refinement_study, uniqueness_sweep, RatioCheck, WeightProcess};
use bsvi::model::{DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::paths::{generate, TimeGrid};
use bsvi::solver::{solve_with, Mode, SchemeConfig};

fn main() -> bsvi::Result<()> {
    let problem = Problem::new(
        ConvexSpec::indicator_box(vec![-1.0], vec![1.0])?.with_interior(1.0, 0.0)?,
        DriverSpec::linear(2.0, 0.0, 0.0, 1, 1)?,
        TerminalSpec::new(TerminalKind::Tanh, 1),
        ForwardSpec::identity(1),
        1.0,
    )?;
    let cfg = SchemeConfig::default();
    let ens = generate(TimeGrid::new(1.0, 32)?, &problem.forward, 10_000, 1, 3)?;
    let mode = Mode::Penalized { epsilon: 0.05 };

    let sol = solve_with(&problem, &ens, &cfg, mode)?;
    let w = WeightProcess::for_scheme(&problem.driver, ens.grid, &cfg)?;
    let prop1 = check_prop1(&sol, &ens, &problem, &w)?;
    println!("a priori: lhs {:?} rhs {:?}", prop1.lhs, prop1.rhs);

    let uniq = uniqueness_sweep(&problem, &ens, &cfg, mode, &[0.0, 0.01, 0.02, 0.04, 0.08])?;
    for t in &uniq.terms {
        println!("stability {:<32} {:.4}", t.term, t.value);
    }
    let tv = refinement_study(&problem, &ens, &cfg, mode, RatioCheck::Tv)?;
    println!("TV ratio spread over N, 2N: {:?} ({:?})", tv.term_value("spread"), tv.status);
    Ok(())
}

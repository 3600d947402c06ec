//! Library use of the TOML configuration, the same path the CLI takes.
//! Pass a config file, or run without arguments for a built-in one.

use bsvi::config::RunConfig;
use bsvi::report::mean;
use bsvi::solver::solve_with;

const DEFAULT: &str = r#"
[convex]
kind = "ball"
center = [0.0, 0.0]
radius = 1.0

[driver]
kind = "cubic"

[terminal]
kind = "sin"
scale = 2.0

[forward]
x0 = [0.0, 0.0]

[grid]
T = 1.0
N = 32

[mc]
M = 5000
k = 2
seed = 1

[scheme]
epsilon = 0.05
basis = { kind = "polynomial", degree = 2 }
"#;

fn main() -> bsvi::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::from_toml(DEFAULT)?,
    };
    let r = cfg.resolve()?;
    let ens = r.ensemble()?;
    let sol = solve_with(&r.problem, &ens, &r.scheme, r.mode)?;
    for c in 0..sol.dim {
        println!("Y0[{c}] = {:.4} ± {:.4}", mean(&sol.y0_values(c)), sol.y0_stderr(c));
    }
    print!("{}", r.config.to_toml()?);
    Ok(())
}

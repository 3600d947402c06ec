use rayon::prelude::*;

use super::{f_sharp_at, ForwardSpec, Problem, FSHARP_POINTS};
use crate::paths::{generate, TimeGrid};
use crate::report::{EstimateReport, Worst};
use crate::rng::{self, domain};
use crate::vecops::{dist, dot, norm, norm2};

/// Sampling budget of `check_assumptions`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingBudget {
    pub samples: usize,
    pub seed: u64,
    /// Half-width of the cube (around u0) that y, z and x are drawn from.
    pub half_width: f64,
    /// Paths and steps of the small ensemble used for pathwise integrals.
    pub paths: usize,
    pub steps: usize,
    /// Absolute slack on every sampled margin.
    pub tolerance: f64,
}

impl Default for SamplingBudget {
    fn default() -> Self {
        Self { samples: 4096, seed: 0, half_width: 5.0, paths: 2048, steps: 32, tolerance: 1e-9 }
    }
}

struct Draw {
    t: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    y2: Vec<f64>,
    z: Vec<f64>,
    z2: Vec<f64>,
    rho: f64,
    lambda: f64,
}

fn draw(problem: &Problem, budget: &SamplingBudget, i: usize) -> Draw {
    let (m, k) = (problem.dim(), problem.noise_dim());
    let mut r = rng::keyed(budget.seed, domain::ASSUMPTION, i as u64);
    let u0 = &problem.phi.anchor().point;
    let w = budget.half_width;
    let t = problem.horizon * rng::open01(&mut r);
    let x = rng::uniform_in_cube(&mut r, &problem.forward.x0, w);
    let y = rng::uniform_in_cube(&mut r, u0, w);
    let y2 = rng::uniform_in_cube(&mut r, u0, w);
    let z = rng::uniform_in_cube(&mut r, &vec![0.0; m * k], w);
    let z2 = rng::uniform_in_cube(&mut r, &vec![0.0; m * k], w);
    let rho = w * rng::open01(&mut r);
    let lambda = 0.01 + 2.0 * rng::open01(&mut r);
    Draw { t, x, y, y2, z, z2, rho, lambda }
}

/// One entry per testable clause of the standing assumptions. Violations
/// are recorded with their worst margin and location; nothing panics.
pub fn check_assumptions(problem: &Problem, budget: &SamplingBudget) -> EstimateReport {
    let tol = budget.tolerance;
    let mut report = EstimateReport::new("assumptions", tol);
    let phi = &problem.phi;
    let f = &problem.driver;
    let m = problem.dim();
    let u0 = phi.anchor().point.clone();

    let draws: Vec<Draw> = (0..budget.samples).into_par_iter().map(|i| draw(problem, budget, i)).collect();

    let mut mono = Worst::default();
    let mut lip = Worst::default();
    let mut bound = Worst::default();
    let mut compat = Worst::default();
    let mut terminal = Worst::default();
    let mut fa = vec![0.0; m];
    let mut fb = vec![0.0; m];
    let mut has_bound = false;
    for d in &draws {
        // (M_y)
        f.eval_into(d.t, &d.x, &d.y2, &d.z, &mut fa);
        f.eval_into(d.t, &d.x, &d.y, &d.z, &mut fb);
        let dy: Vec<f64> = d.y2.iter().zip(&d.y).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = fa.iter().zip(&fb).map(|(a, b)| a - b).collect();
        let loc: Vec<f64> = std::iter::once(d.t).chain(d.y.iter().copied()).chain(d.y2.iter().copied()).collect();
        mono.observe(f.mu(d.t) * norm2(&dy) - dot(&dy, &df), &loc);

        // (L_z)
        f.eval_into(d.t, &d.x, &d.y, &d.z2, &mut fa);
        lip.observe(f.ell(d.t) * dist(&d.z, &d.z2) - dist(&fa, &fb), &d.z2);

        // (B_y): |F(t,x,y,0)| ≤ F#_ρ(t) for |y| ≤ ρ.
        if let Some(b) = f.local_bound(d.rho, d.t, &d.x) {
            has_bound = true;
            let r = norm(&d.y);
            let y: Vec<f64> = if r > d.rho { d.y.iter().map(|v| v * d.rho / r).collect() } else { d.y.clone() };
            f.eval_into(d.t, &d.x, &y, &vec![0.0; d.z.len()], &mut fa);
            bound.observe(b - norm(&fa), &y);
        }

        // (A4)(ii) on graph points (J_λ(y), ∇phi_λ(y)).
        if let Some(a4) = f.a4 {
            let u = phi.prox(&d.y, d.lambda);
            let uh: Vec<f64> = d.y.iter().zip(&u).map(|(a, b)| (a - b) / d.lambda).collect();
            f.eval_into(d.t, &d.x, &u, &d.z, &mut fa);
            let rhs = 0.5 * norm2(&uh) + a4.beta + a4.b * norm(&u).powf(a4.p) + a4.kappa * norm2(&d.z);
            compat.observe(rhs - dot(&uh, &fa), &u);
        }

        // η ∈ Dom(phi) for indicator phi.
        if phi.kind().is_indicator() {
            let eta = problem.terminal.eval(&d.x);
            let inside = if phi.in_domain(&eta) { 0.0 } else { -dist(&eta, &phi.prox(&eta, 1.0)) };
            terminal.observe(inside, &d.x);
        }
    }
    report.entry("M_y", mono, tol);
    report.entry("L_z", lip, tol);
    if has_bound {
        report.entry("B_y", bound, tol);
    } else {
        report.note("B_y: no closed-form local bound; F# is a sampled lower estimate");
    }
    if f.a4.is_some() {
        report.entry("A4_ii", compat, tol);
    }
    if phi.kind().is_indicator() {
        report.entry("terminal_in_domain", terminal, tol);
    }

    forward_entries(&mut report, &problem.forward, &draws, tol);

    // F(t, u0, 0) at the initial state, exactly as the generator evaluates it.
    let zero_z = vec![0.0; m * problem.noise_dim()];
    let f0 = f.eval(0.0, &problem.forward.x0, &u0, &zero_z);
    for (j, v) in f0.iter().enumerate() {
        report.term(format!("F(0,x0,u0,0)[{j}]"), *v, None);
    }

    if let Some(a5) = f.a5 {
        a5_entries(&mut report, problem, a5, budget);
    }
    report
}

fn forward_entries(report: &mut EstimateReport, forward: &ForwardSpec, draws: &[Draw], tol: f64) {
    let (ld, ls) = forward.lipschitz();
    let mut drift = Worst::default();
    let mut diff = Worst::default();
    let k = forward.dim();
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    for pair in draws.windows(2) {
        let (p, q) = (&pair[0], &pair[1]);
        forward.drift_into(p.t, &p.x, &mut a);
        forward.drift_into(p.t, &q.x, &mut b);
        let dx = dist(&p.x, &q.x);
        drift.observe(ld * dx - dist(&a, &b), &q.x);
        let s = (forward.diffusion_scale(p.t, &p.x) - forward.diffusion_scale(p.t, &q.x)).abs() * (k as f64).sqrt();
        diff.observe(ls * dx - s, &q.x);
    }
    report.entry("forward_drift_lipschitz", drift, tol);
    report.entry("forward_diffusion_lipschitz", diff, tol);
}

fn a5_entries(report: &mut EstimateReport, problem: &Problem, a5: super::A5Params, budget: &SamplingBudget) {
    let f = &problem.driver;
    let tol = budget.tolerance;
    let mut ell = Worst::default();
    let grid = match TimeGrid::new(problem.horizon, budget.steps) {
        Ok(g) => g,
        Err(_) => return,
    };
    for i in 0..=grid.steps {
        let t = grid.t(i);
        ell.observe(a5.l_bound - f.ell(t), &[t]);
    }
    report.entry("A5_ii", ell, tol);

    let k = problem.noise_dim();
    let ens = match generate(grid, &problem.forward, budget.paths.max(1), k, budget.seed) {
        Ok(e) => e,
        Err(e) => {
            report.note(format!("A5_iii: path generation failed: {e}"));
            report.fail();
            return;
        }
    };
    let u0 = &problem.phi.anchor().point;
    let zero_z = vec![0.0; problem.dim() * k];
    let h = grid.h();
    let mut data = Worst::default();
    let mut out = vec![0.0; problem.dim()];
    let mut worst_total = 0.0_f64;
    for p in 0..ens.paths {
        let mut integral = 0.0;
        for i in 0..grid.steps {
            f.eval_into(grid.t(i), ens.x(i, p), u0, &zero_z, &mut out);
            integral += norm(&out) * h;
        }
        let total = norm(&problem.terminal.eval(ens.x(grid.steps, p))) + integral;
        worst_total = worst_total.max(total);
        data.observe(a5.m_bound - total, ens.x(grid.steps, p));
    }
    report.entry("A5_iii", data, tol);
    report.term("sampled |eta| + int |F(u0,0)|", worst_total, None);

    // (iv): the integral of (F#_{R0})² is finite for any finite R0 of the
    // catalog; probe a generous radius.
    let r0 = problem.phi.anchor().point.iter().map(|v| v.abs()).sum::<f64>() + 10.0 * (a5.m_bound + 1.0);
    let mut integral = 0.0;
    for i in 0..grid.steps {
        let fs = f_sharp_at(f, r0, grid.t(i), &problem.forward.x0, FSHARP_POINTS / 16);
        integral += fs.value * fs.value * h;
    }
    let mut fin = Worst::default();
    fin.observe(if integral.is_finite() { 0.0 } else { f64::NEG_INFINITY }, &[r0]);
    report.entry("A5_iv", fin, tol);
    report.term("int (F#_R)^2 at probe radius", integral, None);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::ConvexSpec;
    use crate::model::{A4Params, DriverKind, DriverSpec, TerminalKind, TerminalSpec};

    fn problem(phi: ConvexSpec, driver: DriverSpec) -> Problem {
        Problem::new(phi, driver, TerminalSpec::new(TerminalKind::Sin, 1), ForwardSpec::identity(1), 1.0).unwrap()
    }

    #[test]
    fn linear_decreasing_driver_is_monotone() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::linear(-1.0, 0.0, 0.0, 1, 1).unwrap());
        let rep = check_assumptions(&p, &SamplingBudget::default());
        assert!(rep.pass, "{}", rep.to_json());
        assert!(rep.entry_named("M_y").unwrap().worst_margin >= 0.0);
    }

    #[test]
    fn cubic_passes_with_mu_zero() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::new(DriverKind::Cubic, 1, 1).unwrap());
        let rep = check_assumptions(&p, &SamplingBudget::default());
        assert!(rep.entry_named("M_y").unwrap().pass);
        assert!(rep.entry_named("B_y").unwrap().pass);
    }

    #[test]
    fn inward_driver_satisfies_compatibility_on_box() {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        let d = DriverSpec::new(DriverKind::Inward { a: 1.0 }, 1, 1)
            .unwrap()
            .with_a4(A4Params { beta: 0.0, b: 0.0, kappa: 0.0, p: 2.0 });
        let rep = check_assumptions(&problem(phi, d), &SamplingBudget::default());
        assert!(rep.entry_named("A4_ii").unwrap().pass, "{}", rep.to_json());
    }

    #[test]
    fn outward_push_violates_zero_compatibility() {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        let d = DriverSpec::linear(0.0, 1.0, 0.0, 1, 1)
            .unwrap()
            .with_a4(A4Params { beta: 0.0, b: 0.0, kappa: 0.0, p: 2.0 });
        let rep = check_assumptions(&problem(phi, d), &SamplingBudget::default());
        let e = rep.entry_named("A4_ii").unwrap();
        assert!(!e.pass && !rep.pass);
        assert!(e.location.is_some());
    }

    #[test]
    fn deterministic_given_seed() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::new(DriverKind::SinCubic, 1, 1).unwrap());
        let b = SamplingBudget::default();
        assert_eq!(check_assumptions(&p, &b), check_assumptions(&p, &b));
    }

    #[test]
    fn normalized_problem_reports_shifted_generator() {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap().with_anchor(vec![1.0], vec![0.5]).unwrap();
        let d = DriverSpec::linear(-1.0, 0.25, 0.0, 1, 1).unwrap();
        let p = problem(phi, d.clone()).normalized().unwrap();
        let rep = check_assumptions(&p, &SamplingBudget::default());
        let raw = d.eval(0.0, &[0.0], &[1.0], &[0.0])[0];
        assert_eq!(rep.term_value("F(0,x0,u0,0)[0]"), Some(raw - 0.5));
    }
}

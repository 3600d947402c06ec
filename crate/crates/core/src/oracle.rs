//! Reference solvers: a recombining binomial tree for one-dimensional
//! problems and a fixed-point iteration for the implicit penalized step.

use std::io::Write;

use serde::Serialize;

use crate::convex::YosidaView;
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::paths::PathEnsemble;
use crate::report::mean;
use crate::solver::{solve_with, Mode, SchemeConfig};
use crate::vecops::dist;

/// Binomial lattice with increments ±√h.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TreeSpec {
    pub steps: usize,
}

/// Node values by level: level i holds i + 1 nodes, node j sitting at
/// B = (2j − i)√h.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSolution {
    pub steps: usize,
    pub h: f64,
    pub x0: f64,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub dk: Vec<Vec<f64>>,
}

impl TreeSolution {
    pub fn root(&self) -> f64 {
        self.y[0][0]
    }

    /// Forward state at node (i, j).
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x0 + (2.0 * j as f64 - i as f64) * self.h.sqrt()
    }
}

/// Backward dynamic program with exact lattice conditional expectations and
/// the same predictor/constraint step as the Monte Carlo solver.
pub fn tree_solve(problem: &Problem, tree: TreeSpec, mode: Mode) -> Result<TreeSolution> {
    if problem.dim() != 1 || problem.noise_dim() != 1 {
        return Err(Error::Unsupported("the tree oracle needs m = k = 1".into()));
    }
    if !problem.forward.is_identity() {
        return Err(Error::Unsupported("the tree oracle needs the identity forward process".into()));
    }
    if tree.steps == 0 {
        return Err(Error::config("tree steps must be positive"));
    }
    let n = tree.steps;
    let h = problem.horizon / n as f64;
    let sq = h.sqrt();
    let x0 = problem.forward.x0[0];
    let view = match mode {
        Mode::Penalized { epsilon } => Some(YosidaView::new(&problem.phi, epsilon)?),
        Mode::Limit => None,
    };
    let free = problem.phi.is_free();
    let mut sol = TreeSolution { steps: n, h, x0, y: vec![Vec::new(); n + 1], z: vec![Vec::new(); n], dk: vec![Vec::new(); n] };
    sol.y[n] = (0..=n).map(|j| problem.terminal.eval(&[sol.x(n, j)])[0]).collect();
    let mut f = [0.0];
    let mut out = [0.0];
    for i in (0..n).rev() {
        let t = i as f64 * h;
        let next = std::mem::take(&mut sol.y[i + 1]);
        let mut yi = Vec::with_capacity(i + 1);
        let mut zi = Vec::with_capacity(i + 1);
        let mut ki = Vec::with_capacity(i + 1);
        for j in 0..=i {
            let (down, up) = (next[j], next[j + 1]);
            let p = 0.5 * (up + down);
            let z = (up - down) / (2.0 * sq);
            problem.driver.eval_into(t, &[sol.x(i, j)], &[p], &[z], &mut f);
            let yhat = [p + h * f[0]];
            if free {
                out = yhat;
            } else if let Some(v) = &view {
                v.resolvent_into(h, &yhat, &mut out);
            } else {
                problem.phi.prox_into(&yhat, h, &mut out);
            }
            yi.push(out[0]);
            zi.push(z);
            ki.push(yhat[0] - out[0]);
        }
        if let Some(j) = yi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalAbort { step: i, detail: format!("tree node {j} is not finite") });
        }
        sol.y[i + 1] = next;
        sol.y[i] = yi;
        sol.z[i] = zi;
        sol.dk[i] = ki;
    }
    Ok(sol)
}

/// Iterates y ← (εx + hJ_ε(y))/(ε + h), a contraction with factor
/// h/(ε + h), until the a posteriori error bound (h/ε)·|Δy| is at most `tol`.
pub fn fixed_point_resolvent(view: &YosidaView, h: f64, x: &[f64], tol: f64, cap: usize) -> Result<Vec<f64>> {
    let eps = view.epsilon;
    if !(h > 0.0 && eps > 0.0) {
        return Err(Error::input("fixed_point_resolvent needs h, ε > 0"));
    }
    let w = 1.0 / (eps + h);
    let mut y = x.to_vec();
    let mut j = vec![0.0; x.len()];
    let mut bound = f64::INFINITY;
    for _ in 0..cap {
        view.base.prox_into(&y, eps, &mut j);
        let next: Vec<f64> = x.iter().zip(&j).map(|(a, b)| (eps * a + h * b) * w).collect();
        bound = h / eps * dist(&next, &y);
        y = next;
        if bound <= tol {
            return Ok(y);
        }
    }
    Err(Error::NonConvergence { iterations: cap, residual: bound })
}

/// One row of the Monte Carlo versus tree comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub quantity: String,
    pub mc_value: f64,
    pub tree_value: f64,
    pub gap: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleComparison {
    pub rows: Vec<ComparisonRow>,
}

impl OracleComparison {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["quantity", "mc_value", "tree_value", "gap", "threshold", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.quantity.clone(),
                r.mc_value.to_string(),
                r.tree_value.to_string(),
                r.gap.to_string(),
                r.threshold.to_string(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tree tolerance between N_tree and 2·N_tree roots.
pub const TREE_SELF_TOL: f64 = 1e-3;

/// Y_0 from Monte Carlo against the tree root (gap ≤ 3·stderr + 0.01), and
/// the tree against itself at twice the steps (gap ≤ 1e−3).
pub fn compare_with_tree(problem: &Problem, ens: &PathEnsemble, cfg: &SchemeConfig, mode: Mode, tree: TreeSpec) -> Result<OracleComparison> {
    let coarse = tree_solve(problem, tree, mode)?;
    let fine = tree_solve(problem, TreeSpec { steps: 2 * tree.steps }, mode)?;
    let mc = solve_with(problem, ens, cfg, mode)?;
    let mc_y0 = mean(&mc.y0_values(0));
    let se = mc.y0_stderr(0);
    let row = |quantity: &str, a: f64, b: f64, threshold: f64| {
        let gap = (a - b).abs();
        ComparisonRow { quantity: quantity.into(), mc_value: a, tree_value: b, gap, threshold, pass: gap <= threshold }
    };
    Ok(OracleComparison {
        rows: vec![
            row("Y0", mc_y0, coarse.root(), 3.0 * se + 0.01),
            row("tree_self_consistency", coarse.root(), fine.root(), TREE_SELF_TOL),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{resolvent_of_yosida, ConvexSpec};
    use crate::model::{DriverSpec, ForwardSpec, TerminalKind, TerminalSpec};

    fn problem(phi: ConvexSpec, driver: DriverSpec, terminal: TerminalSpec) -> Problem {
        Problem::new(phi, driver, terminal, ForwardSpec::identity(1), 1.0).unwrap()
    }

    #[test]
    fn symmetric_martingale_root_is_zero() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Identity, 1));
        let t = tree_solve(&p, TreeSpec { steps: 101 }, Mode::Limit).unwrap();
        assert_eq!(t.root(), 0.0);
        assert_eq!(t.y[101].len(), 102);
    }

    #[test]
    fn quadratic_tree_matches_linear_solution() {
        let p = problem(ConvexSpec::quadratic(1.0, 1).unwrap(), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Identity, 1));
        let n = 400;
        let t = tree_solve(&p, TreeSpec { steps: n }, Mode::Limit).unwrap();
        let h = 1.0 / n as f64;
        let mut worst = 0.0_f64;
        for i in (0..=n).step_by(40) {
            for j in 0..=i {
                let exact = (-(1.0 - i as f64 * h)).exp() * t.x(i, j);
                worst = worst.max((t.y[i][j] - exact).abs() / (1.0 + t.x(i, j).abs()));
            }
        }
        assert!(worst < 5.0 * h, "{worst}");
    }

    #[test]
    fn rejects_multidimensional_problems() {
        let p = problem(ConvexSpec::zero(2), DriverSpec::zero(2, 1), TerminalSpec::new(TerminalKind::Identity, 2));
        assert!(matches!(tree_solve(&p, TreeSpec { steps: 4 }, Mode::Limit), Err(Error::Unsupported(_))));
    }

    #[test]
    fn fixed_point_matches_closed_form_quadratic() {
        let phi = ConvexSpec::quadratic(1.0, 1).unwrap();
        let view = YosidaView::new(&phi, 1.0).unwrap();
        let y = fixed_point_resolvent(&view, 1.0, &[4.0], 1e-12, 10_000).unwrap();
        assert!((y[0] - 8.0 / 3.0).abs() < 1e-11);
        let c = resolvent_of_yosida(&view, 1.0, &[4.0]).unwrap();
        assert!((c[0] - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_stationary_and_cap() {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        let view = YosidaView::new(&phi, 0.5).unwrap();
        assert!((fixed_point_resolvent(&view, 0.1, &[0.3], 1e-12, 1).unwrap()[0] - 0.3).abs() < 1e-15);
        let quad = ConvexSpec::quadratic(1.0, 1).unwrap();
        let tight = YosidaView::new(&quad, 1e-3).unwrap();
        assert!(matches!(fixed_point_resolvent(&tight, 1.0, &[5.0], 1e-14, 3), Err(Error::NonConvergence { .. })));
    }
}

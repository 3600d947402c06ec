//! Backward least-squares Monte Carlo for the penalized equation and for
//! its ε → 0 limit.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{ConvexSpec, YosidaView};
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::paths::{PathEnsemble, TimeGrid};
use crate::regression::{Basis, Regressor};
use crate::report::{EstimateReport, Worst};
use crate::vecops::{dist, dot, norm};

pub const PICARD_CAP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub basis: Basis,
    #[serde(default)]
    pub picard_iters: usize,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Project regression predictions onto |y| ≤ R0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_radius: Option<f64>,
}

fn default_a() -> f64 {
    2.0
}

fn default_p() -> f64 {
    2.0
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, basis: Basis::default(), picard_iters: 0, a: 2.0, p: 2.0, clamp_radius: None }
    }
}

impl SchemeConfig {
    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("scheme.epsilon must be positive and finite"));
        }
        if self.picard_iters > PICARD_CAP {
            return Err(Error::config(format!("scheme.picard_iters must be at most {PICARD_CAP}")));
        }
        if !(self.a > 1.0) || !(self.p > 1.0) {
            return Err(Error::config("scheme.a and scheme.p must exceed 1"));
        }
        match self.basis {
            Basis::Hat { bins } if bins == 0 => return Err(Error::config("scheme.basis.bins must be positive")),
            Basis::Polynomial { degree } if degree > 6 => {
                return Err(Error::config("scheme.basis.degree must be at most 6"))
            }
            _ => {}
        }
        if let Some(r) = self.clamp_radius {
            if !(r > 0.0) {
                return Err(Error::config("scheme.clamp_radius must be positive"));
            }
        }
        Ok(())
    }

    /// n_p = (p − 1) ∧ 1
    pub fn n_p(&self) -> f64 {
        (self.p - 1.0).min(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Penalized { epsilon: f64 },
    Limit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostic {
    pub step: usize,
    pub basis: Basis,
    pub orthogonality: f64,
    pub picard_used: usize,
    pub warning: Option<String>,
}

/// Per-path, per-step arrays. Time-major: index `(i·M + p)·dim + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSolution {
    pub mode: Mode,
    pub grid: TimeGrid,
    pub paths: usize,
    /// m
    pub dim: usize,
    /// k
    pub noise_dim: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    dk: Vec<f64>,
    /// Σ_i (Y_{i+1} − P_i) per path, M·m.
    innovations: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostic>,
}

impl DiscreteSolution {
    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn y(&self, i: usize, p: usize) -> &[f64] {
        let m = self.dim;
        &self.y[(i * self.paths + p) * m..(i * self.paths + p + 1) * m]
    }

    /// Z_i of path p as an m×k row-major block.
    pub fn z(&self, i: usize, p: usize) -> &[f64] {
        let w = self.dim * self.noise_dim;
        &self.z[(i * self.paths + p) * w..(i * self.paths + p + 1) * w]
    }

    pub fn u(&self, i: usize, p: usize) -> &[f64] {
        let m = self.dim;
        &self.u[(i * self.paths + p) * m..(i * self.paths + p + 1) * m]
    }

    pub fn dk(&self, i: usize, p: usize) -> &[f64] {
        let m = self.dim;
        &self.dk[(i * self.paths + p) * m..(i * self.paths + p + 1) * m]
    }

    /// K_i = Σ_{j<i} ΔK_j, so K_0 = 0.
    pub fn k_path(&self, p: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.dim]];
        for i in 0..self.steps() {
            let mut next = out[i].clone();
            for (a, b) in next.iter_mut().zip(self.dk(i, p)) {
                *a += b;
            }
            out.push(next);
        }
        out
    }

    /// Y values of one step, path-major.
    pub fn y_level(&self, i: usize) -> &[f64] {
        let n = self.paths * self.dim;
        &self.y[i * n..(i + 1) * n]
    }

    pub fn y0_values(&self, component: usize) -> Vec<f64> {
        (0..self.paths).map(|p| self.y(0, p)[component]).collect()
    }

    /// Standard error of Y_0 as the mean of the pathwise cashflows
    /// Y_0 + Σ_i (Y_{i+1} − P_i).
    pub fn y0_stderr(&self, component: usize) -> f64 {
        let m = self.dim;
        let v: Vec<f64> = (0..self.paths).map(|p| self.y(0, p)[component] + self.innovations[p * m + component]).collect();
        crate::report::stderr(&v)
    }

    /// Σ_i |ΔK_i| of path p.
    pub fn total_variation(&self, p: usize) -> f64 {
        (0..self.steps()).map(|i| norm(self.dk(i, p))).sum()
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self.mode {
            Mode::Penalized { epsilon } => Some(epsilon),
            Mode::Limit => None,
        }
    }

    /// The convex function the solution's constraint term refers to: phi_ε
    /// for penalized runs, phi itself in the limit.
    pub fn phi_value(&self, phi: &ConvexSpec, y: &[f64]) -> f64 {
        match self.mode {
            Mode::Penalized { epsilon } => YosidaView { base: phi, epsilon }.value_unchecked(y),
            Mode::Limit => phi.value(y),
        }
    }

    /// Columnar CSV: path, step, then Y, Z, U and K components. Z and U are
    /// empty at the terminal step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let (m, k) = (self.dim, self.noise_dim);
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["path".to_string(), "step".to_string()];
        header.extend((0..m).map(|c| format!("Y{c}")));
        for r in 0..m {
            header.extend((0..k).map(|c| format!("Z{r}_{c}")));
        }
        header.extend((0..m).map(|c| format!("U{c}")));
        header.extend((0..m).map(|c| format!("K{c}")));
        w.write_record(&header)?;
        let n = self.steps();
        for p in 0..self.paths {
            let kp = self.k_path(p);
            for i in 0..=n {
                let mut row = vec![p.to_string(), i.to_string()];
                row.extend(self.y(i, p).iter().map(f64::to_string));
                if i < n {
                    row.extend(self.z(i, p).iter().map(f64::to_string));
                    row.extend(self.u(i, p).iter().map(f64::to_string));
                } else {
                    row.extend(std::iter::repeat_n(String::new(), m * k + m));
                }
                row.extend(kp[i].iter().map(f64::to_string));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// The implicit constraint step.
#[derive(Clone, Copy)]
enum Step<'a> {
    Penalized(YosidaView<'a>),
    Limit(&'a ConvexSpec),
    Free,
}

impl Step<'_> {
    fn apply(&self, h: f64, yhat: &[f64], out: &mut [f64]) {
        match self {
            Step::Penalized(view) => view.resolvent_into(h, yhat, out),
            Step::Limit(phi) => phi.prox_into(yhat, h, out),
            Step::Free => out.copy_from_slice(yhat),
        }
    }
}

/// Penalized scheme: Y_i = (I + h∇phi_ε)^{-1}(Ŷ_i).
pub fn solve_penalized(problem: &Problem, ensemble: &PathEnsemble, cfg: &SchemeConfig) -> Result<DiscreteSolution> {
    cfg.validate()?;
    let view = YosidaView::new(&problem.phi, cfg.epsilon)?;
    let step = if problem.phi.is_free() { Step::Free } else { Step::Penalized(view) };
    solve(problem, ensemble, cfg, Mode::Penalized { epsilon: cfg.epsilon }, step)
}

/// Limit scheme: Y_i = J_h(Ŷ_i), the prox of phi with step h.
pub fn solve_limit(problem: &Problem, ensemble: &PathEnsemble, cfg: &SchemeConfig) -> Result<DiscreteSolution> {
    cfg.validate()?;
    let step = if problem.phi.is_free() { Step::Free } else { Step::Limit(&problem.phi) };
    solve(problem, ensemble, cfg, Mode::Limit, step)
}

/// Dispatches on `mode`; the ε of a penalized mode overrides `cfg.epsilon`.
pub fn solve_with(problem: &Problem, ensemble: &PathEnsemble, cfg: &SchemeConfig, mode: Mode) -> Result<DiscreteSolution> {
    match mode {
        Mode::Penalized { epsilon } => solve_penalized(problem, ensemble, &cfg.with_epsilon(epsilon)),
        Mode::Limit => solve_limit(problem, ensemble, cfg),
    }
}

fn solve(problem: &Problem, ens: &PathEnsemble, cfg: &SchemeConfig, mode: Mode, step: Step) -> Result<DiscreteSolution> {
    let (m, k) = (problem.dim(), problem.noise_dim());
    if ens.dim != k {
        return Err(Error::config(format!("ensemble has k = {} but the problem has k = {k}", ens.dim)));
    }
    if (ens.grid.horizon - problem.horizon).abs() > 1e-12 * problem.horizon {
        return Err(Error::config("ensemble horizon differs from the problem horizon"));
    }
    let n = ens.steps();
    let mp = ens.paths;
    let h = ens.grid.h();
    let mk = m * k;
    let mut y = vec![0.0; (n + 1) * mp * m];
    let mut z = vec![0.0; n * mp * mk];
    let mut u = vec![0.0; n * mp * m];
    let mut dk = vec![0.0; n * mp * m];
    let mut innovations = vec![0.0; mp * m];

    {
        let terminal = &mut y[n * mp * m..];
        terminal.par_chunks_mut(m).enumerate().for_each(|(p, out)| problem.terminal.eval_into(ens.x(n, p), out));
        if let Some(bad) = terminal.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalAbort { step: n, detail: format!("terminal value of path {} is not finite", bad / m) });
        }
    }

    let mut diagnostics = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let t = ens.grid.t(i);
        let x = ens.x_level(i);
        let db = ens.db_level(i);
        let (head, tail) = y.split_at_mut((i + 1) * mp * m);
        let next = &tail[..mp * m];
        let cur = &mut head[i * mp * m..];

        let reg = Regressor::new(x, k, cfg.basis);
        let fit_y = reg.fit(x, k, next, m);
        let mut pred = vec![0.0; mp * m];
        pred.par_chunks_mut(m).enumerate().for_each(|(p, out)| {
            reg.predict_into(&fit_y, &x[p * k..(p + 1) * k], out);
        });
        for (acc, (a, b)) in innovations.iter_mut().zip(next.iter().zip(&pred)) {
            *acc += a - b;
        }
        // Centered increment regression: Z = E[(Y_{i+1} − P_i)ΔB^T | X_i]/h.
        let mut zt = vec![0.0; mp * mk];
        zt.par_chunks_mut(mk).enumerate().for_each(|(p, out)| {
            for r in 0..m {
                let c = next[p * m + r] - pred[p * m + r];
                for col in 0..k {
                    out[r * k + col] = c * db[p * k + col];
                }
            }
        });
        let fit_z = reg.fit(x, k, &zt, mk);
        let zs = &mut z[i * mp * mk..(i + 1) * mp * mk];
        let us = &mut u[i * mp * m..(i + 1) * mp * m];
        let dks = &mut dk[i * mp * m..(i + 1) * mp * m];

        let used: Vec<(usize, bool)> = cur
            .par_chunks_mut(m)
            .zip(zs.par_chunks_mut(mk))
            .zip(us.par_chunks_mut(m))
            .zip(dks.par_chunks_mut(m))
            .enumerate()
            .map(|(p, (((yo, zo), uo), dko))| {
                let xp = &x[p * k..(p + 1) * k];
                reg.predict_into(&fit_z, xp, zo);
                zo.iter_mut().for_each(|v| *v /= h);
                let mut pp = pred[p * m..(p + 1) * m].to_vec();
                if let Some(r) = cfg.clamp_radius {
                    let nrm = norm(&pp);
                    if nrm > r {
                        pp.iter_mut().for_each(|v| *v *= r / nrm);
                    }
                }
                let mut f = vec![0.0; m];
                let mut yhat = vec![0.0; m];
                problem.driver.eval_into(t, xp, &pp, zo, &mut f);
                for c in 0..m {
                    yhat[c] = pp[c] + h * f[c];
                }
                step.apply(h, &yhat, yo);
                let mut iters = 0;
                let mut diverged = false;
                if cfg.picard_iters > 0 {
                    let (explicit_y, explicit_hat) = (yo.to_vec(), yhat.clone());
                    let mut prev_change = f64::INFINITY;
                    let mut cand = vec![0.0; m];
                    for it in 0..cfg.picard_iters {
                        problem.driver.eval_into(t, xp, yo, zo, &mut f);
                        for c in 0..m {
                            yhat[c] = pp[c] + h * f[c];
                        }
                        step.apply(h, &yhat, &mut cand);
                        let change = dist(&cand, yo);
                        yo.copy_from_slice(&cand);
                        iters = it + 1;
                        if !change.is_finite() || (it >= 1 && change > 2.0 * prev_change) {
                            diverged = true;
                            break;
                        }
                        if change <= 1e-14 * (1.0 + norm(yo)) {
                            break;
                        }
                        prev_change = change;
                    }
                    if diverged {
                        yo.copy_from_slice(&explicit_y);
                        yhat = explicit_hat;
                    }
                }
                for c in 0..m {
                    dko[c] = yhat[c] - yo[c];
                }
                match step {
                    Step::Penalized(view) => view.grad_into(yo, uo),
                    Step::Limit(_) => {
                        for c in 0..m {
                            uo[c] = dko[c] / h;
                        }
                    }
                    Step::Free => uo.fill(0.0),
                }
                (iters, diverged)
            })
            .collect();

        if let Some(bad) = cur.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalAbort { step: i, detail: format!("Y of path {} is not finite", bad / m) });
        }
        let picard_used = used.iter().map(|u| u.0).max().unwrap_or(0);
        let diverged = used.iter().filter(|u| u.1).count();
        let mut warning = reg.warning.clone();
        if diverged > 0 {
            let msg = format!("Picard refinement diverged on {diverged} paths; explicit predictor kept");
            warning = Some(match warning {
                Some(w) => format!("{w}; {msg}"),
                None => msg,
            });
        }
        diagnostics.push(StepDiagnostic {
            step: i,
            basis: reg.design.basis,
            orthogonality: fit_y.orthogonality.max(fit_z.orthogonality),
            picard_used,
            warning,
        });
    }
    diagnostics.reverse();
    Ok(DiscreteSolution { mode, grid: ens.grid, paths: mp, dim: m, noise_dim: k, y, z, u, dk, innovations, diagnostics })
}

/// Test paths for the measure inequality.
#[derive(Clone, Debug)]
pub enum TestPath {
    Constant(Vec<f64>),
    /// a + b·t
    Linear(Vec<f64>, Vec<f64>),
    /// The solution itself.
    SelfPath,
}

impl TestPath {
    fn at(&self, t: f64, own: &[f64], out: &mut [f64]) {
        match self {
            TestPath::Constant(v) => out.copy_from_slice(v),
            TestPath::Linear(a, b) => {
                for c in 0..out.len() {
                    out[c] = a[c] + b[c] * t;
                }
            }
            TestPath::SelfPath => out.copy_from_slice(own),
        }
    }
}

/// Discrete measure inequality: for every test path and every window
/// i ≤ j, Σ_{i≤l<j} [⟨y(t_l) − Y_l, ΔK_l⟩ + φ(Y_l)h − φ(y(t_l))h] ≤ tol·(j−i)·h.
/// Penalized solutions are tested against phi_ε, their own constraint
/// function.
pub fn subdiff_measure_check(sol: &DiscreteSolution, phi: &ConvexSpec, tests: &[TestPath], tol: f64) -> EstimateReport {
    let mut report = EstimateReport::new("subdiff", tol);
    let n = sol.steps();
    let h = sol.grid.h();
    let m = sol.dim;
    for (idx, test) in tests.iter().enumerate() {
        // Worst window sum minus its allowance, per path, via a running
        // minimum of prefix sums of (term − tol·h).
        let worst: Vec<(f64, usize, usize)> = (0..sol.paths)
            .into_par_iter()
            .map(|p| {
                let mut yv = vec![0.0; m];
                let mut prefix = 0.0;
                let mut min_prefix = 0.0;
                let mut min_at = 0;
                let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
                for l in 0..n {
                    let yl = sol.y(l, p);
                    test.at(sol.grid.t(l), yl, &mut yv);
                    let diff: Vec<f64> = yv.iter().zip(yl).map(|(a, b)| a - b).collect();
                    let fy = sol.phi_value(phi, yl);
                    let fv = sol.phi_value(phi, &yv);
                    let mut term = dot(&diff, sol.dk(l, p)) + (fy - fv) * h;
                    if matches!(test, TestPath::SelfPath) {
                        term = 0.0;
                    }
                    if fv.is_infinite() && fv > 0.0 {
                        continue;
                    }
                    prefix += term - tol * h;
                    let excess = prefix - min_prefix;
                    if excess > best.0 {
                        best = (excess, min_at, l + 1);
                    }
                    if prefix < min_prefix {
                        min_prefix = prefix;
                        min_at = l + 1;
                    }
                }
                best
            })
            .collect();
        let mut w = Worst::default();
        for (p, (excess, i, j)) in worst.iter().enumerate() {
            w.observe(-excess, &[p as f64, *i as f64, *j as f64]);
        }
        report.entry(format!("test_path_{idx}"), w, 0.0);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriverSpec, ForwardSpec, TerminalKind, TerminalSpec};
    use crate::paths::generate;

    fn ensemble(n: usize, m: usize, seed: u64) -> PathEnsemble {
        generate(TimeGrid::new(1.0, n).unwrap(), &ForwardSpec::identity(1), m, 1, seed).unwrap()
    }

    fn problem(phi: ConvexSpec, driver: DriverSpec, terminal: TerminalSpec) -> Problem {
        Problem::new(phi, driver, terminal, ForwardSpec::identity(1), 1.0).unwrap()
    }

    #[test]
    fn free_case_solvers_agree_bitwise() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Sin, 1));
        let e = ensemble(16, 2000, 1);
        let a = solve_penalized(&p, &e, &SchemeConfig::default()).unwrap();
        let b = solve_limit(&p, &e, &SchemeConfig::default()).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.z, b.z);
        assert!(a.dk.iter().all(|v| *v == 0.0));
        assert!(a.u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stationary_solution() {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        let t = TerminalSpec::new(TerminalKind::Constant, 1).with_scale(0.0);
        let p = problem(phi, DriverSpec::linear(-1.0, 0.0, 0.0, 1, 1).unwrap(), t);
        let e = ensemble(8, 500, 2);
        let s = solve_penalized(&p, &e, &SchemeConfig::default()).unwrap();
        assert!(s.y.iter().all(|v| v.abs() < 1e-14));
        assert!(s.z.iter().all(|v| v.abs() < 1e-12));
        assert!(s.dk.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn penalized_identity_dk_equals_h_u() {
        let phi = ConvexSpec::indicator_box(vec![-0.5], vec![0.5]).unwrap();
        let t = TerminalSpec::new(TerminalKind::Identity, 1);
        let p = problem(phi, DriverSpec::linear(0.0, 0.5, 0.0, 1, 1).unwrap(), t);
        let e = ensemble(16, 2000, 3);
        let s = solve_penalized(&p, &e, &SchemeConfig::default().with_epsilon(0.05)).unwrap();
        let h = s.grid.h();
        let mut active = 0;
        for i in 0..16 {
            for q in 0..2000 {
                let (dk, u) = (s.dk(i, q)[0], s.u(i, q)[0]);
                assert!((dk - h * u).abs() <= 1e-12 * (1.0 + dk.abs()), "{dk} vs {}", h * u);
                active += usize::from(dk != 0.0);
            }
        }
        assert!(active > 0);
        for d in &s.diagnostics {
            assert!(d.orthogonality < 1e-8, "{d:?}");
        }
    }

    #[test]
    fn limit_increments_are_in_the_prox_graph() {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        let t = TerminalSpec::new(TerminalKind::Identity, 1).with_scale(2.0);
        let p = problem(phi.clone(), DriverSpec::zero(1, 1), t);
        let e = ensemble(16, 2000, 4);
        let s = solve_limit(&p, &e, &SchemeConfig::default()).unwrap();
        let h = s.grid.h();
        for i in 0..16 {
            for q in (0..2000).step_by(7) {
                let yl = s.y(i, q);
                assert!(phi.in_domain(yl));
                for v in [-1.0, -0.3, 0.4, 1.0] {
                    let gap = phi.value(&[v]) - phi.value(yl) - s.dk(i, q)[0] / h * (v - yl[0]);
                    assert!(gap >= -1e-10);
                }
            }
        }
        let rep = subdiff_measure_check(&s, &phi, &[TestPath::Constant(vec![0.0]), TestPath::SelfPath], 1e-10);
        assert!(rep.pass, "{}", rep.to_json());
    }

    #[test]
    fn picard_refinement_converges_for_stiff_linear_driver() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::linear(-2.0, 0.0, 0.0, 1, 1).unwrap(), TerminalSpec::new(TerminalKind::Identity, 1));
        let e = ensemble(32, 2000, 5);
        let cfg = SchemeConfig { picard_iters: 10, ..SchemeConfig::default() };
        let s = solve_penalized(&p, &e, &cfg).unwrap();
        assert!(s.diagnostics.iter().all(|d| d.warning.is_none()));
        assert!(s.diagnostics.iter().any(|d| d.picard_used > 1));
    }
}

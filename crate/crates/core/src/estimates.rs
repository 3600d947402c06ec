//! Weight processes and empirical checks of the a priori, stability and
//! total-variation estimates on solver output.
//!
//! Every constant in these inequalities is non-explicit, so the checks
//! report the empirical ratio `E lhs / E rhs` and assert only its
//! stability across grid refinement or perturbation size.

use rayon::prelude::*;

use crate::convex::{ConvexSpec, YosidaView};
use crate::error::{Error, Result};
use crate::model::{DriverSpec, Problem};
use crate::paths::{PathEnsemble, TimeGrid};
use crate::regression::{Basis, Regressor};
use crate::report::{mean, ratio_summary, stderr, EstimateReport, Status, Worst};
use crate::solver::{solve_with, DiscreteSolution, Mode, SchemeConfig};
use crate::vecops::{dot, norm, norm2, sub};

/// Right-hand sides below this are treated as zero.
pub const RATIO_FLOOR: f64 = 1e-12;
/// Left-hand sides below this count as exact zeros.
pub const NOISE_FLOOR: f64 = 1e-10;
/// Allowed max/min spread of a ratio across refinements or sweeps.
pub const STABILITY_TOL: f64 = 0.25;

/// V_i = Σ_{j<i} (μ(t_j) + a ℓ(t_j)² / (2 n_p)) h, n_p = (p − 1) ∧ 1.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightProcess {
    pub a: f64,
    pub p: f64,
    pub n_p: f64,
    pub grid: TimeGrid,
    v: Vec<f64>,
}

impl WeightProcess {
    pub fn new(driver: &DriverSpec, grid: TimeGrid, a: f64, p: f64) -> Result<Self> {
        if !(a > 1.0 && p > 1.0) {
            return Err(Error::config("weights need a > 1 and p > 1"));
        }
        let n_p = (p - 1.0).min(1.0);
        let h = grid.h();
        let mut v = Vec::with_capacity(grid.steps + 1);
        v.push(0.0);
        let mut acc = 0.0;
        for j in 0..grid.steps {
            let t = grid.t(j);
            let ell = driver.ell(t);
            acc += (driver.mu(t) + a * ell * ell / (2.0 * n_p)) * h;
            v.push(acc);
        }
        Ok(Self { a, p, n_p, grid, v })
    }

    pub fn for_scheme(driver: &DriverSpec, grid: TimeGrid, cfg: &SchemeConfig) -> Result<Self> {
        Self::new(driver, grid, cfg.a, cfg.p)
    }

    /// V ≡ 0.
    pub fn flat(grid: TimeGrid, a: f64, p: f64) -> Self {
        Self { a, p, n_p: (p - 1.0).min(1.0), grid, v: vec![0.0; grid.steps + 1] }
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn at(&self, i: usize) -> f64 {
        self.v[i]
    }

    pub fn terminal(&self) -> f64 {
        self.v[self.grid.steps]
    }

    /// ‖V‖_T = sup_t |V_t|
    pub fn sup_norm(&self) -> f64 {
        self.v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    fn increment(&self, i: usize) -> f64 {
        self.v[i + 1] - self.v[i]
    }
}

/// (u0, û, phi(u0)) for the constraint function the solution actually
/// uses: phi_ε and its gradient at u0 for penalized runs, phi and the
/// designated û0 in the limit.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorTerms {
    pub u0: Vec<f64>,
    pub slope: Vec<f64>,
    pub phi_u0: f64,
}

pub fn anchor_terms(sol: &DiscreteSolution, phi: &ConvexSpec) -> AnchorTerms {
    let u0 = phi.anchor().point.clone();
    match sol.mode {
        Mode::Penalized { epsilon } => {
            let view = YosidaView { base: phi, epsilon };
            let slope = view.grad_unchecked(&u0);
            let phi_u0 = view.value_unchecked(&u0);
            AnchorTerms { u0, slope, phi_u0 }
        }
        Mode::Limit => {
            let phi_u0 = phi.value(&u0);
            AnchorTerms { u0, slope: phi.anchor().slope.clone(), phi_u0 }
        }
    }
}

fn check_shapes(sol: &DiscreteSolution, ens: &PathEnsemble, w: &WeightProcess) -> Result<()> {
    if sol.grid != ens.grid || sol.paths != ens.paths || w.grid != sol.grid {
        return Err(Error::input("solution, ensemble and weights must share one grid and path count"));
    }
    Ok(())
}

/// (e^{V} |y|)^p, the one place this power is formed so that instantiations
/// of the same quantity agree bit for bit.
#[inline]
fn weighted_pow(v: f64, y_norm: f64, p: f64) -> f64 {
    (v.exp() * y_norm).powf(p)
}

/// Per-path ∫ e^{V}|F(s, u0, 0)| ds by left-endpoint rectangles, from step `from`.
fn driver_integral(problem: &Problem, ens: &PathEnsemble, w: &WeightProcess, u0: &[f64], p: usize, from: usize) -> f64 {
    let n = w.grid.steps;
    let h = w.grid.h();
    let zero = vec![0.0; problem.dim() * problem.noise_dim()];
    let mut f = vec![0.0; problem.dim()];
    let mut acc = 0.0;
    for i in from..n {
        problem.driver.eval_into(w.grid.t(i), ens.x(i, p), u0, &zero, &mut f);
        acc += w.at(i).exp() * norm(&f) * h;
    }
    acc
}

fn slope_integral(w: &WeightProcess, slope_norm: f64, from: usize) -> f64 {
    let h = w.grid.h();
    (from..w.grid.steps).map(|i| w.at(i).exp() * slope_norm * h).sum()
}

/// Θ = e^{V_T}|η − u0| + ∫ e^{V}|û0| ds + ∫ e^{V}|F(s,u0,0)| ds, per path.
pub fn compute_theta(sol: &DiscreteSolution, ens: &PathEnsemble, problem: &Problem, w: &WeightProcess) -> Result<Vec<f64>> {
    check_shapes(sol, ens, w)?;
    let a = anchor_terms(sol, &problem.phi);
    let n = sol.steps();
    let s = slope_integral(w, norm(&a.slope), 0);
    Ok((0..sol.paths)
        .into_par_iter()
        .map(|p| {
            let eta = sol.y(n, p);
            w.terminal().exp() * norm(&sub(eta, &a.u0)) + s + driver_integral(problem, ens, w, &a.u0, p, 0)
        })
        .collect())
}

/// Per-path pieces of both sides of the a priori estimate, from step `from`.
struct Prop1Samples {
    sup: Vec<f64>,
    z: Vec<f64>,
    phi: Vec<f64>,
    terminal: Vec<f64>,
    slope: Vec<f64>,
    driver: Vec<f64>,
}

impl Prop1Samples {
    fn lhs(&self, p: f64) -> Vec<f64> {
        (0..self.sup.len()).map(|q| self.sup[q] + self.z[q].powf(p / 2.0) + self.phi[q].powf(p / 2.0)).collect()
    }

    fn rhs(&self, p: f64) -> Vec<f64> {
        (0..self.sup.len()).map(|q| self.terminal[q] + self.slope[q].powf(p) + self.driver[q].powf(p)).collect()
    }
}

fn prop1_samples(sol: &DiscreteSolution, ens: &PathEnsemble, problem: &Problem, w: &WeightProcess, from: usize) -> Prop1Samples {
    let a = anchor_terms(sol, &problem.phi);
    let n = sol.steps();
    let h = sol.grid.h();
    let pw = w.p;
    let s = slope_integral(w, norm(&a.slope), from);
    let rows: Vec<[f64; 6]> = (0..sol.paths)
        .into_par_iter()
        .map(|q| {
            let mut sup = 0.0_f64;
            let mut zq = 0.0;
            let mut fq = 0.0;
            for i in from..=n {
                let y = sol.y(i, q);
                sup = sup.max(weighted_pow(w.at(i), norm(&sub(y, &a.u0)), pw));
                if i < n {
                    let e2 = (2.0 * w.at(i)).exp();
                    zq += e2 * norm2(sol.z(i, q)) * h;
                    fq += e2 * (sol.phi_value(&problem.phi, y) - a.phi_u0).abs() * h;
                }
            }
            let term = weighted_pow(w.terminal(), norm(&sub(sol.y(n, q), &a.u0)), pw);
            [sup, zq, fq, term, s, driver_integral(problem, ens, w, &a.u0, q, from)]
        })
        .collect();
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    Prop1Samples { sup: col(0), z: col(1), phi: col(2), terminal: col(3), slope: col(4), driver: col(5) }
}

fn push_ratio(report: &mut EstimateReport, lhs: &[f64], rhs: &[f64]) {
    let (ml, mr) = (mean(lhs), mean(rhs));
    report.lhs = Some(ml);
    report.rhs = Some(mr);
    report.term("lhs", ml, Some(stderr(lhs)));
    report.term("rhs", mr, Some(stderr(rhs)));
    report.ratio = ratio_summary(lhs, rhs, RATIO_FLOOR);
    if report.ratio.is_none() {
        if ml <= NOISE_FLOOR {
            report.note("both sides vanish");
        } else {
            report.set_status(Status::Degenerate);
            report.note("right-hand side vanishes while the left-hand side does not");
        }
    }
}

/// Fraction of grid steps at which the conditional forms are sampled.
const INTERIOR: [f64; 3] = [0.25, 0.5, 0.75];

/// Regresses both tail sides on the forward state at step `j` and returns
/// the 95th percentile of the pathwise conditional ratio.
fn conditional_ratio(ens: &PathEnsemble, j: usize, lhs: &[f64], rhs: &[f64]) -> Option<f64> {
    let x = ens.x_level(j);
    let k = ens.dim;
    let reg = Regressor::new(x, k, Basis::default());
    let fl = reg.fit(x, k, lhs, 1);
    let fr = reg.fit(x, k, rhs, 1);
    let mut ratios: Vec<f64> = (0..ens.paths)
        .filter_map(|p| {
            let (mut a, mut b) = ([0.0], [0.0]);
            reg.predict_into(&fl, &x[p * k..(p + 1) * k], &mut a);
            reg.predict_into(&fr, &x[p * k..(p + 1) * k], &mut b);
            (b[0] > RATIO_FLOOR && a[0] > 0.0).then(|| a[0] / b[0])
        })
        .collect();
    if ratios.is_empty() {
        return None;
    }
    ratios.sort_by(f64::total_cmp);
    Some(ratios[((ratios.len() - 1) as f64 * 0.95).round() as usize])
}

/// The a priori estimate at t = 0, plus approximate conditional ratios at
/// three interior times and the pointwise constant
/// sup_paths |Y_0 − u0|^p / E Θ^p.
pub fn check_prop1(sol: &DiscreteSolution, ens: &PathEnsemble, problem: &Problem, w: &WeightProcess) -> Result<EstimateReport> {
    check_shapes(sol, ens, w)?;
    let p = w.p;
    let mut report = EstimateReport::new("prop1", STABILITY_TOL);
    let s = prop1_samples(sol, ens, problem, w, 0);
    for (name, xs, pow) in [
        ("sup_weighted_y", &s.sup, 1.0),
        ("z_energy", &s.z, p / 2.0),
        ("phi_energy", &s.phi, p / 2.0),
        ("terminal", &s.terminal, 1.0),
        ("slope_integral", &s.slope, p),
        ("driver_integral", &s.driver, p),
    ] {
        let v: Vec<f64> = xs.iter().map(|x| x.powf(pow)).collect();
        report.term(name, mean(&v), Some(stderr(&v)));
    }
    let (lhs, rhs) = (s.lhs(p), s.rhs(p));
    push_ratio(&mut report, &lhs, &rhs);

    let theta = compute_theta(sol, ens, problem, w)?;
    let theta_p = mean(&theta.iter().map(|t| t.powf(p)).collect::<Vec<_>>());
    if theta_p > RATIO_FLOOR {
        let u0 = &problem.phi.anchor().point;
        let worst = (0..sol.paths).map(|q| norm(&sub(sol.y(0, q), u0)).powf(p)).fold(0.0_f64, f64::max);
        report.term("pointwise_constant", worst / theta_p, None);
    }

    let n = sol.steps();
    for frac in INTERIOR {
        let j = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
        if j == 0 || j >= n {
            continue;
        }
        let t = prop1_samples(sol, ens, problem, w, j);
        if let Some(r) = conditional_ratio(ens, j, &t.lhs(p), &t.rhs(p)) {
            report.term(format!("conditional_ratio_p95_t{:.3}", sol.grid.t(j)), r, None);
        }
    }
    report.note("conditional_ratio_* terms are regression estimates (approximate) and are not asserted");
    Ok(report)
}

/// Stability of two solutions that share paths and differ only in their
/// terminal data.
pub fn check_uniqueness_stability(sol_a: &DiscreteSolution, sol_b: &DiscreteSolution, w: &WeightProcess) -> Result<EstimateReport> {
    if sol_a.grid != sol_b.grid || sol_a.paths != sol_b.paths || sol_a.dim != sol_b.dim || w.grid != sol_a.grid {
        return Err(Error::input("uniqueness check needs two solutions on the same grid and paths"));
    }
    let (lhs, rhs) = uniqueness_sides(sol_a, sol_b, w);
    let mut report = EstimateReport::new("uniq", STABILITY_TOL);
    push_ratio(&mut report, &lhs, &rhs);
    if report.ratio.is_none() && mean(&lhs) <= NOISE_FLOOR {
        report.note("identical terminal data: exact-zero pass");
    }
    Ok(report)
}

fn uniqueness_sides(a: &DiscreteSolution, b: &DiscreteSolution, w: &WeightProcess) -> (Vec<f64>, Vec<f64>) {
    let bundle = AppendixBundle::uniqueness_unchecked(a, b, w);
    let side = bundle.sides();
    (side.lhs_core, side.rhs)
}

/// Total-variation bound; needs an interior ball (r0, c0) and p ≥ 2.
pub fn check_tv_bound(sol: &DiscreteSolution, ens: &PathEnsemble, problem: &Problem, w: &WeightProcess) -> Result<EstimateReport> {
    check_shapes(sol, ens, w)?;
    let ball = problem
        .phi
        .interior()
        .ok_or_else(|| Error::config("convex.interior_radius is required for the tv check (no ball B(u0, r0) in Dom(phi))"))?;
    if w.p < 2.0 {
        return Err(Error::config("the tv check needs scheme.p ≥ 2"));
    }
    let p = w.p;
    let h = sol.grid.h();
    let n = sol.steps();
    let a = anchor_terms(sol, &problem.phi);
    let (r0, c0) = (ball.radius, ball.bound);
    let gap = (c0 - a.phi_u0).max(0.0);
    let e2: f64 = (0..n).map(|i| (2.0 * w.at(i)).exp() * h).sum();
    let s = slope_integral(w, norm(&a.slope), 0);
    let rows: Vec<[f64; 5]> = (0..sol.paths)
        .into_par_iter()
        .map(|q| {
            let tv: f64 = (0..n).map(|i| (2.0 * w.at(i)).exp() * norm(sol.dk(i, q))).sum();
            let term = weighted_pow(w.terminal(), norm(&sub(sol.y(n, q), &a.u0)), p);
            let drv = driver_integral(problem, ens, w, &a.u0, q, 0);
            [r0.powf(p / 2.0) * tv.powf(p / 2.0), term, gap * e2.powf(p / 2.0), s.powf(p), drv.powf(p)]
        })
        .collect();
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let mut report = EstimateReport::new("tv", STABILITY_TOL);
    for (c, name) in ["weighted_tv", "terminal", "interior_gap", "slope_integral", "driver_integral"].iter().enumerate() {
        let v = col(c);
        report.term(*name, mean(&v), Some(stderr(&v)));
    }
    let lhs = col(0);
    let rhs: Vec<f64> = rows.iter().map(|r| r[1] + r[2] + r[3] + r[4]).collect();
    push_ratio(&mut report, &lhs, &rhs);
    let tv: Vec<f64> = (0..sol.paths).map(|q| sol.total_variation(q)).collect();
    report.term("mean_tv", mean(&tv), Some(stderr(&tv)));
    Ok(report)
}

/// Which estimate a refinement study re-evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioCheck {
    Prop1,
    Tv,
}

/// Ratio of `check` on the ensemble and on its bridge refinement (N → 2N);
/// passes when max/min ≤ 1 + STABILITY_TOL.
pub fn refinement_study(problem: &Problem, ens: &PathEnsemble, cfg: &SchemeConfig, mode: Mode, check: RatioCheck) -> Result<EstimateReport> {
    let fine = ens.refine(&problem.forward)?;
    let name = match check {
        RatioCheck::Prop1 => "prop1_refinement",
        RatioCheck::Tv => "tv_refinement",
    };
    let mut report = EstimateReport::new(name, STABILITY_TOL);
    let mut ratios = Vec::new();
    for e in [ens, &fine] {
        let sol = solve_with(problem, e, cfg, mode)?;
        let w = WeightProcess::for_scheme(&problem.driver, e.grid, cfg)?;
        let r = match check {
            RatioCheck::Prop1 => check_prop1(&sol, e, problem, &w)?,
            RatioCheck::Tv => check_tv_bound(&sol, e, problem, &w)?,
        };
        let steps = e.grid.steps;
        report.term(format!("lhs_N{steps}"), r.lhs.unwrap_or(f64::NAN), r.terms.iter().find(|t| t.term == "lhs").and_then(|t| t.stderr));
        report.term(format!("rhs_N{steps}"), r.rhs.unwrap_or(f64::NAN), None);
        match r.ratio {
            Some(s) => {
                report.term(format!("ratio_N{steps}"), s.ratio, None);
                ratios.push(s.ratio);
            }
            None => {
                report.note(format!("N = {steps}: {}", r.notes.join("; ")));
                if r.status == Status::Degenerate {
                    report.set_status(Status::Degenerate);
                    return Ok(report);
                }
            }
        }
    }
    if ratios.len() < 2 {
        report.set_status(Status::Vacuous);
        report.note("no ratio on at least one grid");
        return Ok(report);
    }
    flatness(&mut report, &ratios);
    Ok(report)
}

/// Records max/min of positive finite ratios and fails above 1 + tol.
fn flatness(report: &mut EstimateReport, ratios: &[f64]) {
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    report.term("spread", spread, None);
    let mut w = Worst::default();
    w.observe(1.0 + STABILITY_TOL - spread, &[min, max]);
    report.entry("ratio_spread", w, 0.0);
}

/// Terminal perturbation sweep η̃ = η + δ on shared paths. A δ = 0 entry
/// is checked against the noise floor; the remaining ratios must be flat.
pub fn uniqueness_sweep(problem: &Problem, ens: &PathEnsemble, cfg: &SchemeConfig, mode: Mode, deltas: &[f64]) -> Result<EstimateReport> {
    if deltas.is_empty() {
        return Err(Error::config("checks.deltas must not be empty"));
    }
    let base = solve_with(problem, ens, cfg, mode)?;
    let w = WeightProcess::for_scheme(&problem.driver, ens.grid, cfg)?;
    let mut report = EstimateReport::new("uniq_sweep", STABILITY_TOL);
    let mut ratios = Vec::new();
    for &d in deltas {
        let mut shifted = problem.clone();
        shifted.terminal.shift.iter_mut().for_each(|s| *s += d);
        let other = solve_with(&shifted, ens, cfg, mode)?;
        let r = check_uniqueness_stability(&base, &other, &w)?;
        let lhs = r.lhs.unwrap_or(0.0);
        report.term(format!("lhs_delta{d}"), lhs, r.terms.iter().find(|t| t.term == "lhs").and_then(|t| t.stderr));
        report.term(format!("rhs_delta{d}"), r.rhs.unwrap_or(0.0), None);
        if d == 0.0 {
            let mut wz = Worst::default();
            wz.observe(NOISE_FLOOR - lhs, &[d]);
            report.entry("zero_perturbation_noise_floor", wz, 0.0);
            continue;
        }
        match r.ratio {
            Some(s) => {
                report.term(format!("ratio_delta{d}"), s.ratio, None);
                ratios.push(s.ratio);
            }
            None => {
                report.set_status(Status::Degenerate);
                report.note(format!("δ = {d}: ratio undefined"));
            }
        }
    }
    if report.status == Status::Degenerate {
        return Ok(report);
    }
    if ratios.len() >= 2 {
        flatness(&mut report, &ratios);
    }
    Ok(report)
}

/// E max_i |Y_i − J_ε(Y_i)|² and E Σ |U_i|² h of one penalized level.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Penetration {
    pub max_dist2: f64,
    pub max_dist2_stderr: f64,
    pub energy: f64,
    pub energy_stderr: f64,
}

pub fn penetration_stats(sol: &DiscreteSolution, phi: &ConvexSpec) -> Penetration {
    let eps = sol.epsilon().unwrap_or(0.0);
    let n = sol.steps();
    let h = sol.grid.h();
    let rows: Vec<(f64, f64)> = (0..sol.paths)
        .into_par_iter()
        .map(|q| {
            let mut worst = 0.0_f64;
            let mut energy = 0.0;
            for i in 0..=n {
                let y = sol.y(i, q);
                if eps > 0.0 && !phi.is_free() {
                    worst = worst.max(norm2(&sub(y, &phi.prox(y, eps))));
                }
                if i < n {
                    energy += norm2(sol.u(i, q)) * h;
                }
            }
            (worst, energy)
        })
        .collect();
    let d: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Penetration { max_dist2: mean(&d), max_dist2_stderr: stderr(&d), energy: mean(&e), energy_stderr: stderr(&e) }
}

/// Slope of log E max dist² against log ε, asserted in [0.8, 1.3], and
/// energy max/min ≤ 2 across levels. Needs at least three levels.
pub fn penetration_rate_study(levels: &[(f64, Penetration)]) -> Result<EstimateReport> {
    if levels.len() < 3 {
        return Err(Error::config("the penetration study needs at least three ε-levels"));
    }
    let mut report = EstimateReport::new("penetration", 0.0);
    for (eps, s) in levels {
        report.term(format!("max_dist2_eps{eps}"), s.max_dist2, Some(s.max_dist2_stderr));
        report.term(format!("energy_eps{eps}"), s.energy, Some(s.energy_stderr));
    }
    if levels.iter().all(|(_, s)| s.max_dist2 <= 1e-24) {
        report.set_status(Status::Vacuous);
        report.note("constraint never active: all penetration distances vanish");
        return Ok(report);
    }
    if levels.iter().any(|(_, s)| s.max_dist2 <= 0.0) {
        report.fail();
        report.note("some level has zero penetration, the log-log fit is undefined");
        return Ok(report);
    }
    let pts: Vec<(f64, f64)> = levels.iter().map(|(e, s)| (e.ln(), s.max_dist2.ln())).collect();
    let slope = fit_slope(&pts);
    report.term("slope", slope, None);
    let mut w = Worst::default();
    w.observe((slope - 0.8).min(1.3 - slope), &[slope]);
    report.entry("slope_in_range", w, 0.0);
    let emax = levels.iter().map(|l| l.1.energy).fold(f64::NEG_INFINITY, f64::max);
    let emin = levels.iter().map(|l| l.1.energy).fold(f64::INFINITY, f64::min);
    let spread = if emin > 0.0 { emax / emin } else { f64::INFINITY };
    report.term("energy_spread", spread, None);
    let mut w = Worst::default();
    w.observe(2.0 - spread, &[emin, emax]);
    report.entry("energy_bounded", w, 0.0);
    Ok(report)
}

/// Least-squares slope through (x, y) points.
pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

/// Discrete data of the generic measure inequality
/// dD + ⟨Y, dK⟩ ≤ 1_{p≥2} dR + |Y| dN + |Y|² dV + (n_p / 2a)|Z|² dt,
/// where K collects the whole drift of the backward equation
/// Y_t = Y_T + ∫_t^T dK − ∫_t^T Z dB.
#[derive(Clone, Debug, PartialEq)]
pub struct AppendixBundle {
    pub name: String,
    pub weights: WeightProcess,
    pub paths: usize,
    pub dim: usize,
    pub noise_dim: usize,
    /// (N+1)·M·m, time-major
    pub y: Vec<f64>,
    /// N·M·(m·k)
    pub z: Vec<f64>,
    /// N·M·m
    pub dk: Vec<f64>,
    /// N·M each
    pub dd: Vec<f64>,
    pub dr: Vec<f64>,
    pub dn: Vec<f64>,
}

/// Evaluated sides of the conclusion, per path.
#[derive(Clone, Debug, PartialEq)]
pub struct AppendixSides {
    pub lhs_core: Vec<f64>,
    pub lhs_full: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl AppendixBundle {
    fn empty(name: &str, w: &WeightProcess, paths: usize, m: usize, k: usize) -> Self {
        let n = w.grid.steps;
        Self {
            name: name.into(),
            weights: w.clone(),
            paths,
            dim: m,
            noise_dim: k,
            y: vec![0.0; (n + 1) * paths * m],
            z: vec![0.0; n * paths * m * k],
            dk: vec![0.0; n * paths * m],
            dd: vec![0.0; n * paths],
            dr: vec![0.0; n * paths],
            dn: vec![0.0; n * paths],
        }
    }

    fn y_at(&self, i: usize, q: usize) -> &[f64] {
        let m = self.dim;
        &self.y[(i * self.paths + q) * m..(i * self.paths + q + 1) * m]
    }

    fn z_at(&self, i: usize, q: usize) -> &[f64] {
        let w = self.dim * self.noise_dim;
        &self.z[(i * self.paths + q) * w..(i * self.paths + q + 1) * w]
    }

    fn dk_at(&self, i: usize, q: usize) -> &[f64] {
        let m = self.dim;
        &self.dk[(i * self.paths + q) * m..(i * self.paths + q + 1) * m]
    }

    /// Y − u0 with D = ∫|phi(Y) − phi(u0)|, R = 0, N = ∫(|F(u0,0)| + 2|û|),
    /// and K = ∫F(Y,Z) − K_solution.
    pub fn prop1(sol: &DiscreteSolution, ens: &PathEnsemble, problem: &Problem, w: &WeightProcess) -> Result<Self> {
        check_shapes(sol, ens, w)?;
        let a = anchor_terms(sol, &problem.phi);
        let mut b = Self::base_from(sol, w, "prop1", &a.u0);
        let (n, m, h) = (sol.steps(), sol.dim, sol.grid.h());
        let zero = vec![0.0; m * sol.noise_dim];
        let slope = norm(&a.slope);
        let mut f = vec![0.0; m];
        let mut f0 = vec![0.0; m];
        for i in 0..n {
            for q in 0..sol.paths {
                let (x, y) = (ens.x(i, q), sol.y(i, q));
                problem.driver.eval_into(sol.grid.t(i), x, y, sol.z(i, q), &mut f);
                problem.driver.eval_into(sol.grid.t(i), x, &a.u0, &zero, &mut f0);
                let idx = i * sol.paths + q;
                for c in 0..m {
                    b.dk[idx * m + c] = f[c] * h - sol.dk(i, q)[c];
                }
                b.dd[idx] = (sol.phi_value(&problem.phi, y) - a.phi_u0).abs() * h;
                b.dn[idx] = (norm(&f0) + 2.0 * slope) * h;
            }
        }
        Ok(b)
    }

    /// Y − Ỹ with D = R = N = 0 and K = ∫(F(Y,Z) − F(Ỹ,Z̃)) − (K − K̃).
    pub fn uniqueness(a: &DiscreteSolution, b: &DiscreteSolution, ens: &PathEnsemble, problem: &Problem, w: &WeightProcess) -> Result<Self> {
        check_shapes(a, ens, w)?;
        check_shapes(b, ens, w)?;
        let mut out = Self::uniqueness_unchecked(a, b, w);
        let (n, m, h) = (a.steps(), a.dim, a.grid.h());
        let mut fa = vec![0.0; m];
        let mut fb = vec![0.0; m];
        for i in 0..n {
            for q in 0..a.paths {
                let x = ens.x(i, q);
                let t = a.grid.t(i);
                problem.driver.eval_into(t, x, a.y(i, q), a.z(i, q), &mut fa);
                problem.driver.eval_into(t, x, b.y(i, q), b.z(i, q), &mut fb);
                let idx = i * a.paths + q;
                for c in 0..m {
                    out.dk[idx * m + c] = (fa[c] - fb[c]) * h - (a.dk(i, q)[c] - b.dk(i, q)[c]);
                }
            }
        }
        Ok(out)
    }

    /// Y and Z differences only; enough to evaluate the conclusion.
    fn uniqueness_unchecked(a: &DiscreteSolution, b: &DiscreteSolution, w: &WeightProcess) -> Self {
        let (n, m, k, mp) = (a.steps(), a.dim, a.noise_dim, a.paths);
        let mut out = Self::empty("uniq", w, mp, m, k);
        for i in 0..=n {
            for q in 0..mp {
                let d = sub(a.y(i, q), b.y(i, q));
                out.y[(i * mp + q) * m..(i * mp + q + 1) * m].copy_from_slice(&d);
                if i < n {
                    let dz = sub(a.z(i, q), b.z(i, q));
                    out.z[(i * mp + q) * m * k..(i * mp + q + 1) * m * k].copy_from_slice(&dz);
                }
            }
        }
        out
    }

    /// Y − u0 with D = r0·TV(K), R = (c0 − phi(u0))t, N = ∫(|û| + |F(u0,0)|).
    pub fn tv(sol: &DiscreteSolution, ens: &PathEnsemble, problem: &Problem, w: &WeightProcess) -> Result<Self> {
        check_shapes(sol, ens, w)?;
        let ball = problem.phi.interior().ok_or_else(|| Error::config("convex.interior_radius is required for the tv instantiation"))?;
        let a = anchor_terms(sol, &problem.phi);
        let mut b = Self::prop1(sol, ens, problem, w)?;
        b.name = "tv".into();
        let (n, h) = (sol.steps(), sol.grid.h());
        let slope = norm(&a.slope);
        let gap = (ball.bound - a.phi_u0).max(0.0);
        for i in 0..n {
            for q in 0..sol.paths {
                let idx = i * sol.paths + q;
                b.dd[idx] = ball.radius * norm(sol.dk(i, q));
                b.dr[idx] = gap * h;
                // prop1 stored |F(u0,0)|h + 2|û|h
                b.dn[idx] -= slope * h;
            }
        }
        Ok(b)
    }

    fn base_from(sol: &DiscreteSolution, w: &WeightProcess, name: &str, u0: &[f64]) -> Self {
        let (n, m, k, mp) = (sol.steps(), sol.dim, sol.noise_dim, sol.paths);
        let mut b = Self::empty(name, w, mp, m, k);
        for i in 0..=n {
            for q in 0..mp {
                let d = sub(sol.y(i, q), u0);
                b.y[(i * mp + q) * m..(i * mp + q + 1) * m].copy_from_slice(&d);
                if i < n {
                    b.z[(i * mp + q) * m * k..(i * mp + q + 1) * m * k].copy_from_slice(sol.z(i, q));
                }
            }
        }
        b
    }

    /// Worst margin of the premise over all steps and paths, with a
    /// relative tolerance of `tol`.
    pub fn premise(&self, tol: f64) -> Worst {
        let w = &self.weights;
        let n = w.grid.steps;
        let h = w.grid.h();
        let coef = w.n_p / (2.0 * w.a);
        let on = if w.p >= 2.0 { 1.0 } else { 0.0 };
        let mut worst = Worst::default();
        for i in 0..n {
            let dv = w.increment(i);
            for q in 0..self.paths {
                let idx = i * self.paths + q;
                let y = self.y_at(i, q);
                let ny = norm(y);
                let lhs = self.dd[idx] + dot(y, self.dk_at(i, q));
                let rhs = on * self.dr[idx] + ny * self.dn[idx] + ny * ny * dv + coef * norm2(self.z_at(i, q)) * h;
                let scale = 1.0 + lhs.abs() + rhs.abs();
                worst.observe(rhs - lhs + tol * scale, &[q as f64, i as f64]);
            }
        }
        worst
    }

    /// Both sides of the conclusion at t = 0.
    pub fn sides(&self) -> AppendixSides {
        let w = &self.weights;
        let (n, h, p) = (w.grid.steps, w.grid.h(), w.p);
        let on = if p >= 2.0 { 1.0 } else { 0.0 };
        let rows: Vec<[f64; 3]> = (0..self.paths)
            .into_par_iter()
            .map(|q| {
                let mut sup = 0.0_f64;
                let (mut dq, mut zq, mut extra, mut rq, mut nq) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..=n {
                    let ny = norm(self.y_at(i, q));
                    sup = sup.max(weighted_pow(w.at(i), ny, p));
                    if i < n {
                        let idx = i * self.paths + q;
                        let e2 = (2.0 * w.at(i)).exp();
                        let z2 = norm2(self.z_at(i, q)) * h;
                        zq += e2 * z2;
                        dq += e2 * self.dd[idx];
                        rq += e2 * on * self.dr[idx];
                        nq += w.at(i).exp() * self.dn[idx];
                        if ny > 0.0 {
                            extra += (p * w.at(i)).exp() * ny.powf(p - 2.0) * (self.dd[idx] + z2);
                        }
                    }
                }
                let core = sup + dq.powf(p / 2.0) + zq.powf(p / 2.0);
                let term = weighted_pow(w.terminal(), norm(self.y_at(n, q)), p);
                [core, core + extra, term + rq.powf(p / 2.0) + nq.powf(p)]
            })
            .collect();
        AppendixSides {
            lhs_core: rows.iter().map(|r| r[0]).collect(),
            lhs_full: rows.iter().map(|r| r[1]).collect(),
            rhs: rows.iter().map(|r| r[2]).collect(),
        }
    }
}

/// Checks the premise first; only if it holds are both sides of the
/// conclusion evaluated. Reports the core and the full ratio.
pub fn check_appendix_estimate(bundle: &AppendixBundle, tol: f64) -> EstimateReport {
    let mut report = EstimateReport::new(format!("appendix_{}", bundle.name), tol);
    let premise = bundle.premise(tol);
    let ok = premise.margin >= 0.0;
    report.entry("premise", premise, 0.0);
    if !ok {
        report.set_status(Status::PremiseFailure);
        report.note("premise violated discretely; conclusion not evaluated");
        return report;
    }
    let s = bundle.sides();
    push_ratio(&mut report, &s.lhs_core, &s.rhs);
    if let Some(full) = ratio_summary(&s.lhs_full, &s.rhs, RATIO_FLOOR) {
        report.term("lhs_full", mean(&s.lhs_full), Some(stderr(&s.lhs_full)));
        report.term("ratio_full", full.ratio, None);
    }
    report
}

/// Empirical stand-in for the non-explicit constant: the a priori ratio,
/// never below 1.
pub fn empirical_constant(prop1: &EstimateReport) -> f64 {
    prop1.ratio.as_ref().map_or(1.0, |r| r.ratio.max(1.0))
}

/// R0 = |u0| + C^{1/p} e^{2‖V‖_T} (M + |u0| + |û0| T) from the bounded-data
/// constants, with weights at a = 2.
pub fn a_priori_radius(problem: &Problem, w: &WeightProcess, constant: f64) -> Result<f64> {
    let a5 = problem
        .driver
        .a5
        .ok_or_else(|| Error::config("driver.a5 (bounded-data constants M, L) is required to compute R0"))?;
    let anchor = problem.phi.anchor();
    let u0 = norm(&anchor.point);
    let slope = norm(&anchor.slope);
    Ok(u0 + constant.powf(1.0 / w.p) * (2.0 * w.sup_norm()).exp() * (a5.m_bound + u0 + slope * problem.horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForwardSpec, TerminalKind, TerminalSpec};
    use crate::paths::generate;
    use crate::solver::{solve_limit, solve_penalized};

    fn ens(n: usize, m: usize, seed: u64) -> PathEnsemble {
        generate(TimeGrid::new(1.0, n).unwrap(), &ForwardSpec::identity(1), m, 1, seed).unwrap()
    }

    fn problem(phi: ConvexSpec, driver: DriverSpec, terminal: TerminalSpec) -> Problem {
        Problem::new(phi, driver, terminal, ForwardSpec::identity(1), 1.0).unwrap()
    }

    #[test]
    fn constant_coefficient_weights_are_linear() {
        let d = DriverSpec::linear(-0.3, 0.0, 0.7, 1, 1).unwrap();
        let g = TimeGrid::new(1.0, 64).unwrap();
        let w = WeightProcess::new(&d, g, 2.0, 2.0).unwrap();
        let rate = -0.3 + 2.0 * 0.49 / 2.0;
        assert_eq!(w.at(0), 0.0);
        for i in 0..=64 {
            assert!((w.at(i) - rate * g.t(i)).abs() < 1e-14);
        }
        let w3 = WeightProcess::new(&d, g, 2.0, 1.5).unwrap();
        assert_eq!(w3.n_p, 0.5);
    }

    #[test]
    fn theta_of_gaussian_terminal() {
        let p = problem(ConvexSpec::quadratic(1.0, 1).unwrap(), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Identity, 1));
        let e = ens(16, 20000, 7);
        let s = solve_limit(&p, &e, &SchemeConfig::default()).unwrap();
        let w = WeightProcess::new(&p.driver, e.grid, 2.0, 2.0).unwrap();
        let th = compute_theta(&s, &e, &p, &w).unwrap();
        for q in 0..100 {
            assert_eq!(th[q], s.y(16, q)[0].abs());
        }
        let m2 = mean(&th.iter().map(|t| t * t).collect::<Vec<_>>());
        assert!((m2 - 1.0).abs() < 0.05, "{m2}");
    }

    #[test]
    fn stationary_solution_has_zero_lhs() {
        let t = TerminalSpec::new(TerminalKind::Constant, 1).with_scale(0.0);
        let p = problem(ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap(), DriverSpec::zero(1, 1), t);
        let e = ens(8, 500, 1);
        let s = solve_penalized(&p, &e, &SchemeConfig::default()).unwrap();
        let w = WeightProcess::new(&p.driver, e.grid, 2.0, 2.0).unwrap();
        let r = check_prop1(&s, &e, &p, &w).unwrap();
        assert_eq!(r.lhs, Some(0.0));
        assert!(r.pass);
    }

    #[test]
    fn additive_shift_gives_unit_ratio() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Sin, 1));
        let e = ens(16, 2000, 2);
        let a = solve_penalized(&p, &e, &SchemeConfig::default()).unwrap();
        let mut q = p.clone();
        q.terminal.shift[0] = 0.3;
        let b = solve_penalized(&q, &e, &SchemeConfig::default()).unwrap();
        let w = WeightProcess::new(&p.driver, e.grid, 2.0, 2.0).unwrap();
        let r = check_uniqueness_stability(&a, &b, &w).unwrap();
        let ratio = r.ratio.unwrap().ratio;
        assert!((ratio - 1.0).abs() < 1e-9, "{ratio}");
        let z = check_uniqueness_stability(&a, &a, &w).unwrap();
        assert_eq!(z.lhs, Some(0.0));
        assert!(z.pass);
    }

    #[test]
    fn appendix_uniqueness_reproduces_direct_numbers() {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        let t = TerminalSpec::new(TerminalKind::Identity, 1).with_scale(1.5).with_clip(-1.0, 1.0);
        let p = problem(phi, DriverSpec::linear(-1.0, 0.5, 0.2, 1, 1).unwrap(), t);
        let e = ens(16, 4000, 3);
        let cfg = SchemeConfig::default().with_epsilon(0.02);
        let a = solve_penalized(&p, &e, &cfg).unwrap();
        let mut q = p.clone();
        q.terminal.shift[0] = -0.05;
        let b = solve_penalized(&q, &e, &cfg).unwrap();
        let w = WeightProcess::for_scheme(&p.driver, e.grid, &cfg).unwrap();
        let direct = check_uniqueness_stability(&a, &b, &w).unwrap();
        let bundle = AppendixBundle::uniqueness(&a, &b, &e, &p, &w).unwrap();
        let rep = check_appendix_estimate(&bundle, 1e-9);
        assert!(rep.pass, "{}", rep.to_json());
        assert_eq!(rep.lhs, direct.lhs);
        assert_eq!(rep.rhs, direct.rhs);
    }

    #[test]
    fn appendix_prop1_and_tv_premises_hold() {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        let t = TerminalSpec::new(TerminalKind::Tanh, 1).with_scale(2.0).with_clip(-1.0, 1.0);
        let p = problem(phi, DriverSpec::linear(-0.5, 1.0, 0.3, 1, 1).unwrap(), t);
        let e = ens(16, 4000, 4);
        let cfg = SchemeConfig::default();
        let w = WeightProcess::for_scheme(&p.driver, e.grid, &cfg).unwrap();
        for sol in [solve_penalized(&p, &e, &cfg.with_epsilon(0.05)).unwrap(), solve_limit(&p, &e, &cfg).unwrap()] {
            for b in [AppendixBundle::prop1(&sol, &e, &p, &w).unwrap(), AppendixBundle::tv(&sol, &e, &p, &w).unwrap()] {
                let rep = check_appendix_estimate(&b, 1e-9);
                assert!(rep.pass, "{}", rep.to_json());
                assert!(rep.ratio.is_some());
            }
        }
    }

    #[test]
    fn premise_failure_is_reported() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Identity, 1));
        let e = ens(8, 200, 5);
        let s = solve_limit(&p, &e, &SchemeConfig::default()).unwrap();
        let w = WeightProcess::flat(e.grid, 2.0, 2.0);
        let mut b = AppendixBundle::prop1(&s, &e, &p, &w).unwrap();
        b.dd.iter_mut().for_each(|d| *d = 1.0);
        let rep = check_appendix_estimate(&b, 1e-9);
        assert_eq!(rep.status, Status::PremiseFailure);
        assert!(rep.lhs.is_none());
    }

    #[test]
    fn appendix_rhs_is_p_homogeneous() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Sin, 1));
        let e = ens(8, 500, 6);
        let s = solve_limit(&p, &e, &SchemeConfig::default()).unwrap();
        let w = WeightProcess::flat(e.grid, 2.0, 3.0);
        let mut b = AppendixBundle::prop1(&s, &e, &p, &w).unwrap();
        b.dr.iter_mut().for_each(|r| *r = 0.01);
        b.dn.iter_mut().for_each(|r| *r = 0.02);
        let before = mean(&b.sides().rhs);
        let c = 1.7;
        b.y.iter_mut().for_each(|v| *v *= c);
        b.dr.iter_mut().for_each(|v| *v *= c * c);
        b.dn.iter_mut().for_each(|v| *v *= c);
        let after = mean(&b.sides().rhs);
        assert!((after / before - c.powi(3)).abs() < 1e-10);
    }

    #[test]
    fn tv_lhs_scales_with_radius() {
        let ball = ConvexSpec::new(crate::convex::ConvexKind::Ball { center: vec![0.0], radius: 1.0 }).unwrap();
        let t = TerminalSpec::new(TerminalKind::Identity, 1).with_scale(2.0);
        let p = problem(ball.clone().with_interior(0.5, 0.0).unwrap(), DriverSpec::zero(1, 1), t.clone());
        let q = problem(ball.with_interior(1.0, 0.0).unwrap(), DriverSpec::zero(1, 1), t);
        let e = ens(8, 1000, 8);
        let s = solve_limit(&p, &e, &SchemeConfig::default()).unwrap();
        let w = WeightProcess::flat(e.grid, 2.0, 2.0);
        let a = check_tv_bound(&s, &e, &p, &w).unwrap();
        let b = check_tv_bound(&s, &e, &q, &w).unwrap();
        assert!(a.lhs.unwrap() > 0.0);
        assert!((b.lhs.unwrap() / a.lhs.unwrap() - 2.0).abs() < 1e-12);
        let no_ball = problem(ConvexSpec::zero(1).without_interior(), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Identity, 1));
        assert!(matches!(check_tv_bound(&s, &e, &no_ball, &w), Err(Error::Config(_))));
    }

    #[test]
    fn penetration_vacuous_for_free_problem() {
        let p = problem(ConvexSpec::zero(1), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Identity, 1));
        let e = ens(8, 500, 9);
        let levels: Vec<(f64, Penetration)> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&eps| (eps, penetration_stats(&solve_penalized(&p, &e, &SchemeConfig::default().with_epsilon(eps)).unwrap(), &p.phi)))
            .collect();
        let r = penetration_rate_study(&levels).unwrap();
        assert_eq!(r.status, Status::Vacuous);
        assert!(!r.pass);
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [0.1_f64, 0.05, 0.025].iter().map(|e| (e.ln(), (3.0 * e).ln())).collect();
        assert!((fit_slope(&pts) - 1.0).abs() < 1e-12);
    }
}

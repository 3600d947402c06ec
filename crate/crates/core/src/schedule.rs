//! Continuation in ε, in the truncation level n and in the grid size, on a
//! single shared path ensemble.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimates::{self, empirical_constant, penetration_stats, Penetration, WeightProcess};
use crate::model::{f_sharp, Problem, TerminalCutoff, Truncation};
use crate::paths::PathEnsemble;
use crate::report::{mean, stderr, EstimateReport, Status, Worst};
use crate::solver::{solve_penalized, solve_with, subdiff_measure_check, DiscreteSolution, Mode, SchemeConfig, TestPath};
use crate::vecops::{dot, norm, norm2, sub};

/// A level aborts when E sup|Y| exceeds this multiple of the a priori bound.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
const SUBDIFF_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub label: String,
    /// ε, n or N; `None` for n = ∞ and for the limit solve.
    pub parameter: Option<f64>,
    pub y0_mean: f64,
    pub y0_stderr: f64,
    pub e_sup_y: f64,
    pub e_z_energy: f64,
    pub e_tv: f64,
    pub e_tv_stderr: f64,
    /// E sup_i |Y_i − Y'_i|² against the previous level.
    pub gap: Option<f64>,
    pub gap_stderr: Option<f64>,
    /// E Σ ⟨Y_i, ΔK_i⟩
    pub stieltjes: f64,
    pub subdiff_pass: Option<bool>,
    pub penetration: Option<Penetration>,
    /// P(|η| + |phi(η)| > n)
    pub tail_mass: Option<f64>,
    /// ∫ 1{ζ ≥ n} F#_{R0} dt
    pub driver_tail: Option<f64>,
    pub identical_to_reference: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationReport {
    pub kind: String,
    pub levels: Vec<LevelRecord>,
    pub limit: Option<LevelRecord>,
    /// Log-log slope of the consecutive gaps against ε + δ (or n, or N).
    pub slope: Option<f64>,
    pub a_priori_bound: Option<f64>,
    pub halted: Option<String>,
    pub checks: EstimateReport,
    #[serde(skip)]
    pub final_solution: Option<DiscreteSolution>,
    #[serde(skip)]
    pub previous_solution: Option<DiscreteSolution>,
    #[serde(skip)]
    pub limit_solution: Option<DiscreteSolution>,
}

impl ContinuationReport {
    fn new(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            levels: Vec::new(),
            limit: None,
            slope: None,
            a_priori_bound: None,
            halted: None,
            checks: EstimateReport::new(format!("{kind}_schedule"), 0.0),
            final_solution: None,
            previous_solution: None,
            limit_solution: None,
        }
    }

    /// Tidy CSV `level, parameter, gap, slope, E_TV, Y0_mean, Y0_stderr`
    /// with a trailing slope row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["level", "parameter", "gap", "slope", "E_TV", "Y0_mean", "Y0_stderr"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in self.levels.iter().chain(self.limit.iter()) {
            w.write_record([
                r.label.clone(),
                opt(r.parameter),
                opt(r.gap),
                String::new(),
                r.e_tv.to_string(),
                r.y0_mean.to_string(),
                r.y0_stderr.to_string(),
            ])?;
        }
        w.write_record(["slope", "", "", &opt(self.slope), "", "", ""])?;
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// E sup_i |Y^a_{i} − Y^b_{s·i}|² over the coarse grid of `a`.
pub fn sup_gap(a: &DiscreteSolution, b: &DiscreteSolution, stride: usize) -> (f64, f64) {
    let g: Vec<f64> = (0..a.paths)
        .into_par_iter()
        .map(|p| (0..=a.steps()).map(|i| norm2(&sub(a.y(i, p), b.y(stride * i, p)))).fold(0.0, f64::max))
        .collect();
    (mean(&g), stderr(&g))
}

fn record(sol: &DiscreteSolution, level: usize, label: String, parameter: Option<f64>) -> LevelRecord {
    let n = sol.steps();
    let h = sol.grid.h();
    let rows: Vec<[f64; 4]> = (0..sol.paths)
        .into_par_iter()
        .map(|p| {
            let sup = (0..=n).map(|i| norm(sol.y(i, p))).fold(0.0, f64::max);
            let z: f64 = (0..n).map(|i| norm2(sol.z(i, p)) * h).sum();
            let st: f64 = (0..n).map(|i| dot(sol.y(i, p), sol.dk(i, p))).sum();
            [sup, z, sol.total_variation(p), st]
        })
        .collect();
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let tv = col(2);
    LevelRecord {
        level,
        label,
        parameter,
        y0_mean: mean(&sol.y0_values(0)),
        y0_stderr: sol.y0_stderr(0),
        e_sup_y: mean(&col(0)),
        e_z_energy: mean(&col(1)),
        e_tv: mean(&tv),
        e_tv_stderr: stderr(&tv),
        gap: None,
        gap_stderr: None,
        stieltjes: mean(&col(3)),
        subdiff_pass: None,
        penetration: None,
        tail_mass: None,
        driver_tail: None,
        identical_to_reference: None,
    }
}

fn subdiff_ok(sol: &DiscreteSolution, problem: &Problem) -> bool {
    let u0 = problem.phi.anchor().point.clone();
    subdiff_measure_check(sol, &problem.phi, &[TestPath::Constant(u0), TestPath::SelfPath], SUBDIFF_TOL).pass
}

/// |u0| + C^{1/p} (E Θ^p)^{1/p} with C the empirical a priori ratio of `sol`.
fn a_priori_bound(sol: &DiscreteSolution, ens: &PathEnsemble, problem: &Problem, cfg: &SchemeConfig) -> Result<f64> {
    let w = WeightProcess::for_scheme(&problem.driver, ens.grid, cfg)?;
    let c = empirical_constant(&estimates::check_prop1(sol, ens, problem, &w)?);
    let theta = estimates::compute_theta(sol, ens, problem, &w)?;
    let tp = mean(&theta.iter().map(|t| t.powf(cfg.p)).collect::<Vec<_>>());
    Ok(norm(&problem.phi.anchor().point) + (c * tp).powf(1.0 / cfg.p))
}

fn log_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let s = estimates::fit_slope(&pts);
    s.is_finite().then_some(s)
}

/// ε_j = eps0·2^{−j}, j = 0..levels−1.
pub fn run_epsilon_schedule(problem: &Problem, ens: &PathEnsemble, cfg: &SchemeConfig, eps0: f64, levels: usize) -> Result<ContinuationReport> {
    if levels < 2 {
        return Err(Error::config("study.levels must be at least 2"));
    }
    let eps: Vec<f64> = (0..levels).map(|j| eps0 * 0.5_f64.powi(j as i32)).collect();
    run_epsilon_schedule_with(problem, ens, cfg, &eps)
}

/// Penalized solves at the given ε values on one ensemble, then the limit
/// solve and the comparisons between the last levels and the limit.
pub fn run_epsilon_schedule_with(problem: &Problem, ens: &PathEnsemble, cfg: &SchemeConfig, eps: &[f64]) -> Result<ContinuationReport> {
    if eps.is_empty() {
        return Err(Error::config("study: the ε list is empty"));
    }
    let mut rep = ContinuationReport::new("epsilon");
    let mut prev: Option<DiscreteSolution> = None;
    let mut bound = None;
    let mut slope_pts = Vec::new();
    for (j, &e) in eps.iter().enumerate() {
        let sol = match solve_penalized(problem, ens, &cfg.with_epsilon(e)) {
            Ok(s) => s,
            Err(err @ Error::NumericalAbort { .. }) => {
                rep.halted = Some(format!("ε = {e}: {err}"));
                break;
            }
            Err(err) => return Err(err),
        };
        if bound.is_none() {
            bound = Some(a_priori_bound(&sol, ens, problem, cfg)?);
            rep.a_priori_bound = bound;
        }
        let mut r = record(&sol, j, format!("eps={e}"), Some(e));
        r.subdiff_pass = Some(subdiff_ok(&sol, problem));
        r.penetration = Some(penetration_stats(&sol, &problem.phi));
        if let Some(b) = bound {
            if r.e_sup_y > DIVERGENCE_FACTOR * b {
                rep.halted = Some(format!("ε = {e}: E sup|Y| = {} exceeds {DIVERGENCE_FACTOR}× the a priori bound {b}", r.e_sup_y));
                rep.levels.push(r);
                break;
            }
        }
        if let Some(p) = &prev {
            let (g, s) = sup_gap(p, &sol, 1);
            r.gap = Some(g);
            r.gap_stderr = Some(s);
            slope_pts.push((eps[j - 1] + e, g));
        }
        rep.levels.push(r);
        rep.previous_solution = prev.take();
        prev = Some(sol);
    }
    rep.final_solution = prev;
    rep.slope = log_slope(&slope_pts);
    if rep.halted.is_none() {
        let lim = crate::solver::solve_limit(problem, ens, cfg)?;
        let mut r = record(&lim, eps.len(), "limit".into(), None);
        r.subdiff_pass = Some(subdiff_ok(&lim, problem));
        if let Some(f) = &rep.final_solution {
            let (g, s) = sup_gap(f, &lim, 1);
            r.gap = Some(g);
            r.gap_stderr = Some(s);
        }
        rep.limit = Some(r);
        rep.limit_solution = Some(lim);
    }
    epsilon_checks(&mut rep);
    Ok(rep)
}

fn epsilon_checks(rep: &mut ContinuationReport) {
    let mut checks = EstimateReport::new("epsilon_schedule", 0.0);
    if let Some(h) = &rep.halted {
        checks.set_status(Status::Fail);
        checks.note(format!("halted: {h}"));
    }
    let gaps: Vec<(f64, f64)> = rep.levels.iter().filter_map(|r| r.gap.zip(r.gap_stderr)).collect();
    if gaps.len() >= 2 {
        let mut w = Worst::default();
        for (i, pair) in gaps.windows(2).enumerate() {
            w.observe(pair[0].0 - pair[1].0, &[i as f64 + 1.0]);
        }
        checks.entry("gaps_decreasing", w, 0.0);
    }
    if gaps.iter().all(|g| g.0 == 0.0) && !gaps.is_empty() {
        checks.note("all gaps vanish: penalization inert, slope undefined");
    }
    // E TV(K) ≤ liminf E TV(K^ε), read on the returned finest level against
    // the running minimum of the last two levels.
    if rep.levels.len() >= 2 {
        let tail = &rep.levels[rep.levels.len() - 2..];
        let fine = &tail[1];
        let run_min = tail.iter().map(|r| r.e_tv).fold(f64::INFINITY, f64::min);
        let se = tail.iter().map(|r| r.e_tv_stderr).fold(0.0, f64::max);
        let mut w = Worst::default();
        w.observe(run_min + 2.0 * se - fine.e_tv, &[fine.e_tv, run_min]);
        checks.entry("tv_liminf", w, 0.0);
    }
    if let (Some(last), Some(lim)) = (rep.levels.last(), &rep.limit) {
        let diff = (last.y0_mean - lim.y0_mean).abs();
        let allow = 3.0 * last.y0_stderr.max(lim.y0_stderr) + 0.01;
        checks.term("y0_gap_to_limit", diff, None);
        checks.term("y0_gap_allowance", allow, None);
        let mut w = Worst::default();
        w.observe(allow - diff, &[diff]);
        checks.entry("limit_agreement", w, 0.0);

        let tail = &rep.levels[rep.levels.len().saturating_sub(2)..];
        let run_min = tail.iter().map(|r| r.e_tv).fold(f64::INFINITY, f64::min);
        checks.term("tv_limit_minus_running_min", lim.e_tv - run_min, None);

        // Σ⟨Y^ε, ΔK^ε⟩ → Σ⟨Y, ΔK⟩ along the last two levels.
        if tail.len() == 2 {
            let d_prev = (tail[0].stieltjes - lim.stieltjes).abs();
            let d_last = (tail[1].stieltjes - lim.stieltjes).abs();
            checks.term("stieltjes_gap_prev", d_prev, None);
            checks.term("stieltjes_gap_last", d_last, None);
            let slack = 2.0 * tail[1].e_tv_stderr * (1.0 + tail[1].e_sup_y);
            let mut w = Worst::default();
            w.observe(d_prev + slack - d_last, &[d_prev, d_last]);
            checks.entry("stieltjes_limit", w, 0.0);
        }
        if rep.levels.iter().all(|r| r.subdiff_pass == Some(true)) {
            let mut w = Worst::default();
            w.observe(if lim.subdiff_pass == Some(true) { 0.0 } else { -1.0 }, &[]);
            checks.entry("subdiff_limit", w, 0.0);
        }
    }
    if let Some(s) = rep.slope {
        checks.term("gap_slope", s, None);
    }
    rep.checks = checks;
}

/// Finest-level solution with the schedule's evidence.
#[derive(Clone, Debug)]
pub struct Extracted {
    pub solution: DiscreteSolution,
    pub evidence: EstimateReport,
}

pub fn extract_solution(report: ContinuationReport) -> Result<Extracted> {
    if let Some(h) = &report.halted {
        return Err(Error::NumericalAbort { step: 0, detail: format!("schedule halted: {h}") });
    }
    let solution = report.final_solution.ok_or_else(|| Error::input("schedule produced no solution"))?;
    let mut evidence = report.checks;
    if let Some(s) = report.slope {
        evidence.note(format!("gap slope {s}"));
    }
    for r in &report.levels {
        if let Some(g) = r.gap {
            evidence.term(format!("gap_{}", r.label), g, r.gap_stderr);
        }
    }
    Ok(Extracted { solution, evidence })
}

/// Truncation level n, with n = ∞ leaving the problem untouched.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationLevel {
    pub n: f64,
    pub r0: f64,
    /// sup_t ζ_t = sup_t (ℓ(t) + F#_{R0}(t))
    pub zeta: f64,
}

impl TruncationLevel {
    /// η^n, F^n and (when `gate` is set) the ζ gate applied to `problem`.
    pub fn apply(&self, problem: &Problem, gate: bool) -> Problem {
        if self.n.is_infinite() {
            return problem.clone();
        }
        let u0 = problem.phi.anchor().point.clone();
        let mut out = problem.clone();
        out.terminal = out.terminal.with_cutoff(Some(TerminalCutoff { level: self.n, u0: u0.clone(), phi: problem.phi.clone() }));
        out.driver = out.driver.with_truncation(Some(Truncation { level: self.n, u0, zeta_gate: gate.then_some(self.zeta) }));
        out
    }
}

/// R0 from the bounded-data constants (empirical constant from a pilot
/// solve on `ens`) or the supplied value.
pub fn resolve_r0(problem: &Problem, ens: &PathEnsemble, cfg: &SchemeConfig, supplied: Option<f64>) -> Result<f64> {
    if let Some(r) = supplied {
        return Ok(r);
    }
    if problem.driver.a5.is_none() {
        return Err(Error::config("truncation needs R0: supply study.r0 or the bounded-data assumption driver.a5"));
    }
    let cfg2 = SchemeConfig { a: 2.0, ..*cfg };
    let pilot = solve_with(problem, ens, &cfg2, Mode::Limit)?;
    let w = WeightProcess::for_scheme(&problem.driver, ens.grid, &cfg2)?;
    let c = empirical_constant(&estimates::check_prop1(&pilot, ens, problem, &w)?);
    estimates::a_priori_radius(problem, &w, c)
}

/// Solves at each n (gaps between consecutive n and bitwise comparison
/// with the untruncated run).
pub fn run_truncation_schedule(
    problem: &Problem,
    ens: &PathEnsemble,
    cfg: &SchemeConfig,
    mode: Mode,
    n_values: &[f64],
    r0: Option<f64>,
    gate: bool,
) -> Result<ContinuationReport> {
    if n_values.is_empty() {
        return Err(Error::config("study.n_values must not be empty"));
    }
    if n_values.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::config("study.n_values must be positive (inf for no truncation)"));
    }
    let r0 = resolve_r0(problem, ens, cfg, r0)?;
    let grid = ens.grid;
    let zeta_t: Vec<f64> = (0..grid.steps).map(|i| {
        let t = grid.t(i);
        problem.driver.ell(t) + f_sharp(&problem.driver, r0, t).value
    }).collect();
    let fsharp_t: Vec<f64> = (0..grid.steps).map(|i| f_sharp(&problem.driver, r0, grid.t(i)).value).collect();
    let zeta = zeta_t.iter().cloned().fold(0.0, f64::max);
    let reference = solve_with(problem, ens, cfg, mode)?;
    let etas: Vec<f64> = (0..ens.paths)
        .map(|p| {
            let eta = reference.y(grid.steps, p);
            norm(eta) + problem.phi.value(eta).abs()
        })
        .collect();

    let mut rep = ContinuationReport::new("truncation");
    rep.a_priori_bound = Some(r0);
    rep.checks.term("r0", r0, None);
    rep.checks.term("zeta", zeta, None);
    let mut prev: Option<DiscreteSolution> = None;
    for (j, &n) in n_values.iter().enumerate() {
        let lvl = TruncationLevel { n, r0, zeta };
        let sol = solve_with(&lvl.apply(problem, gate), ens, cfg, mode)?;
        let label = if n.is_infinite() { "n=inf".to_string() } else { format!("n={n}") };
        let mut r = record(&sol, j, label, n.is_finite().then_some(n));
        r.tail_mass = Some(etas.iter().filter(|v| !(**v <= n)).count() as f64 / ens.paths as f64);
        r.driver_tail = Some(zeta_t.iter().zip(&fsharp_t).filter(|(z, _)| **z >= n).map(|(_, f)| f * grid.h()).sum());
        r.identical_to_reference = Some(sol == reference);
        if let Some(p) = &prev {
            let (g, s) = sup_gap(p, &sol, 1);
            r.gap = Some(g);
            r.gap_stderr = Some(s);
        }
        rep.levels.push(r);
        rep.previous_solution = prev.take();
        prev = Some(sol);
    }
    rep.final_solution = prev;
    let pts: Vec<(f64, f64)> = rep.levels.iter().filter_map(|r| r.parameter.zip(r.gap)).collect();
    rep.slope = log_slope(&pts);
    let gaps: Vec<f64> = rep.levels.iter().filter_map(|r| r.gap).collect();
    if gaps.len() >= 2 {
        let mut w = Worst::default();
        for (i, g) in gaps.windows(2).enumerate() {
            w.observe(g[0] - g[1], &[i as f64 + 1.0]);
        }
        rep.checks.entry("gaps_nonincreasing", w, 0.0);
    }
    Ok(rep)
}

/// Solves on the ensemble and on `levels − 1` successive bridge
/// refinements; gaps compare Y on the coarser grid's times.
pub fn run_refinement_schedule(problem: &Problem, ens: &PathEnsemble, cfg: &SchemeConfig, mode: Mode, levels: usize) -> Result<ContinuationReport> {
    if levels < 2 {
        return Err(Error::config("study.levels must be at least 2"));
    }
    let mut rep = ContinuationReport::new("refinement");
    let mut cur = ens.clone();
    let mut prev: Option<DiscreteSolution> = None;
    for j in 0..levels {
        if j > 0 {
            cur = cur.refine(&problem.forward)?;
        }
        let sol = solve_with(problem, &cur, cfg, mode)?;
        let steps = cur.grid.steps;
        let mut r = record(&sol, j, format!("N={steps}"), Some(steps as f64));
        if let Some(p) = &prev {
            let (g, s) = sup_gap(p, &sol, 2);
            r.gap = Some(g);
            r.gap_stderr = Some(s);
        }
        rep.levels.push(r);
        rep.previous_solution = prev.take();
        prev = Some(sol);
    }
    rep.final_solution = prev;
    let pts: Vec<(f64, f64)> = rep.levels.iter().filter_map(|r| r.parameter.map(|n| 1.0 / n).zip(r.gap)).collect();
    rep.slope = log_slope(&pts);
    let gaps: Vec<f64> = rep.levels.iter().filter_map(|r| r.gap).collect();
    if gaps.len() >= 2 {
        let mut w = Worst::default();
        for (i, g) in gaps.windows(2).enumerate() {
            w.observe(g[0] - g[1], &[i as f64 + 1.0]);
        }
        rep.checks.entry("self_gaps_shrinking", w, 0.0);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::ConvexSpec;
    use crate::model::{A5Params, DriverSpec, ForwardSpec, TerminalKind, TerminalSpec};
    use crate::paths::{generate, TimeGrid};

    fn ens(n: usize, m: usize, seed: u64) -> PathEnsemble {
        generate(TimeGrid::new(1.0, n).unwrap(), &ForwardSpec::identity(1), m, 1, seed).unwrap()
    }

    fn boxed(driver: DriverSpec, terminal: TerminalSpec) -> Problem {
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        Problem::new(phi, driver, terminal, ForwardSpec::identity(1), 1.0).unwrap()
    }

    #[test]
    fn free_problem_has_zero_gaps() {
        let p = Problem::new(ConvexSpec::zero(1), DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Sin, 1), ForwardSpec::identity(1), 1.0).unwrap();
        let e = ens(8, 1000, 1);
        let r = run_epsilon_schedule(&p, &e, &SchemeConfig::default(), 0.1, 3).unwrap();
        assert!(r.levels.iter().skip(1).all(|l| l.gap == Some(0.0)));
        assert!(r.slope.is_none());
    }

    #[test]
    fn identical_levels_give_zero_gap() {
        let p = boxed(DriverSpec::linear(0.0, 1.0, 0.0, 1, 1).unwrap(), TerminalSpec::new(TerminalKind::Tanh, 1).with_scale(2.0).with_clip(-1.0, 1.0));
        let e = ens(8, 1000, 2);
        let r = run_epsilon_schedule_with(&p, &e, &SchemeConfig::default(), &[0.05, 0.05]).unwrap();
        assert_eq!(r.levels[1].gap, Some(0.0));
        assert!(r.levels[0].e_tv > 0.0);
    }

    #[test]
    fn single_level_extracts_its_solution() {
        let p = boxed(DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Sin, 1));
        let e = ens(8, 500, 3);
        let r = run_epsilon_schedule_with(&p, &e, &SchemeConfig::default(), &[0.1]).unwrap();
        let direct = solve_penalized(&p, &e, &SchemeConfig::default().with_epsilon(0.1)).unwrap();
        assert_eq!(extract_solution(r).unwrap().solution, direct);
    }

    #[test]
    fn inert_truncation_is_bitwise_identical() {
        let t = TerminalSpec::new(TerminalKind::Sin, 1).with_scale(0.8);
        let p = boxed(DriverSpec::linear(-1.0, 0.3, 0.0, 1, 1).unwrap().with_a5(A5Params { m_bound: 1.1, l_bound: 0.0 }), t);
        let e = ens(8, 1000, 4);
        let r = run_truncation_schedule(&p, &e, &SchemeConfig::default(), Mode::Limit, &[4.0, f64::INFINITY], None, false).unwrap();
        assert!(r.levels.iter().all(|l| l.identical_to_reference == Some(true)));
        assert_eq!(r.levels[1].gap, Some(0.0));
    }

    #[test]
    fn truncation_without_radius_names_the_assumption() {
        let p = boxed(DriverSpec::zero(1, 1), TerminalSpec::new(TerminalKind::Sin, 1));
        let e = ens(4, 100, 5);
        let err = run_truncation_schedule(&p, &e, &SchemeConfig::default(), Mode::Limit, &[2.0], None, false).unwrap_err();
        assert!(err.to_string().contains("driver.a5"), "{err}");
    }

    #[test]
    fn unbounded_terminal_gaps_shrink_with_n() {
        let p = Problem::new(
            ConvexSpec::zero(1),
            DriverSpec::zero(1, 1),
            TerminalSpec::new(TerminalKind::Identity, 1).with_scale(2.0),
            ForwardSpec::identity(1),
            1.0,
        )
        .unwrap();
        let e = ens(8, 4000, 6);
        let r = run_truncation_schedule(&p, &e, &SchemeConfig::default(), Mode::Limit, &[2.0, 4.0, 8.0, 16.0], Some(1.0), false).unwrap();
        assert!(r.checks.pass, "{}", r.to_json());
        let masses: Vec<f64> = r.levels.iter().map(|l| l.tail_mass.unwrap()).collect();
        assert!(masses.windows(2).all(|w| w[0] >= w[1]));
    }
}

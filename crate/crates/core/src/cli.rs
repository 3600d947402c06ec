//! Command-line front end: `solve`, `check <name>`, `study <name>` and
//! `oracle-compare`, all driven by one TOML config.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical abort,
//! 3 property failure. Every failure also leaves an `error.json` in the
//! output directory.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{config_hash, Resolved, RunConfig};
use crate::convex::convex_property_report;
use crate::error::{Error, Result};
use crate::estimates::{
    check_appendix_estimate, check_prop1, penetration_rate_study, refinement_study, uniqueness_sweep, AppendixBundle, Penetration, RatioCheck,
    WeightProcess,
};
use crate::model::{check_assumptions, SamplingBudget};
use crate::oracle::{compare_with_tree, TreeSpec};
use crate::paths::PathEnsemble;
use crate::report::{mean, EstimateReport, Status};
use crate::schedule::{run_epsilon_schedule_with, run_refinement_schedule, run_truncation_schedule, ContinuationReport};
use crate::solver::{solve_with, subdiff_measure_check, DiscreteSolution, TestPath};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_PROPERTY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bsvi", version, about = "Penalized solver and estimate checks for backward stochastic variational inequalities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration (a previous run's manifest.toml works too).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism). Results do not
    /// depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also write the Brownian increments and forward states to paths.csv.
    #[arg(long, global = true)]
    pub dump_paths: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve once in the configured mode and write the solution.
    Solve,
    /// Run one named property check.
    Check { name: CheckName },
    /// Run a continuation study.
    Study { name: StudyName },
    /// Compare Y_0 with the binomial tree (m = k = 1).
    OracleCompare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckName {
    Yosida,
    Assumptions,
    Prop1,
    Uniq,
    Tv,
    Penetration,
    Appendix,
    Subdiff,
}

impl CheckName {
    fn from_config(name: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(name, false).ok()
    }

    pub fn label(self) -> &'static str {
        match self {
            CheckName::Yosida => "yosida",
            CheckName::Assumptions => "assumptions",
            CheckName::Prop1 => "prop1",
            CheckName::Uniq => "uniq",
            CheckName::Tv => "tv",
            CheckName::Penetration => "penetration",
            CheckName::Appendix => "appendix",
            CheckName::Subdiff => "subdiff",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StudyName {
    Epsilon,
    Truncation,
    Refinement,
}

impl StudyName {
    fn label(self) -> &'static str {
        match self {
            StudyName::Epsilon => "epsilon",
            StudyName::Truncation => "truncation",
            StudyName::Refinement => "refinement",
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let fallback = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match execute(&cli) {
        Ok(code) => code,
        Err((err, dir)) => {
            let code = exit_code(&err);
            eprintln!("error: {err}");
            let dir = dir.unwrap_or(fallback);
            if let Err(e) = write_error(&dir, &err, code) {
                eprintln!("could not write error.json: {e}");
            }
            code
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericalAbort { .. } | Error::NonConvergence { .. } | Error::Capacity(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) | Error::TomlDe(_) => "config",
        Error::Input(_) => "input",
        Error::NumericalAbort { .. } => "numerical_abort",
        Error::NonConvergence { .. } => "non_convergence",
        Error::Capacity(_) => "capacity",
        Error::Unsupported(_) => "unsupported",
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::TomlSer(_) => "io",
    }
}

fn write_error(dir: &Path, err: &Error, code: i32) -> Result<()> {
    fs::create_dir_all(dir)?;
    let doc = ErrorDoc { kind: error_kind(err), message: err.to_string(), exit_code: code };
    write_text(&dir.join("error.json"), &json(&doc)?)
}

type Failure = (Error, Option<PathBuf>);

fn execute(cli: &Cli) -> std::result::Result<i32, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| (Error::Config("--config is required".into()), None))?;
    let cfg = RunConfig::load(path).map_err(|e| (e, None))?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let tag = |e: Error| (e, Some(dir.clone()));
    let resolved = cfg.resolve().map_err(tag)?;
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(tag(Error::Config("--threads must be at least 1".into())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| tag(Error::Config(format!("cannot start {threads} worker threads: {e}"))))?;
    pool.install(|| dispatch(cli, &resolved, &dir)).map_err(tag)
}

fn dispatch(cli: &Cli, r: &Resolved, dir: &Path) -> Result<i32> {
    fs::create_dir_all(dir)?;
    let manifest = r.config.to_toml()?;
    let hash = config_hash(&manifest);
    write_text(&dir.join("manifest.toml"), &manifest)?;
    let ens = r.ensemble()?;
    if cli.dump_paths {
        ens.write_csv(BufWriter::new(fs::File::create(dir.join("paths.csv"))?))?;
    }
    let out = Output { dir, hash: &hash };
    match cli.command {
        Command::Solve => cmd_solve(r, &ens, &out),
        Command::Check { name } => cmd_check(r, &ens, &out, name),
        Command::Study { name } => cmd_study(r, &ens, &out, name),
        Command::OracleCompare => cmd_oracle(r, &ens, &out),
    }
}

struct Output<'a> {
    dir: &'a Path,
    hash: &'a str,
}

impl Output<'_> {
    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn report(&self, stem: &str, rep: &EstimateReport) -> Result<()> {
        let rep = rep.clone().with_config_hash(Some(self.hash.to_string()));
        write_text(&self.file(&format!("{stem}.json")), &rep.to_json())?;
        write_terms_csv(&self.file(&format!("{stem}.csv")), &rep)?;
        println!("{stem}: {}", status_word(rep.status));
        Ok(())
    }
}

#[derive(Serialize)]
struct SolveSummary {
    config_hash: String,
    mode: String,
    epsilon: Option<f64>,
    paths: usize,
    steps: usize,
    y0_mean: Vec<f64>,
    y0_stderr: Vec<f64>,
    e_total_variation: f64,
    regression_warnings: Vec<String>,
    checks: Vec<CheckOutcome>,
}

#[derive(Serialize)]
struct CheckOutcome {
    name: String,
    status: Status,
}

fn cmd_solve(r: &Resolved, ens: &PathEnsemble, out: &Output) -> Result<i32> {
    let sol = solve_with(&r.problem, ens, &r.scheme, r.mode)?;
    sol.write_csv(BufWriter::new(fs::File::create(out.file("solution.csv"))?))?;
    let mut checks = Vec::new();
    let mut ok = true;
    for name in &r.config.checks.names {
        let which = CheckName::from_config(name).ok_or_else(|| Error::config(format!("checks.names: unknown check \"{name}\"")))?;
        for rep in run_check(r, ens, which, Some(&sol))? {
            ok &= accepted(&rep);
            out.report(&format!("check_{}", rep.name), &rep)?;
            checks.push(CheckOutcome { name: rep.name.clone(), status: rep.status });
        }
    }
    let summary = SolveSummary {
        config_hash: out.hash.to_string(),
        mode: match sol.epsilon() {
            Some(_) => "penalized".into(),
            None => "limit".into(),
        },
        epsilon: sol.epsilon(),
        paths: sol.paths,
        steps: sol.steps(),
        y0_mean: (0..sol.dim).map(|c| mean(&sol.y0_values(c))).collect(),
        y0_stderr: (0..sol.dim).map(|c| sol.y0_stderr(c)).collect(),
        e_total_variation: mean(&(0..sol.paths).map(|p| sol.total_variation(p)).collect::<Vec<_>>()),
        regression_warnings: sol.diagnostics.iter().filter_map(|d| d.warning.clone()).collect(),
        checks,
    };
    write_text(&out.file("summary.json"), &json(&summary)?)?;
    println!("Y0 = {:?} ± {:?}", summary.y0_mean, summary.y0_stderr);
    Ok(if ok { EXIT_OK } else { EXIT_PROPERTY })
}

fn accepted(rep: &EstimateReport) -> bool {
    matches!(rep.status, Status::Pass | Status::Vacuous)
}

fn cmd_check(r: &Resolved, ens: &PathEnsemble, out: &Output, name: CheckName) -> Result<i32> {
    let reports = run_check(r, ens, name, None)?;
    let mut ok = true;
    for rep in &reports {
        ok &= accepted(rep);
        out.report(&rep.name, rep)?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_PROPERTY })
}

/// The reports behind one named check. `sol` reuses a solution already
/// computed in the configured mode.
pub fn run_check(r: &Resolved, ens: &PathEnsemble, name: CheckName, sol: Option<&DiscreteSolution>) -> Result<Vec<EstimateReport>> {
    let c = &r.config.checks;
    let p = &r.problem;
    let solve = || -> Result<DiscreteSolution> {
        match sol {
            Some(s) => Ok(s.clone()),
            None => solve_with(p, ens, &r.scheme, r.mode),
        }
    };
    let weights = || WeightProcess::for_scheme(&p.driver, ens.grid, &r.scheme);
    let named = |mut rep: EstimateReport, n: &str| {
        rep.name = n.to_string();
        rep
    };
    Ok(match name {
        CheckName::Yosida => {
            vec![named(convex_property_report(&p.phi, r.scheme.epsilon, c.delta, c.samples, r.config.mc.seed)?, "yosida")]
        }
        CheckName::Assumptions => {
            let budget = SamplingBudget { samples: c.samples, seed: r.config.mc.seed, ..SamplingBudget::default() };
            vec![named(check_assumptions(p, &budget), "assumptions")]
        }
        CheckName::Prop1 => {
            let s = solve()?;
            vec![
                named(check_prop1(&s, ens, p, &weights()?)?, "prop1"),
                named(refinement_study(p, ens, &r.scheme, r.mode, RatioCheck::Prop1)?, "prop1_refinement"),
            ]
        }
        CheckName::Uniq => vec![named(uniqueness_sweep(p, ens, &r.scheme, r.mode, &c.deltas)?, "uniq")],
        CheckName::Tv => vec![named(refinement_study(p, ens, &r.scheme, r.mode, RatioCheck::Tv)?, "tv")],
        CheckName::Penetration => {
            let sched = run_epsilon_schedule_with(p, ens, &r.scheme, &r.epsilons()?)?;
            if let Some(h) = &sched.halted {
                return Err(Error::NumericalAbort { step: 0, detail: format!("schedule halted: {h}") });
            }
            let levels: Vec<(f64, Penetration)> = sched.levels.iter().filter_map(|l| l.parameter.zip(l.penetration)).collect();
            vec![named(penetration_rate_study(&levels)?, "penetration")]
        }
        CheckName::Appendix => {
            let s = solve()?;
            let w = weights()?;
            let mut reps = vec![named(check_appendix_estimate(&AppendixBundle::prop1(&s, ens, p, &w)?, c.premise_tol), "appendix_prop1")];
            if let Some(&d) = c.deltas.iter().find(|d| **d != 0.0) {
                let mut q = p.clone();
                q.terminal = q.terminal.clone().with_shift(q.terminal.shift.iter().map(|v| v + d).collect());
                let s2 = solve_with(&q, ens, &r.scheme, r.mode)?;
                reps.push(named(check_appendix_estimate(&AppendixBundle::uniqueness(&s, &s2, ens, p, &w)?, c.premise_tol), "appendix_uniq"));
            }
            if p.phi.interior().is_some() && r.scheme.p >= 2.0 {
                reps.push(named(check_appendix_estimate(&AppendixBundle::tv(&s, ens, p, &w)?, c.premise_tol), "appendix_tv"));
            }
            reps
        }
        CheckName::Subdiff => {
            let s = solve()?;
            let u0 = p.phi.anchor().point.clone();
            vec![named(subdiff_measure_check(&s, &p.phi, &[TestPath::Constant(u0), TestPath::SelfPath], c.subdiff_tol), "subdiff")]
        }
    })
}

fn cmd_study(r: &Resolved, ens: &PathEnsemble, out: &Output, name: StudyName) -> Result<i32> {
    let s = &r.config.study;
    let rep: ContinuationReport = match name {
        StudyName::Epsilon => run_epsilon_schedule_with(&r.problem, ens, &r.scheme, &r.epsilons()?)?,
        StudyName::Truncation => run_truncation_schedule(&r.problem, ens, &r.scheme, r.mode, &s.n_values, s.r0, s.gate)?,
        StudyName::Refinement => run_refinement_schedule(&r.problem, ens, &r.scheme, r.mode, s.refine_levels)?,
    };
    let stem = format!("study_{}", name.label());
    let mut rep = rep;
    rep.checks = rep.checks.clone().with_config_hash(Some(out.hash.to_string()));
    rep.write_csv(BufWriter::new(fs::File::create(out.file(&format!("{stem}.csv")))?))?;
    write_text(&out.file(&format!("{stem}.json")), &rep.to_json())?;
    if let Some(h) = &rep.halted {
        return Err(Error::NumericalAbort { step: 0, detail: format!("{stem} halted: {h}") });
    }
    println!("{stem}: {}", status_word(rep.checks.status));
    Ok(if accepted(&rep.checks) { EXIT_OK } else { EXIT_PROPERTY })
}

fn cmd_oracle(r: &Resolved, ens: &PathEnsemble, out: &Output) -> Result<i32> {
    let cmp = compare_with_tree(&r.problem, ens, &r.scheme, r.mode, TreeSpec { steps: r.config.study.tree_steps })?;
    cmp.write_csv(BufWriter::new(fs::File::create(out.file("oracle.csv"))?))?;
    #[derive(Serialize)]
    struct Doc<'a> {
        config_hash: &'a str,
        pass: bool,
        rows: &'a [crate::oracle::ComparisonRow],
    }
    write_text(&out.file("oracle.json"), &json(&Doc { config_hash: out.hash, pass: cmp.pass(), rows: &cmp.rows })?)?;
    for row in &cmp.rows {
        println!("{}: mc {} tree {} gap {:.3e} ≤ {:.3e}: {}", row.quantity, row.mc_value, row.tree_value, row.gap, row.threshold, row.pass);
    }
    Ok(if cmp.pass() { EXIT_OK } else { EXIT_PROPERTY })
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "FAIL",
        Status::Vacuous => "vacuous",
        Status::Degenerate => "DEGENERATE",
        Status::PremiseFailure => "PREMISE FAILURE",
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_terms_csv(path: &Path, rep: &EstimateReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["term", "value", "stderr"])?;
    for t in &rep.terms {
        w.write_record([t.term.clone(), t.value.to_string(), t.stderr.map_or(String::new(), |s| s.to_string())])?;
    }
    w.write_record(["pass", &rep.pass.to_string(), ""])?;
    w.flush()?;
    Ok(())
}

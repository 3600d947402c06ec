//! Acceptance suite: ten criteria at their stated tolerances and sizes.
//! Runs as a plain binary so each criterion prints exactly one line, and
//! exits non-zero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bsvi::config::RunConfig;
use bsvi::convex::{catalog, convex_property_report, resolvent_of_yosida, ConvexSpec, YosidaView};
use bsvi::estimates::{penetration_rate_study, refinement_study, uniqueness_sweep, Penetration, RatioCheck};
use bsvi::model::{A5Params, DriverSpec, ForwardSpec, Problem, TerminalKind, TerminalSpec};
use bsvi::oracle::{compare_with_tree, fixed_point_resolvent, TreeSpec};
use bsvi::paths::{generate, PathEnsemble, TimeGrid};
use bsvi::regression::Basis;
use bsvi::rng::{self, domain};
use bsvi::schedule::{run_epsilon_schedule_with, run_truncation_schedule, ContinuationReport};
use bsvi::solver::{solve_limit, solve_with, Mode, SchemeConfig};
use bsvi::vecops::dist;

const M: usize = 100_000;
const N: usize = 64;
const EPS_LEVELS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// φ = I_[−1,1] with interior ball (r0, c0) = (1, 0), F = 2y, η = tanh(B_T).
fn box_problem() -> Problem {
    Problem::new(
        ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap().with_interior(1.0, 0.0).unwrap(),
        DriverSpec::linear(2.0, 0.0, 0.0, 1, 1).unwrap(),
        TerminalSpec::new(TerminalKind::Tanh, 1),
        ForwardSpec::identity(1),
        1.0,
    )
    .unwrap()
}

fn ensemble(steps: usize, paths: usize, seed: u64) -> PathEnsemble {
    generate(TimeGrid::new(1.0, steps).unwrap(), &ForwardSpec::identity(1), paths, 1, seed).unwrap()
}

fn c1_convex_toolkit() -> Outcome {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    let mut failed = Vec::new();
    for (i, (name, phi)) in catalog().into_iter().enumerate() {
        let rep = convex_property_report(&phi, 0.1, 0.03, 10_000, 100 + i as u64).unwrap();
        let w = rep.entries.iter().map(|e| e.worst_margin).fold(f64::INFINITY, f64::min);
        worst = worst.min(w);
        if !rep.pass || w < -1e-8 {
            failed.push(name);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(failed.is_empty() && secs < 10.0, format!("worst margin {worst:.2e}, {secs:.1} s, failing: {failed:?}"))
}

fn c2_resolvent() -> Outcome {
    let start = Instant::now();
    let cat = catalog();
    let mut r = rng::keyed(2024, domain::PROPERTY, 77);
    let mut worst = 0.0_f64;
    for i in 0..1000 {
        let phi = &cat[i % cat.len()].1;
        let eps = 0.01 + rng::open01(&mut r);
        let h = 0.001 + 0.5 * rng::open01(&mut r);
        let x = rng::uniform_in_cube(&mut r, &phi.anchor().point, 5.0);
        let view = YosidaView::new(phi, eps).unwrap();
        let closed = resolvent_of_yosida(&view, h, &x).unwrap();
        let iter = fixed_point_resolvent(&view, h, &x, 1e-11, 1_000_000).unwrap();
        worst = worst.max(dist(&closed, &iter));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-8 && secs < 5.0, format!("max |closed − fixed point| {worst:.2e}, {secs:.2} s"))
}

fn c3_closed_form() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let start = Instant::now();
        let p = Problem::new(
            ConvexSpec::quadratic(1.0, 1).unwrap(),
            DriverSpec::zero(1, 1),
            TerminalSpec::new(TerminalKind::Identity, 1),
            ForwardSpec::identity(1),
            1.0,
        )
        .unwrap();
        let ens = ensemble(N, M, 11);
        let sol = solve_limit(&p, &ens, &SchemeConfig::default()).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..=N {
            let t = ens.grid.t(i);
            let mse = (0..M).map(|q| (sol.y(i, q)[0] - (t - 1.0).exp() * ens.x(i, q)[0]).powi(2)).sum::<f64>() / M as f64;
            worst = worst.max(mse.sqrt());
        }
        let el = start.elapsed();
        outcome(worst <= 0.02 && el < Duration::from_secs(120), format!("max RMS {worst:.4} (≤ 0.02), {:.1} s single-threaded", el.as_secs_f64()))
    })
}

fn c4_oracle() -> Outcome {
    let inf = f64::INFINITY;
    let cases = [
        ("half-line sin", vec![0.0], vec![inf], TerminalSpec::new(TerminalKind::Sin, 1)),
        ("half-line abs", vec![0.0], vec![inf], TerminalSpec::new(TerminalKind::Abs, 1)),
        ("box sin", vec![-1.0], vec![1.0], TerminalSpec::new(TerminalKind::Sin, 1)),
        ("box abs", vec![-1.0], vec![1.0], TerminalSpec::new(TerminalKind::Abs, 1).with_clip(-1.0, 1.0)),
    ];
    let ens = ensemble(N, M, 21);
    let cfg = SchemeConfig { basis: Basis::Hat { bins: 32 }, ..SchemeConfig::default() };
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, lo, hi, eta) in cases {
        let p = Problem::new(
            ConvexSpec::indicator_box(lo, hi).unwrap(),
            DriverSpec::linear(-1.0, 0.0, 0.0, 1, 1).unwrap(),
            eta,
            ForwardSpec::identity(1),
            1.0,
        )
        .unwrap();
        let cmp = compare_with_tree(&p, &ens, &cfg, Mode::Limit, TreeSpec { steps: 2000 }).unwrap();
        pass &= cmp.pass();
        parts.push(format!("{name}: gap {:.4}/{:.4}, self {:.1e}", cmp.rows[0].gap, cmp.rows[0].threshold, cmp.rows[1].gap));
    }
    outcome(pass, parts.join("; "))
}

fn c5_penetration(sched: &ContinuationReport) -> Outcome {
    let levels: Vec<(f64, Penetration)> = sched.levels.iter().filter_map(|l| l.parameter.zip(l.penetration)).collect();
    let rep = penetration_rate_study(&levels).unwrap();
    let slope = rep.term_value("slope").unwrap_or(f64::NAN);
    let spread = rep.term_value("energy_spread").unwrap_or(f64::NAN);
    let ok = (0.8..=1.3).contains(&slope) && spread <= 2.0;
    outcome(ok && rep.pass, format!("slope {slope:.3} (want [0.8, 1.3]), energy max/min {spread:.3} (want ≤ 2)"))
}

fn c6_cauchy(sched: &ContinuationReport) -> Outcome {
    let gaps = sched.checks.entry_named("gaps_decreasing");
    let lim = sched.checks.entry_named("limit_agreement");
    let ok = gaps.is_some_and(|e| e.pass) && lim.is_some_and(|e| e.pass) && sched.halted.is_none();
    let g: Vec<String> = sched.levels.iter().filter_map(|l| l.gap).map(|g| format!("{g:.2e}")).collect();
    let d = sched.checks.term_value("y0_gap_to_limit").unwrap_or(f64::NAN);
    let a = sched.checks.term_value("y0_gap_allowance").unwrap_or(f64::NAN);
    outcome(ok, format!("gaps [{}], |Y0 − limit| {d:.4} ≤ {a:.4}", g.join(", ")))
}

fn c7_uniqueness(p: &Problem, ens: &PathEnsemble) -> Outcome {
    let deltas = [0.0, 0.01, 0.02, 0.04, 0.08];
    let mut pass = true;
    let mut parts = Vec::new();
    for mode in [Mode::Limit, Mode::Penalized { epsilon: 0.05 }] {
        let rep = uniqueness_sweep(p, ens, &SchemeConfig::default(), mode, &deltas).unwrap();
        let zero = rep.entry_named("zero_perturbation_noise_floor").is_some_and(|e| e.pass);
        pass &= rep.pass && zero;
        parts.push(format!("{}: ratio spread {:.3}, δ=0 lhs {:.1e}", mode_name(mode), rep.term_value("spread").unwrap_or(f64::NAN), rep.term_value("lhs_delta0").unwrap_or(f64::NAN)));
    }
    outcome(pass, parts.join("; "))
}

fn c8_tv(p: &Problem, ens: &PathEnsemble, sched: &ContinuationReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for mode in [Mode::Limit, Mode::Penalized { epsilon: 0.05 }] {
        let rep = refinement_study(p, ens, &SchemeConfig::default(), mode, RatioCheck::Tv).unwrap();
        let r64 = rep.term_value("ratio_N64").unwrap_or(f64::NAN);
        let r128 = rep.term_value("ratio_N128").unwrap_or(f64::NAN);
        pass &= rep.pass && r64.is_finite() && r128.is_finite();
        parts.push(format!("{}: ratio {r64:.3}/{r128:.3}", mode_name(mode)));
    }
    let liminf = sched.checks.entry_named("tv_liminf");
    pass &= liminf.is_some_and(|e| e.pass);
    let tv: Vec<String> = sched.levels.iter().map(|l| format!("{:.4}", l.e_tv)).collect();
    parts.push(format!("E TV by level [{}], liminf margin {:.1e}", tv.join(", "), liminf.map_or(f64::NAN, |e| e.worst_margin)));
    outcome(pass, parts.join("; "))
}

fn c9_truncation() -> Outcome {
    let p = Problem::new(
        ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap(),
        DriverSpec::linear(-1.0, 0.3, 0.0, 1, 1).unwrap().with_a5(A5Params { m_bound: 1.1, l_bound: 0.0 }),
        TerminalSpec::new(TerminalKind::Sin, 1).with_scale(0.8),
        ForwardSpec::identity(1),
        1.0,
    )
    .unwrap();
    // 3M + |φ(u0)| = 3.3
    let ns = [4.0, 8.0, 64.0];
    let ens = ensemble(32, 20_000, 5);
    let cfg = SchemeConfig::default();
    let mut pass = true;
    for mode in [Mode::Limit, Mode::Penalized { epsilon: 0.05 }] {
        let rep = run_truncation_schedule(&p, &ens, &cfg, mode, &ns, None, false).unwrap();
        pass &= rep.levels.iter().all(|l| l.identical_to_reference == Some(true));
        let reference = solve_with(&p, &ens, &cfg, mode).unwrap();
        let mut a = Vec::new();
        reference.write_csv(&mut a).unwrap();
        let mut b = Vec::new();
        rep.final_solution.as_ref().unwrap().write_csv(&mut b).unwrap();
        pass &= a == b;
    }
    outcome(pass, format!("n ∈ {ns:?} above 3.3, both modes: solutions and CSV bytes identical: {pass}"))
}

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_bsvi"))
}

fn run_cli(args: &[&str], config: &Path, out: &Path, threads: usize) -> i32 {
    Command::new(bin())
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .expect("bsvi binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in &names {
        let x = std::fs::read(a.join(n)).unwrap();
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n:?} missing: {e}"))?;
        if x != y {
            return Err(format!("{n:?} differs"));
        }
    }
    Ok(names.len())
}

fn c10_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let src = include_str!("../configs/box.toml")
        .replace("M = 100000", "M = 4000")
        .replace("N = 64", "N = 16")
        .replace("[output]", "[study]\ntree_steps = 200\n\n[output]");
    RunConfig::from_toml(&src).unwrap().resolve().unwrap();
    let cfg = dir.path().join("box.toml");
    std::fs::write(&cfg, src).unwrap();
    let commands: [&[&str]; 5] = [&["solve", "--dump-paths"], &["study", "epsilon"], &["check", "uniq"], &["check", "appendix"], &["oracle-compare"]];
    let mut files = 0;
    for (i, args) in commands.iter().enumerate() {
        let first = dir.path().join(format!("run{i}_t1"));
        let code = run_cli(args, &cfg, &first, 1);
        if code == 1 || code == 2 {
            return outcome(false, format!("{args:?} exited {code}"));
        }
        for threads in [3, 8] {
            let again = dir.path().join(format!("run{i}_t{threads}"));
            let code2 = run_cli(args, &first.join("manifest.toml"), &again, threads);
            if code2 != code {
                return outcome(false, format!("{args:?}: exit {code} vs {code2}"));
            }
            match same_files(&first, &again) {
                Ok(n) => files += n,
                Err(e) => return outcome(false, format!("{args:?} with {threads} threads: {e}")),
            }
        }
    }
    outcome(true, format!("{} commands re-run from manifest at 3 and 8 threads, {files} files byte-identical", commands.len()))
}

fn mode_name(m: Mode) -> String {
    match m {
        Mode::Limit => "limit".into(),
        Mode::Penalized { epsilon } => format!("ε={epsilon}"),
    }
}

fn main() {
    let total = Instant::now();
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut record = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {n:>2} [{name}]: {} ({secs:.1} s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o, secs));
    };
    record(1, "convex toolkit exactness", &mut c1_convex_toolkit);
    record(2, "resolvent identity", &mut c2_resolvent);
    record(3, "closed-form reproduction", &mut c3_closed_form);
    record(4, "oracle equivalence", &mut c4_oracle);

    let p = box_problem();
    let ens = ensemble(N, M, 7);
    let sched = run_epsilon_schedule_with(&p, &ens, &SchemeConfig::default(), &EPS_LEVELS).unwrap();
    record(5, "penetration rate", &mut || c5_penetration(&sched));
    record(6, "Cauchy in ε", &mut || c6_cauchy(&sched));
    record(7, "stability contraction", &mut || c7_uniqueness(&p, &ens));
    record(8, "TV bound", &mut || c8_tv(&p, &ens, &sched));
    record(9, "truncation inertness", &mut c9_truncation);
    record(10, "reproducibility", &mut c10_reproducibility);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria pass in {:.0} s", results.len() - failed.len(), results.len(), total.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}

//! Seeded Brownian increments and forward-state paths on a uniform grid.
//!
//! Storage is time-major: all paths of step `i` are contiguous, which is
//! the access pattern of the backward recursion.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ForwardSpec;
use crate::rng::{self, domain};

/// Refuse ensembles above this many bytes of path storage.
pub const MAX_ENSEMBLE_BYTES: usize = 3 << 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("grid.N must be at least 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("grid.T must be positive and finite"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// t_i = i·T/N
    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.horizon / self.steps as f64
    }

    pub fn refined(&self) -> Self {
        Self { horizon: self.horizon, steps: 2 * self.steps }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerateOptions {
    pub paths: usize,
    pub seed: u64,
    pub antithetic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub paths: usize,
    /// k (equal to the forward state dimension)
    pub dim: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Number of Brownian-bridge refinements applied since generation.
    pub refinements: u32,
    db: Vec<f64>,
    x: Vec<f64>,
}

impl PathEnsemble {
    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    /// ΔB of path `p` over [t_i, t_{i+1}].
    pub fn db(&self, i: usize, p: usize) -> &[f64] {
        let k = self.dim;
        &self.db[(i * self.paths + p) * k..(i * self.paths + p + 1) * k]
    }

    /// All increments of step `i`, path-major inside the step.
    pub fn db_level(&self, i: usize) -> &[f64] {
        let n = self.paths * self.dim;
        &self.db[i * n..(i + 1) * n]
    }

    pub fn x(&self, i: usize, p: usize) -> &[f64] {
        let d = self.dim;
        &self.x[(i * self.paths + p) * d..(i * self.paths + p + 1) * d]
    }

    pub fn x_level(&self, i: usize) -> &[f64] {
        let n = self.paths * self.dim;
        &self.x[i * n..(i + 1) * n]
    }

    /// B_{t_i} of path `p` (the sum of increments before step i).
    pub fn brownian(&self, i: usize, p: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        for j in 0..i {
            for (bc, d) in b.iter_mut().zip(self.db(j, p)) {
                *bc += d;
            }
        }
        b
    }

    /// Componentwise mean and variance of all increments.
    pub fn increment_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.dim;
        let n = (self.db.len() / k) as f64;
        let mut mean = vec![0.0; k];
        for chunk in self.db.chunks(k) {
            for (m, v) in mean.iter_mut().zip(chunk) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; k];
        for chunk in self.db.chunks(k) {
            for c in 0..k {
                var[c] += (chunk[c] - mean[c]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= n - 1.0);
        (mean, var)
    }

    /// Columnar CSV `path,step,component,dB,X`; dB is empty at the final step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["path", "step", "component", "dB", "X"])?;
        for p in 0..self.paths {
            for i in 0..=self.steps() {
                for c in 0..self.dim {
                    let db = if i < self.steps() { self.db(i, p)[c].to_string() } else { String::new() };
                    w.write_record([p.to_string(), i.to_string(), c.to_string(), db, self.x(i, p)[c].to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Halves every step with a Brownian bridge. The coarse increments are
    /// reproduced exactly in sum, so both grids share one Brownian path.
    pub fn refine(&self, forward: &ForwardSpec) -> Result<Self> {
        let grid = self.grid.refined();
        let n = self.steps();
        let (m, k) = (self.paths, self.dim);
        check_capacity(grid.steps, m, k)?;
        let half_sd = (self.grid.h() / 4.0).sqrt();
        let bridge_domain = domain::BRIDGE ^ u64::from(self.refinements + 1);
        let per_path: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|p| {
                let (stream, sign) = stream_of(p, self.antithetic);
                let mut r = rng::keyed(self.seed, bridge_domain, stream);
                let mut xi = vec![0.0; k];
                let mut out = vec![0.0; 2 * n * k];
                for i in 0..n {
                    rng::fill_normals(&mut r, &mut xi);
                    let db = self.db(i, p);
                    for c in 0..k {
                        let e = sign * half_sd * xi[c];
                        out[(2 * i) * k + c] = 0.5 * db[c] + e;
                        out[(2 * i + 1) * k + c] = 0.5 * db[c] - e;
                    }
                }
                out
            })
            .collect();
        let db = scatter(&per_path, grid.steps, m, k);
        let x = integrate_forward(&grid, forward, &db, m, k);
        Ok(Self { grid, db, x, refinements: self.refinements + 1, ..self.clone() })
    }
}

fn stream_of(p: usize, antithetic: bool) -> (u64, f64) {
    if antithetic {
        ((p / 2) as u64, if p % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        (p as u64, 1.0)
    }
}

fn check_capacity(steps: usize, paths: usize, k: usize) -> Result<()> {
    let bytes = (steps * 2 + 1)
        .checked_mul(paths)
        .and_then(|v| v.checked_mul(k))
        .and_then(|v| v.checked_mul(8));
    match bytes {
        Some(b) if b <= MAX_ENSEMBLE_BYTES => Ok(()),
        _ => Err(Error::Capacity(format!(
            "{paths} paths × {steps} steps × dimension {k} exceeds the {} GiB ensemble limit",
            MAX_ENSEMBLE_BYTES >> 30
        ))),
    }
}

fn scatter(per_path: &[Vec<f64>], steps: usize, m: usize, k: usize) -> Vec<f64> {
    let mut db = vec![0.0; steps * m * k];
    for (p, row) in per_path.iter().enumerate() {
        for i in 0..steps {
            db[(i * m + p) * k..(i * m + p + 1) * k].copy_from_slice(&row[i * k..(i + 1) * k]);
        }
    }
    db
}

/// Euler-Maruyama; exact for the identity and scaled forward states.
fn integrate_forward(grid: &TimeGrid, forward: &ForwardSpec, db: &[f64], m: usize, k: usize) -> Vec<f64> {
    let n = grid.steps;
    let h = grid.h();
    let mut x = vec![0.0; (n + 1) * m * k];
    for p in 0..m {
        x[p * k..(p + 1) * k].copy_from_slice(&forward.x0);
    }
    let mut drift = vec![0.0; k];
    for i in 0..n {
        let t = grid.t(i);
        for p in 0..m {
            let cur = (i * m + p) * k;
            let next = ((i + 1) * m + p) * k;
            let (head, tail) = x.split_at_mut(next);
            let xi = &head[cur..cur + k];
            let xn = &mut tail[..k];
            let inc = &db[cur..cur + k];
            if forward.is_identity() {
                for c in 0..k {
                    xn[c] = xi[c] + inc[c];
                }
            } else {
                forward.drift_into(t, xi, &mut drift);
                let s = forward.diffusion_scale(t, xi);
                for c in 0..k {
                    xn[c] = xi[c] + drift[c] * h + s * inc[c];
                }
            }
        }
    }
    x
}

pub fn generate(grid: TimeGrid, forward: &ForwardSpec, paths: usize, k: usize, seed: u64) -> Result<PathEnsemble> {
    generate_with(grid, forward, k, GenerateOptions { paths, seed, antithetic: false })
}

/// Counter-addressed generation: increment `(p, i)` is a fixed function of
/// `(seed, p, i)`, so the result does not depend on the worker count.
pub fn generate_with(grid: TimeGrid, forward: &ForwardSpec, k: usize, opts: GenerateOptions) -> Result<PathEnsemble> {
    let m = opts.paths;
    if m == 0 {
        return Err(Error::config("mc.M must be at least 1"));
    }
    if opts.antithetic && m % 2 != 0 {
        return Err(Error::config("mc.M must be even when mc.antithetic = true"));
    }
    if k == 0 || forward.dim() != k {
        return Err(Error::config(format!("forward state dimension {} must equal k = {k}", forward.dim())));
    }
    let n = grid.steps;
    check_capacity(n, m, k)?;
    let sd = grid.h().sqrt();
    let per_path: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|p| {
            let (stream, sign) = stream_of(p, opts.antithetic);
            let mut r = rng::keyed(opts.seed, domain::BROWNIAN, stream);
            let mut out = vec![0.0; n * k];
            for i in 0..n {
                let row = &mut out[i * k..(i + 1) * k];
                rng::fill_normals(&mut r, row);
                for v in row.iter_mut() {
                    *v *= sign * sd;
                }
            }
            out
        })
        .collect();
    let db = scatter(&per_path, n, m, k);
    let x = integrate_forward(&grid, forward, &db, m, k);
    Ok(PathEnsemble { grid, paths: m, dim: k, seed: opts.seed, antithetic: opts.antithetic, refinements: 0, db, x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_forward_is_running_sum() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let e = generate(grid, &ForwardSpec::identity(2), 5, 2, 3).unwrap();
        for p in 0..5 {
            for i in 0..=8 {
                assert_eq!(e.x(i, p), e.brownian(i, p).as_slice());
            }
        }
    }

    #[test]
    fn increment_variance_matches_step() {
        let grid = TimeGrid::new(0.1, 10).unwrap();
        let e = generate(grid, &ForwardSpec::identity(1), 10_000, 1, 42).unwrap();
        let (mean, var) = e.increment_stats();
        assert!(mean[0].abs() < 4.0 * (0.01f64 / 10_000.0).sqrt(), "{mean:?}");
        assert!((0.0095..=0.0105).contains(&var[0]), "{var:?}");
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let f = ForwardSpec::identity(1);
        let a = generate(grid, &f, 257, 1, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| generate(grid, &f, 257, 1, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn antithetic_mean_is_exactly_zero() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let opts = GenerateOptions { paths: 64, seed: 1, antithetic: true };
        let e = generate_with(grid, &ForwardSpec::identity(1), 1, opts).unwrap();
        for i in 0..4 {
            assert_eq!(e.db_level(i).iter().sum::<f64>(), 0.0);
        }
        let odd = GenerateOptions { paths: 3, ..opts };
        assert!(generate_with(grid, &ForwardSpec::identity(1), 1, odd).is_err());
    }

    #[test]
    fn refinement_preserves_coarse_increments() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let f = ForwardSpec::identity(1);
        let e = generate(grid, &f, 100, 1, 5).unwrap();
        let r = e.refine(&f).unwrap();
        assert_eq!(r.steps(), 8);
        for p in 0..100 {
            for i in 0..4 {
                let s = r.db(2 * i, p)[0] + r.db(2 * i + 1, p)[0];
                assert!((s - e.db(i, p)[0]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn capacity_is_checked() {
        let grid = TimeGrid::new(1.0, 1 << 20).unwrap();
        let err = generate(grid, &ForwardSpec::identity(1), 1 << 20, 1, 0).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }
}

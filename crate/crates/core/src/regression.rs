//! Least-squares conditional expectations on functions of the Markov state.
//!
//! Normal equations are accumulated over fixed-size path chunks that are
//! summed in chunk order, so fits are bit-identical for any worker count.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Paths per reduction chunk.
pub const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Basis {
    /// Standardized monomials of total degree ≤ `degree`.
    Polynomial { degree: usize },
    /// Piecewise-linear hat functions on `bins` equal cells of
    /// mean ± 4 sd (one-dimensional states only).
    Hat { bins: usize },
}

impl Default for Basis {
    fn default() -> Self {
        Basis::Polynomial { degree: 3 }
    }
}

#[derive(Clone, Debug)]
enum Features {
    Constant,
    Monomials { exps: Vec<Vec<u32>> },
    Hat { lo: f64, width: f64, bins: usize },
}

/// Standardization plus the feature map of one time step.
#[derive(Clone, Debug)]
pub struct Design {
    mean: Vec<f64>,
    inv_sd: Vec<f64>,
    /// Coordinates with positive spread.
    active: Vec<usize>,
    features: Features,
    /// What was actually used after any degradation.
    pub basis: Basis,
}

fn monomial_exponents(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; dim]];
    for total in 1..=degree as u32 {
        let mut cur = vec![0u32; dim];
        fill_exps(&mut out, &mut cur, 0, total);
    }
    out
}

fn fill_exps(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill_exps(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

impl Design {
    fn new(x: &[f64], dim: usize, basis: Basis) -> Self {
        let n = x.len() / dim;
        let mean = chunked_sum(n, dim, |p, acc| {
            for c in 0..dim {
                acc[c] += x[p * dim + c];
            }
        })
        .into_iter()
        .map(|s| s / n as f64)
        .collect::<Vec<_>>();
        let var = chunked_sum(n, dim, |p, acc| {
            for c in 0..dim {
                acc[c] += (x[p * dim + c] - mean[c]).powi(2);
            }
        });
        let sd: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        let scale = mean.iter().map(|m| m.abs()).fold(1.0, f64::max);
        let active: Vec<usize> = (0..dim).filter(|&c| sd[c] > 1e-12 * scale).collect();
        let inv_sd = sd.iter().map(|s| if *s > 0.0 { 1.0 / s } else { 0.0 }).collect();
        let mut d = Self { mean, inv_sd, active, features: Features::Constant, basis };
        d.set_basis(basis);
        d
    }

    fn set_basis(&mut self, basis: Basis) {
        self.basis = basis;
        self.features = if self.active.is_empty() {
            self.basis = Basis::Polynomial { degree: 0 };
            Features::Constant
        } else {
            match basis {
                Basis::Polynomial { degree: 0 } => Features::Constant,
                Basis::Polynomial { degree } => Features::Monomials { exps: monomial_exponents(self.active.len(), degree) },
                Basis::Hat { bins } => Features::Hat { lo: -4.0, width: 8.0 / bins as f64, bins },
            }
        };
    }

    pub fn len(&self) -> usize {
        match &self.features {
            Features::Constant => 1,
            Features::Monomials { exps } => exps.len(),
            Features::Hat { bins, .. } => bins + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.features {
            Features::Constant => out[0] = 1.0,
            Features::Monomials { exps } => {
                let mut s = [0.0f64; 8];
                for (j, &c) in self.active.iter().enumerate() {
                    s[j] = (x[c] - self.mean[c]) * self.inv_sd[c];
                }
                for (o, e) in out.iter_mut().zip(exps) {
                    let mut v = 1.0;
                    for (j, &p) in e.iter().enumerate() {
                        v *= s[j].powi(p as i32);
                    }
                    *o = v;
                }
            }
            Features::Hat { lo, width, bins } => {
                let c = self.active[0];
                let s = ((x[c] - self.mean[c]) * self.inv_sd[c]).clamp(*lo, lo + width * *bins as f64);
                out.fill(0.0);
                let pos = (s - lo) / width;
                let cell = (pos.floor() as usize).min(bins - 1);
                let frac = pos - cell as f64;
                out[cell] = 1.0 - frac;
                out[cell + 1] = frac;
            }
        }
    }
}

/// Deterministic chunked reduction of per-path contributions into a
/// vector of length `len`.
fn chunked_sum<F>(paths: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let partial: Vec<Vec<f64>> = (0..paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            for p in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                f(p, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; len];
    for part in partial {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

/// A factorized Gram matrix for one time step. Several right-hand sides can
/// be solved against it.
pub struct Regressor {
    pub design: Design,
    chol: Cholesky<f64, Dyn>,
    pub paths: usize,
    pub warning: Option<String>,
}

/// Fitted coefficients, `q × r`, for `r` targets.
#[derive(Clone, Debug)]
pub struct Fit {
    pub coef: DMatrix<f64>,
    pub targets: usize,
    /// max_j |⟨residual, basis column j⟩| / M over all targets.
    pub orthogonality: f64,
}

impl Regressor {
    /// Builds the design for states `x` (path-major, `dim` per path),
    /// degrading the basis on rank deficiency.
    pub fn new(x: &[f64], dim: usize, basis: Basis) -> Self {
        let paths = x.len() / dim;
        let mut design = Design::new(x, dim, basis);
        let mut warning = None;
        loop {
            if let Some(chol) = gram_cholesky(&design, x, dim, paths) {
                return Self { design, chol, paths, warning };
            }
            let lower = match design.basis {
                Basis::Polynomial { degree } if degree > 0 => Basis::Polynomial { degree: degree - 1 },
                Basis::Hat { bins } if bins > 1 => Basis::Hat { bins: bins / 2 },
                Basis::Hat { .. } => Basis::Polynomial { degree: 1 },
                Basis::Polynomial { .. } => unreachable!("the constant basis always factorizes"),
            };
            warning = Some(format!("rank-deficient design, basis degraded from {:?} to {:?}", basis, lower));
            design.set_basis(lower);
        }
    }

    /// Least-squares coefficients for per-path targets `t` (`r` per path).
    pub fn fit(&self, x: &[f64], dim: usize, t: &[f64], r: usize) -> Fit {
        let q = self.design.len();
        let m = self.paths;
        let rhs = chunked_sum(m, q * r, |p, acc| {
            let mut phi = [0.0f64; 128];
            self.design.eval_into(&x[p * dim..(p + 1) * dim], &mut phi[..q]);
            let tp = &t[p * r..(p + 1) * r];
            for a in 0..q {
                for b in 0..r {
                    acc[a * r + b] += phi[a] * tp[b];
                }
            }
        });
        let b = DMatrix::from_row_slice(q, r, &rhs).scale(1.0 / m as f64);
        let coef = self.chol.solve(&b);
        let resid = chunked_sum(m, q * r, |p, acc| {
            let mut phi = [0.0f64; 128];
            self.design.eval_into(&x[p * dim..(p + 1) * dim], &mut phi[..q]);
            let tp = &t[p * r..(p + 1) * r];
            for b in 0..r {
                let pred: f64 = (0..q).map(|a| phi[a] * coef[(a, b)]).sum();
                let e = tp[b] - pred;
                for a in 0..q {
                    acc[a * r + b] += phi[a] * e;
                }
            }
        });
        let orthogonality = resid.iter().map(|v| (v / m as f64).abs()).fold(0.0, f64::max);
        Fit { coef, targets: r, orthogonality }
    }

    pub fn predict_into(&self, fit: &Fit, x: &[f64], out: &mut [f64]) {
        let q = self.design.len();
        let mut phi = [0.0f64; 128];
        self.design.eval_into(x, &mut phi[..q]);
        for (b, o) in out.iter_mut().enumerate().take(fit.targets) {
            *o = (0..q).map(|a| phi[a] * fit.coef[(a, b)]).sum();
        }
    }
}

/// Maximum number of basis functions (fixed-size scratch buffers).
pub const MAX_BASIS: usize = 128;

fn gram_cholesky(design: &Design, x: &[f64], dim: usize, paths: usize) -> Option<Cholesky<f64, Dyn>> {
    let q = design.len();
    if q > MAX_BASIS || q > paths {
        return None;
    }
    let g = chunked_sum(paths, q * q, |p, acc| {
        let mut phi = [0.0f64; 128];
        design.eval_into(&x[p * dim..(p + 1) * dim], &mut phi[..q]);
        for a in 0..q {
            for b in a..q {
                acc[a * q + b] += phi[a] * phi[b];
            }
        }
    });
    let mut gram = DMatrix::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let v = g[a * q + b] / paths as f64;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let chol = Cholesky::new(gram.clone())?;
    // Reject numerically singular factors: tiny pivots relative to the largest.
    let l = chol.l();
    let diag: Vec<f64> = (0..q).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-12 * max) {
        return None;
    }
    Some(chol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_count_is_binomial() {
        assert_eq!(monomial_exponents(1, 3).len(), 4);
        assert_eq!(monomial_exponents(2, 3).len(), 10);
        assert_eq!(monomial_exponents(3, 2).len(), 10);
    }

    #[test]
    fn recovers_a_cubic_exactly() {
        let x: Vec<f64> = (0..1000).map(|i| -2.0 + 4.0 * i as f64 / 999.0).collect();
        let t: Vec<f64> = x.iter().map(|v| 1.0 - v + 0.5 * v * v * v).collect();
        let reg = Regressor::new(&x, 1, Basis::default());
        let fit = reg.fit(&x, 1, &t, 1);
        let mut out = [0.0];
        reg.predict_into(&fit, &[1.5], &mut out);
        assert!((out[0] - (1.0 - 1.5 + 0.5 * 3.375)).abs() < 1e-10);
        assert!(fit.orthogonality < 1e-8);
    }

    #[test]
    fn constant_state_uses_constant_basis() {
        let x = vec![0.3; 50];
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let reg = Regressor::new(&x, 1, Basis::default());
        assert_eq!(reg.design.basis, Basis::Polynomial { degree: 0 });
        let fit = reg.fit(&x, 1, &t, 1);
        let mut out = [0.0];
        reg.predict_into(&fit, &[0.3], &mut out);
        assert!((out[0] - 24.5).abs() < 1e-12);
    }

    #[test]
    fn degrades_when_too_few_distinct_points() {
        // Two distinct states cannot support a cubic.
        let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let reg = Regressor::new(&x, 1, Basis::default());
        assert_eq!(reg.design.basis, Basis::Polynomial { degree: 1 });
        assert!(reg.warning.is_some());
    }

    #[test]
    fn hat_basis_interpolates_linear_data() {
        let x: Vec<f64> = (0..2000).map(|i| -1.0 + 2.0 * i as f64 / 1999.0).collect();
        let t: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let reg = Regressor::new(&x, 1, Basis::Hat { bins: 8 });
        let fit = reg.fit(&x, 1, &t, 1);
        let mut out = [0.0];
        reg.predict_into(&fit, &[0.2], &mut out);
        assert!((out[0] - 1.6).abs() < 1e-8, "{}", out[0]);
    }

    #[test]
    fn fit_is_thread_independent() {
        let x: Vec<f64> = (0..20_000).map(|i| ((i * 7919) % 10_007) as f64 / 10_007.0).collect();
        let t: Vec<f64> = x.iter().map(|v| (3.0 * v).sin()).collect();
        let run = || {
            let reg = Regressor::new(&x, 1, Basis::default());
            reg.fit(&x, 1, &t, 1).coef
        };
        let a = run();
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
        assert_eq!(a, b);
    }
}

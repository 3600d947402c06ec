use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::norm;

/// Built-in generators. `z` is the m×k matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub enum DriverKind {
    Zero,
    /// a·y + b + c·(Σ_c z[r, c]) componentwise.
    Linear { a: f64, b: f64, c: f64 },
    /// −y³ componentwise.
    Cubic,
    /// sin(y) − y³ componentwise.
    SinCubic,
    /// −a·y/|y| (0 at the origin).
    Inward { a: f64 },
    /// a·y + s·x₁² componentwise.
    StateForced { a: f64, s: f64 },
}

/// Constants of the compatibility condition
/// ⟨û, F(t,u,z)⟩ ≤ ½|û|² + β + b|u|^p + κ|z|².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A4Params {
    pub beta: f64,
    pub b: f64,
    pub kappa: f64,
    #[serde(default = "two")]
    pub p: f64,
}

fn two() -> f64 {
    2.0
}

/// Bounded-data constants: ℓ ≤ L and |η| + ∫|F(s,u0,0)|ds ≤ M.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A5Params {
    #[serde(rename = "M")]
    pub m_bound: f64,
    #[serde(rename = "L")]
    pub l_bound: f64,
}

/// Truncated driver F^n = F − F(t,u0,0)·1{|F(t,u0,0)| ≥ n}, optionally
/// gated to zero where ζ(t) = ℓ(t) + F#_{R0}(t) exceeds n.
#[derive(Clone, Debug, PartialEq)]
pub struct Truncation {
    pub level: f64,
    pub u0: Vec<f64>,
    pub zeta_gate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriverSpec {
    pub kind: DriverKind,
    /// m
    pub dim: usize,
    /// k
    pub noise_dim: usize,
    /// Constant subtracted from F (the −û0 of the normalized problem).
    pub shift: Vec<f64>,
    pub a4: Option<A4Params>,
    pub a5: Option<A5Params>,
    pub truncation: Option<Truncation>,
}

impl DriverSpec {
    pub fn new(kind: DriverKind, dim: usize, noise_dim: usize) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return Err(Error::config("driver: m and k must be positive"));
        }
        let finite = match &kind {
            DriverKind::Zero | DriverKind::Cubic | DriverKind::SinCubic => true,
            DriverKind::Linear { a, b, c } => a.is_finite() && b.is_finite() && c.is_finite(),
            DriverKind::Inward { a } => a.is_finite() && *a >= 0.0,
            DriverKind::StateForced { a, s } => a.is_finite() && s.is_finite(),
        };
        if !finite {
            return Err(Error::config("driver: parameters must be finite (and `a` ≥ 0 for inward)"));
        }
        Ok(Self { kind, dim, noise_dim, shift: vec![0.0; dim], a4: None, a5: None, truncation: None })
    }

    pub fn zero(dim: usize, noise_dim: usize) -> Self {
        Self::new(DriverKind::Zero, dim, noise_dim).expect("zero driver is valid")
    }

    pub fn linear(a: f64, b: f64, c: f64, dim: usize, noise_dim: usize) -> Result<Self> {
        Self::new(DriverKind::Linear { a, b, c }, dim, noise_dim)
    }

    pub fn with_a4(mut self, a4: A4Params) -> Self {
        self.a4 = Some(a4);
        self
    }

    pub fn with_a5(mut self, a5: A5Params) -> Self {
        self.a5 = Some(a5);
        self
    }

    /// F − v.
    pub fn shifted_by(&self, v: &[f64]) -> Self {
        let mut out = self.clone();
        for (s, x) in out.shift.iter_mut().zip(v) {
            *s += x;
        }
        out
    }

    pub fn with_truncation(mut self, t: Option<Truncation>) -> Self {
        self.truncation = t;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DriverKind::Zero => "zero",
            DriverKind::Linear { .. } => "linear",
            DriverKind::Cubic => "cubic",
            DriverKind::SinCubic => "sin_cubic",
            DriverKind::Inward { .. } => "inward",
            DriverKind::StateForced { .. } => "state_forced",
        }
    }

    /// Untruncated F(t,x,y,z) − shift.
    pub fn eval_raw_into(&self, _t: f64, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        let k = self.noise_dim;
        match self.kind {
            DriverKind::Zero => out.fill(0.0),
            DriverKind::Linear { a, b, c } => {
                for r in 0..y.len() {
                    let zs: f64 = if c == 0.0 { 0.0 } else { z[r * k..(r + 1) * k].iter().sum() };
                    out[r] = a * y[r] + b + c * zs;
                }
            }
            DriverKind::Cubic => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = -v * v * v;
                }
            }
            DriverKind::SinCubic => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = v.sin() - v * v * v;
                }
            }
            DriverKind::Inward { a } => {
                let r = norm(y);
                for (o, v) in out.iter_mut().zip(y) {
                    *o = if r > 0.0 { -a * v / r } else { 0.0 };
                }
            }
            DriverKind::StateForced { a, s } => {
                let x1 = x.first().copied().unwrap_or(0.0);
                for (o, v) in out.iter_mut().zip(y) {
                    *o = a * v + s * x1 * x1;
                }
            }
        }
        for (o, s) in out.iter_mut().zip(&self.shift) {
            *o -= s;
        }
    }

    /// F(t,x,y,z), truncated when a truncation level is set.
    pub fn eval_into(&self, t: f64, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        self.eval_raw_into(t, x, y, z, out);
        if let Some(tr) = &self.truncation {
            if let Some(zeta) = tr.zeta_gate {
                if zeta > tr.level {
                    out.fill(0.0);
                    return;
                }
            }
            let zero_z = vec![0.0; z.len()];
            let mut base = vec![0.0; out.len()];
            self.eval_raw_into(t, x, &tr.u0, &zero_z, &mut base);
            if norm(&base) >= tr.level {
                for (o, b) in out.iter_mut().zip(&base) {
                    *o -= b;
                }
            }
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.eval_into(t, x, y, z, &mut out);
        out
    }

    /// μ(t)
    pub fn mu(&self, _t: f64) -> f64 {
        match self.kind {
            DriverKind::Zero | DriverKind::Cubic | DriverKind::Inward { .. } => 0.0,
            DriverKind::Linear { a, .. } | DriverKind::StateForced { a, .. } => a,
            DriverKind::SinCubic => 1.0,
        }
    }

    /// ℓ(t)
    pub fn ell(&self, _t: f64) -> f64 {
        match self.kind {
            DriverKind::Linear { c, .. } => c.abs() * (self.noise_dim as f64).sqrt(),
            _ => 0.0,
        }
    }

    /// Closed-form F#_ρ(t) = sup_{|y|≤ρ} |F(t,x,y,0)| when one is known.
    pub fn local_bound(&self, rho: f64, _t: f64, x: &[f64]) -> Option<f64> {
        if self.truncation.is_some() {
            return None;
        }
        let unshifted = self.shift.iter().all(|s| *s == 0.0);
        // sup_{|y|≤ρ} |a·y + w| = |a|ρ + |w| for a constant vector w.
        let affine = |a: f64, w: f64| {
            let wv: Vec<f64> = self.shift.iter().map(|s| w - s).collect();
            a.abs() * rho + norm(&wv)
        };
        match self.kind {
            DriverKind::Zero => Some(affine(0.0, 0.0)),
            DriverKind::Linear { a, b, .. } => Some(affine(a, b)),
            DriverKind::StateForced { a, s } => {
                let x1 = x.first().copied().unwrap_or(0.0);
                Some(affine(a, s * x1 * x1))
            }
            DriverKind::Cubic if unshifted => Some(rho.powi(3)),
            DriverKind::Inward { a } if unshifted => Some(if rho > 0.0 { a } else { 0.0 }),
            _ => None,
        }
    }
}

/// Value of F#_ρ(t) and whether it is a sampled lower estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FSharp {
    pub value: f64,
    pub estimate: bool,
}

/// Default resolution of the sampled sup (points in the ball).
pub const FSHARP_POINTS: usize = 1 << 14;

/// F#_ρ(t) at the forward state x = 0.
pub fn f_sharp(driver: &DriverSpec, rho: f64, t: f64) -> FSharp {
    f_sharp_at(driver, rho, t, &[], FSHARP_POINTS)
}

/// F#_ρ(t) at forward state `x`: the closed form if available, otherwise a
/// sup over a dense grid (m = 1) or over Halton points of the ball together
/// with their radial projections onto the sphere.
pub fn f_sharp_at(driver: &DriverSpec, rho: f64, t: f64, x: &[f64], points: usize) -> FSharp {
    let rho = rho.max(0.0);
    if let Some(v) = driver.local_bound(rho, t, x) {
        return FSharp { value: v, estimate: false };
    }
    let m = driver.dim;
    let z = vec![0.0; m * driver.noise_dim];
    let mut out = vec![0.0; m];
    let mut best = 0.0_f64;
    let mut probe = |y: &[f64], best: &mut f64| {
        driver.eval_into(t, x, y, &z, &mut out);
        *best = best.max(norm(&out));
    };
    if m == 1 {
        let n = points.max(2);
        for i in 0..n {
            let y = -rho + 2.0 * rho * i as f64 / (n - 1) as f64;
            probe(&[y], &mut best);
        }
    } else {
        probe(&vec![0.0; m], &mut best);
        let primes = first_primes(m);
        let mut y = vec![0.0; m];
        for i in 1..=points {
            for (j, p) in primes.iter().enumerate() {
                y[j] = rho * (2.0 * radical_inverse(i as u64, *p) - 1.0);
            }
            let r = norm(&y);
            if r <= rho {
                probe(&y, &mut best);
            }
            if r > 0.0 {
                let s: Vec<f64> = y.iter().map(|v| v * rho / r).collect();
                probe(&s, &mut best);
            }
        }
    }
    FSharp { value: best, estimate: true }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if (2..c).take_while(|d| d * d <= c).all(|d| c % d != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn f_sharp_closed_forms() {
        let lin = DriverSpec::linear(-1.0, 0.0, 0.0, 1, 1).unwrap();
        assert_eq!(f_sharp(&lin, 3.0, 0.0), FSharp { value: 3.0, estimate: false });
        let cubic = DriverSpec::new(DriverKind::Cubic, 1, 1).unwrap();
        assert_eq!(f_sharp(&cubic, 2.0, 0.0).value, 8.0);
    }

    #[test]
    fn f_sharp_sin_cubic_matches_dense_grid() {
        let d = DriverSpec::new(DriverKind::SinCubic, 1, 1).unwrap();
        let got = f_sharp(&d, 2.0, 0.0);
        assert!(got.estimate);
        let oracle = (0..=100_000)
            .map(|i| -2.0 + 4.0 * i as f64 / 100_000.0)
            .map(|y: f64| (y.sin() - y.powi(3)).abs())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(got.value, oracle, epsilon = 1e-6);
        assert_abs_diff_eq!(got.value, 8.0 - 2f64.sin(), epsilon = 1e-9);
    }

    #[test]
    fn f_sharp_sampled_in_two_dims_is_close() {
        let d = DriverSpec::new(DriverKind::SinCubic, 2, 1).unwrap();
        let est = f_sharp(&d, 1.5, 0.0);
        // On the axes |F| = |sin ρ − ρ³|; the sup is at least that.
        assert!(est.value >= (1.5f64.powi(3) - 1.5f64.sin()) * 0.999);
    }

    #[test]
    fn truncation_subtracts_only_when_large() {
        let d = DriverSpec::new(DriverKind::StateForced { a: -1.0, s: 1.0 }, 1, 1).unwrap();
        let t = Truncation { level: 4.0, u0: vec![0.0], zeta_gate: None };
        let tr = d.clone().with_truncation(Some(t));
        // |F(u0,0)| = x² = 1 < 4: untouched.
        assert_eq!(tr.eval(0.0, &[1.0], &[0.5], &[0.0]), d.eval(0.0, &[1.0], &[0.5], &[0.0]));
        // x² = 9 ≥ 4: the u0-part is removed.
        assert_eq!(tr.eval(0.0, &[3.0], &[0.5], &[0.0]), vec![-0.5]);
    }

    #[test]
    fn halton_points_are_in_unit_interval() {
        for i in 1..100 {
            let v = radical_inverse(i, 3);
            assert!((0.0..1.0).contains(&v));
        }
        assert_eq!(first_primes(4), vec![2, 3, 5, 7]);
    }
}

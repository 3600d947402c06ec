//! Problem data: generator, terminal condition and forward dynamics.

mod assumptions;
mod driver;

pub use assumptions::{check_assumptions, SamplingBudget};
pub use driver::{f_sharp, f_sharp_at, A4Params, A5Params, DriverKind, DriverSpec, FSharp, Truncation, FSHARP_POINTS};

use serde::{Deserialize, Serialize};

use crate::convex::ConvexSpec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TerminalKind {
    Identity,
    Sin,
    Abs,
    Tanh,
    /// g(x) = 1 (then scaled and shifted).
    Constant,
}

/// η = clip(scale·f(x_{j mod d})) + shift in each output component j.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalSpec {
    pub kind: TerminalKind,
    pub dim: usize,
    pub scale: f64,
    pub shift: Vec<f64>,
    pub clip: Option<(f64, f64)>,
    pub cutoff: Option<TerminalCutoff>,
}

/// η^n = η where |η| + |phi(η)| ≤ n, otherwise u0.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalCutoff {
    pub level: f64,
    pub u0: Vec<f64>,
    pub phi: ConvexSpec,
}

impl TerminalSpec {
    pub fn new(kind: TerminalKind, dim: usize) -> Self {
        Self { kind, dim, scale: 1.0, shift: vec![0.0; dim], clip: None, cutoff: None }
    }

    pub fn with_cutoff(mut self, cutoff: Option<TerminalCutoff>) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_shift(mut self, shift: Vec<f64>) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_clip(mut self, lo: f64, hi: f64) -> Self {
        self.clip = Some((lo, hi));
        self
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len().max(1);
        for (j, o) in out.iter_mut().enumerate() {
            let xi = x.get(j % d).copied().unwrap_or(0.0);
            let base = match self.kind {
                TerminalKind::Identity => xi,
                TerminalKind::Sin => xi.sin(),
                TerminalKind::Abs => xi.abs(),
                TerminalKind::Tanh => xi.tanh(),
                TerminalKind::Constant => 1.0,
            };
            let mut v = self.scale * base;
            if let Some((lo, hi)) = self.clip {
                v = v.clamp(lo, hi);
            }
            *o = v + self.shift[j];
        }
        if let Some(c) = &self.cutoff {
            let size = crate::vecops::norm(out) + c.phi.value(out).abs();
            if !(size <= c.level) {
                out.copy_from_slice(&c.u0);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Uniform bound M_η on |η| when g is bounded.
    pub fn uniform_bound(&self) -> Option<f64> {
        if let Some(c) = &self.cutoff {
            let uncut = Self { cutoff: None, ..self.clone() }.uniform_bound().unwrap_or(c.level);
            return Some(uncut.min(c.level).max(crate::vecops::norm(&c.u0)));
        }
        let range = match (self.kind, self.clip) {
            (_, Some((lo, hi))) => Some(lo.abs().max(hi.abs())),
            (TerminalKind::Sin | TerminalKind::Tanh | TerminalKind::Constant, None) => Some(self.scale.abs()),
            _ => None,
        }?;
        let sq: f64 = self.shift.iter().map(|s| (s.abs() + range).powi(2)).sum();
        Some(sq.sqrt())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ForwardKind {
    /// X = x0 + B.
    Identity,
    /// X = x0 + σB.
    Scaled { sigma: f64 },
    /// dX = θ(mean − X)dt + σ dB.
    OrnsteinUhlenbeck { theta: f64, mean: f64, sigma: f64 },
}

/// Markov state driving the terminal condition and the generator. The
/// state has the Brownian dimension d = k.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardSpec {
    pub x0: Vec<f64>,
    pub kind: ForwardKind,
}

impl ForwardSpec {
    pub fn identity(dim: usize) -> Self {
        Self { x0: vec![0.0; dim], kind: ForwardKind::Identity }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, ForwardKind::Identity)
    }

    pub fn drift_into(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match self.kind {
            ForwardKind::Identity | ForwardKind::Scaled { .. } => out.fill(0.0),
            ForwardKind::OrnsteinUhlenbeck { theta, mean, .. } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = theta * (mean - v);
                }
            }
        }
    }

    /// Diagonal of the (diagonal) diffusion matrix.
    pub fn diffusion_scale(&self, _t: f64, _x: &[f64]) -> f64 {
        match self.kind {
            ForwardKind::Identity => 1.0,
            ForwardKind::Scaled { sigma } | ForwardKind::OrnsteinUhlenbeck { sigma, .. } => sigma,
        }
    }

    /// Lipschitz constants of (drift, diffusion) in x.
    pub fn lipschitz(&self) -> (f64, f64) {
        match self.kind {
            ForwardKind::Identity | ForwardKind::Scaled { .. } => (0.0, 0.0),
            ForwardKind::OrnsteinUhlenbeck { theta, .. } => (theta.abs(), 0.0),
        }
    }
}

/// A complete problem on [0, T].
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub phi: ConvexSpec,
    pub driver: DriverSpec,
    pub terminal: TerminalSpec,
    pub forward: ForwardSpec,
    pub horizon: f64,
}

impl Problem {
    pub fn new(phi: ConvexSpec, driver: DriverSpec, terminal: TerminalSpec, forward: ForwardSpec, horizon: f64) -> Result<Self> {
        let m = phi.dim();
        if driver.dim != m || terminal.dim != m || terminal.shift.len() != m {
            return Err(Error::config(format!(
                "dimension mismatch: convex m = {m}, driver m = {}, terminal m = {}",
                driver.dim, terminal.dim
            )));
        }
        if driver.noise_dim != forward.dim() {
            return Err(Error::config(format!(
                "dimension mismatch: driver k = {}, forward state d = {}",
                driver.noise_dim,
                forward.dim()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("grid.T must be positive and finite"));
        }
        Ok(Self { phi, driver, terminal, forward, horizon })
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.driver.noise_dim
    }

    /// The same problem with phi normalized at its anchor and F shifted by −û0.
    pub fn normalized(&self) -> Result<Self> {
        let (phi, driver) = crate::convex::normalize(&self.phi, &self.driver)?;
        Ok(Self { phi, driver, ..self.clone() })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a4: Option<A4Params>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a5: Option<A5Params>,
}

impl DriverConfig {
    pub fn build(&self, m: usize, k: usize) -> Result<DriverSpec> {
        let allowed: &[&str] = match self.kind.as_str() {
            "zero" | "cubic" | "sin_cubic" => &[],
            "linear" => &["a", "b", "c"],
            "inward" => &["a"],
            "state_forced" => &["a", "s"],
            other => {
                return Err(Error::config(format!(
                    "driver.kind = \"{other}\" is not in the catalog (zero, linear, cubic, sin_cubic, inward, state_forced)"
                )))
            }
        };
        for (name, present) in [("a", self.a.is_some()), ("b", self.b.is_some()), ("c", self.c.is_some()), ("s", self.s.is_some())] {
            if present && !allowed.contains(&name) {
                return Err(Error::config(format!("driver.{name} is not a parameter of kind = \"{}\"", self.kind)));
            }
        }
        let kind = match self.kind.as_str() {
            "zero" => DriverKind::Zero,
            "cubic" => DriverKind::Cubic,
            "sin_cubic" => DriverKind::SinCubic,
            "linear" => DriverKind::Linear { a: self.a.unwrap_or(0.0), b: self.b.unwrap_or(0.0), c: self.c.unwrap_or(0.0) },
            "inward" => DriverKind::Inward { a: self.a.unwrap_or(1.0) },
            "state_forced" => DriverKind::StateForced { a: self.a.unwrap_or(0.0), s: self.s.unwrap_or(1.0) },
            _ => unreachable!(),
        };
        let mut d = DriverSpec::new(kind, m, k)?;
        d.a4 = self.a4;
        d.a5 = self.a5;
        Ok(d)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    pub kind: String,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

impl TerminalConfig {
    pub fn build(&self, m: usize) -> Result<TerminalSpec> {
        let kind = match self.kind.as_str() {
            "identity" => TerminalKind::Identity,
            "sin" => TerminalKind::Sin,
            "abs" => TerminalKind::Abs,
            "tanh" => TerminalKind::Tanh,
            "constant" => TerminalKind::Constant,
            other => {
                return Err(Error::config(format!(
                    "terminal.kind = \"{other}\" is not in the catalog (identity, sin, abs, tanh, constant)"
                )))
            }
        };
        if !self.scale.is_finite() {
            return Err(Error::config("terminal.scale must be finite"));
        }
        let shift = match &self.shift {
            None => vec![0.0; m],
            Some(v) if v.len() == 1 => vec![v[0]; m],
            Some(v) if v.len() == m => v.clone(),
            Some(v) => return Err(Error::config(format!("terminal.shift has length {} but m = {m}", v.len()))),
        };
        let mut t = TerminalSpec::new(kind, m).with_scale(self.scale).with_shift(shift);
        if let Some([lo, hi]) = self.clip {
            if !(lo <= hi) {
                return Err(Error::config("terminal.clip must satisfy lo ≤ hi"));
            }
            t = t.with_clip(lo, hi);
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    #[serde(default = "identity_name")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
}

fn identity_name() -> String {
    "identity".into()
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self { kind: identity_name(), x0: None, sigma: None, theta: None, mean: None }
    }
}

impl ForwardConfig {
    pub fn build(&self, k: usize) -> Result<ForwardSpec> {
        let x0 = match &self.x0 {
            None => vec![0.0; k],
            Some(v) if v.len() == k => v.clone(),
            Some(v) => return Err(Error::config(format!("forward.x0 has length {} but k = {k}", v.len()))),
        };
        let foreign = |name: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::config(format!("forward.{name} is not a parameter of kind = \"{}\"", self.kind)))
            } else {
                Ok(())
            }
        };
        let kind = match self.kind.as_str() {
            "identity" => {
                foreign("sigma", self.sigma.is_some())?;
                foreign("theta", self.theta.is_some())?;
                foreign("mean", self.mean.is_some())?;
                ForwardKind::Identity
            }
            "scaled" => {
                foreign("theta", self.theta.is_some())?;
                foreign("mean", self.mean.is_some())?;
                ForwardKind::Scaled { sigma: self.sigma.ok_or_else(|| Error::config("forward.sigma is required for kind = \"scaled\""))? }
            }
            "ou" => ForwardKind::OrnsteinUhlenbeck {
                theta: self.theta.ok_or_else(|| Error::config("forward.theta is required for kind = \"ou\""))?,
                mean: self.mean.unwrap_or(0.0),
                sigma: self.sigma.unwrap_or(1.0),
            },
            other => return Err(Error::config(format!("forward.kind = \"{other}\" is not one of identity, scaled, ou"))),
        };
        Ok(ForwardSpec { x0, kind })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_clip_and_bound() {
        let t = TerminalSpec::new(TerminalKind::Tanh, 1).with_scale(2.0).with_clip(-1.0, 1.0);
        assert_eq!(t.eval(&[5.0]), vec![1.0]);
        assert_eq!(t.uniform_bound(), Some(1.0));
        assert_eq!(TerminalSpec::new(TerminalKind::Identity, 1).uniform_bound(), None);
    }

    #[test]
    fn driver_config_names_foreign_field() {
        let cfg = DriverConfig { kind: "cubic".into(), a: Some(1.0), ..Default::default() };
        let err = cfg.build(1, 1).unwrap_err().to_string();
        assert!(err.contains("driver.a"), "{err}");
    }

    #[test]
    fn problem_checks_dimensions() {
        let phi = ConvexSpec::zero(2);
        let res = Problem::new(
            phi,
            DriverSpec::zero(1, 1),
            TerminalSpec::new(TerminalKind::Identity, 2),
            ForwardSpec::identity(1),
            1.0,
        );
        assert!(res.is_err());
    }
}

//! Proper convex lower semicontinuous functions with exact proximal calculus
//! and their Moreau-Yosida regularizations.

mod catalog;
mod yosida;

pub use catalog::{catalog, ConvexConfig};
pub use yosida::{
    check_yosida_inequalities, convex_property_report, resolvent_of_yosida, yosida_grad,
    yosida_value, SamplingBox, YosidaView,
};

use crate::error::{ensure_finite, Error, Result};
use crate::model::DriverSpec;
use crate::vecops::{dot, norm};

/// Feasibility slack for indicator functions. Points within this distance
/// of a constraint count as inside.
pub const FEAS_TOL: f64 = 1e-9;

/// Residual target and iteration cap of the cyclic projection used for
/// polyhedra.
pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexKind {
    /// phi = 0: no constraint at all.
    Zero { dim: usize },
    /// (lambda/2)|y - center|^2 + <linear, y>.
    Quadratic { lambda: f64, center: Vec<f64>, linear: Vec<f64> },
    /// Indicator of the box `lower <= y <= upper` (bounds may be infinite).
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Indicator of the closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Indicator of `<normal, y> <= offset`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// Indicator of an intersection of halfspaces.
    Polyhedron { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
    /// scale * |y|.
    ScaledNorm { scale: f64, dim: usize },
}

impl ConvexKind {
    pub fn dim(&self) -> usize {
        match self {
            ConvexKind::Zero { dim } | ConvexKind::ScaledNorm { dim, .. } => *dim,
            ConvexKind::Quadratic { center, .. } => center.len(),
            ConvexKind::Box { lower, .. } => lower.len(),
            ConvexKind::Ball { center, .. } => center.len(),
            ConvexKind::Halfspace { normal, .. } => normal.len(),
            ConvexKind::Polyhedron { normals, .. } => normals[0].len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConvexKind::Zero { .. } => "zero",
            ConvexKind::Quadratic { .. } => "quadratic",
            ConvexKind::Box { .. } => "box",
            ConvexKind::Ball { .. } => "ball",
            ConvexKind::Halfspace { .. } => "halfspace",
            ConvexKind::Polyhedron { .. } => "polyhedron",
            ConvexKind::ScaledNorm { .. } => "scaled_norm",
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(
            self,
            ConvexKind::Box { .. }
                | ConvexKind::Ball { .. }
                | ConvexKind::Halfspace { .. }
                | ConvexKind::Polyhedron { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::config("convex: dimension must be positive"));
        }
        let same = |v: &[f64], what: &str| {
            if v.len() != dim {
                Err(Error::config(format!("convex: `{what}` has length {} but dim is {dim}", v.len())))
            } else {
                Ok(())
            }
        };
        match self {
            ConvexKind::Zero { .. } => {}
            ConvexKind::Quadratic { lambda, center, linear } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::config("convex: `lambda` must be positive and finite"));
                }
                ensure_finite(center, "convex.center").map_err(|e| Error::config(e.to_string()))?;
                if !linear.is_empty() {
                    same(linear, "linear")?;
                }
            }
            ConvexKind::Box { lower, upper } => {
                same(upper, "upper")?;
                for (j, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                        return Err(Error::config(format!("convex: empty box in component {j}")));
                    }
                }
            }
            ConvexKind::Ball { radius, .. } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::config("convex: `radius` must be positive and finite"));
                }
            }
            ConvexKind::Halfspace { normal, offset } => {
                if norm(normal) == 0.0 || !offset.is_finite() {
                    return Err(Error::config("convex: halfspace needs a nonzero `normal` and finite `offset`"));
                }
            }
            ConvexKind::Polyhedron { normals, offsets } => {
                if normals.is_empty() || normals.len() != offsets.len() {
                    return Err(Error::config("convex: `normals` and `offsets` must be nonempty and of equal length"));
                }
                for n in normals {
                    same(n, "normals[*]")?;
                    if norm(n) == 0.0 {
                        return Err(Error::config("convex: zero row in `normals`"));
                    }
                }
            }
            ConvexKind::ScaledNorm { scale, .. } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::config("convex: `scale` must be positive and finite"));
                }
            }
        }
        Ok(())
    }

    fn in_domain(&self, y: &[f64]) -> bool {
        match self {
            ConvexKind::Zero { .. } | ConvexKind::Quadratic { .. } | ConvexKind::ScaledNorm { .. } => true,
            ConvexKind::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - FEAS_TOL && *v <= u + FEAS_TOL),
            ConvexKind::Ball { center, radius } => crate::vecops::dist(y, center) <= radius + FEAS_TOL,
            ConvexKind::Halfspace { normal, offset } => dot(normal, y) - offset <= FEAS_TOL * norm(normal),
            ConvexKind::Polyhedron { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .all(|(a, b)| dot(a, y) - b <= FEAS_TOL * norm(a)),
        }
    }

    fn value(&self, y: &[f64]) -> f64 {
        match self {
            ConvexKind::Zero { .. } => 0.0,
            ConvexKind::Quadratic { lambda, center, linear } => {
                let sq: f64 = y.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                0.5 * lambda * sq + if linear.is_empty() { 0.0 } else { dot(linear, y) }
            }
            ConvexKind::ScaledNorm { scale, .. } => scale * norm(y),
            _ => {
                if self.in_domain(y) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn prox_into(&self, y: &[f64], lambda: f64, out: &mut [f64]) {
        match self {
            ConvexKind::Zero { .. } => out.copy_from_slice(y),
            ConvexKind::Quadratic { lambda: k, center, linear } => {
                let denom = 1.0 + lambda * k;
                for j in 0..y.len() {
                    let q = if linear.is_empty() { 0.0 } else { linear[j] };
                    out[j] = (y[j] + lambda * k * center[j] - lambda * q) / denom;
                }
            }
            ConvexKind::ScaledNorm { scale, .. } => {
                let r = norm(y);
                let shrink = if r > lambda * scale { 1.0 - lambda * scale / r } else { 0.0 };
                for (o, v) in out.iter_mut().zip(y) {
                    *o = shrink * v;
                }
            }
            ConvexKind::Box { lower, upper } => {
                for j in 0..y.len() {
                    out[j] = y[j].clamp(lower[j], upper[j]);
                }
            }
            ConvexKind::Ball { center, radius } => {
                let d = crate::vecops::dist(y, center);
                if d <= *radius {
                    out.copy_from_slice(y);
                } else {
                    let s = radius / d;
                    for j in 0..y.len() {
                        out[j] = center[j] + s * (y[j] - center[j]);
                    }
                }
            }
            ConvexKind::Halfspace { normal, offset } => {
                out.copy_from_slice(y);
                project_halfspace(out, normal, *offset);
            }
            ConvexKind::Polyhedron { normals, offsets } => {
                dykstra(y, normals, offsets, out);
            }
        }
    }

    /// Minimal-norm element of `∂phi(y) - w`, for `y` in the domain.
    fn min_norm_shifted(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let m = y.len();
        match self {
            ConvexKind::Zero { .. } => w.iter().map(|v| -v).collect(),
            ConvexKind::Quadratic { lambda, center, linear } => (0..m)
                .map(|j| {
                    let q = if linear.is_empty() { 0.0 } else { linear[j] };
                    lambda * (y[j] - center[j]) + q - w[j]
                })
                .collect(),
            ConvexKind::ScaledNorm { scale, .. } => {
                let r = norm(y);
                if r > 0.0 {
                    (0..m).map(|j| scale * y[j] / r - w[j]).collect()
                } else {
                    // ∂ at the origin is the ball of radius `scale`.
                    let rw = norm(w);
                    let s = if rw > *scale { scale / rw } else { 1.0 };
                    w.iter().map(|v| s * v - v).collect()
                }
            }
            ConvexKind::Box { lower, upper } => (0..m)
                .map(|j| {
                    let at_up = y[j] >= upper[j] - FEAS_TOL;
                    let at_lo = y[j] <= lower[j] + FEAS_TOL;
                    let v = match (at_lo, at_up) {
                        (true, true) => w[j],
                        (false, true) => w[j].max(0.0),
                        (true, false) => w[j].min(0.0),
                        (false, false) => 0.0,
                    };
                    v - w[j]
                })
                .collect(),
            ConvexKind::Ball { center, radius } => {
                let d = crate::vecops::dist(y, center);
                if d >= radius - FEAS_TOL && d > 0.0 {
                    let n: Vec<f64> = (0..m).map(|j| (y[j] - center[j]) / d).collect();
                    let t = dot(&n, w).max(0.0);
                    (0..m).map(|j| t * n[j] - w[j]).collect()
                } else {
                    w.iter().map(|v| -v).collect()
                }
            }
            ConvexKind::Halfspace { normal, offset } => {
                if dot(normal, y) >= offset - FEAS_TOL * norm(normal) {
                    let t = dot(normal, w).max(0.0) / dot(normal, normal);
                    (0..m).map(|j| t * normal[j] - w[j]).collect()
                } else {
                    w.iter().map(|v| -v).collect()
                }
            }
            ConvexKind::Polyhedron { .. } => {
                // Piecewise-affine projection: (y - P(y + λw))/λ is exactly
                // -P_T(w) once λ is below the active-set change.
                let lam = 1e-6;
                let shifted: Vec<f64> = (0..m).map(|j| y[j] + lam * w[j]).collect();
                let mut p = vec![0.0; m];
                self.prox_into(&shifted, lam, &mut p);
                (0..m).map(|j| (y[j] - p[j]) / lam).collect()
            }
        }
    }

    fn default_anchor(&self) -> Vec<f64> {
        let m = self.dim();
        match self {
            ConvexKind::Quadratic { lambda, center, linear } => (0..m)
                .map(|j| center[j] - if linear.is_empty() { 0.0 } else { linear[j] / lambda })
                .collect(),
            _ => {
                let mut out = vec![0.0; m];
                self.prox_into(&vec![0.0; m], 1.0, &mut out);
                if self.is_indicator() {
                    out
                } else {
                    vec![0.0; m]
                }
            }
        }
    }

    /// A radius r0 with B(u0, r0) inside the domain and an upper bound c0 on
    /// phi over that ball, when one exists.
    fn default_interior(&self, u0: &[f64]) -> Option<InteriorBall> {
        match self {
            ConvexKind::Zero { .. } => Some(InteriorBall { radius: 1.0, bound: 0.0 }),
            ConvexKind::Quadratic { lambda, center, linear } => {
                let d = crate::vecops::dist(u0, center);
                let lin = if linear.is_empty() { 0.0 } else { dot(linear, u0) + norm(linear) };
                Some(InteriorBall { radius: 1.0, bound: 0.5 * lambda * (d + 1.0).powi(2) + lin })
            }
            ConvexKind::ScaledNorm { scale, .. } => {
                Some(InteriorBall { radius: 1.0, bound: scale * (norm(u0) + 1.0) })
            }
            ConvexKind::Box { lower, upper } => {
                let r = u0
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| (v - l).min(u - v))
                    .fold(f64::INFINITY, f64::min);
                positive_radius(r)
            }
            ConvexKind::Ball { center, radius } => positive_radius(radius - crate::vecops::dist(u0, center)),
            ConvexKind::Halfspace { normal, offset } => positive_radius((offset - dot(normal, u0)) / norm(normal)),
            ConvexKind::Polyhedron { normals, offsets } => {
                let r = normals
                    .iter()
                    .zip(offsets)
                    .map(|(a, b)| (b - dot(a, u0)) / norm(a))
                    .fold(f64::INFINITY, f64::min);
                positive_radius(r)
            }
        }
    }
}

fn positive_radius(r: f64) -> Option<InteriorBall> {
    if r > 0.0 && r.is_finite() {
        Some(InteriorBall { radius: r, bound: 0.0 })
    } else {
        None
    }
}

fn project_halfspace(x: &mut [f64], normal: &[f64], offset: f64) {
    let excess = dot(normal, x) - offset;
    if excess > 0.0 {
        let t = excess / dot(normal, normal);
        for (xi, ai) in x.iter_mut().zip(normal) {
            *xi -= t * ai;
        }
    }
}

/// Dykstra's cyclic projection onto an intersection of halfspaces. Returns
/// the number of sweeps used.
fn dykstra(y: &[f64], normals: &[Vec<f64>], offsets: &[f64], out: &mut [f64]) -> usize {
    let m = y.len();
    out.copy_from_slice(y);
    let mut corr = vec![vec![0.0; m]; normals.len()];
    let mut z = vec![0.0; m];
    let mut prev = vec![0.0; m];
    for sweep in 1..=DYKSTRA_CAP {
        prev.copy_from_slice(out);
        for (j, (a, b)) in normals.iter().zip(offsets).enumerate() {
            for i in 0..m {
                z[i] = out[i] + corr[j][i];
            }
            out.copy_from_slice(&z);
            project_halfspace(out, a, *b);
            for i in 0..m {
                corr[j][i] = z[i] - out[i];
            }
        }
        let change = crate::vecops::dist(&prev, out);
        let violation = normals
            .iter()
            .zip(offsets)
            .map(|(a, b)| ((dot(a, out) - b) / norm(a)).max(0.0))
            .fold(0.0, f64::max);
        if violation <= DYKSTRA_TOL && change <= 1e-3 * DYKSTRA_TOL * (1.0 + norm(out)) {
            return sweep;
        }
    }
    DYKSTRA_CAP
}

#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub point: Vec<f64>,
    pub slope: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteriorBall {
    /// r0
    pub radius: f64,
    /// c0, an upper bound of phi on the closed ball B(u0, r0).
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct Tilt {
    point: Vec<f64>,
    slope: Vec<f64>,
    offset: f64,
}

/// A proper convex l.s.c. function with value, prox and subgradient access.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexSpec {
    kind: ConvexKind,
    anchor: Anchor,
    interior: Option<InteriorBall>,
    tilt: Option<Tilt>,
}

impl ConvexSpec {
    /// Builds the function with its default anchor (a minimizer, slope 0)
    /// and default interior ball.
    pub fn new(kind: ConvexKind) -> Result<Self> {
        kind.validate()?;
        let point = kind.default_anchor();
        let interior = kind.default_interior(&point);
        let slope = vec![0.0; kind.dim()];
        Ok(Self { kind, anchor: Anchor { point, slope }, interior, tilt: None })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(ConvexKind::Zero { dim }).expect("zero function is valid")
    }

    pub fn indicator_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(ConvexKind::Box { lower, upper })
    }

    pub fn quadratic(lambda: f64, dim: usize) -> Result<Self> {
        Self::new(ConvexKind::Quadratic { lambda, center: vec![0.0; dim], linear: Vec::new() })
    }

    /// Replaces the designated pair (u0, û0) ∈ ∂phi. The interior ball is
    /// recomputed around the new point.
    pub fn with_anchor(mut self, point: Vec<f64>, slope: Vec<f64>) -> Result<Self> {
        if point.len() != self.dim() || slope.len() != self.dim() {
            return Err(Error::config("convex: anchor has the wrong dimension"));
        }
        ensure_finite(&point, "anchor").map_err(|e| Error::config(e.to_string()))?;
        ensure_finite(&slope, "anchor_slope").map_err(|e| Error::config(e.to_string()))?;
        if !self.in_domain(&point) {
            return Err(Error::config("convex: anchor lies outside Dom(phi)"));
        }
        self.interior = self.kind.default_interior(&point);
        self.anchor = Anchor { point, slope };
        Ok(self)
    }

    pub fn with_interior(mut self, radius: f64, bound: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && bound.is_finite()) {
            return Err(Error::config("convex: interior radius must be positive, bound finite"));
        }
        self.interior = Some(InteriorBall { radius, bound });
        Ok(self)
    }

    pub fn without_interior(mut self) -> Self {
        self.interior = None;
        self
    }

    pub fn kind(&self) -> &ConvexKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn anchor(&self) -> &Anchor {
        &self.anchor
    }

    pub fn interior(&self) -> Option<InteriorBall> {
        self.interior
    }

    /// True for phi ≡ 0 (untilted), where the problem reduces to a BSDE.
    pub fn is_free(&self) -> bool {
        matches!(self.kind, ConvexKind::Zero { .. }) && self.tilt.as_ref().is_none_or(|t| t.slope.iter().all(|s| *s == 0.0))
    }

    pub fn is_indicator(&self) -> bool {
        self.kind.is_indicator() && self.tilt.is_none()
    }

    /// Whether `prox` is an iterative approximation rather than a closed form.
    pub fn prox_is_iterative(&self) -> bool {
        matches!(self.kind, ConvexKind::Polyhedron { .. })
    }

    /// phi(u0) = 0 = min phi, i.e. the anchor slope vanishes.
    pub fn is_normalized(&self) -> bool {
        self.anchor.slope.iter().all(|s| *s == 0.0) && self.value(&self.anchor.point) == 0.0
    }

    pub fn in_domain(&self, y: &[f64]) -> bool {
        self.kind.in_domain(y)
    }

    /// phi(y), `+∞` outside the domain.
    pub fn value(&self, y: &[f64]) -> f64 {
        let base = self.kind.value(y);
        match &self.tilt {
            Some(t) if base.is_finite() => {
                let lin: f64 = t.slope.iter().zip(y.iter().zip(&t.point)).map(|(s, (a, b))| s * (a - b)).sum();
                base - t.offset - lin
            }
            _ => base,
        }
    }

    /// The resolvent `J_λ(y) = (I + λ∂phi)^{-1}(y)`.
    pub fn prox(&self, y: &[f64], lambda: f64) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.prox_into(y, lambda, &mut out);
        out
    }

    pub fn prox_into(&self, y: &[f64], lambda: f64, out: &mut [f64]) {
        match &self.tilt {
            Some(t) => {
                let shifted: Vec<f64> = y.iter().zip(&t.slope).map(|(a, s)| a + lambda * s).collect();
                self.kind.prox_into(&shifted, lambda, out);
            }
            None => self.kind.prox_into(y, lambda, out),
        }
    }

    /// Minimal-norm element of ∂phi(y), or `None` outside Dom(∂phi).
    pub fn subgrad_at(&self, y: &[f64]) -> Option<Vec<f64>> {
        if !self.in_domain(y) {
            return None;
        }
        let zero = vec![0.0; y.len()];
        let w = self.tilt.as_ref().map_or(&zero, |t| &t.slope);
        Some(self.kind.min_norm_shifted(y, w))
    }

    /// `sup { phi(u0 + r0 v) : |v| ≤ 1 }` bound, if an interior ball exists.
    pub fn sharp_bound(&self) -> Option<f64> {
        self.interior.map(|b| b.bound)
    }

    fn tilted(&self) -> Self {
        let u0 = self.anchor.point.clone();
        let slope = self.anchor.slope.clone();
        let offset = self.value(&u0);
        let interior = self.interior.map(|b| InteriorBall {
            radius: b.radius,
            bound: b.bound - offset + b.radius * norm(&slope),
        });
        let base_tilt = self.tilt.clone();
        // Compose with an existing tilt by accumulating slope and offset.
        let tilt = match base_tilt {
            None => Tilt { point: u0.clone(), slope, offset },
            Some(prev) => {
                let total: Vec<f64> = prev.slope.iter().zip(&slope).map(|(a, b)| a + b).collect();
                // phi_prev(y) - offset - <s, y - u0> rewritten around prev.point.
                let shift: f64 = slope.iter().zip(prev.point.iter().zip(&u0)).map(|(s, (p, u))| s * (p - u)).sum();
                Tilt { point: prev.point, slope: total, offset: prev.offset + offset + shift }
            }
        };
        Self {
            kind: self.kind.clone(),
            anchor: Anchor { point: u0.clone(), slope: vec![0.0; u0.len()] },
            interior,
            tilt: Some(tilt),
        }
    }
}

/// Shifts the problem so that phi(u0) = 0 ≤ phi and 0 ∈ ∂phi(u0):
/// phĩ(y) = phi(y) − phi(u0) − ⟨û0, y − u0⟩ and F̃ = F − û0.
pub fn normalize(phi: &ConvexSpec, driver: &DriverSpec) -> Result<(ConvexSpec, DriverSpec)> {
    if phi.anchor.point.len() != phi.dim() {
        return Err(Error::config("normalize: convex function has no anchor"));
    }
    if !phi.value(&phi.anchor.point).is_finite() {
        return Err(Error::config("normalize: anchor is outside Dom(phi)"));
    }
    let driver = driver.shifted_by(&phi.anchor.slope);
    if phi.is_normalized() {
        return Ok((phi.clone(), driver));
    }
    Ok((phi.tilted(), driver))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn box_prox_and_value() {
        let b = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(b.prox(&[2.0], 0.5), vec![1.0]);
        assert_eq!(b.value(&[0.3]), 0.0);
        assert_eq!(b.value(&[1.5]), f64::INFINITY);
        assert_eq!(b.interior(), Some(InteriorBall { radius: 1.0, bound: 0.0 }));
    }

    #[test]
    fn half_line_has_no_interior_ball_at_origin() {
        let b = ConvexSpec::indicator_box(vec![0.0], vec![f64::INFINITY]).unwrap();
        assert_eq!(b.anchor().point, vec![0.0]);
        assert!(b.interior().is_none());
    }

    #[test]
    fn subgradient_on_box_boundary_is_minimal_norm() {
        let b = ConvexSpec::indicator_box(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(b.subgrad_at(&[1.0]), Some(vec![0.0]));
        assert_eq!(b.subgrad_at(&[3.0]), None);
    }

    #[test]
    fn normalize_quadratic_with_linear_term() {
        // phi(y) = ½|y|² + y, anchored at (0, 1).
        let phi = ConvexSpec::new(ConvexKind::Quadratic { lambda: 1.0, center: vec![0.0], linear: vec![1.0] })
            .unwrap()
            .with_anchor(vec![0.0], vec![1.0])
            .unwrap();
        let driver = DriverSpec::zero(1, 1);
        let (nphi, ndriver) = normalize(&phi, &driver).unwrap();
        for y in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            assert_abs_diff_eq!(nphi.value(&[y]), 0.5 * y * y, epsilon = 1e-14);
            assert_abs_diff_eq!(nphi.prox(&[y], 0.5)[0], y / 1.5, epsilon = 1e-14);
        }
        assert_eq!(nphi.value(&[0.0]), 0.0);
        let f = ndriver.eval(0.0, &[0.0], &[0.0], &[0.0]);
        assert_eq!(f, vec![-1.0]);
    }

    #[test]
    fn normalize_is_identity_for_normalized_input() {
        let phi = ConvexSpec::new(ConvexKind::Quadratic { lambda: 1.0, center: vec![1.0], linear: vec![] }).unwrap();
        assert_eq!(phi.anchor().point, vec![1.0]);
        let (nphi, _) = normalize(&phi, &DriverSpec::zero(1, 1)).unwrap();
        assert_eq!(nphi, phi);
    }

    #[test]
    fn tilted_subgradient_on_boundary() {
        // Box [-1,1] anchored at the boundary point 1 with outward slope 2.
        let phi = ConvexSpec::indicator_box(vec![-1.0], vec![1.0])
            .unwrap()
            .with_anchor(vec![1.0], vec![2.0])
            .unwrap();
        let (nphi, _) = normalize(&phi, &DriverSpec::zero(1, 1)).unwrap();
        // ∂phĩ(1) = [0,∞) - 2, minimal norm element 0.
        assert_eq!(nphi.subgrad_at(&[1.0]), Some(vec![0.0]));
        assert_eq!(nphi.subgrad_at(&[0.0]), Some(vec![-2.0]));
        assert_eq!(nphi.value(&[1.0]), 0.0);
        assert!(nphi.value(&[0.0]) > 0.0);
    }

    #[test]
    fn dykstra_matches_closed_form_on_a_box() {
        let poly = ConvexSpec::new(ConvexKind::Polyhedron {
            normals: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            offsets: vec![1.0, 1.0, 1.0, 1.0],
        })
        .unwrap();
        let boxed = ConvexSpec::indicator_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        for y in [[3.0, 0.2], [-4.0, 5.0], [0.1, -0.3], [2.0, -2.0]] {
            let a = poly.prox(&y, 1.0);
            let b = boxed.prox(&y, 1.0);
            assert!(crate::vecops::dist(&a, &b) < 1e-8, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ConvexSpec::indicator_box(vec![1.0], vec![-1.0]).is_err());
        assert!(ConvexSpec::new(ConvexKind::Ball { center: vec![0.0], radius: 0.0 }).is_err());
        assert!(ConvexSpec::zero(1).with_anchor(vec![0.0, 1.0], vec![0.0]).is_err());
    }
}

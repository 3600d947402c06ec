use super::{normalize, ConvexSpec};
use crate::error::{ensure_finite, Error, Result};
use crate::model::DriverSpec;
use crate::report::{EstimateReport, Status, Worst};
use crate::rng::{self, domain};
use crate::vecops::{dist, dot, lerp, norm, norm2};

/// phi together with a penalization parameter ε.
#[derive(Clone, Copy, Debug)]
pub struct YosidaView<'a> {
    pub base: &'a ConvexSpec,
    pub epsilon: f64,
}

impl<'a> YosidaView<'a> {
    pub fn new(base: &'a ConvexSpec, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::input(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        Ok(Self { base, epsilon })
    }

    /// J_ε(y)
    pub fn resolvent_point(&self, y: &[f64]) -> Vec<f64> {
        self.base.prox(y, self.epsilon)
    }

    pub fn value_unchecked(&self, y: &[f64]) -> f64 {
        let j = self.resolvent_point(y);
        let d2: f64 = y.iter().zip(&j).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 / (2.0 * self.epsilon) + self.base.value(&j)
    }

    pub fn grad_into(&self, y: &[f64], out: &mut [f64]) {
        self.base.prox_into(y, self.epsilon, out);
        for (o, v) in out.iter_mut().zip(y) {
            *o = (v - *o) / self.epsilon;
        }
    }

    pub fn grad_unchecked(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.grad_into(y, &mut out);
        out
    }

    /// The unique y with y + h∇phi_ε(y) = x, through J_ε(y) = J_{ε+h}(x).
    pub fn resolvent_into(&self, h: f64, x: &[f64], out: &mut [f64]) {
        let eps = self.epsilon;
        self.base.prox_into(x, eps + h, out);
        if out == x {
            // Inactive constraint: return x bit-for-bit.
            return;
        }
        let w = 1.0 / (eps + h);
        for (o, xv) in out.iter_mut().zip(x) {
            *o = (eps * xv + h * *o) * w;
        }
    }
}

/// phi_ε(y) = (1/2ε)|y − J_ε y|² + phi(J_ε y).
pub fn yosida_value(view: &YosidaView, y: &[f64]) -> Result<f64> {
    ensure_finite(y, "yosida_value")?;
    Ok(view.value_unchecked(y))
}

/// ∇phi_ε(y) = (y − J_ε y)/ε.
pub fn yosida_grad(view: &YosidaView, y: &[f64]) -> Result<Vec<f64>> {
    ensure_finite(y, "yosida_grad")?;
    Ok(view.grad_unchecked(y))
}

pub fn resolvent_of_yosida(view: &YosidaView, h: f64, x: &[f64]) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::input(format!("step h must be positive and finite, got {h}")));
    }
    ensure_finite(x, "resolvent_of_yosida")?;
    let mut out = vec![0.0; x.len()];
    view.resolvent_into(h, x, &mut out);
    Ok(out)
}

/// Where property checks draw their samples: the cube `u0 ± half_width`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingBox {
    pub half_width: f64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        Self { half_width: 5.0 }
    }
}

fn tolerance_for(phi: &ConvexSpec) -> f64 {
    if phi.prox_is_iterative() {
        1e-8
    } else {
        1e-10
    }
}

/// Checks Lipschitz continuity, monotonicity and the mixed ε/δ inequality
/// of the Yosida gradients on `samples` random pairs.
pub fn check_yosida_inequalities(
    view_a: &YosidaView,
    view_b: &YosidaView,
    samples: usize,
    seed: u64,
) -> EstimateReport {
    check_yosida_inequalities_in(view_a, view_b, samples, seed, SamplingBox::default())
}

pub fn check_yosida_inequalities_in(
    view_a: &YosidaView,
    view_b: &YosidaView,
    samples: usize,
    seed: u64,
    sampling: SamplingBox,
) -> EstimateReport {
    let tol = tolerance_for(view_a.base);
    let mut report = EstimateReport::new("yosida", tol);
    if view_a.base != view_b.base {
        report.note("views do not share the same base function");
        report.set_status(Status::PremiseFailure);
        return report;
    }
    let (eps, delta) = (view_a.epsilon, view_b.epsilon);
    let u0 = &view_a.base.anchor().point;
    let mut rng = rng::keyed(seed, domain::PROPERTY, 0);
    let mut lip_a = Worst::default();
    let mut lip_b = Worst::default();
    let mut mono_a = Worst::default();
    let mut mono_b = Worst::default();
    let mut mixed = Worst::default();
    for _ in 0..samples {
        let x = rng::uniform_in_cube(&mut rng, u0, sampling.half_width);
        let y = rng::uniform_in_cube(&mut rng, u0, sampling.half_width);
        let loc: Vec<f64> = x.iter().chain(&y).copied().collect();
        let dxy = dist(&x, &y);
        let gxa = view_a.grad_unchecked(&x);
        let gya = view_a.grad_unchecked(&y);
        let gxb = view_b.grad_unchecked(&x);
        let gyb = view_b.grad_unchecked(&y);
        let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p - q).collect() };
        let xy = diff(&x, &y);
        lip_a.observe(dxy / eps - dist(&gxa, &gya), &loc);
        lip_b.observe(dxy / delta - dist(&gxb, &gyb), &loc);
        mono_a.observe(dot(&diff(&gxa, &gya), &xy), &loc);
        mono_b.observe(dot(&diff(&gxb, &gyb), &xy), &loc);
        mixed.observe(dot(&diff(&gxa, &gyb), &xy) + (eps + delta) * dot(&gxa, &gyb), &loc);
    }
    report.entry("lipschitz_eps", lip_a, tol);
    report.entry("lipschitz_delta", lip_b, tol);
    report.entry("monotone_eps", mono_a, tol);
    report.entry("monotone_delta", mono_b, tol);
    report.entry("mixed_eps_delta", mixed, tol);
    report.term("epsilon", eps, None);
    report.term("delta", delta, None);
    report
}

/// Every sampled property of phi and of its Yosida regularizations: value
/// convexity, prox nonexpansiveness and optimality, anchor validity, the
/// interior ball, the envelope identity, the subgradient inequality of
/// ∇phi_ε at J_ε y, the ordering after normalization, monotonicity in ε,
/// the resolvent residual, and the gradient inequalities for (ε, δ).
pub fn convex_property_report(phi: &ConvexSpec, eps: f64, delta: f64, samples: usize, seed: u64) -> Result<EstimateReport> {
    let sampling = SamplingBox::default();
    let tol = tolerance_for(phi);
    let view = YosidaView::new(phi, eps)?;
    let view_d = YosidaView::new(phi, delta)?;
    let mut report = check_yosida_inequalities_in(&view, &view_d, samples, seed, sampling);
    report.name = "convex_properties".into();

    let (nphi, _) = normalize(phi, &DriverSpec::zero(phi.dim(), 1))?;
    let nview = YosidaView::new(&nphi, eps)?;
    let u0 = phi.anchor().point.clone();
    let slope = phi.anchor().slope.clone();
    let f_u0 = phi.value(&u0);
    let eps_grid = [eps / 4.0, eps / 2.0, eps, 2.0 * eps, 4.0 * eps];

    let mut rng = rng::keyed(seed, domain::PROPERTY, 1);
    let mut convexity = Worst::default();
    let mut nonexpansive = Worst::default();
    let mut optimality = Worst::default();
    let mut anchor = Worst::default();
    let mut interior = Worst::default();
    let mut envelope = Worst::default();
    let mut subgradient = Worst::default();
    let mut ordering = Worst::default();
    let mut eps_monotone = Worst::default();
    let mut resolvent = Worst::default();
    let mut lambda_rng = rng::keyed(seed, domain::PROPERTY, 2);

    for _ in 0..samples {
        let x = rng::uniform_in_cube(&mut rng, &u0, sampling.half_width);
        let y = rng::uniform_in_cube(&mut rng, &u0, sampling.half_width);
        let v = rng::uniform_in_cube(&mut rng, &u0, sampling.half_width);
        let theta = rng::open01(&mut rng);
        let lambda = 0.05 + 2.0 * rng::open01(&mut lambda_rng);
        let h = 0.001 + rng::open01(&mut lambda_rng);

        // Points of the domain: project through the prox of the indicator
        // part. For finite-valued phi any point will do.
        let xd = if phi.kind().is_indicator() { phi.prox(&x, 1.0) } else { x.clone() };
        let yd = if phi.kind().is_indicator() { phi.prox(&y, 1.0) } else { y.clone() };
        let vd = if phi.kind().is_indicator() { phi.prox(&v, 1.0) } else { v.clone() };

        let mid = lerp(theta, &xd, &yd);
        let fx = phi.value(&xd);
        let fy = phi.value(&yd);
        convexity.observe(theta * fx + (1.0 - theta) * fy - phi.value(&mid), &mid);

        let px = phi.prox(&x, lambda);
        let py = phi.prox(&y, lambda);
        nonexpansive.observe(dist(&x, &y) - dist(&px, &py), &x);

        let obj = |p: &[f64]| norm2(&crate::vecops::sub(&x, p)) / (2.0 * lambda) + phi.value(p);
        optimality.observe(obj(&v) - obj(&px), &v);
        optimality.observe(obj(&vd) - obj(&px), &vd);

        let lin = dot(&slope, &crate::vecops::sub(&vd, &u0));
        anchor.observe(phi.value(&vd) - f_u0 - lin, &vd);

        if let Some(b) = phi.interior() {
            // Uniform direction in the unit ball via the cube sample.
            let dir = crate::vecops::sub(&v, &u0);
            let r = norm(&dir);
            let shrink = if r > 0.0 { theta.powf(1.0 / dir.len() as f64) * b.radius / r } else { 0.0 };
            let w: Vec<f64> = u0.iter().zip(&dir).map(|(c, d)| c + shrink * d).collect();
            interior.observe(b.bound - phi.value(&w), &w);
        }

        let j = view.resolvent_point(&x);
        let direct = norm2(&crate::vecops::sub(&x, &j)) / (2.0 * eps) + phi.value(&j);
        envelope.observe(-(yosida_value(&view, &x)? - direct).abs(), &x);

        let g = view.grad_unchecked(&x);
        let gap = phi.value(&vd) - phi.value(&j) - dot(&g, &crate::vecops::sub(&vd, &j));
        subgradient.observe(gap, &vd);

        let ny = if nphi.kind().is_indicator() { nphi.prox(&y, 1.0) } else { y.clone() };
        let nj = nview.resolvent_point(&ny);
        let chain = [nphi.value(&u0), nphi.value(&nj), nview.value_unchecked(&ny), nphi.value(&ny)];
        ordering.observe(-chain[0].abs(), &u0);
        for pair in chain.windows(2) {
            ordering.observe(pair[1] - pair[0], &ny);
        }
        let mut prev = f64::INFINITY;
        for e in eps_grid {
            let val = YosidaView { base: phi, epsilon: e }.value_unchecked(&x);
            eps_monotone.observe(prev - val, &x);
            prev = val;
        }

        let yr = resolvent_of_yosida(&view, h, &x)?;
        let gr = view.grad_unchecked(&yr);
        let residual: f64 = yr.iter().zip(&gr).zip(&x).map(|((a, b), c)| (a + h * b - c).powi(2)).sum::<f64>().sqrt();
        resolvent.observe(-residual, &x);
    }

    report.entry("convexity", convexity, tol);
    report.entry("prox_nonexpansive", nonexpansive, tol);
    report.entry("prox_optimality", optimality, tol);
    report.entry("anchor_subgradient", anchor, tol);
    if phi.interior().is_some() {
        report.entry("interior_ball", interior, tol);
    }
    report.entry("envelope_identity", envelope, tol);
    report.entry("grad_subgradient", subgradient, tol);
    report.entry("normalized_ordering", ordering, tol);
    report.entry("monotone_in_epsilon", eps_monotone, tol);
    report.entry("resolvent_residual", resolvent, tol);
    Ok(report)
}

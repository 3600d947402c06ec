//! Proximal maps, Moreau-Yosida envelopes and the implicit penalized step
//! for every entry of the shipped catalog.

use bsvi::convex::{catalog, convex_property_report, resolvent_of_yosida, yosida_grad, yosida_value, YosidaView};
use bsvi::oracle::fixed_point_resolvent;

fn main() -> bsvi::Result<()> {
    let eps = 0.1;
    let h = 0.05;
    for (name, phi) in catalog() {
        let x: Vec<f64> = (0..phi.dim()).map(|c| 1.5 - c as f64).collect();
        let view = YosidaView::new(&phi, eps)?;
        let j = phi.prox(&x, eps);
        let env = yosida_value(&view, &x)?;
        let grad = yosida_grad(&view, &x)?;
        let step = resolvent_of_yosida(&view, h, &x)?;
        let check = fixed_point_resolvent(&view, h, &x, 1e-12, 100_000)?;
        let report = convex_property_report(&phi, eps, eps / 2.0, 2_000, 1)?;
        println!("{name:>16}: J_ε x = {j:.4?}, φ_ε(x) = {env:.4}, ∇φ_ε(x) = {grad:.4?}");
        println!("{:>16}  resolvent {step:.6?} (fixed point {check:.6?}), properties: {:?}", "", report.status);
    }
    Ok(())
}

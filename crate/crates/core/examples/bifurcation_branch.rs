//! Continues the cycle branch from the Hopf point for a linear and a tuned
//! nonlinear absorber and lists the detected folds and torus bifurcations.
use lco_guard::continuation::{branch_from_hopf, ContinuationOptions};
use lco_guard::model::DimensionlessSystem;

fn main() -> lco_guard::Result<()> {
    let opts = ContinuationOptions::default();
    for beta3 in [0.0, 0.018] {
        let s = DimensionlessSystem::linear(0.05, 0.0, 0.12, 0.985).with_nonlinear(0.3, beta3);
        let b = branch_from_hopf(&s, &opts)?;
        println!(
            "beta3 {beta3}: onset {:?} at mu1 {:.5}, {} orbits, bistable {}",
            b.onset(), b.origin.mu1_cr, b.points.len(), b.bistable()
        );
        for e in &b.events {
            println!("  {} at mu1 {:.5}, amplitude {:.4}", e.kind.name(), e.mu1, e.amplitude);
        }
    }
    Ok(())
}

//! Eigenvalue crossings of the trivial equilibrium as primary damping varies.
use lco_guard::continuation::equilibrium_branch;
use lco_guard::model::DimensionlessSystem;
use lco_guard::stability::{linspace, optimal_tuning};

fn main() -> lco_guard::Result<()> {
    let t = optimal_tuning(0.05);
    let s = DimensionlessSystem::linear(0.05, 0.0, 0.097, t.gamma_opt);
    let eq = equilibrium_branch(&s, &linspace(-0.05, 0.2, 51))?;
    for e in &eq.events {
        println!("{} at mu1 {:.7}", e.kind.name(), e.mu1);
    }
    Ok(())
}

//! Optimal linear absorber tuning for a few mass ratios, and the same
//! system expressed in physical units.
use lco_guard::model::PhysicalSystem;
use lco_guard::stability::optimal_tuning;

fn main() -> lco_guard::Result<()> {
    for eps in [0.01, 0.02, 0.05, 0.1] {
        let t = optimal_tuning(eps);
        println!("eps {eps:<5} gamma_opt {:.6}  mu2_opt {:.6}  mu1_max {:.6}", t.gamma_opt, t.mu2_opt, t.mu1_max);
    }
    let phys = PhysicalSystem {
        m1: 2.0, c1: 0.0, k1: 800.0, knl1: 0.0, m2: 0.1, c2: 0.8, k2: 38.0,
        knl2_2: 0.0, knl2_3: 0.0, knl2_5: 0.0,
    };
    let s = phys.nondimensionalize()?;
    println!("physical example: eps {:.3}, gamma {:.4}, mu2 {:.4}", s.eps, s.gamma, s.mu2);
    Ok(())
}

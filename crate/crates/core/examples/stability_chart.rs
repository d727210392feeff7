//! Routh-Hurwitz verdicts on a coarse grid and the critical primary damping
//! along the tuning ratio.
use lco_guard::model::DimensionlessSystem;
use lco_guard::stability::{critical_mu1, linspace, routh_hurwitz, stability_chart, ChartGrid};

fn main() -> lco_guard::Result<()> {
    let eps = 0.05;
    let grid = ChartGrid { mu1: linspace(0.0, 0.2, 21), mu2: vec![0.12], gamma: linspace(0.9, 1.05, 7) };
    let chart = stability_chart(eps, grid)?;
    for (k, g) in chart.grid.gamma.iter().enumerate() {
        let row: String = (0..chart.grid.mu1.len())
            .map(|i| if chart.node(i, 0, k).stable { '.' } else { '#' })
            .collect();
        println!("gamma {g:.3} {row}  mu1_cr {:.5}", critical_mu1(eps, 0.12, *g));
    }
    let r = routh_hurwitz(&DimensionlessSystem::linear(eps, 0.15, 0.12, 0.97));
    println!("mu1 = 0.15 past the boundary: {:?}, {} unstable pair(s)", r.verdict, r.unstable_pairs);
    Ok(())
}

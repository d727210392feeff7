//! Nonlinear energy sink: linear stability boundary over its damping, and
//! time responses next to the plain primary and the tuned nonlinear absorber.
use lco_guard::nes::{compare_time_series, nes_boundary, TimeSeriesOptions};
use lco_guard::stability::linspace;

fn main() -> lco_guard::Result<()> {
    let b = nes_boundary(0.05, &linspace(0.0, 4.0, 9))?;
    for p in &b.points {
        println!("Lambda {:.2}: mu1_max {:.5}", p.lambda, p.mu1_max);
    }
    println!("best Lambda {:.6}, mu1_max {:.6}", b.lambda_best, b.mu1_max_best);
    let r = compare_time_series(0.05, 0.025, 4.0 / 3.0, &TimeSeriesOptions::default())?;
    for c in &r.cases {
        println!("{:<12} {:?}, trailing amplitude {:.3e}", c.case, c.outcome, c.trailing_amplitude);
    }
    Ok(())
}

//! Local LCO amplitude a fixed distance past onset, over a tuning grid.
use lco_guard::lco::{iso_amplitude_map, lco_amplitude_local};
use lco_guard::normal_form::beta3_tuning;
use lco_guard::stability::{linspace, optimal_tuning};

fn main() -> lco_guard::Result<()> {
    let eps = 0.05;
    let a = 0.08;
    let t = optimal_tuning(eps);
    let map = iso_amplitude_map(
        eps, a, beta3_tuning(eps, a), 0.01,
        &linspace(0.06, 0.2, 15), &linspace(0.94, 1.02, 17),
    )?;
    let m = map.minimum().expect("valid cells");
    println!("{} cells, smallest q1_max {:.4} at mu2 {:.4}, gamma {:.4}", map.cells.len(), m.q1_max, m.mu2, m.gamma);
    let e = lco_amplitude_local(eps, t.mu2_opt * 1.1, t.gamma_opt, a, beta3_tuning(eps, a), 0.12)?;
    println!("single estimate: q1_max {:.4} (valid {})", e.q1_max, e.valid);
    Ok(())
}

//! Criticality of the Hopf bifurcation and its split into contributions of
//! the primary and absorber nonlinearities.
use lco_guard::normal_form::{beta3_tuning, critical_alpha3, delta, delta_decomposition, AbsorberRule};

fn main() -> lco_guard::Result<()> {
    let eps = 0.05;
    for gamma in [0.970, 0.985] {
        let d = delta_decomposition(eps, 0.12, gamma)?;
        println!("gamma {gamma}: {d:?}");
        for (a, b) in [(0.3, 0.0), (0.3, beta3_tuning(eps, 0.3))] {
            let v = delta(eps, 0.12, gamma, a, b)?;
            println!("  alpha3 {a} beta3 {b:.5}: delta {:+.4e} {:?}", v.delta, v.criticality);
        }
        for rule in [AbsorberRule::Ltva, AbsorberRule::Nltva] {
            let c = critical_alpha3(eps, 0.12, gamma, rule)?;
            println!("  {} critical alpha3 {:?}", rule.name(), c.value);
        }
    }
    Ok(())
}

//! Monte Carlo probability that a mistuned absorber still gives a
//! supercritical bifurcation.
use lco_guard::normal_form::{supercritical_probability, AbsorberRule};

fn main() -> lco_guard::Result<()> {
    for alpha3 in [0.1, 0.5, 1.0] {
        let ltva = supercritical_probability(0.05, alpha3, AbsorberRule::Ltva, 20_000, 1)?;
        let nltva = supercritical_probability(0.05, alpha3, AbsorberRule::Nltva, 20_000, 1)?;
        println!("alpha3 {alpha3}: linear {ltva:.4}  tuned nonlinear {nltva:.4}");
    }
    Ok(())
}

//! Compares quadratic, cubic and quintic absorber springs of equal force
//! at a reference stroke.
use lco_guard::continuation::{similarity_study, AbsorberKind, ContinuationOptions};

fn main() -> lco_guard::Result<()> {
    let (eps, alpha3) = (0.05, 0.3);
    let opts = ContinuationOptions::default();
    for kind in AbsorberKind::ALL {
        let c = kind.default_coefficient(eps, alpha3);
        let o = similarity_study(eps, 0.12, 0.985, alpha3, kind, c, &opts)?;
        println!(
            "{:<9} coefficient {:.5}: onset {:?}, {} folds, max stable amplitude {:.3}",
            kind.name(), o.coefficient, o.onset, o.folds, o.max_stable_amplitude
        );
    }
    Ok(())
}

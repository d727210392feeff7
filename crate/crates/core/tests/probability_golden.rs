use lco_guard::normal_form::{supercritical_probability, AbsorberRule, DeltaDecomposition};
use lco_guard::normal_form::hopf_point;
use lco_guard::stability::optimal_tuning;

/// Stored value for eps = 0.05, alpha3 = 0.5, linear absorber, 1e5 draws, seed 1.
const GOLDEN: f64 = 0.51188;

#[test]
fn seeded_estimate_is_reproducible() {
    let p = supercritical_probability(0.05, 0.5, AbsorberRule::Ltva, 100_000, 1).unwrap();
    assert_eq!(p, GOLDEN);
}

/// Deterministic midpoint rule over the same uniform window.
#[test]
fn estimate_agrees_with_quadrature() {
    let eps = 0.05;
    let opt = optimal_tuning(eps);
    let n = 400;
    let mut hits = 0usize;
    for i in 0..n {
        let g = opt.gamma_opt * (1.0 + 0.01 * (-1.0 + (2 * i + 1) as f64 / n as f64));
        for j in 0..n {
            let m = opt.mu2_opt * (1.0 + 0.05 * (-1.0 + (2 * j + 1) as f64 / n as f64));
            let h = hopf_point(eps, m, g).unwrap();
            hits += usize::from(DeltaDecomposition::from_hopf(&h).delta(0.5, 0.0) < 0.0);
        }
    }
    let quad = hits as f64 / (n * n) as f64;
    assert!((GOLDEN - quad).abs() < 0.01, "quadrature {quad}");
}

#[test]
fn tuned_nonlinear_absorber_is_always_supercritical_for_small_alpha3() {
    let p = supercritical_probability(0.05, 0.1, AbsorberRule::Nltva, 5_000, 3).unwrap();
    assert_eq!(p, 1.0);
}

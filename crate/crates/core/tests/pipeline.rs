//! End-to-end checks across modules.

use lco_guard::continuation::{branch_from_hopf, equilibrium_branch, ContinuationOptions, EventKind};
use lco_guard::lco::{estimate_at, iso_amplitude_map};
use lco_guard::model::{DimensionlessSystem, StateVector};
use lco_guard::normal_form::{beta3_tuning, delta, hopf_point_of, Criticality};
use lco_guard::ode::integrate;
use lco_guard::stability::{critical_mu1, linspace, optimal_tuning, routh_hurwitz};

const EPS: f64 = 0.05;

#[test]
fn supercritical_estimate_matches_a_long_simulation() {
    let s = DimensionlessSystem::linear(EPS, 0.0, 0.12, 0.985).with_nonlinear(0.3, 0.0136);
    let hopf = hopf_point_of(&s).unwrap();
    let mu1 = hopf.mu1_cr + 0.003;
    let est = estimate_at(&s, &hopf, mu1).unwrap();
    let tr = integrate(&s.with_mu1(mu1), StateVector::new(0.05, 0.0, 0.0, 0.0), 6000.0, 1e-9, 24001).unwrap();
    let peak = tr.peak_q1_after(5000.0);
    assert!((peak / est.q1_max - 1.0).abs() < 0.05, "simulation {peak} vs estimate {}", est.q1_max);
}

#[test]
fn below_onset_the_equilibrium_attracts() {
    let s = DimensionlessSystem::linear(EPS, 0.0, 0.12, 0.985).with_nonlinear(0.3, 0.0136);
    let mu1 = critical_mu1(EPS, 0.12, 0.985) - 0.01;
    assert!(routh_hurwitz(&s.with_mu1(mu1)).stable);
    let tr = integrate(&s.with_mu1(mu1), StateVector::new(0.05, 0.0, 0.0, 0.0), 3000.0, 1e-9, 3001).unwrap();
    assert!(tr.peak_q1_after(2500.0) < 1e-4);
}

#[test]
fn equilibrium_crossing_agrees_with_the_analytic_boundary() {
    let s = DimensionlessSystem::linear(EPS, 0.0, 0.12, 0.985);
    let eq = equilibrium_branch(&s, &linspace(0.0, 0.2, 41)).unwrap();
    let first = eq.events.iter().find(|e| e.kind == EventKind::Hopf).unwrap();
    assert!((first.mu1 - critical_mu1(EPS, 0.12, 0.985)).abs() < 1e-8);
}

#[test]
fn criticality_decides_branch_direction() {
    let opts = ContinuationOptions::default();
    for (gamma, a, b) in [(0.970, 0.3, 0.0), (0.970, 0.3, 0.0136), (0.985, 0.3, 0.0), (0.970, 0.0, 0.0)] {
        let s = DimensionlessSystem::linear(EPS, 0.0, 0.12, gamma).with_nonlinear(a, b);
        let verdict = delta(EPS, 0.12, gamma, a, b).unwrap().criticality;
        let branch = branch_from_hopf(&s, &opts).unwrap();
        assert_eq!(branch.onset(), verdict, "gamma {gamma} ({a}, {b})");
    }
}

#[test]
fn iso_amplitude_minimum_is_supercritical() {
    let t = optimal_tuning(EPS);
    let a = 0.08;
    let mu2 = linspace(0.9 * t.mu2_opt, 1.1 * t.mu2_opt, 9);
    let gamma = linspace(0.99 * t.gamma_opt, 1.01 * t.gamma_opt, 9);
    let map = iso_amplitude_map(EPS, a, beta3_tuning(EPS, a), 0.01, &mu2, &gamma).unwrap();
    let m = map.minimum().unwrap();
    assert!(m.valid && m.q1_max > 0.0);
    assert!(hopf_point_of(&DimensionlessSystem::linear(EPS, 0.0, m.mu2, m.gamma)).is_ok());
    assert!(delta(EPS, m.mu2, m.gamma, a, beta3_tuning(EPS, a)).unwrap().criticality == Criticality::Supercritical);
}

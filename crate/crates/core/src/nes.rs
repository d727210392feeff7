//! Nonlinear energy sink (absorber without linear spring) and its comparison
//! with the tuned nonlinear absorber.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{branch_from_hopf, ContinuationOptions, LcoBranch};
use crate::error::{Error, Result};
use crate::model::{DimensionlessSystem, StateVector};
use crate::normal_form::beta3_tuning;
use crate::ode::{check_tol, dopri5, OdeOptions};
use crate::stability::{critical_mu1_of, optimal_tuning};

/// Damping `Lambda` and cubic coefficient of the sink used in the time-series
/// comparison.
pub const COMPARISON_LAMBDA: f64 = 1.0;
pub const COMPARISON_NES_BETA3: f64 = 0.5333;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NesConfig {
    pub eps: f64,
    /// `c2 / (m2 omega_n1)`.
    pub lambda: f64,
    pub beta3_nes: f64,
}

impl NesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::domain("eps", "must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::domain("lambda", "must be non-negative"));
        }
        if !self.beta3_nes.is_finite() {
            return Err(Error::domain("beta3_nes", "must be finite"));
        }
        Ok(())
    }

    pub fn system(&self, mu1: f64, alpha3: f64) -> DimensionlessSystem {
        DimensionlessSystem::nes(self.eps, mu1, self.lambda, alpha3, self.beta3_nes)
    }
}

/// Approximate stability limit `mu1_max = (eps / 2) Lambda / (Lambda^2 + 1)`.
pub fn nes_mu1_max(eps: f64, lambda: f64) -> f64 {
    0.5 * eps * lambda / (lambda * lambda + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NesBoundaryPoint {
    pub lambda: f64,
    /// Closed-form approximation.
    pub mu1_max: f64,
    /// Limit from the eigenvalues of the linearisation (zero eigenvalue aside).
    pub mu1_max_eigen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NesBoundary {
    pub eps: f64,
    pub points: Vec<NesBoundaryPoint>,
    pub lambda_best: f64,
    pub mu1_max_best: f64,
}

pub fn nes_boundary(eps: f64, lambdas: &[f64]) -> Result<NesBoundary> {
    if !(eps > 0.0) {
        return Err(Error::domain("eps", "must be positive"));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::domain("lambda", "values must be non-negative"));
    }
    let points = lambdas
        .par_iter()
        .map(|&lambda| NesBoundaryPoint {
            lambda,
            mu1_max: nes_mu1_max(eps, lambda),
            mu1_max_eigen: critical_mu1_of(&DimensionlessSystem::nes(eps, 0.0, lambda, 0.0, 0.0)),
        })
        .collect();
    let lambda_best = slope_bisection(|l| nes_mu1_max_slope(eps, l), 0.0, 10.0);
    Ok(NesBoundary { eps, points, lambda_best, mu1_max_best: nes_mu1_max(eps, lambda_best) })
}

/// Derivative of [`nes_mu1_max`] with respect to `Lambda`.
pub fn nes_mu1_max_slope(eps: f64, lambda: f64) -> f64 {
    let q = lambda * lambda + 1.0;
    0.5 * eps * (1.0 - lambda * lambda) / (q * q)
}

/// Maximiser of a smooth unimodal function on `[a, b]`, by bisection on the
/// sign of its slope (a value comparison stalls near `sqrt` of the round-off).
fn slope_bisection(slope: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    loop {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return mid;
        }
        if slope(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    DecaysToZero,
    SettlesOnLco,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSeriesOptions {
    pub x0: [f64; 4],
    pub tol: f64,
    /// Length of the window over which the trailing amplitude is measured.
    pub window: f64,
    pub max_horizon: f64,
    /// Trailing amplitude below which the response counts as decayed.
    pub decay_threshold: f64,
    /// Largest change of the trailing amplitude between windows.
    pub drift: f64,
    /// Spacing of the stored samples.
    pub sample_dt: f64,
}

impl Default for TimeSeriesOptions {
    fn default() -> Self {
        TimeSeriesOptions {
            x0: [0.01, 0.0, 0.0, 0.0],
            tol: 1e-9,
            window: 100.0,
            max_horizon: 20_000.0,
            decay_threshold: 1e-5,
            drift: 1e-4,
            sample_dt: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: String,
    pub outcome: Outcome,
    pub trailing_amplitude: f64,
    pub horizon: f64,
    #[serde(skip)]
    pub system: DimensionlessSystem,
    /// `(t, x)` at `sample_dt` spacing.
    #[serde(skip)]
    pub series: Vec<(f64, StateVector)>,
}

/// Integrates window by window until the trailing peak |q1| settles.
pub fn classify_response(case: &str, sys: &DimensionlessSystem, opts: &TimeSeriesOptions) -> Result<CaseReport> {
    check_tol(opts.tol)?;
    if !(opts.window > 0.0 && opts.max_horizon >= opts.window && opts.sample_dt > 0.0) {
        return Err(Error::domain("window", "need 0 < window <= max_horizon and sample_dt > 0"));
    }
    let mut x = StateVector::from(opts.x0);
    let mut t = 0.0;
    let mut series = vec![(0.0, x)];
    let mut next_sample = opts.sample_dt;
    let mut previous: Option<f64> = None;
    let ode = OdeOptions::with_tol(opts.tol);
    loop {
        let mut peak: f64 = 0.0;
        let t_end = t + opts.window;
        let (xe, _) = dopri5(|_, y: &StateVector| sys.rhs(y), t, x, t_end, &ode, |st| {
            // Peak from the step ends plus any interior turning point.
            let (va, vb) = (st.start()[1], st.eval_component(1, st.t1()));
            peak = peak.max(st.eval_component(0, st.t1()).abs());
            if va * vb < 0.0 {
                let (mut a, mut b) = (st.t0, st.t1());
                for _ in 0..50 {
                    let m = 0.5 * (a + b);
                    if st.eval_component(1, m) * va > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                peak = peak.max(st.eval_component(0, 0.5 * (a + b)).abs());
            }
            while next_sample <= st.t1() {
                series.push((next_sample, st.eval(next_sample)));
                next_sample += opts.sample_dt;
            }
        })?;
        x = xe;
        t = t_end;
        // The relative check keeps a slow decay at small amplitude from
        // passing as a cycle.
        let settled = previous.is_some_and(|p| {
            let d = (peak - p).abs();
            d < opts.drift && d < 1e-3 * peak
        });
        let outcome = if peak < opts.decay_threshold {
            Some(Outcome::DecaysToZero)
        } else if settled {
            Some(Outcome::SettlesOnLco)
        } else if t + opts.window > opts.max_horizon {
            Some(Outcome::Inconclusive)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            return Ok(CaseReport {
                case: case.to_string(),
                outcome,
                trailing_amplitude: peak,
                horizon: t,
                system: *sys,
                series,
            });
        }
        previous = Some(peak);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub eps: f64,
    pub mu1: f64,
    pub alpha3: f64,
    pub cases: Vec<CaseReport>,
}

impl ComparisonReport {
    pub fn case(&self, name: &str) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.case == name)
    }
}

/// The three configurations compared: bare primary, sink, tuned absorber.
pub fn comparison_systems(eps: f64, mu1: f64, alpha3: f64) -> Vec<(&'static str, DimensionlessSystem)> {
    let t = optimal_tuning(eps);
    vec![
        ("no_absorber", DimensionlessSystem::primary_only(mu1, alpha3)),
        ("nes", DimensionlessSystem::nes(eps, mu1, COMPARISON_LAMBDA, alpha3, COMPARISON_NES_BETA3)),
        (
            "nltva",
            DimensionlessSystem::linear(eps, mu1, t.mu2_opt, t.gamma_opt).with_nonlinear(alpha3, beta3_tuning(eps, alpha3)),
        ),
    ]
}

pub fn compare_time_series(eps: f64, mu1: f64, alpha3: f64, opts: &TimeSeriesOptions) -> Result<ComparisonReport> {
    if !(mu1 > 0.0) {
        return Err(Error::domain("mu1", "must be positive"));
    }
    if !(eps > 0.0) {
        return Err(Error::domain("eps", "must be positive"));
    }
    let cases = comparison_systems(eps, mu1, alpha3)
        .par_iter()
        .map(|(name, sys)| classify_response(name, sys, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { eps, mu1, alpha3, cases })
}

/// Which sink parameter is swept; the other stays at its fixed value.
/// Dimensional values assume `m1 = k1 = 1`, so `m2 = eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NesSweep {
    VaryKnl2 { c2: f64, knl2: Vec<f64> },
    VaryC2 { knl2: f64, c2: Vec<f64> },
}

impl NesSweep {
    pub fn default_knl2() -> NesSweep {
        NesSweep::VaryKnl2 { c2: 0.05, knl2: vec![0.001, 0.01, 0.1, 0.3, 1.0] }
    }

    pub fn default_c2() -> NesSweep {
        NesSweep::VaryC2 { knl2: 0.01, c2: vec![0.01, 0.02, 0.05, 0.1] }
    }

    /// `(swept value, config)` pairs.
    pub fn configs(&self, eps: f64) -> Vec<(f64, NesConfig)> {
        let cfg = |c2: f64, knl2: f64| NesConfig { eps, lambda: c2 / eps, beta3_nes: knl2 / eps };
        match self {
            NesSweep::VaryKnl2 { c2, knl2 } => knl2.iter().map(|&k| (k, cfg(*c2, k))).collect(),
            NesSweep::VaryC2 { knl2, c2 } => c2.iter().map(|&c| (c, cfg(c, *knl2))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NesBranch {
    pub value: f64,
    pub config: NesConfig,
    pub branch: LcoBranch,
}

/// Cycle branches of the primary with a sink attached, one per swept value.
pub fn nes_branch(eps: f64, alpha3: f64, sweep: &NesSweep, opts: &ContinuationOptions) -> Result<Vec<NesBranch>> {
    sweep
        .configs(eps)
        .into_par_iter()
        .map(|(value, config)| {
            config.validate()?;
            let branch = branch_from_hopf(&config.system(0.0, alpha3), opts)?;
            Ok(NesBranch { value, config, branch })
        })
        .collect()
}

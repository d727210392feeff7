//! Adaptive Dormand-Prince 5(4) integration with continuous output.

use nalgebra::SVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DimensionlessSystem, StateVector};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Shampine).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub const MIN_TOL: f64 = 1e-12;
pub const MAX_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, max_steps: 2_000_000 }
    }
}

/// One accepted step with its interpolant.
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rcont: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> &SVector<f64, N> {
        &self.rcont[0]
    }

    pub fn end(&self) -> SVector<f64, N> {
        self.rcont[0] + self.rcont[1]
    }

    /// State at `t` inside the step.
    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        r1 + (r2 + (r3 + (r4 + r5 * s1) * s) * s1) * s
    }

    /// Single component at `t`, cheaper than [`DenseStep::eval`].
    pub fn eval_component(&self, i: usize, t: f64) -> f64 {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let r = |k: usize| self.rcont[k][i];
        r(0) + s * (r(1) + s1 * (r(2) + s * (r(3) + s1 * r(4))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn error_norm<const N: usize>(err: &SVector<f64, N>, y0: &SVector<f64, N>, y1: &SVector<f64, N>, o: &OdeOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sk = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sk).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(f: &mut F, t0: f64, y0: &SVector<f64, N>, k1: &SVector<f64, N>, span: f64, o: &OdeOptions) -> f64
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let scale = |y: &SVector<f64, N>, i: usize| o.atol + o.rtol * y[i].abs();
    let norm = |v: &SVector<f64, N>| ((0..N).map(|i| (v[i] / scale(y0, i)).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d0 = norm(y0);
    let d1 = norm(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = y0 + k1 * h0;
    let k2 = f(t0 + h0, &y1);
    let d2 = norm(&(k2 - k1)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end > t0`, handing every accepted
/// step to `observe`. Returns the final state.
pub fn dopri5<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: SVector<f64, N>,
    t_end: f64,
    opts: &OdeOptions,
    mut observe: O,
) -> Result<(SVector<f64, N>, OdeStats)>
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
    O: FnMut(&DenseStep<N>),
{
    if !(t_end > t0) {
        return Err(Error::domain("t_end", format!("must exceed the start time {t0}")));
    }
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k1, t_end - t0, opts);
    stats.evaluations += 1;
    let fail = |t: f64, y: &SVector<f64, N>, reason: String| Error::Integration {
        t,
        reason,
        last_state: y.iter().copied().collect(),
    };
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(fail(t, &y, format!("step budget of {} exhausted", opts.max_steps)));
        }
        let last = t + h >= t_end || (t_end - t - h) < 1e-12 * t_end.abs().max(1.0);
        if last {
            h = t_end - t;
        }
        if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(fail(t, &y, format!("step size underflow (h = {h:.3e})")));
        }
        let k2 = f(t + C2 * h, &(y + k1 * (A21 * h)));
        let k3 = f(t + C3 * h, &(y + (k1 * A31 + k2 * A32) * h));
        let k4 = f(t + C4 * h, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * h));
        let k5 = f(t + C5 * h, &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h));
        let k6 = f(t + h, &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h));
        let y1 = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h;
        let k7 = f(t + h, &y1);
        stats.evaluations += 6;
        let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
        let en = error_norm(&err, &y, &y1, opts);
        if !en.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            continue;
        }
        if en <= 1.0 {
            let dy = y1 - y;
            let r3 = k1 * h - dy;
            let r4 = dy - k7 * h - r3;
            let r5 = (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * h;
            observe(&DenseStep { t0: t, h, rcont: [y, dy, r3, r4, r5] });
            stats.accepted += 1;
            t = if last { t_end } else { t + h };
            y = y1;
            k1 = k7;
            if last {
                return Ok((y, stats));
            }
            let fac = (0.9 * en.powf(-0.2)).clamp(0.2, 5.0);
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
}

pub fn check_tol(tol: f64) -> Result<()> {
    if !(MIN_TOL..=MAX_TOL).contains(&tol) {
        return Err(Error::domain("tol", format!("must lie in [{MIN_TOL:e}, {MAX_TOL:e}], got {tol}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<StateVector>,
    pub stats: OdeStats,
}

impl Trajectory {
    /// Peak |q1| over samples with `t >= t_from`.
    pub fn peak_q1_after(&self, t_from: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.x)
            .filter(|(t, _)| **t >= t_from)
            .map(|(_, x)| x[0].abs())
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> &StateVector {
        self.x.last().expect("trajectory has samples")
    }
}

/// Trajectory sampled at `samples` evenly spaced times in `[0, t_end]`.
pub fn integrate(sys: &DimensionlessSystem, x0: StateVector, t_end: f64, tol: f64, samples: usize) -> Result<Trajectory> {
    if samples < 2 {
        return Err(Error::domain("samples", "need at least two sample times"));
    }
    let times: Vec<f64> = (0..samples)
        .map(|i| if i + 1 == samples { t_end } else { t_end * i as f64 / (samples - 1) as f64 })
        .collect();
    integrate_at(sys, x0, &times, tol)
}

/// Trajectory at increasing times `times[0] = 0 < ... `.
pub fn integrate_at(sys: &DimensionlessSystem, x0: StateVector, times: &[f64], tol: f64) -> Result<Trajectory> {
    check_tol(tol)?;
    sys.validate()?;
    if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("times", "must start at 0 and increase strictly"));
    }
    let t_end = *times.last().unwrap();
    let mut out = Vec::with_capacity(times.len());
    out.push(x0);
    let mut next = 1;
    let (_, stats) = dopri5(
        |_, x: &StateVector| sys.rhs(x),
        0.0,
        x0,
        t_end,
        &OdeOptions::with_tol(tol),
        |step| {
            while next < times.len() && times[next] <= step.t1() {
                out.push(if times[next] == step.t1() { step.end() } else { step.eval(times[next]) });
                next += 1;
            }
        },
    )?;
    Ok(Trajectory { t: times.to_vec(), x: out, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector2, Vector4};

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let opts = OdeOptions::with_tol(1e-11);
        let mut worst: f64 = 0.0;
        let (end, _) = dopri5(
            |_, y: &Vector2<f64>| Vector2::new(y[1], -y[0]),
            0.0,
            Vector2::new(1.0, 0.0),
            20.0,
            &opts,
            |s| {
                for k in 1..4 {
                    let t = s.t0 + s.h * k as f64 / 4.0;
                    worst = worst.max((s.eval(t)[0] - t.cos()).abs());
                    worst = worst.max((s.eval_component(1, t) + t.sin()).abs());
                }
            },
        )
        .unwrap();
        assert!((end[0] - 20f64.cos()).abs() < 1e-9);
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn fifth_order_convergence() {
        // Global error should drop by roughly 10^(5/5) per decade of tol.
        let run = |tol: f64| {
            let (y, _) = dopri5(|t, y: &Vector2<f64>| Vector2::new(y[1], -y[0] + 0.1 * t.sin()), 0.0, Vector2::new(0.5, 0.0), 10.0, &OdeOptions::with_tol(tol), |_| {})
                .unwrap();
            y
        };
        let reference = run(1e-13);
        let e6 = (run(1e-6) - reference).norm();
        let e9 = (run(1e-9) - reference).norm();
        assert!(e9 < e6 / 50.0, "{e6} {e9}");
    }

    #[test]
    fn stable_system_decays() {
        let sys = DimensionlessSystem::linear(0.05, 0.05, 0.109, 0.976).with_nonlinear(0.3, 0.0136);
        let x0 = Vector4::new(0.02, -0.01, 0.015, 0.0);
        let tr = integrate(&sys, x0, 1500.0, 1e-9, 301).unwrap();
        assert!(tr.last().norm() < 1e-6, "{}", tr.last().norm());
    }

    #[test]
    fn conservative_limit_keeps_energy() {
        let sys = DimensionlessSystem::linear(0.05, 0.0, 0.0, 1.0);
        let x0 = Vector4::new(0.3, 0.0, -0.1, 0.2);
        let energy = |x: &StateVector| {
            // Absorber coordinate q2 = q1 - qd, spring acting on qd.
            let (q1, v1, qd, vd) = (x[0], x[1], x[2], x[3]);
            let eps = 0.05;
            0.5 * (v1 * v1 + q1 * q1) + 0.5 * eps * ((v1 - vd).powi(2) + qd * qd)
        };
        let tr = integrate(&sys, x0, 1000.0, 1e-11, 1001).unwrap();
        let e0 = energy(&x0);
        let drift = tr.x.iter().map(|x| (energy(x) - e0).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-4 * e0, "{drift}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = DimensionlessSystem::linear(0.05, 0.0, 0.1, 1.0);
        assert!(integrate(&sys, Vector4::zeros(), 1.0, 1e-2, 10).is_err());
        assert!(integrate(&sys, Vector4::zeros(), 1.0, 1e-13, 10).is_err());
        assert!(integrate(&sys, Vector4::zeros(), 1.0, 1e-8, 1).is_err());
        let r = dopri5(|_, y: &Vector2<f64>| Vector2::new(1.0 / (1.0 - y[0]), 0.0), 0.0, Vector2::new(0.0, 0.0), 2.0, &OdeOptions::with_tol(1e-8), |_| {});
        assert!(matches!(r, Err(Error::Integration { .. })));
    }
}

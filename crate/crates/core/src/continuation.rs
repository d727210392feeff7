//! Periodic orbits by single shooting, continued in `mu1` by pseudo-arclength.
//!
//! Unknowns are `u = (x0, T, mu1)`. The orbit is anchored on the section
//! `x2 = 0` (a turning point of `q1`), so `x0[0]` is an extremum of `q1`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DimensionlessSystem, StateVector};
use crate::normal_form::{hopf_point_of, Criticality, HopfPoint, PairSelection};
use crate::ode::{check_tol, dopri5, OdeOptions};
use crate::stability::eigenvalues;

type Aug = SVector<f64, 24>;
type Vec6 = SVector<f64, 6>;
type Jac = SMatrix<f64, 5, 6>;

/// Largest tolerated deviation of the trivial multiplier from 1.
pub const TRIVIAL_MULTIPLIER_TOL: f64 = 1e-4;
/// Non-trivial multipliers must stay this far inside the unit circle.
pub const STABILITY_MARGIN: f64 = 1e-8;
/// Imaginary parts below this count as real multipliers.
const COMPLEX_IM: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationOptions {
    pub mu1_min: f64,
    pub mu1_max: f64,
    /// Stop once max |q1| exceeds this.
    pub amplitude_cap: f64,
    pub ds_initial: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    /// Integrator tolerance (relative and absolute).
    pub tol: f64,
    /// Shooting residual accepted as converged.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Largest angle in radians between consecutive tangents.
    pub max_turn: f64,
    /// Amplitude of the first orbit when seeding from a Hopf point.
    pub seed_amplitude: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            mu1_min: -0.02,
            mu1_max: 0.25,
            amplitude_cap: 10.0,
            ds_initial: 0.01,
            ds_min: 1e-6,
            ds_max: 0.05,
            max_points: 4000,
            tol: 1e-10,
            newton_tol: 1e-9,
            max_newton: 8,
            max_turn: 0.2,
            seed_amplitude: 0.01,
        }
    }
}

impl ContinuationOptions {
    pub fn validate(&self) -> Result<()> {
        check_tol(self.tol)?;
        if !(self.mu1_min < self.mu1_max) {
            return Err(Error::domain("mu1_max", "must exceed mu1_min"));
        }
        if !(self.amplitude_cap > 0.0) {
            return Err(Error::domain("amplitude_cap", "must be positive"));
        }
        if !(0.0 < self.ds_min && self.ds_min <= self.ds_initial && self.ds_initial <= self.ds_max) {
            return Err(Error::domain("ds_initial", "need 0 < ds_min <= ds_initial <= ds_max"));
        }
        if !(self.newton_tol > 0.0) || self.max_newton == 0 {
            return Err(Error::domain("newton_tol", "need a positive tolerance and at least one iteration"));
        }
        if !(self.seed_amplitude > 0.0) {
            return Err(Error::domain("seed_amplitude", "must be positive"));
        }
        if self.max_points < 2 {
            return Err(Error::domain("max_points", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FloquetReport {
    /// Trivial multiplier first, then the others by decreasing modulus.
    pub multipliers: [Complex64; 4],
    pub trivial_deviation: f64,
    pub accurate: bool,
    pub stable: bool,
}

impl FloquetReport {
    pub fn nontrivial(&self) -> &[Complex64] {
        &self.multipliers[1..]
    }

    fn nearest_to_one(&self) -> f64 {
        self.nontrivial().iter().map(|m| (m - 1.0).norm()).fold(f64::INFINITY, f64::min)
    }

    fn nearest_complex_to_circle(&self) -> f64 {
        self.nontrivial()
            .iter()
            .filter(|m| m.im.abs() > COMPLEX_IM)
            .map(|m| (m.norm() - 1.0).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Multipliers of a monodromy matrix.
///
/// The characteristic polynomial is deflated by the known root `z = 1`: near a
/// fold the trivial multiplier becomes double and a plain eigen-solve splits
/// it by the square root of the round-off.
pub fn multipliers_of(m: &Matrix4<f64>) -> FloquetReport {
    let eig = m.complex_eigenvalues();
    let trivial = eig
        .iter()
        .copied()
        .min_by(|a, b| (a - 1.0).norm().total_cmp(&(b - 1.0).norm()))
        .expect("four eigenvalues");
    // Faddeev-LeVerrier: p(z) = sum c[i] z^i.
    let mut c = [0.0; 5];
    c[4] = 1.0;
    let mut mk = Matrix4::<f64>::zeros();
    for k in 1..=4 {
        mk = m * mk + Matrix4::identity() * c[5 - k];
        c[4 - k] = -(m * mk).trace() / k as f64;
    }
    let b2 = c[3] + 1.0;
    let b1 = c[2] + b2;
    let b0 = c[1] + b1;
    let companion = Matrix3::new(-b2, -b1, -b0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let roots = companion.complex_eigenvalues();
    let mut rest = [roots[0], roots[1], roots[2]];
    rest.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    let trivial_deviation = (trivial - 1.0).norm();
    FloquetReport {
        multipliers: [trivial, rest[0], rest[1], rest[2]],
        trivial_deviation,
        accurate: trivial_deviation <= TRIVIAL_MULTIPLIER_TOL,
        stable: rest.iter().all(|r| r.norm() < 1.0 - STABILITY_MARGIN),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    /// State on the section `x2 = 0`.
    pub anchor_state: StateVector,
    pub period: f64,
    pub mu1: f64,
    /// Max |q1| over one period.
    pub amplitude: f64,
    pub multipliers: [Complex64; 4],
    pub trivial_deviation: f64,
    pub stable: bool,
    /// Trivial multiplier within [`TRIVIAL_MULTIPLIER_TOL`] of 1.
    pub accurate: bool,
    /// Final shooting residual.
    pub residual: f64,
}

impl PeriodicOrbit {
    fn unknowns(&self) -> Vec6 {
        let x = self.anchor_state;
        Vec6::new(x[0], x[1], x[2], x[3], self.period, self.mu1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Hopf,
    Fold,
    NeimarkSacker,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Hopf => "hopf",
            EventKind::Fold => "fold",
            EventKind::NeimarkSacker => "neimark_sacker",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub mu1: f64,
    /// Zero for events on the equilibrium.
    pub amplitude: f64,
    /// `2 pi / omega` for Hopf events.
    pub period: f64,
    pub state: StateVector,
    /// `|Re lambda|` (Hopf), distance of the nearest multiplier to 1 (fold) or
    /// of the complex pair to the unit circle (Neimark-Sacker).
    pub detection_residual: f64,
    /// Two Hopf crossings inside one sweep step.
    pub near_double: bool,
    /// Index of the first branch point past the event.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Mu1Range,
    AmplitudeCap,
    StepUnderflow,
    MaxPoints,
    /// Amplitude shrank back towards the equilibrium.
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LcoBranch {
    pub origin: HopfPoint,
    pub points: Vec<PeriodicOrbit>,
    pub events: Vec<BifurcationEvent>,
    pub termination: Termination,
}

impl LcoBranch {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Onset direction: the first orbit lies past `mu1_cr` for a supercritical
    /// bifurcation and before it for a subcritical one.
    pub fn onset(&self) -> Criticality {
        let d = self.points[0].mu1 - self.origin.mu1_cr;
        if d.abs() < 1e-12 {
            Criticality::Degenerate
        } else if d > 0.0 {
            Criticality::Supercritical
        } else {
            Criticality::Subcritical
        }
    }

    /// A stable cycle coexists with the stable equilibrium somewhere.
    pub fn bistable(&self) -> bool {
        self.points.iter().any(|p| p.stable && p.mu1 < self.origin.mu1_cr)
    }

    /// Amplitudes of all orbits at `mu1`, interpolated linearly between points.
    pub fn amplitudes_at(&self, mu1: f64) -> Vec<f64> {
        self.points
            .windows(2)
            .filter(|w| (w[0].mu1 - mu1) * (w[1].mu1 - mu1) <= 0.0 && w[0].mu1 != w[1].mu1)
            .map(|w| {
                let s = (mu1 - w[0].mu1) / (w[1].mu1 - w[0].mu1);
                w[0].amplitude + s * (w[1].amplitude - w[0].amplitude)
            })
            .collect()
    }

    pub fn all_accurate(&self) -> bool {
        self.points.iter().all(|p| p.accurate)
    }
}

fn aug_rhs(sys: &DimensionlessSystem, y: &Aug) -> Aug {
    let x = Vector4::new(y[0], y[1], y[2], y[3]);
    let j = sys.jacobian(&x);
    let phi = Matrix4::from_column_slice(&y.as_slice()[4..20]);
    let s = Vector4::new(y[20], y[21], y[22], y[23]);
    let dphi = j * phi;
    let ds = j * s + sys.rhs_dmu1(&x);
    let mut out = Aug::zeros();
    out.fixed_rows_mut::<4>(0).copy_from(&sys.rhs(&x));
    out.as_mut_slice()[4..20].copy_from_slice(dphi.as_slice());
    out.fixed_rows_mut::<4>(20).copy_from(&ds);
    out
}

struct Shot {
    end: StateVector,
    monodromy: Matrix4<f64>,
    dmu: StateVector,
    f_end: StateVector,
    amplitude: f64,
}

/// Flow over one period with the monodromy matrix and `d x(T) / d mu1`.
fn shoot(sys: &DimensionlessSystem, x0: &StateVector, period: f64, tol: f64) -> Result<Shot> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Numerical(format!("non-positive period {period}")));
    }
    let mut y0 = Aug::zeros();
    y0.fixed_rows_mut::<4>(0).copy_from(x0);
    for i in 0..4 {
        y0[4 + 5 * i] = 1.0;
    }
    let mut amplitude = x0[0].abs();
    let (y, _) = dopri5(|_, y: &Aug| aug_rhs(sys, y), 0.0, y0, period, &OdeOptions::with_tol(tol), |st| {
        let (ta, tb) = (st.t0, st.t1());
        let (va, vb) = (st.start()[1], st.eval_component(1, tb));
        amplitude = amplitude.max(st.eval_component(0, tb).abs());
        if va * vb < 0.0 {
            // q1 turns inside the step: locate q1' = 0 (Illinois).
            let (mut a, mut b, mut fa, mut fb) = (ta, tb, va, vb);
            let mut side = 0;
            for _ in 0..60 {
                let c = (a * fb - b * fa) / (fb - fa);
                let fc = st.eval_component(1, c);
                if fc == 0.0 || (b - a).abs() < 1e-14 * tb.max(1.0) {
                    a = c;
                    b = c;
                    break;
                }
                if fc * fb < 0.0 {
                    a = b;
                    fa = fb;
                    side = 0;
                } else {
                    if side == 1 {
                        fa *= 0.5;
                    }
                    side = 1;
                }
                b = c;
                fb = fc;
            }
            let t = 0.5 * (a + b);
            amplitude = amplitude.max(st.eval_component(0, t).abs());
        }
    })?;
    let end = Vector4::new(y[0], y[1], y[2], y[3]);
    Ok(Shot {
        end,
        monodromy: Matrix4::from_column_slice(&y.as_slice()[4..20]),
        dmu: Vector4::new(y[20], y[21], y[22], y[23]),
        f_end: sys.rhs(&end),
        amplitude,
    })
}

struct Residual {
    f: SVector<f64, 5>,
    jac: Jac,
    shot: Shot,
}

fn residual(template: &DimensionlessSystem, u: &Vec6, tol: f64) -> Result<Residual> {
    let sys = template.with_mu1(u[5]);
    let x0 = Vector4::new(u[0], u[1], u[2], u[3]);
    let shot = shoot(&sys, &x0, u[4], tol)?;
    let mut f = SVector::<f64, 5>::zeros();
    f.fixed_rows_mut::<4>(0).copy_from(&(shot.end - x0));
    f[4] = x0[1];
    let mut jac = Jac::zeros();
    jac.fixed_view_mut::<4, 4>(0, 0).copy_from(&(shot.monodromy - Matrix4::identity()));
    jac.fixed_view_mut::<4, 1>(0, 4).copy_from(&shot.f_end);
    jac.fixed_view_mut::<4, 1>(0, 5).copy_from(&shot.dmu);
    jac[(4, 1)] = 1.0;
    Ok(Residual { f, jac, shot })
}

struct Corrected {
    u: Vec6,
    jac: Jac,
    shot: Shot,
    residual: f64,
    iterations: usize,
}

/// Newton on the periodicity and phase conditions, closed either by the
/// border row `c . u = b` or, without a border, by keeping `mu1` fixed.
fn correct(
    template: &DimensionlessSystem,
    mut u: Vec6,
    border: Option<(Vec6, f64)>,
    max_iter: usize,
    opts: &ContinuationOptions,
) -> Result<Corrected> {
    let mut history = Vec::new();
    for it in 0..=max_iter {
        let r = residual(template, &u, opts.tol)?;
        let extra = border.map_or(0.0, |(c, b)| c.dot(&u) - b);
        let res = r.f.amax().max(extra.abs());
        history.push(res);
        if res < opts.newton_tol {
            return Ok(Corrected { u, jac: r.jac, shot: r.shot, residual: res, iterations: it });
        }
        if it == max_iter || !res.is_finite() {
            break;
        }
        let du = match border {
            Some((c, _)) => {
                let mut a = SMatrix::<f64, 6, 6>::zeros();
                a.fixed_rows_mut::<5>(0).copy_from(&r.jac);
                a.set_row(5, &c.transpose());
                let rhs = Vec6::new(-r.f[0], -r.f[1], -r.f[2], -r.f[3], -r.f[4], -extra);
                a.lu().solve(&rhs)
            }
            None => {
                let a = r.jac.fixed_columns::<5>(0).into_owned();
                a.lu().solve(&(-r.f)).map(|d| Vec6::new(d[0], d[1], d[2], d[3], d[4], 0.0))
            }
        }
        .ok_or_else(|| Error::Numerical("singular shooting Jacobian".into()))?;
        u += du;
        if !u.iter().all(|v| v.is_finite()) || u[4] <= 0.0 {
            break;
        }
    }
    Err(Error::NewtonDiverged { residuals: history })
}

/// Unit tangent of the solution curve, oriented along `prev`.
fn tangent(jac: &Jac, prev: &Vec6) -> Result<Vec6> {
    let mut a = SMatrix::<f64, 6, 6>::zeros();
    a.fixed_rows_mut::<5>(0).copy_from(jac);
    a.set_row(5, &prev.transpose());
    let v = a
        .lu()
        .solve(&Vec6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0))
        .ok_or_else(|| Error::Numerical("singular bordered Jacobian".into()))?;
    let v = v.normalize();
    Ok(if v.dot(prev) < 0.0 { -v } else { v })
}

fn make_orbit(c: &Corrected) -> PeriodicOrbit {
    let fl = multipliers_of(&c.shot.monodromy);
    PeriodicOrbit {
        anchor_state: Vector4::new(c.u[0], c.u[1], c.u[2], c.u[3]),
        period: c.u[4],
        mu1: c.u[5],
        amplitude: c.shot.amplitude,
        multipliers: fl.multipliers,
        trivial_deviation: fl.trivial_deviation,
        stable: fl.stable,
        accurate: fl.accurate,
        residual: c.residual,
    }
}

/// Floquet data of a converged orbit, recomputed from a fresh shot.
pub fn floquet(orbit: &PeriodicOrbit, sys: &DimensionlessSystem, tol: f64) -> Result<FloquetReport> {
    check_tol(tol)?;
    let shot = shoot(&sys.with_mu1(orbit.mu1), &orbit.anchor_state, orbit.period, tol)?;
    Ok(multipliers_of(&shot.monodromy))
}

/// Orbit through `x0[0] = amplitude` near the Hopf point, with `mu1` free.
/// Needs no normal form, so it also works for quadratic absorbers.
pub fn orbit_near_hopf(
    template: &DimensionlessSystem,
    hopf: &HopfPoint,
    amplitude: f64,
    opts: &ContinuationOptions,
) -> Result<PeriodicOrbit> {
    opts.validate()?;
    let s1 = hopf.eigenvector;
    let scale = amplitude / s1[0].re;
    let u0 = Vec6::new(
        scale * s1[0].re,
        0.0,
        scale * s1[2].re,
        scale * s1[3].re,
        2.0 * PI / hopf.omega1,
        hopf.mu1_cr,
    );
    let e0 = Vec6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let c = correct(template, u0, Some((e0, amplitude)), 25, opts)?;
    Ok(make_orbit(&c))
}

/// Orbit at `mu1_cr + delta_mu1` (supercritical) or `mu1_cr - delta_mu1`
/// (subcritical), guessed from the local amplitude estimate and refined by
/// shooting at fixed `mu1`.
pub fn orbit_from_hopf(
    template: &DimensionlessSystem,
    hopf: &HopfPoint,
    delta_mu1: f64,
    opts: &ContinuationOptions,
) -> Result<PeriodicOrbit> {
    opts.validate()?;
    if !(delta_mu1 > 0.0) {
        return Err(Error::domain("delta_mu1", "must be positive"));
    }
    let probe = crate::lco::estimate_at(template, hopf, hopf.mu1_cr + delta_mu1)?;
    let mu1 = if probe.valid { hopf.mu1_cr + delta_mu1 } else { hopf.mu1_cr - delta_mu1 };
    let est = crate::lco::estimate_at(template, hopf, mu1)?;
    let s1 = hopf.eigenvector;
    let r = est.r;
    let u0 = Vec6::new(r * s1[0].re, 0.0, r * s1[2].re, r * s1[3].re, 2.0 * PI / hopf.omega1, mu1);
    let c = correct(template, u0, None, 25, opts)?;
    if c.shot.amplitude < 1e-3 * est.q1_max {
        return Err(Error::Numerical("shooting collapsed onto the equilibrium".into()));
    }
    Ok(make_orbit(&c))
}

/// State of the corrector along the predictor line from `u` with tangent `t`.
fn corrected_at(
    template: &DimensionlessSystem,
    u: &Vec6,
    t: &Vec6,
    s: f64,
    opts: &ContinuationOptions,
) -> Result<(Corrected, Vec6)> {
    let pred = u + t * s;
    let c = correct(template, pred, Some((*t, t.dot(&pred))), opts.max_newton + 4, opts)?;
    let tn = tangent(&c.jac, t)?;
    Ok((c, tn))
}

fn refine_fold(
    template: &DimensionlessSystem,
    u: &Vec6,
    t: &Vec6,
    ds: f64,
    g_end: f64,
    opts: &ContinuationOptions,
) -> Result<(Corrected, f64)> {
    let (mut a, mut fa) = (0.0, t[5]);
    let (mut b, mut fb) = (ds, g_end);
    let mut side = 0;
    let mut best: Option<(Corrected, f64)> = None;
    for _ in 0..50 {
        let s = (a * fb - b * fa) / (fb - fa);
        let (c, tn) = corrected_at(template, u, t, s, opts)?;
        let g = tn[5];
        let prev_mu = best.as_ref().map(|(p, _)| p.u[5]);
        let done = g.abs() < 1e-9 || (b - a).abs() < 1e-12 || prev_mu.is_some_and(|m| (m - c.u[5]).abs() < 1e-10);
        best = Some((c, g));
        if done {
            break;
        }
        if g * fb < 0.0 {
            a = b;
            fa = fb;
            side = 0;
        } else {
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        b = s;
        fb = g;
    }
    Ok(best.expect("at least one secant step"))
}

fn refine_ns(
    template: &DimensionlessSystem,
    u: &Vec6,
    t: &Vec6,
    ds: f64,
    outside_start: usize,
    opts: &ContinuationOptions,
) -> Result<Corrected> {
    let (mut a, mut b) = (0.0, ds);
    let mut last = None;
    while b - a > 1e-9 * ds.max(1e-3) {
        let s = 0.5 * (a + b);
        let (c, _) = corrected_at(template, u, t, s, opts)?;
        if complex_outside(&make_orbit(&c)) == outside_start {
            a = s;
        } else {
            b = s;
        }
        last = Some(c);
    }
    match last {
        Some(c) => Ok(c),
        None => Ok(corrected_at(template, u, t, b, opts)?.0),
    }
}

fn complex_outside(p: &PeriodicOrbit) -> usize {
    p.multipliers[1..].iter().filter(|m| m.im.abs() > COMPLEX_IM && m.norm() > 1.0).count()
}

fn event_from(kind: EventKind, c: &Corrected, residual: f64, index: usize) -> BifurcationEvent {
    BifurcationEvent {
        kind,
        mu1: c.u[5],
        amplitude: c.shot.amplitude,
        period: c.u[4],
        state: Vector4::new(c.u[0], c.u[1], c.u[2], c.u[3]),
        detection_residual: residual,
        near_double: false,
        index,
    }
}

/// Pseudo-arclength continuation from a converged orbit, moving towards
/// larger amplitude first.
pub fn continue_branch(
    template: &DimensionlessSystem,
    origin: HopfPoint,
    seed: &PeriodicOrbit,
    opts: &ContinuationOptions,
) -> Result<LcoBranch> {
    opts.validate()?;
    let mut u = seed.unknowns();
    let first = residual(template, &u, opts.tol)?;
    let mut t = tangent(&first.jac, &Vec6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0))?;
    let mut points = vec![*seed];
    let mut events = Vec::new();
    let mut ds = opts.ds_initial;
    let cos_cap = opts.max_turn.cos();
    let termination = loop {
        if points.len() >= opts.max_points {
            break Termination::MaxPoints;
        }
        if ds < opts.ds_min {
            break Termination::StepUnderflow;
        }
        let step = corrected_at(template, &u, &t, ds, opts);
        let (c, tn) = match step {
            Ok((c, tn)) if c.iterations <= opts.max_newton && tn.dot(&t) >= cos_cap => (c, tn),
            Ok(_) | Err(Error::NewtonDiverged { .. }) | Err(Error::Numerical(_)) | Err(Error::Integration { .. }) => {
                ds *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        let orbit = make_orbit(&c);
        let prev = points.last().expect("seeded");
        let index = points.len();
        if t[5] * tn[5] < 0.0 {
            let (fc, _) = refine_fold(template, &u, &t, ds, tn[5], opts)?;
            let fl = multipliers_of(&fc.shot.monodromy);
            events.push(event_from(EventKind::Fold, &fc, fl.nearest_to_one(), index));
        }
        let out_prev = complex_outside(prev);
        let out_new = complex_outside(&orbit);
        if out_prev != out_new {
            let nc = refine_ns(template, &u, &t, ds, out_prev, opts)?;
            let fl = multipliers_of(&nc.shot.monodromy);
            let r = fl.nearest_complex_to_circle();
            if r < 1e-3 {
                events.push(event_from(EventKind::NeimarkSacker, &nc, r, index));
            }
        }
        let fast = c.iterations <= 3;
        u = c.u;
        t = tn;
        points.push(orbit);
        if fast {
            ds = (ds * 1.5).min(opts.ds_max);
        }
        if orbit.mu1 < opts.mu1_min || orbit.mu1 > opts.mu1_max {
            break Termination::Mu1Range;
        }
        if orbit.amplitude > opts.amplitude_cap {
            break Termination::AmplitudeCap;
        }
        if orbit.amplitude < 0.5 * seed.amplitude {
            break Termination::Equilibrium;
        }
    };
    Ok(LcoBranch { origin, points, events, termination })
}

/// Branch of cycles born at the Hopf point of `template` (its `mu1` is
/// ignored), seeded at amplitude `opts.seed_amplitude`.
pub fn branch_from_hopf(template: &DimensionlessSystem, opts: &ContinuationOptions) -> Result<LcoBranch> {
    template.validate()?;
    let hopf = hopf_point_of(template)?;
    let seed = orbit_near_hopf(template, &hopf, opts.seed_amplitude, opts)?;
    continue_branch(template, hopf, &seed, opts)
}

/// Branch born at a Hopf event of [`equilibrium_branch`] (any crossing, not
/// only the first loss of stability).
pub fn branch_from_event(
    template: &DimensionlessSystem,
    event: &BifurcationEvent,
    opts: &ContinuationOptions,
) -> Result<LcoBranch> {
    if event.kind != EventKind::Hopf {
        return Err(Error::domain("event", "cycles can only be seeded from a Hopf event"));
    }
    template.validate()?;
    let hopf = HopfPoint::at(&template.with_mu1(event.mu1), PairSelection::Frequency(2.0 * PI / event.period))?;
    let seed = orbit_near_hopf(template, &hopf, opts.seed_amplitude, opts)?;
    continue_branch(template, hopf, &seed, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub mu1: f64,
    pub eigenvalues: [Complex64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumBranch {
    pub points: Vec<EquilibriumPoint>,
    pub events: Vec<BifurcationEvent>,
}

/// Eigenvalues of the trivial equilibrium along an increasing `mu1` sweep,
/// with every crossing of a complex pair located by bisection.
pub fn equilibrium_branch(template: &DimensionlessSystem, mu1: &[f64]) -> Result<EquilibriumBranch> {
    if mu1.len() < 2 || mu1.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("mu1", "need an increasing sweep of at least two values"));
    }
    let eig = |m: f64| eigenvalues(&template.with_mu1(m).linear_matrix());
    let upper = |e: &[Complex64; 4]| -> Vec<Complex64> { e.iter().copied().filter(|l| l.im > COMPLEX_IM).collect() };
    let points: Vec<EquilibriumPoint> = mu1.iter().map(|&m| EquilibriumPoint { mu1: m, eigenvalues: eig(m) }).collect();
    let mut events = Vec::new();
    for (k, w) in points.windows(2).enumerate() {
        let mut found = Vec::new();
        for (la, lb) in paired(&upper(&w[0].eigenvalues), &upper(&w[1].eigenvalues)) {
            if la.re.signum() == lb.re.signum() && la.re != 0.0 {
                continue;
            }
            let (mut a, mut b) = (w[0].mu1, w[1].mu1);
            let mut ta = la;
            let track = |m: f64, guess: Complex64| {
                upper(&eig(m))
                    .into_iter()
                    .min_by(|x, y| (x - guess).norm().total_cmp(&(y - guess).norm()))
                    .unwrap_or(guess)
            };
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let s = (mid - w[0].mu1) / (w[1].mu1 - w[0].mu1);
                let lm = track(mid, la + (lb - la) * s);
                if lm.re.signum() == ta.re.signum() {
                    a = mid;
                    ta = lm;
                } else {
                    b = mid;
                }
            }
            let at = track(0.5 * (a + b), ta);
            found.push(BifurcationEvent {
                kind: EventKind::Hopf,
                mu1: 0.5 * (a + b),
                amplitude: 0.0,
                period: 2.0 * PI / at.im,
                state: StateVector::zeros(),
                detection_residual: at.re.abs(),
                near_double: false,
                index: k + 1,
            });
        }
        let double = found.len() > 1;
        for mut e in found {
            e.near_double = double;
            events.push(e);
        }
    }
    events.sort_by(|a, b| a.mu1.total_cmp(&b.mu1));
    Ok(EquilibriumBranch { points, events })
}

/// Matches eigenvalues of two neighbouring sweep points by the assignment
/// with the least total distance (exhaustive; at most two upper eigenvalues).
fn paired(a: &[Complex64], b: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    match (a.len(), b.len()) {
        (2, 2) => {
            let straight = (a[0] - b[0]).norm() + (a[1] - b[1]).norm();
            let crossed = (a[0] - b[1]).norm() + (a[1] - b[0]).norm();
            if crossed < straight {
                vec![(a[0], b[1]), (a[1], b[0])]
            } else {
                vec![(a[0], b[0]), (a[1], b[1])]
            }
        }
        _ => a
            .iter()
            .filter_map(|&x| {
                b.iter().copied().min_by(|p, q| (p - x).norm().total_cmp(&(q - x).norm())).map(|y| (x, y))
            })
            .collect(),
    }
}

/// Relative absorber displacement at which the non-cubic absorbers of the
/// similarity study exert the same force as the tuned cubic one.
pub const REFERENCE_STROKE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorberKind {
    Linear,
    Quadratic,
    Cubic,
    Quintic,
}

impl AbsorberKind {
    pub const ALL: [AbsorberKind; 4] = [AbsorberKind::Linear, AbsorberKind::Quadratic, AbsorberKind::Cubic, AbsorberKind::Quintic];

    pub fn name(&self) -> &'static str {
        match self {
            AbsorberKind::Linear => "linear",
            AbsorberKind::Quadratic => "quadratic",
            AbsorberKind::Cubic => "cubic",
            AbsorberKind::Quintic => "quintic",
        }
    }

    /// Default coefficient: the same absorber force as the cubic tuning rule
    /// at a relative displacement of [`REFERENCE_STROKE`].
    pub fn default_coefficient(&self, eps: f64, alpha3: f64) -> f64 {
        let b3 = crate::normal_form::beta3_tuning(eps, alpha3);
        match self {
            AbsorberKind::Linear => 0.0,
            AbsorberKind::Quadratic => b3 * REFERENCE_STROKE,
            AbsorberKind::Cubic => b3,
            AbsorberKind::Quintic => b3 / (REFERENCE_STROKE * REFERENCE_STROKE),
        }
    }

    /// System with only this absorber nonlinearity set to `coefficient`.
    pub fn system(&self, eps: f64, mu2: f64, gamma: f64, alpha3: f64, coefficient: f64) -> DimensionlessSystem {
        let mut s = DimensionlessSystem::linear(eps, 0.0, mu2, gamma).with_nonlinear(alpha3, 0.0);
        match self {
            AbsorberKind::Linear => {}
            AbsorberKind::Quadratic => s.beta2 = coefficient,
            AbsorberKind::Cubic => s.beta3 = coefficient,
            AbsorberKind::Quintic => s.beta5 = coefficient,
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityOutcome {
    pub kind: AbsorberKind,
    pub coefficient: f64,
    pub onset: Criticality,
    pub folds: usize,
    pub neimark_sacker: usize,
    pub bistable: bool,
    /// Largest amplitude of a stable cycle on the branch.
    pub max_stable_amplitude: f64,
    pub branch: LcoBranch,
}

pub fn similarity_study(
    eps: f64,
    mu2: f64,
    gamma: f64,
    alpha3: f64,
    kind: AbsorberKind,
    coefficient: f64,
    opts: &ContinuationOptions,
) -> Result<SimilarityOutcome> {
    let sys = kind.system(eps, mu2, gamma, alpha3, coefficient);
    let branch = branch_from_hopf(&sys, opts)?;
    Ok(SimilarityOutcome {
        kind,
        coefficient: if kind == AbsorberKind::Linear { 0.0 } else { coefficient },
        onset: branch.onset(),
        folds: branch.count(EventKind::Fold),
        neimark_sacker: branch.count(EventKind::NeimarkSacker),
        bistable: branch.bistable(),
        max_stable_amplitude: branch.points.iter().filter(|p| p.stable).map(|p| p.amplitude).fold(0.0, f64::max),
        branch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lco::estimate_at;
    use crate::normal_form::delta;
    use crate::stability::{critical_mu1, linspace, optimal_tuning};

    const EPS: f64 = 0.05;

    fn sys(mu2: f64, gamma: f64, alpha3: f64, beta3: f64) -> DimensionlessSystem {
        DimensionlessSystem::linear(EPS, 0.0, mu2, gamma).with_nonlinear(alpha3, beta3)
    }

    #[test]
    fn multipliers_of_block_matrix() {
        let (r, th) = (0.9f64, 0.7f64);
        let m = Matrix4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.5, 0.0, 0.0,
            0.0, 0.0, r * th.cos(), -r * th.sin(),
            0.0, 0.0, r * th.sin(), r * th.cos(),
        );
        let f = multipliers_of(&m);
        assert!(f.trivial_deviation < 1e-12);
        assert!(f.accurate && f.stable);
        assert!((f.multipliers[1].norm() - 0.9).abs() < 1e-12);
        assert!((f.multipliers[1].arg().abs() - 0.7).abs() < 1e-12);
        assert!((f.multipliers[3] - 0.5).norm() < 1e-12);
        let mut grown = m;
        grown[(1, 1)] = 1.2;
        assert!(!multipliers_of(&grown).stable);
    }

    #[test]
    fn orbit_from_hopf_matches_local_estimate() {
        let s = sys(0.12, 0.985, 0.3, 0.0136);
        let hopf = hopf_point_of(&s).unwrap();
        let o = orbit_from_hopf(&s, &hopf, 0.002, &ContinuationOptions::default()).unwrap();
        let est = estimate_at(&s, &hopf, o.mu1).unwrap();
        assert!(o.mu1 > hopf.mu1_cr);
        assert!(o.residual < 1e-9, "{}", o.residual);
        assert!((o.amplitude / est.q1_max - 1.0).abs() < 0.05, "{} vs {}", o.amplitude, est.q1_max);
        assert!((o.period * hopf.omega1 / (2.0 * PI) - 1.0).abs() < 0.01);
        assert!(o.accurate && o.stable);
        let f = floquet(&o, &s, 1e-10).unwrap();
        assert!(f.trivial_deviation < TRIVIAL_MULTIPLIER_TOL);
        assert_eq!(f.stable, o.stable);
    }

    #[test]
    fn subcritical_seed_is_unstable_before_onset() {
        let s = sys(0.12, 0.970, 0.3, 0.0);
        let hopf = hopf_point_of(&s).unwrap();
        let o = orbit_from_hopf(&s, &hopf, 0.002, &ContinuationOptions::default()).unwrap();
        assert!(o.mu1 < hopf.mu1_cr);
        assert!(!o.stable && o.accurate);
        assert!(orbit_from_hopf(&s, &hopf, 0.0, &ContinuationOptions::default()).is_err());
    }

    #[test]
    fn equilibrium_branch_examples() {
        let b = equilibrium_branch(&sys(0.12, 0.970, 0.0, 0.0), &linspace(0.0, 0.2, 41)).unwrap();
        assert_eq!(b.events.len(), 1);
        assert!((b.events[0].mu1 - critical_mu1(EPS, 0.12, 0.970)).abs() < 1e-7);
        assert!(b.events[0].detection_residual < 1e-8);

        let t = optimal_tuning(EPS);
        let b = equilibrium_branch(&sys(0.097, t.gamma_opt, 0.0, 0.0), &linspace(0.0, 0.2, 41)).unwrap();
        // Near the double Hopf line both pairs cross together; the slower one
        // turns back later.
        assert_eq!(b.events.len(), 3);
        assert!(b.events[1].mu1 - b.events[0].mu1 < 1e-6);
        assert!(b.events[0].near_double && b.events[1].near_double && !b.events[2].near_double);
        assert!((b.events[0].period - b.events[1].period).abs() > 0.5);
        assert!((b.events[0].mu1 - critical_mu1(EPS, 0.097, t.gamma_opt)).abs() < 1e-7);

        let mc = critical_mu1(EPS, 0.12, 0.970);
        let b = equilibrium_branch(&sys(0.12, 0.970, 0.0, 0.0), &linspace(0.0, 0.9 * mc, 20)).unwrap();
        assert!(b.events.is_empty());
        assert!(equilibrium_branch(&sys(0.12, 0.970, 0.0, 0.0), &[0.1, 0.05]).is_err());
    }

    #[test]
    fn folds_only_for_the_linear_absorber() {
        let opts = ContinuationOptions::default();
        let ltva = branch_from_hopf(&sys(0.12, 0.985, 0.3, 0.0), &opts).unwrap();
        assert!(ltva.count(EventKind::Fold) >= 2);
        assert!(ltva.bistable());
        for e in ltva.events.iter().filter(|e| e.kind == EventKind::Fold) {
            assert!(e.detection_residual < 1e-5, "{e:?}");
            // A fold is a turning point in mu1, so it lies beyond both neighbours.
            let (a, b) = (&ltva.points[e.index - 1], &ltva.points[e.index]);
            let beyond = e.mu1 >= a.mu1.max(b.mu1) - 1e-9 || e.mu1 <= a.mu1.min(b.mu1) + 1e-9;
            assert!(beyond && (e.mu1 - a.mu1).abs() < opts.ds_max, "{e:?}");
        }
        assert!(ltva.all_accurate());
        let nltva = branch_from_hopf(&sys(0.12, 0.985, 0.3, 0.018), &opts).unwrap();
        assert_eq!(nltva.count(EventKind::Fold), 0);
        assert!(!nltva.bistable());
        assert_eq!(nltva.termination, Termination::Mu1Range);
    }

    #[test]
    fn neimark_sacker_near_double_hopf() {
        let b = branch_from_hopf(&sys(0.097, 0.985, 0.3, 0.0), &ContinuationOptions::default()).unwrap();
        assert!(b.count(EventKind::NeimarkSacker) >= 1);
        for e in b.events.iter().filter(|e| e.kind == EventKind::NeimarkSacker) {
            assert!(e.detection_residual < 1e-3);
        }
    }

    #[test]
    fn reruns_are_identical() {
        let opts = ContinuationOptions::default();
        let a = branch_from_hopf(&sys(0.12, 0.985, 0.3, 0.0), &opts).unwrap();
        let b = branch_from_hopf(&sys(0.12, 0.985, 0.3, 0.0), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn halving_tolerance_barely_moves_amplitude() {
        let s = sys(0.12, 0.985, 0.3, 0.0136);
        let hopf = hopf_point_of(&s).unwrap();
        let coarse = ContinuationOptions { tol: 1e-10, ..Default::default() };
        let fine = ContinuationOptions { tol: 5e-11, ..Default::default() };
        for d in [0.002, 0.02] {
            let a = orbit_from_hopf(&s, &hopf, d, &coarse).unwrap();
            let b = orbit_from_hopf(&s, &hopf, d, &fine).unwrap();
            assert!((a.amplitude / b.amplitude - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn onset_follows_delta() {
        let opts = ContinuationOptions::default();
        for (gamma, alpha3, beta3) in [
            (0.970, 0.0, 0.0),
            (0.970, 0.3, 0.0),
            (0.970, 0.3, 0.0136),
            (0.985, 0.0, 0.0),
            (0.985, 0.3, 0.0),
            (0.985, 0.3, 0.0136),
        ] {
            let b = branch_from_hopf(&sys(0.12, gamma, alpha3, beta3), &opts).unwrap();
            let d = delta(EPS, 0.12, gamma, alpha3, beta3).unwrap();
            assert_eq!(b.onset(), d.criticality, "gamma {gamma} alpha3 {alpha3} beta3 {beta3}");
        }
    }

    #[test]
    fn similarity_defaults() {
        let c = AbsorberKind::Cubic.default_coefficient(EPS, 0.3);
        assert!((c - 0.0136).abs() < 1e-4);
        let s = AbsorberKind::Quintic.system(EPS, 0.12, 0.985, 0.3, 0.1);
        assert_eq!((s.beta2, s.beta3, s.beta5), (0.0, 0.0, 0.1));
        let opts = ContinuationOptions::default();
        let run = |kind: AbsorberKind, gamma| {
            similarity_study(EPS, 0.12, gamma, 0.3, kind, kind.default_coefficient(EPS, 0.3), &opts).unwrap()
        };
        for kind in AbsorberKind::ALL {
            let r = run(kind, 0.970);
            let expect = if kind == AbsorberKind::Cubic { Criticality::Supercritical } else { Criticality::Subcritical };
            assert_eq!(r.onset, expect, "{}", kind.name());
        }
        let lin = run(AbsorberKind::Linear, 0.985);
        let quint = run(AbsorberKind::Quintic, 0.985);
        let (a, b) = (lin.branch.amplitudes_at(0.11), quint.branch.amplitudes_at(0.11));
        assert!(b[0] < a[0]);
    }

    #[test]
    fn rejects_bad_options() {
        let bad = ContinuationOptions { ds_min: 1.0, ..Default::default() };
        assert!(branch_from_hopf(&sys(0.12, 0.985, 0.3, 0.0), &bad).is_err());
        let bad = ContinuationOptions { tol: 1.0, ..Default::default() };
        assert!(branch_from_hopf(&sys(0.12, 0.985, 0.3, 0.0), &bad).is_err());
    }
}

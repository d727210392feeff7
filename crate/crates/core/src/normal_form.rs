//! Hopf bifurcation analysis at the loss of stability of the trivial
//! equilibrium.
//!
//! The linear part is brought to real Jordan form with `x = T y`; the
//! critical plane `(y1, y2)` carries the dynamics
//! `y' = [[s, w], [-w, s]] y + cubic(y)` and the cubic coefficient of the
//! radial normal form `r' = s r + delta r^3` decides criticality. With purely
//! cubic nonlinearities the centre manifold is flat to third order, so the
//! non-critical coordinates are simply dropped.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DimensionlessSystem;
use crate::stability::{critical_mu1_of, eigenvalues, optimal_tuning};

/// Eigen real part below which the critical pair counts as on the axis.
pub const CRITICAL_RE_TOL: f64 = 1e-9;
/// A non-critical pair this close to the axis flags a near-double Hopf point.
pub const NEAR_DOUBLE_TOL: f64 = 1e-3;
/// Step of the centred difference for `d sigma / d mu1`.
pub const SLOPE_STEP: f64 = 1e-5;
/// `|delta|` at or below this is a degenerate (codimension-two) verdict.
pub const DEGENERATE_DELTA: f64 = 1e-10;
/// Colour maps of the critical `alpha3` are trimmed at this value.
pub const ALPHA3_MAP_CAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codim {
    Single,
    NearDouble,
}

/// Loss of stability through a Hopf bifurcation, with the real eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfPoint {
    /// Linear system at the bifurcation (`mu1 = mu1_cr`).
    pub system: DimensionlessSystem,
    pub mu1_cr: f64,
    pub omega1: f64,
    /// Real part of the critical pair at `mu1_cr`.
    pub sigma: f64,
    /// `d Re(lambda) / d mu1` of the critical pair.
    pub sigma_slope: f64,
    pub lambda34: [Complex64; 2],
    /// Critical eigenvector `s1` (for `Im lambda > 0`), `s1[0] = 1` by default.
    pub eigenvector: [Complex64; 4],
    pub t: Matrix4<f64>,
    pub t_inv: Matrix4<f64>,
    pub t_condition: f64,
    pub codim: Codim,
}

fn null_vector(m: &Matrix4<Complex64>) -> Result<Vector4<Complex64>> {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD without V".into()))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &s)| if s < b.1 { (i, s) } else { b });
    Ok(v_t.row(imin).adjoint())
}

fn eigenvector(w: &Matrix4<f64>, lambda: Complex64) -> Result<Vector4<Complex64>> {
    let shifted = w.map(|v| Complex64::new(v, 0.0)) - Matrix4::from_diagonal_element(lambda);
    null_vector(&shifted)
}

fn condition_number(t: &Matrix4<f64>) -> f64 {
    let s = t.singular_values();
    s.max() / s.min()
}

/// Choice of the pair treated as critical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSelection {
    /// Smallest `|Re|`.
    Critical,
    /// Pair whose positive frequency is closest to the given value.
    Frequency(f64),
}

impl HopfPoint {
    /// Builds the eigen data of `sys` (at its own `mu1`) around one pair.
    pub fn at(sys: &DimensionlessSystem, pair: PairSelection) -> Result<HopfPoint> {
        Self::at_scaled(sys, pair, Complex64::new(1.0, 0.0))
    }

    fn at_scaled(sys: &DimensionlessSystem, pair: PairSelection, scale: Complex64) -> Result<HopfPoint> {
        let system = DimensionlessSystem { alpha3: 0.0, beta2: 0.0, beta3: 0.0, beta5: 0.0, ..*sys };
        let w = system.linear_matrix();
        let eigs = eigenvalues(&w);
        let upper: Vec<Complex64> = eigs.iter().copied().filter(|l| l.im > 1e-12).collect();
        let critical = match pair {
            PairSelection::Critical => upper.iter().copied().min_by(|a, b| a.re.abs().total_cmp(&b.re.abs())),
            PairSelection::Frequency(f) => upper.iter().copied().min_by(|a, b| (a.im - f).abs().total_cmp(&(b.im - f).abs())),
        }
        .ok_or_else(|| Error::NoHopf("no complex eigenvalue pair".into()))?;

        // Remaining two eigenvalues: drop the critical pair.
        let mut rest: Vec<Complex64> = eigs.to_vec();
        for target in [critical, critical.conj()] {
            let (i, _) = rest
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - target).norm().total_cmp(&(b.1 - target).norm()))
                .expect("four eigenvalues");
            rest.remove(i);
        }
        rest.sort_by(|a, b| b.im.total_cmp(&a.im).then(a.re.total_cmp(&b.re)));
        let lambda34 = [rest[0], rest[1]];

        let mut s1 = eigenvector(&w, critical)?;
        if s1[0].norm() < 1e-12 {
            return Err(Error::Numerical("critical eigenvector has no primary component".into()));
        }
        s1 /= s1[0];
        s1 *= scale;

        let mut t = Matrix4::zeros();
        t.set_column(0, &s1.map(|c| c.re));
        t.set_column(1, &s1.map(|c| c.im));
        if lambda34[0].im.abs() > 1e-10 {
            let mut s3 = eigenvector(&w, lambda34[0])?;
            let pivot = s3.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            s3 /= pivot;
            t.set_column(2, &s3.map(|c| c.re));
            t.set_column(3, &s3.map(|c| c.im));
        } else {
            let s3 = eigenvector(&w, Complex64::new(lambda34[0].re, 0.0))?;
            let s4 = eigenvector(&w, Complex64::new(lambda34[1].re, 0.0))?;
            let real = |v: Vector4<Complex64>| {
                let pivot = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
                (v / pivot).map(|c| c.re)
            };
            t.set_column(2, &real(s3));
            t.set_column(3, &real(s4));
        }
        let t_inv = t.try_inverse().ok_or_else(|| Error::Numerical("singular eigenbasis".into()))?;

        let h = SLOPE_STEP;
        let track = |mu1: f64| -> f64 {
            eigenvalues(&system.with_mu1(mu1).linear_matrix())
                .into_iter()
                .min_by(|a, b| (a - critical).norm().total_cmp(&(b - critical).norm()))
                .expect("four eigenvalues")
                .re
        };
        let sigma_slope = (track(system.mu1 + h) - track(system.mu1 - h)) / (2.0 * h);

        let codim = if lambda34[0].re.abs() < NEAR_DOUBLE_TOL {
            Codim::NearDouble
        } else {
            Codim::Single
        };

        Ok(HopfPoint {
            system,
            mu1_cr: system.mu1,
            omega1: critical.im,
            sigma: critical.re,
            sigma_slope,
            lambda34,
            eigenvector: [s1[0], s1[1], s1[2], s1[3]],
            t,
            t_condition: condition_number(&t),
            t_inv,
            codim,
        })
    }

    /// Same bifurcation with the critical eigenvector multiplied by `c`.
    pub fn rescaled(&self, c: Complex64) -> Result<HopfPoint> {
        let pair = PairSelection::Frequency(self.omega1);
        let base = self.eigenvector[0];
        Self::at_scaled(&self.system, pair, c * base)
    }

    /// `T^-1 W T` (block diagonal up to round-off).
    pub fn block_form(&self) -> Matrix4<f64> {
        self.t_inv * self.system.linear_matrix() * self.t
    }
}

/// Hopf point on the stability boundary of the linear tuning `(mu2, gamma)`.
pub fn hopf_point(eps: f64, mu2: f64, gamma: f64) -> Result<HopfPoint> {
    hopf_point_of(&DimensionlessSystem::linear(eps, 0.0, mu2, gamma))
}

/// [`hopf_point`] for an arbitrary template (its `mu1` is ignored).
pub fn hopf_point_of(template: &DimensionlessSystem) -> Result<HopfPoint> {
    let mu1_cr = critical_mu1_of(template);
    if !(mu1_cr > 0.0) {
        return Err(Error::NoHopf(format!(
            "trivial equilibrium is unstable for every mu1 > 0 (mu2 = {}, gamma = {})",
            template.mu2, template.gamma
        )));
    }
    let hopf = HopfPoint::at(&template.with_mu1(mu1_cr), PairSelection::Critical)?;
    if hopf.sigma.abs() > CRITICAL_RE_TOL {
        return Err(Error::Numerical(format!("critical real part {:.3e} off the axis", hopf.sigma)));
    }
    Ok(hopf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Supercritical,
    Subcritical,
    Degenerate,
}

impl Criticality {
    pub fn of(delta: f64) -> Criticality {
        if delta < -DEGENERATE_DELTA {
            Criticality::Supercritical
        } else if delta > DEGENERATE_DELTA {
            Criticality::Subcritical
        } else {
            Criticality::Degenerate
        }
    }
}

/// Coefficients of a cubic form `c30 y1^3 + c21 y1^2 y2 + c12 y1 y2^2 + c03 y2^3`.
type Cubic = [f64; 4];

fn cube((a, b): (f64, f64)) -> Cubic {
    [a * a * a, 3.0 * a * a * b, 3.0 * a * b * b, b * b * b]
}

/// `(a1 y1 + b1 y2)^2 (a2 y1 + b2 y2)`.
fn square_times((a1, b1): (f64, f64), (a2, b2): (f64, f64)) -> Cubic {
    [
        a1 * a1 * a2,
        a1 * a1 * b2 + 2.0 * a1 * b1 * a2,
        2.0 * a1 * b1 * b2 + b1 * b1 * a2,
        b1 * b1 * b2,
    ]
}

fn axpy(acc: &mut Cubic, k: f64, c: &Cubic) {
    for (a, v) in acc.iter_mut().zip(c) {
        *a += k * v;
    }
}

/// Cubic planar system on the critical plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanarCubic {
    pub d130: f64,
    pub d121: f64,
    pub d112: f64,
    pub d103: f64,
    pub d230: f64,
    pub d221: f64,
    pub d212: f64,
    pub d203: f64,
    /// The quintic absorber term was present and dropped at cubic order.
    pub quintic_ignored: bool,
}

impl PlanarCubic {
    /// First Lyapunov-type coefficient `(3 d130 + d112 + d221 + 3 d203) / 8`.
    pub fn delta(&self) -> f64 {
        (3.0 * self.d130 + self.d112 + self.d221 + 3.0 * self.d203) / 8.0
    }
}

/// Projects the cubic part of the vector field of `sys` (evaluated at the
/// Hopf point's `mu1`) onto the critical plane of `hopf`.
pub fn planar_reduction(sys: &DimensionlessSystem, hopf: &HopfPoint) -> Result<PlanarCubic> {
    if sys.has_quadratic() {
        return Err(Error::Unsupported(
            "quadratic absorber terms need second-order centre-manifold corrections".into(),
        ));
    }
    let t = &hopf.t;
    let ti = &hopf.t_inv;
    let form = |row: usize| (t[(row, 0)], t[(row, 1)]);
    let (x1, x2, x3) = (form(0), form(1), form(2));
    let mu1 = hopf.mu1_cr;

    let mut primary = [0.0; 4];
    axpy(&mut primary, -2.0 * mu1, &square_times(x1, x2));
    axpy(&mut primary, -sys.alpha3, &cube(x1));
    let x3_cubed = cube(x3);
    let mut row2 = primary;
    axpy(&mut row2, -sys.eps * sys.beta3, &x3_cubed);
    let mut row4 = primary;
    axpy(&mut row4, -(1.0 + sys.eps) * sys.beta3, &x3_cubed);

    let project = |r: usize| -> Cubic {
        let mut out = [0.0; 4];
        axpy(&mut out, ti[(r, 1)], &row2);
        axpy(&mut out, ti[(r, 3)], &row4);
        out
    };
    let f1 = project(0);
    let f2 = project(1);
    Ok(PlanarCubic {
        d130: f1[0],
        d121: f1[1],
        d112: f1[2],
        d103: f1[3],
        d230: f2[0],
        d221: f2[1],
        d212: f2[2],
        d203: f2[3],
        quintic_ignored: sys.beta5 != 0.0,
    })
}

/// `delta = delta0 + delta_alpha * alpha3 + delta_beta * beta3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaDecomposition {
    pub delta0: f64,
    pub delta_alpha: f64,
    pub delta_beta: f64,
}

impl DeltaDecomposition {
    /// Closed-form coefficients from the entries of `T` and `T^-1`.
    pub fn from_hopf(hopf: &HopfPoint) -> DeltaDecomposition {
        // 1-based accessors to keep the entry names readable.
        let t = |i: usize, j: usize| hopf.t[(i - 1, j - 1)];
        let th = |i: usize, j: usize| hopf.t_inv[(i - 1, j - 1)];
        let eps = hopf.system.eps;
        let mu1 = hopf.mu1_cr;

        let p1 = 3.0 * t(1, 1) * t(1, 1) * t(2, 1) + 2.0 * t(1, 1) * t(1, 2) * t(2, 2) + t(1, 2) * t(1, 2) * t(2, 1);
        let p2 = t(1, 1) * t(1, 1) * t(2, 2) + 2.0 * t(1, 1) * t(1, 2) * t(2, 1) + 3.0 * t(1, 2) * t(1, 2) * t(2, 2);
        let delta0 = -0.25 * mu1 * (th(1, 2) * p1 + th(1, 4) * p1 + (th(2, 2) + th(2, 4)) * p2);

        let delta_alpha = -3.0 / 8.0
            * (t(1, 1) * t(1, 1) + t(1, 2) * t(1, 2))
            * (th(1, 2) * t(1, 1) + th(1, 4) * t(1, 1) + t(1, 2) * (th(2, 2) + th(2, 4)));

        let delta_beta = -3.0 / 8.0
            * (t(3, 1) * t(3, 1) + t(3, 2) * t(3, 2))
            * (eps * (th(1, 2) * t(3, 1) + th(1, 4) * t(3, 1) + t(3, 2) * (th(2, 2) + th(2, 4)))
                + th(1, 4) * t(3, 1)
                + th(2, 4) * t(3, 2));

        DeltaDecomposition { delta0, delta_alpha, delta_beta }
    }

    pub fn delta(&self, alpha3: f64, beta3: f64) -> f64 {
        self.delta0 + self.delta_alpha * alpha3 + self.delta_beta * beta3
    }

    /// The same coefficients recovered from three planar reductions.
    pub fn from_projection(hopf: &HopfPoint) -> Result<DeltaDecomposition> {
        let at = |a: f64, b: f64| -> Result<f64> {
            let sys = hopf.system.with_nonlinear(a, b);
            Ok(planar_reduction(&sys, hopf)?.delta())
        };
        let d00 = at(0.0, 0.0)?;
        Ok(DeltaDecomposition {
            delta0: d00,
            delta_alpha: at(1.0, 0.0)? - d00,
            delta_beta: at(0.0, 1.0)? - d00,
        })
    }
}

/// Decomposition on the stability boundary of `(mu2, gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryDecomposition {
    pub mu2: f64,
    pub gamma: f64,
    pub mu1_cr: f64,
    pub codim: Codim,
    pub coefficients: DeltaDecomposition,
    /// Largest difference between the closed form and the projection route.
    pub route_mismatch: f64,
}

/// Agreement required between the two routes, relative to coefficient size.
const ROUTE_TOL: f64 = 1e-8;

pub fn delta_decomposition(eps: f64, mu2: f64, gamma: f64) -> Result<BoundaryDecomposition> {
    let hopf = hopf_point(eps, mu2, gamma)?;
    decomposition_of(&hopf)
}

pub fn decomposition_of(hopf: &HopfPoint) -> Result<BoundaryDecomposition> {
    let closed = DeltaDecomposition::from_hopf(hopf);
    let projected = DeltaDecomposition::from_projection(hopf)?;
    let mismatch = [
        (closed.delta0, projected.delta0),
        (closed.delta_alpha, projected.delta_alpha),
        (closed.delta_beta, projected.delta_beta),
    ]
    .iter()
    .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
    .fold(0.0, f64::max);
    if !(mismatch <= ROUTE_TOL) {
        return Err(Error::Numerical(format!(
            "closed-form and projected normal-form coefficients disagree ({mismatch:.3e})"
        )));
    }
    Ok(BoundaryDecomposition {
        mu2: hopf.system.mu2,
        gamma: hopf.system.gamma,
        mu1_cr: hopf.mu1_cr,
        codim: hopf.codim,
        coefficients: closed,
        route_mismatch: mismatch,
    })
}

/// Full set of normal-form data for one nonlinear configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalFormCoefficients {
    pub planar: PlanarCubic,
    pub delta0: f64,
    pub delta_alpha: f64,
    pub delta_beta: f64,
    pub delta: f64,
    pub criticality: Criticality,
    pub codim: Codim,
}

/// Normal form of `sys` (nonlinear ratios taken from it) at `hopf`.
pub fn normal_form(sys: &DimensionlessSystem, hopf: &HopfPoint) -> Result<NormalFormCoefficients> {
    let planar = planar_reduction(sys, hopf)?;
    let d = DeltaDecomposition::from_hopf(hopf);
    let delta = planar.delta();
    Ok(NormalFormCoefficients {
        planar,
        delta0: d.delta0,
        delta_alpha: d.delta_alpha,
        delta_beta: d.delta_beta,
        delta,
        criticality: Criticality::of(delta),
        codim: hopf.codim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalityVerdict {
    pub mu1_cr: f64,
    pub delta: f64,
    pub criticality: Criticality,
    pub codim: Codim,
}

/// Criticality of the Hopf bifurcation on the boundary of `(mu2, gamma)`.
pub fn delta(eps: f64, mu2: f64, gamma: f64, alpha3: f64, beta3: f64) -> Result<CriticalityVerdict> {
    let hopf = hopf_point(eps, mu2, gamma)?;
    let d = DeltaDecomposition::from_hopf(&hopf).delta(alpha3, beta3);
    Ok(CriticalityVerdict { mu1_cr: hopf.mu1_cr, delta: d, criticality: Criticality::of(d), codim: hopf.codim })
}

/// Criticality coefficients of the two single Hopf analyses at point C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubleHopfDeltas {
    /// Pair `+-j` critical.
    pub delta12: f64,
    /// Pair `+-j / sqrt(1 + eps)` critical.
    pub delta34: f64,
}

pub fn double_hopf_deltas(eps: f64, alpha3: f64, beta3: f64) -> DoubleHopfDeltas {
    let (e, s) = (eps, eps.sqrt());
    DoubleHopfDeltas {
        delta12: (-e * s / (1.0 + e) + 3.0 * s / (1.0 + e) * alpha3 - 3.0 * (1.0 + e) / s * beta3) / 8.0,
        delta34: 3.0 / 8.0 * (-s * alpha3 + (1.0 + e) * (1.0 + e) / s * beta3),
    }
}

/// Absorber cubic coefficient compensating the primary cubic stiffness.
pub fn beta3_tuning(eps: f64, alpha3: f64) -> f64 {
    eps / ((1.0 + eps) * (1.0 + eps)) * alpha3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorberRule {
    /// Linear absorber, `beta3 = 0`.
    Ltva,
    /// `beta3` from [`beta3_tuning`].
    Nltva,
}

impl AbsorberRule {
    pub fn beta3(&self, eps: f64, alpha3: f64) -> f64 {
        match self {
            AbsorberRule::Ltva => 0.0,
            AbsorberRule::Nltva => beta3_tuning(eps, alpha3),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AbsorberRule::Ltva => "ltva",
            AbsorberRule::Nltva => "nltva",
        }
    }
}

/// Cubic stiffness of the primary at which the bifurcation turns subcritical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalAlpha3 {
    /// Signed critical value; `None` when unbounded.
    pub value: Option<f64>,
    /// Map value for positive `alpha3`, trimmed at [`ALPHA3_MAP_CAP`].
    pub positive: f64,
    /// Map value for negative `alpha3` (magnitude), trimmed likewise.
    pub negative: f64,
    pub codim: Codim,
}

pub fn critical_alpha3(eps: f64, mu2: f64, gamma: f64, rule: AbsorberRule) -> Result<CriticalAlpha3> {
    let hopf = hopf_point(eps, mu2, gamma)?;
    Ok(critical_alpha3_of(&hopf, rule))
}

pub fn critical_alpha3_of(hopf: &HopfPoint, rule: AbsorberRule) -> CriticalAlpha3 {
    let d = DeltaDecomposition::from_hopf(hopf);
    let eps = hopf.system.eps;
    let slope = match rule {
        AbsorberRule::Ltva => d.delta_alpha,
        AbsorberRule::Nltva => d.delta_alpha + d.delta_beta * beta3_tuning(eps, 1.0),
    };
    let value = (slope.abs() >= 1e-12).then(|| -d.delta0 / slope);
    let trim = |v: Option<f64>| v.map_or(ALPHA3_MAP_CAP, |v| v.min(ALPHA3_MAP_CAP));
    CriticalAlpha3 {
        value,
        positive: trim(value.filter(|v| *v > 0.0)),
        negative: trim(value.filter(|v| *v < 0.0).map(f64::abs)),
        codim: hopf.codim,
    }
}

/// Uniform sampling window around the optimal tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningUncertainty {
    /// Relative half-width on `gamma`.
    pub gamma: f64,
    /// Relative half-width on `mu2`.
    pub mu2: f64,
}

impl Default for TuningUncertainty {
    fn default() -> Self {
        TuningUncertainty { gamma: 0.01, mu2: 0.05 }
    }
}

/// Draw `index` of a seeded stream; independent of evaluation order.
pub fn tuning_sample(eps: f64, window: TuningUncertainty, seed: u64, index: u64) -> (f64, f64) {
    let opt = optimal_tuning(eps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let g = opt.gamma_opt * (1.0 + window.gamma * rng.random_range(-1.0..=1.0));
    let m = opt.mu2_opt * (1.0 + window.mu2 * rng.random_range(-1.0..=1.0));
    (m, g)
}

/// Fraction of mistuned absorbers whose bifurcation is supercritical.
///
/// Samples falling near the double Hopf line are still classified by the
/// sign of `delta`.
pub fn supercritical_probability(
    eps: f64,
    alpha3: f64,
    rule: AbsorberRule,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    supercritical_probability_in(eps, alpha3, rule, n_samples, seed, TuningUncertainty::default())
}

pub fn supercritical_probability_in(
    eps: f64,
    alpha3: f64,
    rule: AbsorberRule,
    n_samples: usize,
    seed: u64,
    window: TuningUncertainty,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::domain("n_samples", "at least one sample is required"));
    }
    let beta3 = rule.beta3(eps, alpha3);
    let hits = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let (mu2, gamma) = tuning_sample(eps, window, seed, i);
            let hopf = hopf_point(eps, mu2, gamma)?;
            Ok(usize::from(DeltaDecomposition::from_hopf(&hopf).delta(alpha3, beta3) < 0.0))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / n_samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::{double_hopf_locus, linspace};
    use rand::Rng;

    const EPS: f64 = 0.05;

    #[test]
    fn block_diagonal_eigenbasis() {
        for (mu2, gamma) in [(0.12, 0.970), (0.12, 0.985), (0.2, 1.1), (0.097, 0.97)] {
            let h = hopf_point(EPS, mu2, gamma).unwrap();
            let a = h.block_form();
            assert!(h.sigma.abs() < 1e-9);
            assert!((a[(0, 0)] - h.sigma).abs() < 1e-9 && (a[(1, 1)] - h.sigma).abs() < 1e-9);
            assert!((a[(0, 1)] - h.omega1).abs() < 1e-9 && (a[(1, 0)] + h.omega1).abs() < 1e-9);
            for (r, c) in [(0, 2), (0, 3), (1, 2), (1, 3), (2, 0), (2, 1), (3, 0), (3, 1)] {
                assert!(a[(r, c)].abs() < 1e-9, "entry ({r},{c}) = {}", a[(r, c)]);
            }
            assert!(h.t_condition.is_finite());
            assert_eq!(h.eigenvector[0], Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn optimal_tuning_is_near_double() {
        let t = optimal_tuning(EPS);
        let h = hopf_point(EPS, t.mu2_opt, t.gamma_opt).unwrap();
        assert_eq!(h.codim, Codim::NearDouble);
        let mut freqs = [h.omega1, h.lambda34[0].im.abs()];
        freqs.sort_by(f64::total_cmp);
        assert!((freqs[0] - 1.0 / (1.0 + EPS).sqrt()).abs() < 1e-4);
        assert!((freqs[1] - 1.0).abs() < 1e-4);
        assert_eq!(hopf_point(EPS, 0.12, 0.970).unwrap().codim, Codim::Single);
    }

    #[test]
    fn sigma_slope_matches_secant() {
        let h = hopf_point(EPS, 0.12, 0.970).unwrap();
        let re = |mu1: f64| {
            eigenvalues(&h.system.with_mu1(mu1).linear_matrix())
                .into_iter()
                .min_by(|a, b| (a.im - h.omega1).abs().total_cmp(&(b.im - h.omega1).abs()))
                .unwrap()
                .re
        };
        // The second pair is close, so the real part curves quickly: keep the
        // secant short.
        let secant = (re(h.mu1_cr + 1e-6) - re(h.mu1_cr)) / 1e-6;
        assert!(h.sigma_slope > 0.0);
        assert!((secant - h.sigma_slope).abs() / h.sigma_slope < 1e-3);
    }

    #[test]
    fn reference_sign_patterns() {
        let d = delta_decomposition(EPS, 0.12, 0.970).unwrap().coefficients;
        assert!(d.delta0 < 0.0 && d.delta_alpha > 0.0 && d.delta_beta < 0.0);
        let d = delta_decomposition(EPS, 0.12, 0.985).unwrap().coefficients;
        assert!(d.delta_alpha < 0.0);
        let t = optimal_tuning(EPS);
        let d = delta_decomposition(EPS, t.mu2_opt * 1.02, t.gamma_opt).unwrap().coefficients;
        assert!((d.delta_alpha / d.delta_beta + 0.05).abs() < 0.01);
    }

    #[test]
    fn verdicts() {
        let v = |g, a, b| delta(EPS, 0.12, g, a, b).unwrap().criticality;
        assert_eq!(v(0.970, 0.0, 0.0), Criticality::Supercritical);
        assert_eq!(v(0.970, 0.3, 0.0), Criticality::Subcritical);
        assert_eq!(v(0.970, 0.3, 0.0136), Criticality::Supercritical);
        assert_eq!(v(0.985, 0.3, 0.0), Criticality::Supercritical);
        assert_eq!(Criticality::of(5e-11), Criticality::Degenerate);
    }

    #[test]
    fn linear_primary_is_supercritical_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let mu2 = rng.random_range(0.05..0.3);
            let gamma = rng.random_range(0.85..1.15);
            let d = delta(EPS, mu2, gamma, 0.0, 0.0).unwrap();
            assert_eq!(d.criticality, Criticality::Supercritical, "mu2 {mu2} gamma {gamma}");
        }
    }

    #[test]
    fn projection_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let mu2 = rng.random_range(0.05..0.3);
            let gamma = rng.random_range(0.85..1.15);
            let hopf = hopf_point(EPS, mu2, gamma).unwrap();
            let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1));
            let sys = hopf.system.with_nonlinear(a, b);
            let direct = planar_reduction(&sys, &hopf).unwrap().delta();
            let closed = DeltaDecomposition::from_hopf(&hopf).delta(a, b);
            assert!((direct - closed).abs() < 1e-9 * closed.abs().max(1.0));
        }
    }

    #[test]
    fn pure_vdp_projection() {
        // Only the self-excitation cubic -2 mu1 x1^2 x2 in rows 2 and 4.
        let hopf = hopf_point(EPS, 0.12, 0.985).unwrap();
        let p = planar_reduction(&hopf.system, &hopf).unwrap();
        let (t, ti) = (hopf.t, hopf.t_inv);
        let (a1, b1, a2, b2) = (t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]);
        let k = -2.0 * hopf.mu1_cr;
        let mono = [a1 * a1 * a2, a1 * a1 * b2 + 2.0 * a1 * b1 * a2, 2.0 * a1 * b1 * b2 + b1 * b1 * a2, b1 * b1 * b2];
        let r1 = k * (ti[(0, 1)] + ti[(0, 3)]);
        let r2 = k * (ti[(1, 1)] + ti[(1, 3)]);
        let got = [p.d130, p.d121, p.d112, p.d103, p.d230, p.d221, p.d212, p.d203];
        let want = [r1 * mono[0], r1 * mono[1], r1 * mono[2], r1 * mono[3], r2 * mono[0], r2 * mono[1], r2 * mono[2], r2 * mono[3]];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_rejected_quintic_ignored() {
        let hopf = hopf_point(EPS, 0.12, 0.97).unwrap();
        let quad = DimensionlessSystem { beta2: 0.01, ..hopf.system };
        assert!(matches!(planar_reduction(&quad, &hopf), Err(Error::Unsupported(_))));
        let cubic = hopf.system.with_nonlinear(0.3, 0.0136);
        let quintic = DimensionlessSystem { beta5: 0.5, ..cubic };
        let a = planar_reduction(&cubic, &hopf).unwrap();
        let b = planar_reduction(&quintic, &hopf).unwrap();
        assert!(b.quintic_ignored && !a.quintic_ignored);
        assert_eq!(a.delta(), b.delta());
    }

    #[test]
    fn sign_invariant_under_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = hopf_point(EPS, 0.12, 0.970).unwrap();
        let sys = base.system.with_nonlinear(0.3, 0.0);
        let d0 = planar_reduction(&sys, &base).unwrap().delta();
        for _ in 0..50 {
            let c = Complex64::from_polar(rng.random_range(0.1..10.0), rng.random_range(0.0..std::f64::consts::TAU));
            let h = base.rescaled(c).unwrap();
            let d = planar_reduction(&sys, &h).unwrap().delta();
            assert_eq!(d.signum(), d0.signum());
            // delta scales with |c|^2
            assert!((d / d0 - c.norm_sqr()).abs() < 1e-8 * c.norm_sqr());
        }
    }

    #[test]
    fn delta_is_affine() {
        let hopf = hopf_point(EPS, 0.15, 1.0).unwrap();
        let at = |a: f64, b: f64| planar_reduction(&hopf.system.with_nonlinear(a, b), &hopf).unwrap().delta();
        // Three non-collinear points: (0.2, 0.01), (-0.5, 0.03), (0.7, -0.02).
        let pts = [(0.2, 0.01), (-0.5, 0.03), (0.7, -0.02)];
        let v: Vec<f64> = pts.iter().map(|&(a, b)| at(a, b)).collect();
        let m = nalgebra::Matrix3::new(1.0, pts[0].0, pts[0].1, 1.0, pts[1].0, pts[1].1, 1.0, pts[2].0, pts[2].1);
        let sol = m.lu().solve(&nalgebra::Vector3::new(v[0], v[1], v[2])).unwrap();
        let d = DeltaDecomposition::from_hopf(&hopf);
        assert!((sol[0] - d.delta0).abs() < 1e-10);
        assert!((sol[1] - d.delta_alpha).abs() < 1e-10);
        assert!((sol[2] - d.delta_beta).abs() < 1e-10);
    }

    #[test]
    fn double_hopf_closed_forms() {
        let d = double_hopf_deltas(EPS, 0.0, 0.0);
        assert!((d.delta12 + EPS * EPS.sqrt() / (8.0 * 1.05)).abs() < 1e-15);
        assert!((d.delta12 + 0.0013310).abs() < 1e-7);
        assert_eq!(d.delta34, 0.0);
        let reference = double_hopf_deltas(EPS, 0.0, 0.0).delta12;
        for a in [0.0, 0.3, 1.0] {
            let d = double_hopf_deltas(EPS, a, beta3_tuning(EPS, a));
            assert!(d.delta34.abs() < 1e-10);
            assert!((d.delta12 - reference).abs() < 1e-10);
        }
    }

    /// At point C the numerically projected coefficients for either pair are
    /// positive multiples of the closed forms (the multiple depends on the
    /// eigenvector normalisation).
    #[test]
    fn double_hopf_closed_forms_match_projection() {
        let t = optimal_tuning(EPS);
        let sys = DimensionlessSystem::linear(EPS, t.mu1_max, t.mu2_opt, t.gamma_opt);
        let s = EPS.sqrt();
        let closed12 = [-EPS * s / (1.0 + EPS) / 8.0, 3.0 * s / (1.0 + EPS) / 8.0, -3.0 * (1.0 + EPS) / s / 8.0];
        let closed34 = [0.0, -3.0 / 8.0 * s, 3.0 / 8.0 * (1.0 + EPS).powi(2) / s];
        for (freq, closed) in [(1.0, closed12), (1.0 / (1.0 + EPS).sqrt(), closed34)] {
            let h = HopfPoint::at(&sys, PairSelection::Frequency(freq)).unwrap();
            let d = DeltaDecomposition::from_projection(&h).unwrap();
            let k = d.delta_alpha / closed[1];
            assert!(k > 0.0);
            assert!((d.delta_beta / closed[2] - k).abs() < 1e-8 * k);
            assert!((d.delta0 - k * closed[0]).abs() < 1e-8 * k);
        }
    }

    #[test]
    fn ratio_constant_along_double_hopf_line() {
        let t = optimal_tuning(EPS);
        let target = -EPS / (1.0 + EPS).powi(2);
        for p in double_hopf_locus(EPS, &linspace(0.03, t.mu2_opt, 12)) {
            let sys = DimensionlessSystem::linear(EPS, p.mu1, p.mu2, p.gamma);
            let eigs = eigenvalues(&sys.linear_matrix());
            for f in eigs.iter().filter(|l| l.im > 0.0).map(|l| l.im) {
                let h = HopfPoint::at(&sys, PairSelection::Frequency(f)).unwrap();
                let d = DeltaDecomposition::from_hopf(&h);
                assert!((d.delta_alpha / d.delta_beta - target).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn tuning_rule_examples() {
        assert!((beta3_tuning(EPS, 0.3) - 0.013605).abs() < 1e-6);
        assert_eq!(beta3_tuning(EPS, 0.0), 0.0);
        assert!((beta3_tuning(EPS, 4.0 / 3.0) - 0.0605).abs() < 1e-4);
        assert!((beta3_tuning(EPS, 0.08) - 0.0036).abs() < 1e-4);
    }

    #[test]
    fn critical_alpha3_near_point_c() {
        let t = optimal_tuning(EPS);
        let mu2 = t.mu2_opt * 1.001;
        let ltva = critical_alpha3(EPS, mu2, t.gamma_opt, AbsorberRule::Ltva).unwrap();
        assert!(ltva.value.unwrap().abs() < 0.01);
        let nltva = critical_alpha3(EPS, mu2, t.gamma_opt, AbsorberRule::Nltva).unwrap();
        assert_eq!(nltva.positive, ALPHA3_MAP_CAP);
        assert!(nltva.negative > ltva.negative);
    }

    #[test]
    fn probability_basics() {
        for rule in [AbsorberRule::Ltva, AbsorberRule::Nltva] {
            assert_eq!(supercritical_probability(EPS, 0.0, rule, 2000, 9).unwrap(), 1.0);
        }
        let a = supercritical_probability(EPS, 0.5, AbsorberRule::Ltva, 500, 1).unwrap();
        let b = supercritical_probability(EPS, 0.5, AbsorberRule::Ltva, 500, 1).unwrap();
        assert_eq!(a, b);
        assert!(supercritical_probability(EPS, 0.5, AbsorberRule::Ltva, 0, 1).is_err());
    }

    #[test]
    fn samples_do_not_depend_on_thread_count() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| supercritical_probability(EPS, 0.4, AbsorberRule::Ltva, 400, 2).unwrap());
        let parallel = supercritical_probability(EPS, 0.4, AbsorberRule::Ltva, 400, 2).unwrap();
        assert_eq!(serial, parallel);
    }
}

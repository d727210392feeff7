//! Linear stability of the trivial equilibrium.
//!
//! Routh-Hurwitz conditions on the quartic characteristic polynomial, the
//! stability boundary in `mu1`, the corner points A/B/C of the boundary and
//! the closed-form optimal linear tuning.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::DimensionlessSystem;

/// Real parts above this count as unstable when classifying eigenvalues.
pub const EIGEN_UNSTABLE_TOL: f64 = 1e-9;
/// Hurwitz quantities within this band of zero are reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;

/// `a4 z^4 + a3 z^3 + a2 z^2 + a1 z + a0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharPoly {
    pub a4: f64,
    pub a3: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl CharPoly {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        (((z * self.a4 + self.a3) * z + self.a2) * z + self.a1) * z + self.a0
    }

    /// Second Hurwitz quantity `(a3 a2 - a4 a1) / a3`; `None` when `a3 = 0`.
    pub fn e2(&self) -> Option<f64> {
        (self.a3 != 0.0).then(|| (self.a3 * self.a2 - self.a4 * self.a1) / self.a3)
    }

    /// Third Hurwitz quantity `e2 a1 - a3 a0`.
    pub fn e3(&self) -> Option<f64> {
        self.e2().map(|e2| e2 * self.a1 - self.a3 * self.a0)
    }
}

/// Characteristic polynomial `det(zI - W)` in closed form.
pub fn char_poly(sys: &DimensionlessSystem) -> CharPoly {
    let (e, g, m) = (sys.eps, sys.gamma, sys.mu1);
    let d = sys.absorber_damping();
    CharPoly {
        a4: 1.0,
        a3: (1.0 + e) * d - 2.0 * m,
        a2: (1.0 + e) * g * g - 2.0 * d * m + 1.0,
        a1: d - 2.0 * g * g * m,
        a0: g * g,
    }
}

/// Eigenvalues of a real 4x4 matrix sorted by (real, imaginary) part.
pub fn eigenvalues(m: &Matrix4<f64>) -> [Complex64; 4] {
    let ev = m.complex_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    out
}

/// Number of conjugate pairs (or real roots, paired up) in the right half plane.
pub fn unstable_pairs(eigs: &[Complex64]) -> u8 {
    let n = eigs.iter().filter(|l| l.re > EIGEN_UNSTABLE_TOL).count();
    n.div_ceil(2) as u8
}

/// Per-condition outcome of the Hurwitz test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HurwitzFlags {
    pub a3: bool,
    pub a2: bool,
    pub a1: bool,
    pub a0: bool,
    pub e2: bool,
    pub e3: bool,
}

impl HurwitzFlags {
    pub fn all(&self) -> bool {
        self.a3 && self.a2 && self.a1 && self.a0 && self.e2 && self.e3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub coeffs: CharPoly,
    /// `None` when `a3 = 0` (boundary-degenerate).
    pub e2: Option<f64>,
    pub e3: Option<f64>,
    pub condition_flags: HurwitzFlags,
    pub eigenvalues: [Complex64; 4],
    pub unstable_pairs: u8,
    pub stable: bool,
    pub verdict: Verdict,
}

impl StabilityReport {
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn hurwitz_flags(p: &CharPoly) -> HurwitzFlags {
    HurwitzFlags {
        a3: p.a3 > 0.0,
        a2: p.a2 > 0.0,
        a1: p.a1 > 0.0,
        a0: p.a0 > 0.0,
        e2: p.e2().is_some_and(|v| v > 0.0),
        e3: p.e3().is_some_and(|v| v > 0.0),
    }
}

/// Hurwitz verdict only, without the eigenvalue solve.
pub fn is_hurwitz_stable(sys: &DimensionlessSystem) -> bool {
    hurwitz_flags(&char_poly(sys)).all()
}

/// Without an absorber spring (`gamma = 0`) the polynomial is `z` times a
/// cubic; this tests the cubic, i.e. every eigenvalue but the structural zero.
pub fn is_stable_but_zero(sys: &DimensionlessSystem) -> bool {
    let p = char_poly(sys);
    p.a3 > 0.0 && p.a1 > 0.0 && p.a3 * p.a2 - p.a1 > 0.0
}

pub fn routh_hurwitz(sys: &DimensionlessSystem) -> StabilityReport {
    let coeffs = char_poly(sys);
    let flags = hurwitz_flags(&coeffs);
    let (e2, e3) = (coeffs.e2(), coeffs.e3());
    let stable = flags.all();
    let smallest = [coeffs.a3, coeffs.a2, coeffs.a1, coeffs.a0, e2.unwrap_or(0.0), e3.unwrap_or(0.0)]
        .into_iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let verdict = if smallest <= MARGINAL_BAND {
        Verdict::Marginal
    } else if stable {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    let eigs = eigenvalues(&sys.linear_matrix());
    StabilityReport {
        coeffs,
        e2,
        e3,
        condition_flags: flags,
        eigenvalues: eigs,
        unstable_pairs: unstable_pairs(&eigs),
        stable,
        verdict,
    }
}

/// Largest `mu1 >= 0` keeping the trivial equilibrium stable.
///
/// Returns 0 when the equilibrium is already unstable (or marginal) at
/// `mu1 = 0`.
pub fn critical_mu1(eps: f64, mu2: f64, gamma: f64) -> f64 {
    critical_mu1_of(&DimensionlessSystem::linear(eps, 0.0, mu2, gamma))
}

/// [`critical_mu1`] for an arbitrary template; only its linear part matters.
///
/// For an absorber without linear spring the structural zero eigenvalue is
/// ignored.
pub fn critical_mu1_of(template: &DimensionlessSystem) -> f64 {
    let test = if template.gamma == 0.0 { is_stable_but_zero } else { is_hurwitz_stable };
    let at = |mu1: f64| test(&template.with_mu1(mu1));
    if !at(0.0) {
        return 0.0;
    }
    // a3 > 0 requires mu1 < (1 + eps) d / 2, so the bracket end is unstable.
    let hi = 0.5 * (1.0 + template.eps) * template.absorber_damping();
    const SCAN: usize = 256;
    let mut lo = 0.0;
    let mut up = hi;
    for i in 1..=SCAN {
        let m = hi * i as f64 / SCAN as f64;
        if !at(m) {
            up = m;
            break;
        }
        lo = m;
    }
    // Bisect down to adjacent floats; the Hurwitz test is cheap.
    loop {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        if at(mid) {
            lo = mid;
        } else {
            up = mid;
        }
    }
    lo
}

/// Optimal linear tuning and the resulting stability limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningResult {
    pub gamma_opt: f64,
    pub mu2_opt: f64,
    pub mu1_max: f64,
}

pub fn optimal_tuning(eps: f64) -> TuningResult {
    TuningResult {
        gamma_opt: 1.0 / (1.0 + eps).sqrt(),
        mu2_opt: 0.5 * (eps / (1.0 + eps)).sqrt(),
        mu1_max: 0.5 * eps.sqrt(),
    }
}

/// Corner of the stability boundary in the `(mu1, gamma)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub mu1: f64,
    pub gamma: f64,
}

/// Point A (`a3 = a1 = 0`) and point B (`e3 = 0` at `gamma = 1/sqrt(1+eps)`).
pub fn points_ab(eps: f64, mu2: f64) -> Result<(BoundaryPoint, BoundaryPoint)> {
    if !(mu2 > 0.0) {
        return Err(Error::domain("mu2", "point B requires mu2 > 0"));
    }
    let root = (1.0 + eps).sqrt();
    let gamma = 1.0 / root;
    Ok((
        BoundaryPoint { mu1: mu2 * root, gamma },
        BoundaryPoint { mu1: eps / (4.0 * mu2 * root), gamma },
    ))
}

/// Monotone axes of a stability chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartGrid {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn check_axis(name: &'static str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::domain(name, "axis must be non-empty"));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain(name, "axis must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartNode {
    pub mu1: f64,
    pub mu2: f64,
    pub gamma: f64,
    pub stable: bool,
    pub unstable_pairs: u8,
    /// Some axis neighbour has a different verdict.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityChart {
    pub eps: f64,
    pub grid: ChartGrid,
    /// Node `(i, j, k)` over `(mu1, mu2, gamma)` sits at `(k * n2 + j) * n1 + i`.
    pub nodes: Vec<ChartNode>,
}

impl StabilityChart {
    pub fn node(&self, i: usize, j: usize, k: usize) -> &ChartNode {
        let (n1, n2) = (self.grid.mu1.len(), self.grid.mu2.len());
        &self.nodes[(k * n2 + j) * n1 + i]
    }
}

pub fn stability_chart(eps: f64, grid: ChartGrid) -> Result<StabilityChart> {
    check_axis("mu1", &grid.mu1)?;
    check_axis("mu2", &grid.mu2)?;
    check_axis("gamma", &grid.gamma)?;
    let (n1, n2, n3) = (grid.mu1.len(), grid.mu2.len(), grid.gamma.len());
    let total = n1 * n2 * n3;
    let mut nodes: Vec<ChartNode> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let i = idx % n1;
            let j = (idx / n1) % n2;
            let k = idx / (n1 * n2);
            let sys = DimensionlessSystem::linear(eps, grid.mu1[i], grid.mu2[j], grid.gamma[k]);
            let r = routh_hurwitz(&sys);
            ChartNode {
                mu1: sys.mu1,
                mu2: sys.mu2,
                gamma: sys.gamma,
                stable: r.stable,
                unstable_pairs: r.unstable_pairs,
                boundary: false,
            }
        })
        .collect();
    let verdict: Vec<bool> = nodes.iter().map(|n| n.stable).collect();
    for idx in 0..total {
        let i = idx % n1;
        let j = (idx / n1) % n2;
        let k = idx / (n1 * n2);
        let mut neighbours = Vec::with_capacity(6);
        if i > 0 {
            neighbours.push(idx - 1);
        }
        if i + 1 < n1 {
            neighbours.push(idx + 1);
        }
        if j > 0 {
            neighbours.push(idx - n1);
        }
        if j + 1 < n2 {
            neighbours.push(idx + n1);
        }
        if k > 0 {
            neighbours.push(idx - n1 * n2);
        }
        if k + 1 < n3 {
            neighbours.push(idx + n1 * n2);
        }
        nodes[idx].boundary = neighbours.into_iter().any(|n| verdict[n] != verdict[idx]);
    }
    Ok(StabilityChart { eps, grid, nodes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubleHopfPoint {
    pub mu1: f64,
    pub mu2: f64,
    pub gamma: f64,
}

/// Locus of double Hopf points on the stability boundary for the given `mu2`
/// values. Values above the optimal damping are skipped: there the boundary
/// is reached through a single Hopf bifurcation first.
pub fn double_hopf_locus(eps: f64, mu2_values: &[f64]) -> Vec<DoubleHopfPoint> {
    let opt = optimal_tuning(eps);
    mu2_values
        .iter()
        .copied()
        .filter(|&mu2| mu2 > 0.0 && mu2 <= opt.mu2_opt * (1.0 + 1e-12))
        .filter_map(|mu2| solve_double_hopf(eps, mu2))
        .collect()
}

/// Newton solve of `a3 = a1 = 0` in `(mu1, gamma)`: two imaginary pairs
/// require both odd coefficients to vanish.
fn solve_double_hopf(eps: f64, mu2: f64) -> Option<DoubleHopfPoint> {
    let (mut mu1, mut gamma) = (mu2, 1.0);
    for _ in 0..50 {
        let p = char_poly(&DimensionlessSystem::linear(eps, mu1, mu2, gamma));
        let (f1, f2) = (p.a3, p.a1);
        let j11 = -2.0;
        let j12 = 2.0 * (1.0 + eps) * mu2;
        let j21 = -2.0 * gamma * gamma;
        let j22 = 2.0 * mu2 - 4.0 * gamma * mu1;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            return None;
        }
        let d_mu1 = (f1 * j22 - f2 * j12) / det;
        let d_gamma = (j11 * f2 - j21 * f1) / det;
        mu1 -= d_mu1;
        gamma -= d_gamma;
        if d_mu1.abs() < 1e-15 && d_gamma.abs() < 1e-15 {
            break;
        }
    }
    let p = char_poly(&DimensionlessSystem::linear(eps, mu1, mu2, gamma));
    // Both roots of w^2 + a2 w + a0 must be real and negative.
    let disc = p.a2 * p.a2 - 4.0 * p.a0;
    (p.a3.abs() < 1e-12 && p.a1.abs() < 1e-12 && p.a2 > 0.0 && disc >= 0.0)
        .then_some(DoubleHopfPoint { mu1, mu2, gamma })
}

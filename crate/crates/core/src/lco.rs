//! Near-onset LCO amplitude from the Hopf normal form.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::DimensionlessSystem;
use crate::normal_form::{hopf_point_of, normal_form, Criticality, HopfPoint};

/// Distance from onset past which the leading-order estimate is flagged.
pub const FAR_FROM_ONSET: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalLcoEstimate {
    /// Radial amplitude in the normal-form coordinates.
    pub r: f64,
    /// Peak |q1| of the reconstructed harmonic.
    pub q1_max: f64,
    pub mu1: f64,
    pub mu1_cr: f64,
    pub delta: f64,
    pub sigma_slope: f64,
    /// False when `-sigma' (mu1 - mu1_cr) / delta < 0` (no cycle on this side).
    pub valid: bool,
    pub far_from_onset: bool,
}

impl LocalLcoEstimate {
    pub fn criticality(&self) -> Criticality {
        Criticality::of(self.delta)
    }
}

/// Estimate for a system carrying its own nonlinear coefficients.
///
/// The linear part of `sys` (with `mu1` ignored) fixes the Hopf point.
pub fn lco_amplitude_local_of(sys: &DimensionlessSystem, mu1: f64) -> Result<LocalLcoEstimate> {
    let hopf = hopf_point_of(sys)?;
    estimate_at(sys, &hopf, mu1)
}

pub fn lco_amplitude_local(
    eps: f64,
    mu2: f64,
    gamma: f64,
    alpha3: f64,
    beta3: f64,
    mu1: f64,
) -> Result<LocalLcoEstimate> {
    let sys = DimensionlessSystem::linear(eps, 0.0, mu2, gamma).with_nonlinear(alpha3, beta3);
    lco_amplitude_local_of(&sys, mu1)
}

/// Estimate from an already computed Hopf point.
pub fn estimate_at(sys: &DimensionlessSystem, hopf: &HopfPoint, mu1: f64) -> Result<LocalLcoEstimate> {
    let nf = normal_form(sys, hopf)?;
    if nf.criticality == Criticality::Degenerate {
        return Err(Error::Numerical(format!(
            "degenerate criticality coefficient {:.3e}: no cubic amplitude estimate",
            nf.delta
        )));
    }
    let dmu = mu1 - hopf.mu1_cr;
    let r2 = -hopf.sigma_slope * dmu / nf.delta;
    let valid = r2 >= 0.0;
    let r = if valid { r2.sqrt() } else { 0.0 };
    // Only y1, y2 are excited on the centre manifold; the peak of
    // r (t11 cos phi + t12 sin phi) is r * hypot(t11, t12).
    let q1_max = r * hopf.t[(0, 0)].hypot(hopf.t[(0, 1)]);
    Ok(LocalLcoEstimate {
        r,
        q1_max,
        mu1,
        mu1_cr: hopf.mu1_cr,
        delta: nf.delta,
        sigma_slope: hopf.sigma_slope,
        valid,
        far_from_onset: dmu.abs() > FAR_FROM_ONSET,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsoAmplitudeCell {
    pub mu2: f64,
    pub gamma: f64,
    pub mu1_cr: f64,
    pub q1_max: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoAmplitudeMap {
    pub eps: f64,
    pub alpha3: f64,
    pub beta3: f64,
    pub delta_mu1: f64,
    /// Row-major over `(mu2, gamma)` with `gamma` varying fastest. Nodes
    /// without a Hopf point on the boundary are left out.
    pub cells: Vec<IsoAmplitudeCell>,
    pub skipped: usize,
}

impl IsoAmplitudeMap {
    /// Smallest valid amplitude on the map.
    pub fn minimum(&self) -> Option<&IsoAmplitudeCell> {
        self.cells
            .iter()
            .filter(|c| c.valid)
            .min_by(|a, b| a.q1_max.total_cmp(&b.q1_max))
    }
}

pub fn iso_amplitude_map(
    eps: f64,
    alpha3: f64,
    beta3: f64,
    delta_mu1: f64,
    mu2: &[f64],
    gamma: &[f64],
) -> Result<IsoAmplitudeMap> {
    if !(delta_mu1 > 0.0) {
        return Err(Error::domain("delta_mu1", "must be positive"));
    }
    let nodes: Vec<(f64, f64)> = mu2.iter().flat_map(|&m| gamma.iter().map(move |&g| (m, g))).collect();
    let cells: Vec<Option<IsoAmplitudeCell>> = nodes
        .par_iter()
        .map(|&(m, g)| {
            let sys = DimensionlessSystem::linear(eps, 0.0, m, g).with_nonlinear(alpha3, beta3);
            let hopf = hopf_point_of(&sys).ok()?;
            let est = estimate_at(&sys, &hopf, hopf.mu1_cr + delta_mu1).ok()?;
            Some(IsoAmplitudeCell {
                mu2: m,
                gamma: g,
                mu1_cr: est.mu1_cr,
                q1_max: est.q1_max,
                valid: est.valid,
            })
        })
        .collect();
    let skipped = cells.iter().filter(|c| c.is_none()).count();
    Ok(IsoAmplitudeMap {
        eps,
        alpha3,
        beta3,
        delta_mu1,
        cells: cells.into_iter().flatten().collect(),
        skipped,
    })
}

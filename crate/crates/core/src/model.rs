//! Coupled Van der Pol-Duffing oscillator with an attached absorber.
//!
//! The state is `(q1, q1', qd, qd')` where `qd = q1 - q2` is the absorber's
//! relative displacement. Time is the dimensionless `tau = t * wn1`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State `(x1, x2, x3, x4) = (q1, q1', qd, qd')`.
pub type StateVector = Vector4<f64>;

/// Physical parameters of the primary oscillator and absorber (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSystem {
    pub m1: f64,
    pub c1: f64,
    pub k1: f64,
    pub knl1: f64,
    pub m2: f64,
    pub c2: f64,
    pub k2: f64,
    #[serde(default)]
    pub knl2_2: f64,
    #[serde(default)]
    pub knl2_3: f64,
    #[serde(default)]
    pub knl2_5: f64,
}

/// Dimensionless parameter record shared by every analysis.
///
/// `lambda` is only set for an absorber without linear spring (NES): the
/// absorber damping then enters as `lambda` instead of `2 * mu2 * gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionlessSystem {
    pub eps: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub gamma: f64,
    #[serde(default)]
    pub alpha3: f64,
    #[serde(default)]
    pub beta2: f64,
    #[serde(default)]
    pub beta3: f64,
    #[serde(default)]
    pub beta5: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn check_finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(field, format!("must be finite, got {v}")))
    }
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    check_finite(field, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(field, format!("must be > 0, got {v}")))
    }
}

fn check_non_negative(field: &'static str, v: f64) -> Result<()> {
    check_finite(field, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(field, format!("must be >= 0, got {v}")))
    }
}

impl PhysicalSystem {
    pub fn validate(&self) -> Result<()> {
        check_positive("m1", self.m1)?;
        check_positive("m2", self.m2)?;
        check_positive("k1", self.k1)?;
        check_non_negative("k2", self.k2)?;
        check_non_negative("c2", self.c2)?;
        for (f, v) in [
            ("c1", self.c1),
            ("knl1", self.knl1),
            ("knl2_2", self.knl2_2),
            ("knl2_3", self.knl2_3),
            ("knl2_5", self.knl2_5),
        ] {
            check_finite(f, v)?;
        }
        Ok(())
    }

    /// Reduces to the dimensionless ratios. A zero linear absorber spring
    /// yields an NES record (`gamma = 0`, damping stored as `lambda`).
    pub fn nondimensionalize(&self) -> Result<DimensionlessSystem> {
        self.validate()?;
        let eps = self.m2 / self.m1;
        let wn1 = (self.k1 / self.m1).sqrt();
        let wn2 = (self.k2 / self.m2).sqrt();
        let mu1 = self.c1 / (2.0 * (self.k1 * self.m1).sqrt());
        let alpha3 = self.knl1 / self.k1;
        let scale = self.k1 * eps;
        let (mu2, gamma, lambda) = if self.k2 > 0.0 {
            (self.c2 / (2.0 * self.m2 * wn2), wn2 / wn1, None)
        } else {
            (0.0, 0.0, Some(self.c2 / (self.m2 * wn1)))
        };
        Ok(DimensionlessSystem {
            eps,
            mu1,
            mu2,
            gamma,
            alpha3,
            beta2: self.knl2_2 / scale,
            beta3: self.knl2_3 / scale,
            beta5: self.knl2_5 / scale,
            lambda,
        })
    }
}

impl DimensionlessSystem {
    /// Linear system with the given tuning and all nonlinear ratios zero.
    pub fn linear(eps: f64, mu1: f64, mu2: f64, gamma: f64) -> Self {
        DimensionlessSystem {
            eps,
            mu1,
            mu2,
            gamma,
            alpha3: 0.0,
            beta2: 0.0,
            beta3: 0.0,
            beta5: 0.0,
            lambda: None,
        }
    }

    /// Nonlinear energy sink: no linear absorber spring, damping `lambda`.
    pub fn nes(eps: f64, mu1: f64, lambda: f64, alpha3: f64, beta3: f64) -> Self {
        DimensionlessSystem {
            alpha3,
            beta3,
            lambda: Some(lambda),
            ..Self::linear(eps, mu1, 0.0, 0.0)
        }
    }

    /// The bare primary oscillator. The absorber coordinates still evolve
    /// but do not act back on the primary (`eps = 0`).
    pub fn primary_only(mu1: f64, alpha3: f64) -> Self {
        DimensionlessSystem { alpha3, ..Self::linear(0.0, mu1, 0.0, 1.0) }
    }

    pub fn with_mu1(mut self, mu1: f64) -> Self {
        self.mu1 = mu1;
        self
    }

    pub fn with_nonlinear(mut self, alpha3: f64, beta3: f64) -> Self {
        self.alpha3 = alpha3;
        self.beta3 = beta3;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("eps", self.eps)?;
        check_finite("mu1", self.mu1)?;
        check_non_negative("mu2", self.mu2)?;
        match self.lambda {
            Some(l) => {
                check_non_negative("lambda", l)?;
                check_non_negative("gamma", self.gamma)?;
            }
            None => check_positive("gamma", self.gamma)?,
        }
        check_finite("alpha3", self.alpha3)?;
        check_finite("beta2", self.beta2)?;
        check_finite("beta3", self.beta3)?;
        check_finite("beta5", self.beta5)?;
        Ok(())
    }

    /// Absorber damping coefficient `c2 / (m2 wn1)`.
    pub fn absorber_damping(&self) -> f64 {
        self.lambda.unwrap_or(2.0 * self.mu2 * self.gamma)
    }

    pub fn has_quadratic(&self) -> bool {
        self.beta2 != 0.0
    }

    /// Inverse of [`PhysicalSystem::nondimensionalize`] for given `m1`, `k1`.
    pub fn dimensionalize(&self, m1: f64, k1: f64) -> PhysicalSystem {
        let m2 = self.eps * m1;
        let wn1 = (k1 / m1).sqrt();
        let wn2 = self.gamma * wn1;
        let c2 = match self.lambda {
            Some(l) => l * m2 * wn1,
            None => 2.0 * self.mu2 * m2 * wn2,
        };
        let scale = k1 * self.eps;
        PhysicalSystem {
            m1,
            c1: 2.0 * self.mu1 * (k1 * m1).sqrt(),
            k1,
            knl1: self.alpha3 * k1,
            m2,
            c2,
            k2: m2 * wn2 * wn2,
            knl2_2: self.beta2 * scale,
            knl2_3: self.beta3 * scale,
            knl2_5: self.beta5 * scale,
        }
    }

    /// Linearization `W` of the vector field at the trivial equilibrium.
    pub fn linear_matrix(&self) -> Matrix4<f64> {
        let e = self.eps;
        let g2 = self.gamma * self.gamma;
        let d = self.absorber_damping();
        let m = 2.0 * self.mu1;
        Matrix4::new(
            0.0, 1.0, 0.0, 0.0,
            -1.0, m, -g2 * e, -d * e,
            0.0, 0.0, 0.0, 1.0,
            -1.0, m, -g2 * (1.0 + e), -d * (1.0 + e),
        )
    }

    /// Absorber restoring-force polynomial `beta2 x^2 + beta3 x^3 + beta5 x^5`
    /// (without the mass-ratio scaling).
    fn absorber_force(&self, x3: f64) -> f64 {
        let x3_2 = x3 * x3;
        self.beta2 * x3_2 + self.beta3 * x3_2 * x3 + self.beta5 * x3_2 * x3_2 * x3
    }

    fn absorber_stiffness(&self, x3: f64) -> f64 {
        let x3_2 = x3 * x3;
        2.0 * self.beta2 * x3 + 3.0 * self.beta3 * x3_2 + 5.0 * self.beta5 * x3_2 * x3_2
    }

    /// Nonlinear part `b(x)` of the vector field.
    pub fn nonlinear_terms(&self, x: &StateVector) -> StateVector {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        let primary = -2.0 * self.mu1 * x1 * x1 * x2 - self.alpha3 * x1 * x1 * x1;
        let g = self.absorber_force(x3);
        Vector4::new(0.0, primary - self.eps * g, 0.0, primary - (1.0 + self.eps) * g)
    }

    /// Vector field `W x + b(x)`.
    pub fn rhs(&self, x: &StateVector) -> StateVector {
        self.linear_matrix() * x + self.nonlinear_terms(x)
    }

    /// Analytic Jacobian of [`rhs`](Self::rhs).
    pub fn jacobian(&self, x: &StateVector) -> Matrix4<f64> {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        let mut j = self.linear_matrix();
        let d1 = -4.0 * self.mu1 * x1 * x2 - 3.0 * self.alpha3 * x1 * x1;
        let d2 = -2.0 * self.mu1 * x1 * x1;
        let k = self.absorber_stiffness(x3);
        for (row, scale) in [(1, self.eps), (3, 1.0 + self.eps)] {
            j[(row, 0)] += d1;
            j[(row, 1)] += d2;
            j[(row, 2)] -= scale * k;
        }
        j
    }

    /// Partial derivative of the vector field with respect to `mu1`.
    pub fn rhs_dmu1(&self, x: &StateVector) -> StateVector {
        let v = 2.0 * x[1] * (1.0 - x[0] * x[0]);
        Vector4::new(0.0, v, 0.0, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> DimensionlessSystem {
        DimensionlessSystem {
            alpha3: 0.3,
            beta3: 0.0136,
            ..DimensionlessSystem::linear(0.05, 0.1, 0.1091, 0.9759)
        }
    }

    #[test]
    fn nondimensionalize_reference_absorber() {
        let mu2 = 0.1091;
        let k2 = 0.05 / 1.05;
        let wn2 = (k2 / 0.05_f64).sqrt();
        let phys = PhysicalSystem {
            m1: 1.0,
            c1: 0.0,
            k1: 1.0,
            knl1: 0.0,
            m2: 0.05,
            c2: 2.0 * mu2 * 0.05 * wn2,
            k2,
            knl2_2: 0.0,
            knl2_3: 0.00068,
            knl2_5: 0.0,
        };
        let d = phys.nondimensionalize().unwrap();
        assert_relative_eq!(d.eps, 0.05, max_relative = 1e-14);
        assert_relative_eq!(d.gamma, 1.0 / 1.05_f64.sqrt(), max_relative = 1e-14);
        assert!((d.gamma - 0.9759).abs() < 1e-4);
        assert_relative_eq!(d.mu2, mu2, max_relative = 1e-12);
        assert_relative_eq!(d.beta3, 0.0136, max_relative = 1e-12);
    }

    #[test]
    fn mu1_definition() {
        let phys = PhysicalSystem {
            m1: 1.0,
            c1: 4.0,
            k1: 4.0,
            knl1: 0.0,
            m2: 0.1,
            c2: 0.0,
            k2: 0.4,
            knl2_2: 0.0,
            knl2_3: 0.0,
            knl2_5: 0.0,
        };
        assert_eq!(phys.nondimensionalize().unwrap().mu1, 1.0);
    }

    #[test]
    fn rejects_bad_masses() {
        let mut phys = reference().dimensionalize(1.0, 1.0);
        phys.m2 = 0.0;
        match phys.nondimensionalize() {
            Err(Error::Domain { field, .. }) => assert_eq!(field, "m2"),
            other => panic!("unexpected {other:?}"),
        }
        phys.m2 = 0.05;
        phys.k1 = -1.0;
        match phys.nondimensionalize() {
            Err(Error::Domain { field, .. }) => assert_eq!(field, "k1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nes_round_trip() {
        let nes = DimensionlessSystem::nes(0.05, 0.02, 1.0, 0.3, 0.2);
        let phys = nes.dimensionalize(1.0, 1.0);
        assert_eq!(phys.k2, 0.0);
        assert_relative_eq!(phys.c2, 0.05, max_relative = 1e-14);
        assert_relative_eq!(phys.knl2_3, 0.01, max_relative = 1e-14);
        let back = phys.nondimensionalize().unwrap();
        assert_relative_eq!(back.lambda.unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn linear_matrix_layout() {
        let w = DimensionlessSystem::linear(0.05, 0.0, 0.0, 1.0).linear_matrix();
        assert_eq!(w.row(1).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, -0.05, 0.0]);
        assert_eq!(w.row(3).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, -1.05, 0.0]);
        let eig = w.complex_eigenvalues();
        assert!(eig.iter().all(|l| l.re.abs() < 1e-12));
    }

    #[test]
    fn rhs_reference_point() {
        // Hand substitution at x = (1, 0, 1, 0):
        //   row 2: -1 - eps*g^2 - alpha3 - eps*beta3
        //   row 4: -1 - (1+eps)*g^2 - alpha3 - (1+eps)*beta3
        let s = reference();
        let f = s.rhs(&Vector4::new(1.0, 0.0, 1.0, 0.0));
        let g2 = 0.9759_f64 * 0.9759;
        assert_eq!(f[0], 0.0);
        assert_eq!(f[2], 0.0);
        assert_relative_eq!(f[1], -1.0 - 0.05 * g2 - 0.3 - 0.05 * 0.0136, max_relative = 1e-14);
        assert_relative_eq!(f[3], -1.0 - 1.05 * g2 - 0.3 - 1.05 * 0.0136, max_relative = 1e-14);
    }

    #[test]
    fn jacobian_cubic_entry() {
        let s = reference();
        let j = s.jacobian(&Vector4::new(1.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(j[(1, 0)], -1.0 - 3.0 * 0.3, max_relative = 1e-14);
        assert_eq!(s.jacobian(&StateVector::zeros()), s.linear_matrix());
    }

    #[test]
    fn json_defaults_nonlinear_keys() {
        let s: DimensionlessSystem =
            serde_json::from_str(r#"{"eps":0.05,"mu1":0.1,"mu2":0.12,"gamma":0.97}"#).unwrap();
        assert_eq!(s.beta2, 0.0);
        assert_eq!(s.beta5, 0.0);
        assert!(s.lambda.is_none());
        assert!(serde_json::from_str::<DimensionlessSystem>(
            r#"{"eps":0.05,"mu1":0.1,"mu2":0.12,"gamma":0.97,"zeta":1}"#
        )
        .is_err());
    }

    fn any_system() -> impl Strategy<Value = DimensionlessSystem> {
        (
            0.01..0.2f64,
            -0.2..0.3f64,
            0.0..0.3f64,
            0.5..1.5f64,
            -1.0..1.0f64,
            -0.1..0.1f64,
            -0.1..0.1f64,
            -0.1..0.1f64,
        )
            .prop_map(|(eps, mu1, mu2, gamma, alpha3, beta2, beta3, beta5)| DimensionlessSystem {
                alpha3,
                beta2,
                beta3,
                beta5,
                ..DimensionlessSystem::linear(eps, mu1, mu2, gamma)
            })
    }

    fn any_state() -> impl Strategy<Value = StateVector> {
        prop::array::uniform4(-1.0..1.0f64).prop_map(|a| Vector4::from(a))
    }

    proptest! {
        #[test]
        fn trivial_equilibrium(s in any_system()) {
            prop_assert_eq!(s.rhs(&StateVector::zeros()), StateVector::zeros());
        }

        #[test]
        fn jacobian_matches_central_differences(s in any_system(), x in any_state()) {
            let h = 1e-6;
            let j = s.jacobian(&x);
            for c in 0..4 {
                let mut e = StateVector::zeros();
                e[c] = h;
                let fd = (s.rhs(&(x + e)) - s.rhs(&(x - e))) / (2.0 * h);
                for r in 0..4 {
                    let scale = j[(r, c)].abs().max(1.0);
                    prop_assert!((fd[r] - j[(r, c)]).abs() / scale < 1e-6);
                }
            }
        }

        #[test]
        fn linear_when_nonlinear_ratios_vanish(
            s in any_system(), x in any_state(), y in any_state(), a in -2.0..2.0f64, b in -2.0..2.0f64
        ) {
            let s = DimensionlessSystem { alpha3: 0.0, beta2: 0.0, beta3: 0.0, beta5: 0.0, mu1: 0.0, ..s };
            let lhs = s.rhs(&(x * a + y * b));
            let rhs = s.rhs(&x) * a + s.rhs(&y) * b;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn rows_differ_by_absorber_scaling(s in any_system(), x in any_state()) {
            let s = DimensionlessSystem { beta2: 0.0, beta3: 0.0, beta5: 0.0, ..s };
            let f = s.rhs(&x);
            let expected = -s.gamma * s.gamma * x[2] - 2.0 * s.mu2 * s.gamma * x[3];
            prop_assert!((f[3] - f[1] - expected).abs() < 1e-12);
        }

        #[test]
        fn determinant_is_gamma_squared(s in any_system()) {
            let det = s.linear_matrix().determinant();
            prop_assert!((det - s.gamma * s.gamma).abs() < 1e-12);
        }

        #[test]
        fn dimensional_round_trip(s in any_system(), m1 in 0.1..10.0f64, k1 in 0.1..10.0f64) {
            let s = DimensionlessSystem { mu2: s.mu2 + 1e-3, ..s };
            let back = s.dimensionalize(m1, k1).nondimensionalize().unwrap();
            for (a, b) in [
                (s.eps, back.eps), (s.mu1, back.mu1), (s.mu2, back.mu2), (s.gamma, back.gamma),
                (s.alpha3, back.alpha3), (s.beta2, back.beta2), (s.beta3, back.beta3), (s.beta5, back.beta5),
            ] {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15);
            }
        }
    }
}

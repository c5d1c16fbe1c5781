//! Film material parameters and the thickness-dependent intrinsic loss law.
//!
//! Intrinsic dissipation is modelled as a volume contribution plus a surface
//! layer whose loss scales as `1/h`:
//!
//! ```text
//! 1/Q_int(h) = 1/Q_vol + 1/(beta * h)
//! ```
//!
//! The surface-layer thickness and its loss modulus only ever appear through
//! their product, so they are folded into `beta` and never stored separately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elastic, inertial and stress parameters of the resonator film (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    /// Storage part of the Young's modulus (Pa).
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Mass density (kg/m³).
    pub density: f64,
    /// Homogeneous, isotropic deposition stress before patterning (Pa).
    pub prestress: f64,
    /// Film thickness (m).
    pub thickness: f64,
}

impl MaterialSpec {
    /// LPCVD stoichiometric silicon nitride as used for the membrane devices.
    pub fn silicon_nitride(thickness: f64) -> Self {
        Self {
            youngs_modulus: 270e9,
            poisson_ratio: 0.27,
            density: 3200.0,
            prestress: 1.27e9,
            thickness,
        }
    }

    pub fn with_thickness(self, thickness: f64) -> Self {
        Self { thickness, ..self }
    }

    pub fn with_prestress(self, prestress: f64) -> Self {
        Self { prestress, ..self }
    }

    /// Checks every invariant, including a strictly positive prestress.
    pub fn validate(&self) -> Result<()> {
        self.validate_elastic()?;
        if !(self.prestress > 0.0 && self.prestress.is_finite()) {
            return Err(Error::Domain(format!(
                "prestress must be positive, got {}",
                self.prestress
            )));
        }
        Ok(())
    }

    /// Checks the elastic and inertial parameters only. A zero prestress is
    /// accepted here because the stress relaxation is linear in it.
    pub fn validate_elastic(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        };
        positive("Young's modulus", self.youngs_modulus)?;
        positive("density", self.density)?;
        positive("thickness", self.thickness)?;
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Domain(format!(
                "Poisson ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.prestress >= 0.0 && self.prestress.is_finite()) {
            return Err(Error::Domain(format!(
                "prestress must be non-negative, got {}",
                self.prestress
            )));
        }
        Ok(())
    }

    /// Transverse wave speed of the unpatterned film, `sqrt(prestress/density)`.
    pub fn membrane_wave_speed(&self) -> f64 {
        (self.prestress / self.density).sqrt()
    }

    /// Plate bending rigidity `E h³ / (12 (1 - ν²))`.
    pub fn bending_rigidity(&self) -> f64 {
        self.youngs_modulus * self.thickness.powi(3)
            / (12.0 * (1.0 - self.poisson_ratio * self.poisson_ratio))
    }
}

/// Split of intrinsic loss into a volume and a surface contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    /// Volumetric intrinsic quality factor; `f64::INFINITY` for pure surface loss.
    pub volume_q: f64,
    /// Surface-loss coefficient (1/m).
    pub surface_beta: f64,
}

impl LossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.volume_q > 0.0) {
            return Err(Error::Domain(format!(
                "volume quality factor must be positive or infinite, got {}",
                self.volume_q
            )));
        }
        if !(self.surface_beta > 0.0 && self.surface_beta.is_finite()) {
            return Err(Error::Domain(format!(
                "surface-loss coefficient must be positive, got {}",
                self.surface_beta
            )));
        }
        Ok(())
    }

    /// Intrinsic quality factor `E1/E2` of a film of thickness `h`.
    pub fn q_intrinsic(&self, h: f64) -> Result<f64> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("thickness must be positive, got {h}")));
        }
        self.validate()?;
        let inverse = self.volume_q.recip() + (self.surface_beta * h).recip();
        Ok(inverse.recip())
    }

    /// Builds the loss model that reproduces `anchor_q` at thickness `anchor_h`
    /// for a given volume contribution.
    pub fn calibrate(anchor_h: f64, anchor_q: f64, volume_q: f64) -> Result<Self> {
        if !(anchor_h > 0.0 && anchor_h.is_finite()) {
            return Err(Error::Domain(format!(
                "anchor thickness must be positive, got {anchor_h}"
            )));
        }
        if !(anchor_q > 0.0 && anchor_q.is_finite()) {
            return Err(Error::Domain(format!(
                "anchor quality factor must be positive, got {anchor_q}"
            )));
        }
        if !(volume_q > anchor_q) {
            return Err(Error::InfeasibleCalibration(format!(
                "volume Q {volume_q} must exceed the anchor Q {anchor_q}; \
                 the surface term would have to vanish or turn negative"
            )));
        }
        let surface_inverse = anchor_q.recip() - volume_q.recip();
        Ok(Self {
            volume_q,
            surface_beta: 1.0 / (surface_inverse * anchor_h),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn anchored_value_reproduced() {
        let loss = LossModel::calibrate(66e-9, 3750.0, f64::INFINITY).unwrap();
        assert_relative_eq!(loss.q_intrinsic(66e-9).unwrap(), 3750.0, max_relative = 1e-12);
        assert_relative_eq!(loss.surface_beta, 3750.0 / 66e-9, max_relative = 1e-12);
    }

    #[test]
    fn unit_surface_product() {
        let loss = LossModel {
            volume_q: f64::INFINITY,
            surface_beta: 1.0 / 35e-9,
        };
        assert_relative_eq!(loss.q_intrinsic(35e-9).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn surface_limit_is_linear_in_thickness() {
        let loss = LossModel::calibrate(66e-9, 3750.0, f64::INFINITY).unwrap();
        // 3750 * 35 / 66, evaluated by hand.
        assert_relative_eq!(loss.q_intrinsic(35e-9).unwrap(), 1988.636_363_636, max_relative = 1e-9);
    }

    #[test]
    fn finite_volume_calibration() {
        let loss = LossModel::calibrate(66e-9, 3750.0, 7500.0).unwrap();
        // 1/3750 - 1/7500 = 1/7500, so beta * 66 nm = 7500.
        assert_relative_eq!(loss.surface_beta * 66e-9, 7500.0, max_relative = 1e-12);
        assert_relative_eq!(loss.q_intrinsic(66e-9).unwrap(), 3750.0, max_relative = 1e-12);
    }

    #[test]
    fn infeasible_calibration_rejected() {
        assert!(matches!(
            LossModel::calibrate(66e-9, 3750.0, 3750.0),
            Err(Error::InfeasibleCalibration(_))
        ));
    }

    #[test]
    fn non_positive_thickness_is_domain_error() {
        let loss = LossModel::calibrate(66e-9, 3750.0, f64::INFINITY).unwrap();
        assert!(matches!(loss.q_intrinsic(0.0), Err(Error::Domain(_))));
        assert!(matches!(loss.q_intrinsic(-1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn material_invariants() {
        let m = MaterialSpec::silicon_nitride(66e-9);
        m.validate().unwrap();
        assert_relative_eq!(m.membrane_wave_speed(), 629.98, max_relative = 1e-4);
        assert!(m.with_prestress(0.0).validate().is_err());
        assert!(m.with_prestress(0.0).validate_elastic().is_ok());
        assert!(MaterialSpec { poisson_ratio: 0.5, ..m }.validate().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn increasing_in_thickness(qv in 1e2f64..1e6, beta in 1e8f64..1e12, h in 1e-9f64..1e-6, dh in 1e-10f64..1e-6) {
                let loss = LossModel { volume_q: qv, surface_beta: beta };
                prop_assert!(loss.q_intrinsic(h + dh).unwrap() > loss.q_intrinsic(h).unwrap());
            }

            #[test]
            fn calibration_round_trip(h in 1e-9f64..1e-6, q in 10.0f64..1e5, excess in 1.001f64..100.0) {
                for volume_q in [f64::INFINITY, q * excess] {
                    let loss = LossModel::calibrate(h, q, volume_q).unwrap();
                    let back = loss.q_intrinsic(h).unwrap();
                    prop_assert!(((back - q) / q).abs() < 1e-12);
                }
            }

            #[test]
            fn pure_surface_ratio_constant(beta in 1e8f64..1e12, h1 in 1e-9f64..1e-6, h2 in 1e-9f64..1e-6) {
                let loss = LossModel { volume_q: f64::INFINITY, surface_beta: beta };
                let r1 = loss.q_intrinsic(h1).unwrap() / h1;
                let r2 = loss.q_intrinsic(h2).unwrap() / h2;
                prop_assert!(((r1 - r2) / r1).abs() < 1e-12);
            }
        }
    }
}

//! Physical parameter set of the planar HSA robot and its JSON config format.
//!
//! The shipped `fpu.json` / `epu.json` files carry the identified elongation
//! and stiffness coefficients exactly as printed for the two print materials;
//! geometry, mass, and damping values are documented placeholders (see the
//! `notes` entries in the files).

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{HsaError, Result};
use crate::kinematics::{BackboneGeometry, Configuration};

/// Affine stiffness laws per rod: S(phi) = S_hat + C_S * phi_plus / l0,
/// with phi_plus = h * phi. Coefficients are stored exactly in the printed
/// per-(phi_plus/l0) convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StiffnessCoeffs {
    /// Bending stiffness at zero twist [N m^2].
    pub s_be_hat: f64,
    /// Bending stiffness slope [N m^2 per (rad/m)].
    pub c_s_be: f64,
    /// Shear stiffness at zero twist [N].
    pub s_sh_hat: f64,
    /// Shear stiffness slope [N per (rad/m)].
    pub c_s_sh: f64,
    /// Axial stiffness at zero twist [N].
    pub s_ax_hat: f64,
    /// Axial stiffness slope [N per (rad/m)].
    pub c_s_ax: f64,
    /// Bending-shear elastic coupling [N m / rad].
    pub s_b_sh: f64,
}

/// Per-rod strain-rate damping coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DampingCoeffs {
    pub zeta_be: f64,
    pub zeta_sh: f64,
    pub zeta_ax: f64,
}

/// Assignment of the two planar actuation coordinates to the four physical
/// motors: motor j drives the rod on side `sides[j]` with handedness
/// `handedness[j]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotorLayout {
    pub sides: [usize; 4],
    pub handedness: [f64; 4],
}

impl Default for MotorLayout {
    fn default() -> Self {
        Self { sides: [0, 0, 1, 1], handedness: [1.0, -1.0, 1.0, -1.0] }
    }
}

fn default_quadrature_points() -> usize {
    5
}

/// Full physical parameter set of the planar HSA robot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HsaParams {
    pub geom: BackboneGeometry,
    /// Rod mass per unit printed length [kg/m].
    pub rod_linear_density: f64,
    /// Rod cross-section rotational inertia per unit printed length [kg m].
    pub rod_rotational_inertia_density: f64,
    /// Platform mass [kg].
    pub platform_mass: f64,
    /// Platform rotational inertia [kg m^2].
    pub platform_inertia: f64,
    /// Gravity in the model frame [m/s^2]; +y points from the base toward
    /// the platform, so a platform-down mount has gravity along +y.
    pub gravity: [f64; 2],
    /// Rest configuration q0 of the virtual backbone.
    pub rest_config: Configuration,
    /// Rest strains of the two physical rods.
    pub rod_rest_strains: [Configuration; 2],
    /// Elongation coefficient C_eps [m/rad].
    pub elongation_coeff: f64,
    pub stiffness: StiffnessCoeffs,
    pub damping: DampingCoeffs,
    /// Actuation saturation bound [rad]; planar inputs live in [0, phi_max].
    pub phi_max: f64,
    /// Gauss-Legendre node count for the arclength integrals.
    #[serde(default = "default_quadrature_points")]
    pub quadrature_points: usize,
    #[serde(default)]
    pub motor_layout: MotorLayout,
    /// Free-form provenance / assumption notes carried by config files.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl HsaParams {
    /// Shipped FPU (stiff photopolymer) parameter set.
    pub fn fpu() -> Result<Self> {
        Self::from_json(include_str!("../configs/fpu.json"))
    }

    /// Shipped EPU (soft elastomeric polyurethane) parameter set.
    pub fn epu() -> Result<Self> {
        Self::from_json(include_str!("../configs/epu.json"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: HsaParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(HsaError::ConfigParse)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn gravity_vec(&self) -> Vector2<f64> {
        Vector2::new(self.gravity[0], self.gravity[1])
    }

    /// Axial stiffness of rod `i` (1-based) at planar twist `phi_i`.
    pub(crate) fn phi_plus_over_l0(&self, phi_i: f64, rod_index: usize) -> f64 {
        let h = self.geom.chirality[rod_index - 1];
        h * phi_i / self.geom.l0
    }

    pub fn validate(&self) -> Result<()> {
        self.geom.validate()?;
        let positive = [
            ("rod_linear_density", self.rod_linear_density),
            ("platform_mass", self.platform_mass),
            ("phi_max", self.phi_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HsaError::InvalidParams(format!("{name} = {v} must be > 0")));
            }
        }
        let nonneg = [
            ("rod_rotational_inertia_density", self.rod_rotational_inertia_density),
            ("platform_inertia", self.platform_inertia),
            ("zeta_be", self.damping.zeta_be),
            ("zeta_sh", self.damping.zeta_sh),
            ("zeta_ax", self.damping.zeta_ax),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(HsaError::InvalidParams(format!("{name} = {v} must be >= 0")));
            }
        }
        self.rest_config.validate()?;
        for rs in &self.rod_rest_strains {
            rs.validate()?;
        }
        // Axial stiffness must stay positive over the admissible twist range;
        // at phi = 0 a zero value is allowed (EPU prints S_ax_hat = 0).
        for rod in 1..=2 {
            let at_zero = self.stiffness.s_ax_hat;
            let at_max =
                self.stiffness.s_ax_hat + self.stiffness.c_s_ax * self.phi_plus_over_l0(self.phi_max, rod);
            if at_zero < 0.0 || at_max <= 0.0 {
                return Err(HsaError::InvalidParams(format!(
                    "axial stiffness not positive over [0, phi_max] for rod {rod}: S_ax(0) = {at_zero}, S_ax(phi_max) = {at_max}"
                )));
            }
        }
        for side in self.motor_layout.sides {
            if side > 1 {
                return Err(HsaError::InvalidParams(format!(
                    "motor_layout sides must be 0 or 1, got {side}"
                )));
            }
        }
        for h in self.motor_layout.handedness {
            if h != 1.0 && h != -1.0 {
                return Err(HsaError::InvalidParams(format!(
                    "motor_layout handedness must be +1 or -1, got {h}"
                )));
            }
        }
        if self.quadrature_points < 2 || self.quadrature_points > 64 {
            return Err(HsaError::InvalidParams(format!(
                "quadrature_points = {} out of range [2, 64]",
                self.quadrature_points
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shipped_configs_parse_and_validate() {
        let fpu = HsaParams::fpu().unwrap();
        assert_relative_eq!(fpu.geom.l0, 0.059);
        assert_relative_eq!(fpu.elongation_coeff, 0.0098);
        assert_relative_eq!(fpu.stiffness.s_ax_hat, 5.665);
        assert_relative_eq!(fpu.phi_max, 3.40);
        let epu = HsaParams::epu().unwrap();
        assert_relative_eq!(epu.elongation_coeff, 0.0079);
        assert_relative_eq!(epu.stiffness.s_ax_hat, 0.0);
        assert_relative_eq!(epu.stiffness.s_sh_hat, 0.0428);
        assert_relative_eq!(epu.phi_max, 4.71);
    }

    #[test]
    fn negative_mass_rejected() {
        let mut p = HsaParams::fpu().unwrap();
        p.platform_mass = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn axial_stiffness_guard() {
        let mut p = HsaParams::fpu().unwrap();
        p.stiffness.s_ax_hat = 0.0;
        p.stiffness.c_s_ax = -0.01;
        assert!(p.validate().is_err());
    }
}

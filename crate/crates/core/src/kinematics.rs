//! Closed-form constant-strain kinematics of the virtual backbone and the
//! strain maps into the two physical HSA rods.
//!
//! The configuration `q = (kappa_be, sigma_sh, sigma_ax)` stores strains
//! relative to the unit axial rest stretch: the pose map is evaluated with
//! total axial stretch `1 + sigma_ax`, so `q = 0` is the straight,
//! unelongated backbone of length `l0`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, HsaError, Result};
use crate::params::HsaParams;
use crate::series;

/// Strains of the virtual backbone: bending [rad/m], shear [-], axial [-].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub kappa_be: f64,
    pub sigma_sh: f64,
    pub sigma_ax: f64,
}

impl Configuration {
    pub fn new(kappa_be: f64, sigma_sh: f64, sigma_ax: f64) -> Self {
        Self { kappa_be, sigma_sh, sigma_ax }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.kappa_be, self.sigma_sh, self.sigma_ax)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[self.kappa_be, self.sigma_sh, self.sigma_ax], "configuration")?;
        if self.sigma_ax <= -1.0 {
            return Err(HsaError::InvalidArgument(format!(
                "sigma_ax = {} collapses the backbone (must be > -1)",
                self.sigma_ax
            )));
        }
        Ok(())
    }
}

/// SE(2) pose of a backbone point: position [m] and orientation [rad].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub p_x: f64,
    pub p_y: f64,
    pub theta: f64,
}

impl PlanarPose {
    pub fn new(p_x: f64, p_y: f64, theta: f64) -> Self {
        Self { p_x, p_y, theta }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[self.p_x, self.p_y, self.theta], "pose")
    }
}

/// Geometry of the virtual backbone and the rod layout around it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackboneGeometry {
    /// Printed rod length [m].
    pub l0: f64,
    /// Offset from the virtual backbone to each rod centerline [m].
    pub r_off: f64,
    /// Number of planar rods; the planar model is fixed at 2.
    pub num_rods: usize,
    /// Per-rod chirality (handedness) in {-1, +1}; index 0 is the rod at
    /// +r_off, index 1 the rod at -r_off.
    pub chirality: [f64; 2],
}

impl BackboneGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.l0 > 0.0 && self.l0.is_finite()) {
            return Err(HsaError::InvalidParams(format!("l0 = {} must be > 0", self.l0)));
        }
        if !(self.r_off >= 0.0 && self.r_off.is_finite()) {
            return Err(HsaError::InvalidParams(format!("r_off = {} must be >= 0", self.r_off)));
        }
        if self.num_rods != 2 {
            return Err(HsaError::InvalidParams(format!(
                "planar model requires num_rods = 2, got {}",
                self.num_rods
            )));
        }
        for h in self.chirality {
            if h != 1.0 && h != -1.0 {
                return Err(HsaError::InvalidParams(format!(
                    "chirality entries must be +1 or -1, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// Sign of the centerline offset for a rod index in {1, 2}:
/// rod 1 sits at +r_off, rod 2 at -r_off.
pub fn rod_offset_sign(rod_index: usize) -> Result<f64> {
    match rod_index {
        1 => Ok(1.0),
        2 => Ok(-1.0),
        _ => Err(HsaError::InvalidArgument(format!("rod_index must be 1 or 2, got {rod_index}"))),
    }
}

/// Pose of the virtual backbone point at arclength `s`.
pub fn forward_kinematics(q: &Configuration, s: f64, geom: &BackboneGeometry) -> Result<PlanarPose> {
    q.validate()?;
    ensure_finite(&[s], "arclength")?;
    if !(0.0..=geom.l0).contains(&s) {
        return Err(HsaError::InvalidArgument(format!(
            "arclength s = {s} outside [0, {}]",
            geom.l0
        )));
    }
    Ok(backbone_pose(q, s))
}

/// Pose map without the arclength bound check; shared with the dynamics
/// integrands which always evaluate inside [0, l0].
pub(crate) fn backbone_pose(q: &Configuration, s: f64) -> PlanarPose {
    let u = q.kappa_be * s;
    let a = s * series::sinc(u);
    let b = s * series::cosm1_over(u);
    let stretch = 1.0 + q.sigma_ax;
    PlanarPose {
        p_x: q.sigma_sh * a + stretch * b,
        p_y: -q.sigma_sh * b + stretch * a,
        theta: u,
    }
}

/// End-effector pose (backbone point at s = l0).
pub fn end_effector_pose(q: &Configuration, geom: &BackboneGeometry) -> Result<PlanarPose> {
    forward_kinematics(q, geom.l0, geom)
}

/// Jacobian of the backbone pose map with respect to q, rows (p_x, p_y, theta).
pub fn pose_jacobian(q: &Configuration, s: f64) -> Matrix3<f64> {
    let u = q.kappa_be * s;
    let a = s * series::sinc(u);
    let b = s * series::cosm1_over(u);
    // d/d kappa of a and b (chain rule through u = kappa * s)
    let a_k = s * s * series::dsinc(u);
    let b_k = s * s * series::dcosm1_over(u);
    let stretch = 1.0 + q.sigma_ax;
    Matrix3::new(
        q.sigma_sh * a_k + stretch * b_k,
        a,
        b,
        -q.sigma_sh * b_k + stretch * a_k,
        -b,
        a,
        s,
        0.0,
        0.0,
    )
}

/// Closed-form inverse of the pose map at arclength `s`.
pub fn inverse_kinematics(chi: &PlanarPose, s: f64) -> Result<Configuration> {
    chi.validate()?;
    if !(s > 0.0 && s.is_finite()) {
        return Err(HsaError::InvalidArgument(format!("arclength s = {s} must be > 0")));
    }
    let theta = chi.theta;
    let t = series::theta_cot_half(theta);
    let sigma_sh = (theta * chi.p_y + t * chi.p_x) / (2.0 * s);
    let stretch = (-theta * chi.p_x + t * chi.p_y) / (2.0 * s);
    Ok(Configuration {
        kappa_be: theta / s,
        sigma_sh,
        sigma_ax: stretch - 1.0,
    })
}

/// Strains of the physical rod `rod_index` given the backbone strains.
pub fn rod_strains(q: &Configuration, rod_index: usize, geom: &BackboneGeometry) -> Result<Configuration> {
    let sign = rod_offset_sign(rod_index)?;
    Ok(Configuration {
        kappa_be: q.kappa_be,
        sigma_sh: q.sigma_sh,
        sigma_ax: q.sigma_ax + sign * geom.r_off * q.kappa_be,
    })
}

/// Constant Jacobian d(beta_i)/dq: identity with (3,1) = +/- r_off.
pub fn rod_strain_jacobian(rod_index: usize, geom: &BackboneGeometry) -> Result<Matrix3<f64>> {
    let sign = rod_offset_sign(rod_index)?;
    let mut j = Matrix3::identity();
    j[(2, 0)] = sign * geom.r_off;
    Ok(j)
}

/// Twist-induced rest-length elongation of one rod: eps = C_eps * (h * phi) / l0.
pub fn elongation(phi_i: f64, handedness: f64, params: &HsaParams) -> f64 {
    params.elongation_coeff * (handedness * phi_i) / params.geom.l0
}

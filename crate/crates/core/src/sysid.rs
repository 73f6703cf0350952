//! Parameter identification from logged trajectories: steady-state
//! extraction, elongation and stiffness regressions, and rest-strain
//! calibration.
//!
//! Both regressions exploit that the static balance is linear in the
//! coefficients being identified, so plain least squares applies. All other
//! parameters (geometry, masses, gravity) are taken from the supplied
//! parameter set.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::Serialize;

use crate::dynamics::gravity_vector;
use crate::error::{HsaError, Result};
use crate::kinematics::{elongation, rod_strain_jacobian, rod_strains, Configuration};
use crate::params::{HsaParams, StiffnessCoeffs};
use crate::sim::Trajectory;

/// One settled operating point recovered from a trajectory.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SteadyStatePoint {
    pub phi: [f64; 2],
    pub q: Configuration,
    /// Mean strain-rate norm over the averaging tail.
    pub qdot_norm: f64,
    /// Start time of the hold this point was taken from [s].
    pub t_start: f64,
}

/// Segment a trajectory into constant-actuation holds and average the final
/// `tail_frac` of each hold. Holds whose tail still moves faster than
/// `qdot_tol` are dropped; an error is returned when nothing survives.
pub fn extract_steady_states(
    traj: &Trajectory,
    tail_frac: f64,
    qdot_tol: f64,
) -> Result<Vec<SteadyStatePoint>> {
    if !(0.0 < tail_frac && tail_frac <= 1.0) {
        return Err(HsaError::InvalidArgument("tail_frac must be in (0, 1]".into()));
    }
    if traj.samples.is_empty() {
        return Err(HsaError::EmptyDataset("trajectory has no samples".into()));
    }
    let mut points = Vec::new();
    let mut start = 0;
    let n = traj.samples.len();
    for i in 1..=n {
        let hold_ends = i == n || traj.samples[i].phi != traj.samples[start].phi;
        if !hold_ends {
            continue;
        }
        let len = i - start;
        if len >= 4 {
            let tail = ((len as f64 * tail_frac).ceil() as usize).max(2);
            let window = &traj.samples[i - tail..i];
            let mut q = Vector3::zeros();
            let mut qdot = 0.0;
            for s in window {
                q += Vector3::from(s.q);
                qdot += Vector3::from(s.q_dot).norm();
            }
            q /= window.len() as f64;
            qdot /= window.len() as f64;
            if qdot <= qdot_tol {
                points.push(SteadyStatePoint {
                    phi: traj.samples[start].phi,
                    q: Configuration::from_vector(&q),
                    qdot_norm: qdot,
                    t_start: traj.samples[start].t,
                });
            }
        }
        start = i;
    }
    if points.is_empty() {
        return Err(HsaError::EmptyDataset(
            "no settled constant-actuation holds found".into(),
        ));
    }
    Ok(points)
}

/// Result of the elongation regression.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ElongationFit {
    pub coeff: f64,
    /// Fitted offset; absorbs the rest strain and static gravity sag.
    pub intercept: f64,
    /// Residual RMS of the fitted axial strains.
    pub rmse: f64,
    pub n_points: usize,
}

/// Fit the elongation coefficient from symmetric (equal-twist) steady states:
/// ordinary least squares of the settled axial strain against the regressor
/// (h_i phi_i) / l0 averaged over the rods. An intercept soaks up the rest
/// strain and the (nearly constant) axial sag under gravity.
pub fn regress_elongation(
    points: &[SteadyStatePoint],
    params: &HsaParams,
) -> Result<ElongationFit> {
    let mut used = Vec::new();
    for p in points {
        if (p.phi[0] - p.phi[1]).abs() > 1e-9 * params.phi_max.max(1.0) {
            continue;
        }
        let x = 0.5
            * (params.geom.chirality[0] * p.phi[0] + params.geom.chirality[1] * p.phi[1])
            / params.geom.l0;
        used.push((x, p.q.sigma_ax));
    }
    let n = used.len() as f64;
    if used.len() < 2 {
        return Err(HsaError::IllPosedRegression(
            "need at least two symmetric actuation levels".into(),
        ));
    }
    let mean_x = used.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = used.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    if sxx < 1e-12 * (1.0 + mean_x * mean_x) * n {
        return Err(HsaError::IllPosedRegression(
            "actuation levels are not distinct".into(),
        ));
    }
    let sxy: f64 = used.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let coeff = sxy / sxx;
    let intercept = mean_y - coeff * mean_x;
    let ss: f64 = used.iter().map(|(x, y)| (y - intercept - coeff * x).powi(2)).sum();
    Ok(ElongationFit { coeff, intercept, rmse: (ss / n).sqrt(), n_points: used.len() })
}

const COEFF_NAMES: [&str; 7] =
    ["s_be_hat", "c_s_be", "s_sh_hat", "c_s_sh", "s_ax_hat", "c_s_ax", "s_b_sh"];

/// Basis matrices of the stiffness law: S(reg) = sum_j theta_j B_j(reg) with
/// reg = h phi / l0.
fn stiffness_basis(reg: f64) -> [Matrix3<f64>; 7] {
    let e = |r: usize, c: usize| {
        let mut m = Matrix3::zeros();
        m[(r, c)] = 1.0;
        m
    };
    [
        e(0, 0),
        e(0, 0) * reg,
        e(1, 1),
        e(1, 1) * reg,
        e(2, 2),
        e(2, 2) * reg,
        e(0, 1) + e(1, 0),
    ]
}

/// Identify the seven stiffness coefficients from settled operating points by
/// least squares on the static balance. Geometry, inertial parameters,
/// gravity, elongation coefficient, and rest strains are taken from `params`;
/// its stiffness block is ignored.
pub fn regress_stiffness(
    points: &[SteadyStatePoint],
    params: &HsaParams,
) -> Result<StiffnessCoeffs> {
    if points.len() < 3 {
        return Err(HsaError::EmptyDataset(format!(
            "stiffness regression needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len();
    let mut a = DMatrix::zeros(3 * n, 7);
    let mut rhs = DVector::zeros(3 * n);
    for (s, p) in points.iter().enumerate() {
        let g = gravity_vector(&p.q, params);
        for r in 0..3 {
            rhs[3 * s + r] = -g[r];
        }
        for rod in 1..=2 {
            let jb = rod_strain_jacobian(rod, &params.geom)?;
            let h = params.geom.chirality[rod - 1];
            let phi_i = p.phi[rod - 1];
            let reg = h * phi_i / params.geom.l0;
            let eps = elongation(phi_i, h, params);
            let delta = rod_strains(&p.q, rod, &params.geom)?.as_vector()
                - params.rod_rest_strains[rod - 1].as_vector()
                - Vector3::new(0.0, 0.0, eps);
            for (j, basis) in stiffness_basis(reg).iter().enumerate() {
                let col = jb.transpose() * basis * delta;
                for r in 0..3 {
                    a[(3 * s + r, j)] += col[r];
                }
            }
        }
    }

    // columns the data never excites are unidentifiable outright
    let norms: Vec<f64> = (0..7).map(|j| a.column(j).norm()).collect();
    let max_norm = norms.iter().fold(0.0f64, |m, v| m.max(*v));
    let dead: Vec<&str> = (0..7)
        .filter(|&j| norms[j] < 1e-10 * max_norm.max(f64::MIN_POSITIVE))
        .map(|j| COEFF_NAMES[j])
        .collect();
    if !dead.is_empty() {
        return Err(HsaError::IllPosedRegression(format!(
            "dataset does not excite {{{}}} (zero regressor columns)",
            dead.join(", ")
        )));
    }

    // column scaling so the rank test is not dominated by units
    let mut scales = [0.0f64; 7];
    for j in 0..7 {
        scales[j] = norms[j];
        let s = scales[j];
        for r in 0..3 * n {
            a[(r, j)] /= s;
        }
    }
    let svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn> = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin < 1e-8 * smax {
        // name the coefficients dominating the weakest direction
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let weak = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a: &(usize, &f64), b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let mut blame: Vec<(f64, &str)> = (0..7)
            .map(|j| (vt[(weak, j)].abs(), COEFF_NAMES[j]))
            .collect();
        blame.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let names: Vec<&str> = blame
            .iter()
            .take_while(|(w, _)| *w > 0.2)
            .map(|(_, n)| *n)
            .collect();
        return Err(HsaError::IllPosedRegression(format!(
            "dataset does not excite {{{}}} (sigma_min/sigma_max = {:.1e})",
            names.join(", "),
            smin / smax
        )));
    }
    let theta_scaled = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| HsaError::IllPosedRegression(e.to_string()))?;
    let theta: Vec<f64> = (0..7).map(|j| theta_scaled[j] / scales[j]).collect();
    Ok(StiffnessCoeffs {
        s_be_hat: theta[0],
        c_s_be: theta[1],
        s_sh_hat: theta[2],
        c_s_sh: theta[3],
        s_ax_hat: theta[4],
        c_s_ax: theta[5],
        s_b_sh: theta[6],
    })
}

/// Calibrate the axial rest strain sigma_ax0 from one settled unactuated
/// pose. The axial row of the static balance at phi = 0 is scalar-linear in
/// sigma_ax0 shared by both rods:
///
/// ```text
/// G_ax(q) + 2 S_ax(0) (sigma_ax - sigma_ax0) = 0
/// ```
pub fn calibrate_rest_strain(q_rest_observed: &Configuration, params: &HsaParams) -> Result<f64> {
    q_rest_observed.validate()?;
    let (_, _, s_ax0) = crate::dynamics::rod_stiffness(0.0, params.geom.chirality[0], params);
    if s_ax0 <= 1e-12 {
        return Err(HsaError::CalibrationFailed(
            "axial stiffness vanishes at zero twist; the balance has no unique solution".into(),
        ));
    }
    let g_ax = gravity_vector(q_rest_observed, params)[2];
    let sigma_ax0 = q_rest_observed.sigma_ax + g_ax / (2.0 * s_ax0);
    if !sigma_ax0.is_finite() || sigma_ax0 <= -1.0 {
        return Err(HsaError::CalibrationFailed(format!(
            "calibrated rest strain {sigma_ax0} is out of bounds"
        )));
    }
    Ok(sigma_ax0)
}

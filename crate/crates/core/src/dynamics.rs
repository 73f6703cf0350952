//! Euler-Lagrange dynamics of the planar HSA robot.
//!
//! The equations of motion read
//!
//! ```text
//! M(q) q_dd + C(q, q_d) q_d + G(q) + K_force(q) + D q_d = alpha(q, phi)
//! ```
//!
//! with `K_force` the twist-independent part of the projected rod elastic
//! forces and `alpha` collecting every input-dependent term. Inertia and
//! gravity are mass integrals along the two rods plus the platform
//! contribution at `s = l0`; the Coriolis matrix comes from Christoffel
//! symbols of `M` with the inertia-integrand derivatives taken analytically.

use nalgebra::{Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, HsaError, Result};
use crate::kinematics::{rod_strain_jacobian, rod_strains, Configuration};
use crate::params::HsaParams;
use crate::quadrature::gauss_legendre;
use crate::series;

/// State x = (q, q_dot) of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub q: Configuration,
    /// Strain rates, same component order as `Configuration` [1/s].
    pub q_dot: [f64; 3],
}

impl RobotState {
    pub fn new(q: Configuration, q_dot: Vector3<f64>) -> Self {
        Self { q, q_dot: [q_dot[0], q_dot[1], q_dot[2]] }
    }

    pub fn at_rest(q: Configuration) -> Self {
        Self { q, q_dot: [0.0; 3] }
    }

    pub fn q_dot_vec(&self) -> Vector3<f64> {
        Vector3::from(self.q_dot)
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        let q = self.q.as_vector();
        Vector6::new(q[0], q[1], q[2], self.q_dot[0], self.q_dot[1], self.q_dot[2])
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            q: Configuration::new(x[0], x[1], x[2]),
            q_dot: [x[3], x[4], x[5]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.q.validate()?;
        ensure_finite(&self.q_dot, "q_dot")
    }
}

/// Planar rod twist angles [rad]. Values are handedness-corrected: positive
/// twist elongates the rod; saturation clamps to [0, phi_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuationAngles {
    pub phi: [f64; 2],
}

impl ActuationAngles {
    pub fn new(phi1: f64, phi2: f64) -> Self {
        Self { phi: [phi1, phi2] }
    }

    pub fn zero() -> Self {
        Self { phi: [0.0; 2] }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::from(self.phi)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&self.phi, "phi")
    }
}

/// Position (and its q-derivatives) of a material point at arclength `s`,
/// offset `off` from the virtual backbone (signed; 0 on the backbone).
struct PointKinematics {
    p: Vector2<f64>,
    /// dp/dq
    jac: Matrix2x3<f64>,
    /// d(jac)/dq_k for k = 0..3
    djac: [Matrix2x3<f64>; 3],
}

fn point_kinematics(q: &Configuration, s: f64, off: f64) -> PointKinematics {
    let u = q.kappa_be * s;
    let (sin_u, cos_u) = u.sin_cos();
    let stretch = 1.0 + q.sigma_ax;
    let a = s * series::sinc(u);
    let b = s * series::cosm1_over(u);
    let a_k = s * s * series::dsinc(u);
    let b_k = s * s * series::dcosm1_over(u);
    let a_kk = s * s * s * series::d2sinc(u);
    let b_kk = s * s * s * series::d2cosm1_over(u);

    let p = Vector2::new(
        q.sigma_sh * a + stretch * b + off * cos_u,
        -q.sigma_sh * b + stretch * a + off * sin_u,
    );
    let jac = Matrix2x3::new(
        q.sigma_sh * a_k + stretch * b_k - off * s * sin_u,
        a,
        b,
        -q.sigma_sh * b_k + stretch * a_k + off * s * cos_u,
        -b,
        a,
    );
    let dj_kappa = Matrix2x3::new(
        q.sigma_sh * a_kk + stretch * b_kk - off * s * s * cos_u,
        a_k,
        b_k,
        -q.sigma_sh * b_kk + stretch * a_kk - off * s * s * sin_u,
        -b_k,
        a_k,
    );
    let dj_sh = Matrix2x3::new(a_k, 0.0, 0.0, -b_k, 0.0, 0.0);
    let dj_ax = Matrix2x3::new(b_k, 0.0, 0.0, a_k, 0.0, 0.0);
    PointKinematics { p, jac, djac: [dj_kappa, dj_sh, dj_ax] }
}

fn mass_points(params: &HsaParams) -> Vec<(f64, f64)> {
    gauss_legendre(params.quadrature_points, params.geom.l0)
}

/// Inertia matrix and (optionally) its configuration derivatives, assembled
/// in a single quadrature pass.
fn inertia_with_derivatives(
    q: &Configuration,
    params: &HsaParams,
    with_derivs: bool,
) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let mut m = Matrix3::zeros();
    let mut dm = [Matrix3::zeros(); 3];
    let rho = params.rod_linear_density;
    let rho_rot = params.rod_rotational_inertia_density;

    for (s, w) in mass_points(params) {
        for sign in [1.0, -1.0] {
            let pk = point_kinematics(q, s, sign * params.geom.r_off);
            m += w * rho * pk.jac.transpose() * pk.jac;
            // rotational inertia about the cross-section: theta = kappa * s
            m[(0, 0)] += w * rho_rot * s * s;
            if with_derivs {
                for k in 0..3 {
                    let cross = pk.djac[k].transpose() * pk.jac;
                    dm[k] += w * rho * (cross + cross.transpose());
                }
            }
        }
    }
    // platform: point mass + rotational inertia at the backbone tip
    let l0 = params.geom.l0;
    let pk = point_kinematics(q, l0, 0.0);
    m += params.platform_mass * pk.jac.transpose() * pk.jac;
    m[(0, 0)] += params.platform_inertia * l0 * l0;
    if with_derivs {
        for k in 0..3 {
            let cross = pk.djac[k].transpose() * pk.jac;
            dm[k] += params.platform_mass * (cross + cross.transpose());
        }
    }
    (m, dm)
}

/// Inertia matrix M(q); symmetric positive-definite on the workspace.
pub fn inertia_matrix(q: &Configuration, params: &HsaParams) -> Result<Matrix3<f64>> {
    q.validate()?;
    let (m, _) = inertia_with_derivatives(q, params, false);
    if m.cholesky().is_none() {
        return Err(HsaError::NonSpdInertia(format!("at q = {:?}", q)));
    }
    Ok(m)
}

/// Configuration derivatives dM/dq_k, analytic (quadrature of the
/// differentiated integrand, not a finite difference of M).
pub fn inertia_derivatives(q: &Configuration, params: &HsaParams) -> [Matrix3<f64>; 3] {
    inertia_with_derivatives(q, params, true).1
}

/// Coriolis matrix from the Christoffel symbols of M.
pub fn coriolis_matrix(q: &Configuration, q_dot: &Vector3<f64>, params: &HsaParams) -> Matrix3<f64> {
    let dm = inertia_derivatives(q, params);
    christoffel_contract(&dm, q_dot)
}

fn christoffel_contract(dm: &[Matrix3<f64>; 3], q_dot: &Vector3<f64>) -> Matrix3<f64> {
    let mut c = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * q_dot[k];
            }
            c[(i, j)] = acc;
        }
    }
    c
}

/// Gravitational potential energy [J].
pub fn gravitational_potential(q: &Configuration, params: &HsaParams) -> f64 {
    let g = params.gravity_vec();
    let rho = params.rod_linear_density;
    let mut u = 0.0;
    for (s, w) in mass_points(params) {
        for sign in [1.0, -1.0] {
            let pk = point_kinematics(q, s, sign * params.geom.r_off);
            u -= w * rho * g.dot(&pk.p);
        }
    }
    let pk = point_kinematics(q, params.geom.l0, 0.0);
    u - params.platform_mass * g.dot(&pk.p)
}

/// Generalized gravity forces G(q) = dU/dq.
pub fn gravity_vector(q: &Configuration, params: &HsaParams) -> Vector3<f64> {
    let g = params.gravity_vec();
    let rho = params.rod_linear_density;
    let mut gv = Vector3::zeros();
    for (s, w) in mass_points(params) {
        for sign in [1.0, -1.0] {
            let pk = point_kinematics(q, s, sign * params.geom.r_off);
            gv -= w * rho * pk.jac.transpose() * g;
        }
    }
    let pk = point_kinematics(q, params.geom.l0, 0.0);
    gv - params.platform_mass * pk.jac.transpose() * g
}

/// Affine stiffness laws (S_be, S_sh, S_ax) of one rod at twist `phi_i`.
pub fn rod_stiffness(phi_i: f64, handedness: f64, params: &HsaParams) -> (f64, f64, f64) {
    let reg = handedness * phi_i / params.geom.l0;
    let st = &params.stiffness;
    (
        st.s_be_hat + st.c_s_be * reg,
        st.s_sh_hat + st.c_s_sh * reg,
        st.s_ax_hat + st.c_s_ax * reg,
    )
}

/// Full 3x3 rod stiffness matrix including the bending-shear coupling.
pub fn rod_stiffness_matrix(phi_i: f64, handedness: f64, params: &HsaParams) -> Matrix3<f64> {
    let (s_be, s_sh, s_ax) = rod_stiffness(phi_i, handedness, params);
    let c = params.stiffness.s_b_sh;
    Matrix3::new(s_be, c, 0.0, c, s_sh, 0.0, 0.0, 0.0, s_ax)
}

/// Per-rod elastic strain offset: beta_i(q) - xi0_i - eps_i(phi_i) e3.
fn rod_strain_offset(
    q: &Configuration,
    rod: usize,
    phi_i: f64,
    params: &HsaParams,
) -> Vector3<f64> {
    let beta = rod_strains(q, rod, &params.geom).expect("rod index fixed").as_vector();
    let rest = params.rod_rest_strains[rod - 1].as_vector();
    let eps = crate::kinematics::elongation(phi_i, params.geom.chirality[rod - 1], params);
    beta - rest - Vector3::new(0.0, 0.0, eps)
}

/// Splits the projected rod elastic forces into the input-independent part
/// `K_force(q)` (left side of the EOM) and the input-dependent `alpha(q, phi)`
/// (right side), so that `K_force - alpha` is the total elastic force.
pub fn elastic_and_actuation(
    q: &Configuration,
    phi: &ActuationAngles,
    params: &HsaParams,
) -> (Vector3<f64>, Vector3<f64>) {
    let mut k_force = Vector3::zeros();
    let mut total = Vector3::zeros();
    for rod in 1..=2 {
        let jb = rod_strain_jacobian(rod, &params.geom).expect("rod index fixed");
        let h = params.geom.chirality[rod - 1];
        let delta0 = rod_strain_offset(q, rod, 0.0, params);
        k_force += jb.transpose() * rod_stiffness_matrix(0.0, h, params) * delta0;
        let delta = rod_strain_offset(q, rod, phi.phi[rod - 1], params);
        total += jb.transpose() * rod_stiffness_matrix(phi.phi[rod - 1], h, params) * delta;
    }
    (k_force, k_force - total)
}

/// Closed-form actuation matrix A_phiss(q) = d(alpha)/d(phi) at phi = phi_ss.
pub fn actuation_jacobian(
    q: &Configuration,
    phi_ss: &ActuationAngles,
    params: &HsaParams,
) -> Matrix3x2<f64> {
    let mut a = Matrix3x2::zeros();
    let st = &params.stiffness;
    for rod in 1..=2 {
        let jb = rod_strain_jacobian(rod, &params.geom).expect("rod index fixed");
        let h = params.geom.chirality[rod - 1];
        let delta = rod_strain_offset(q, rod, phi_ss.phi[rod - 1], params);
        // dS/dphi_i and d(eps_i)/dphi_i
        let ds = Matrix3::from_diagonal(&Vector3::new(st.c_s_be, st.c_s_sh, st.c_s_ax))
            * (h / params.geom.l0);
        let deps = params.elongation_coeff * h / params.geom.l0;
        let s_mat = rod_stiffness_matrix(phi_ss.phi[rod - 1], h, params);
        let col = -jb.transpose() * (ds * delta - s_mat * Vector3::new(0.0, 0.0, deps));
        a.set_column(rod - 1, &col);
    }
    a
}

/// Constant damping matrix D = 2 diag(zeta_be + r_off^2 zeta_ax, zeta_sh, zeta_ax).
pub fn damping_matrix(params: &HsaParams) -> Matrix3<f64> {
    let z = &params.damping;
    let r = params.geom.r_off;
    2.0 * Matrix3::from_diagonal(&Vector3::new(z.zeta_be + r * r * z.zeta_ax, z.zeta_sh, z.zeta_ax))
}

/// Cheap conservative condition bound for a 3x3 SPD matrix:
/// cond <= trace^3 / det.
fn spd_condition_bound(m: &Matrix3<f64>) -> f64 {
    let det = m.determinant();
    if det <= 0.0 {
        return f64::INFINITY;
    }
    m.trace().powi(3) / det
}

/// Forward dynamics: returns (q_dot, q_ddot) stacked as a state derivative.
pub fn forward_dynamics(
    state: &RobotState,
    phi: &ActuationAngles,
    params: &HsaParams,
) -> Result<Vector6<f64>> {
    state.validate()?;
    phi.validate()?;
    let q = &state.q;
    let q_dot = state.q_dot_vec();
    let (m, dm) = inertia_with_derivatives(q, params, true);
    if spd_condition_bound(&m) > 1e12 {
        // the bound is loose; confirm with the actual spectrum
        let eig = m.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if lo <= 0.0 || hi / lo > 1e12 {
            return Err(HsaError::SingularDynamics { cond: if lo <= 0.0 { f64::INFINITY } else { hi / lo } });
        }
    }
    let c = christoffel_contract(&dm, &q_dot);
    let g = gravity_vector(q, params);
    let (k_force, alpha) = elastic_and_actuation(q, phi, params);
    let d = damping_matrix(params);
    let rhs = alpha - c * q_dot - g - k_force - d * q_dot;
    let q_ddot = m
        .cholesky()
        .ok_or_else(|| HsaError::NonSpdInertia(format!("at q = {:?}", q)))?
        .solve(&rhs);
    Ok(Vector6::new(q_dot[0], q_dot[1], q_dot[2], q_ddot[0], q_ddot[1], q_ddot[2]))
}

/// State-space form of the EOM for the integrator.
pub fn state_derivative(x: &Vector6<f64>, phi: &ActuationAngles, params: &HsaParams) -> Result<Vector6<f64>> {
    forward_dynamics(&RobotState::from_vector(x), phi, params)
}

/// Elastic potential of both rods at fixed phi; its q-gradient equals
/// K_force - alpha.
pub fn elastic_potential(q: &Configuration, phi: &ActuationAngles, params: &HsaParams) -> f64 {
    let mut u = 0.0;
    for rod in 1..=2 {
        let h = params.geom.chirality[rod - 1];
        let delta = rod_strain_offset(q, rod, phi.phi[rod - 1], params);
        let s_mat = rod_stiffness_matrix(phi.phi[rod - 1], h, params);
        u += 0.5 * delta.dot(&(s_mat * delta));
    }
    u
}

/// Total mechanical energy at fixed phi [J].
pub fn total_energy(state: &RobotState, phi: &ActuationAngles, params: &HsaParams) -> f64 {
    let q_dot = state.q_dot_vec();
    let (m, _) = inertia_with_derivatives(&state.q, params, false);
    0.5 * q_dot.dot(&(m * q_dot))
        + gravitational_potential(&state.q, params)
        + elastic_potential(&state.q, phi, params)
}

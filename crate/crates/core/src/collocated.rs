//! Coordinate transform into collocated form.
//!
//! `h(q)` maps the configuration into coordinates whose first two components
//! are acted on directly by the actuation: the rows 1-2 of its Jacobian equal
//! the columns of the actuation matrix `A_phiss(q)`, so the transformed input
//! matrix is exactly [I2; 0]. Because `A` is affine in `q`, the map has the
//! closed quadratic form
//!
//! ```text
//! h_k(q) = -1/2 q^T W_k q + b_k^T q,   W_k = J_beta_k^T S'_k J_beta_k
//! ```
//!
//! which makes the gradient identity hold by construction and resolves the
//! per-rod sign ambiguities of the expanded expression. The rod handedness is
//! called `chirality` throughout to keep it apart from the transform
//! components h_k.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::dynamics::{actuation_jacobian, gravity_vector, ActuationAngles};
use crate::error::{HsaError, Result};
use crate::kinematics::{elongation, rod_strain_jacobian, Configuration};
use crate::params::HsaParams;

/// Collocated coordinates theta_c; the first two components are actuated,
/// the third equals the shear strain of the generating configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocatedCoords {
    pub theta_c: Vector3<f64>,
}

impl CollocatedCoords {
    /// The actuated pair (theta_c,a).
    pub fn actuated(&self) -> Vector2<f64> {
        Vector2::new(self.theta_c[0], self.theta_c[1])
    }
}

/// Quadratic form (W_k, b_k) of the k-th transform component (k in {1, 2}).
fn component_form(k: usize, phi_ss: &ActuationAngles, params: &HsaParams) -> (Matrix3<f64>, Vector3<f64>) {
    let jb = rod_strain_jacobian(k, &params.geom).expect("rod index fixed");
    let chirality = params.geom.chirality[k - 1];
    let st = &params.stiffness;
    let ds = Matrix3::from_diagonal(&Vector3::new(st.c_s_be, st.c_s_sh, st.c_s_ax))
        * (chirality / params.geom.l0);
    let w = jb.transpose() * ds * jb;
    let eps = elongation(phi_ss.phi[k - 1], chirality, params);
    let deps = params.elongation_coeff * chirality / params.geom.l0;
    let rest = params.rod_rest_strains[k - 1].as_vector() + Vector3::new(0.0, 0.0, eps);
    let s_mat = crate::dynamics::rod_stiffness_matrix(phi_ss.phi[k - 1], chirality, params);
    let b = jb.transpose() * (ds * rest + s_mat * Vector3::new(0.0, 0.0, deps));
    (w, b)
}

/// The collocated map h evaluated at q for the plan's steady-state twist.
pub fn collocated_map(q: &Configuration, phi_ss: &ActuationAngles, params: &HsaParams) -> CollocatedCoords {
    let qv = q.as_vector();
    let mut theta_c = Vector3::zeros();
    for k in 1..=2 {
        let (w, b) = component_form(k, phi_ss, params);
        theta_c[k - 1] = -0.5 * qv.dot(&(w * qv)) + b.dot(&qv);
    }
    theta_c[2] = q.sigma_sh;
    CollocatedCoords { theta_c }
}

/// Closed-form Jacobian J_h(q); rows 1-2 are the transposed columns of
/// A_phiss(q), row 3 is (0, 1, 0).
pub fn collocated_jacobian(
    q: &Configuration,
    phi_ss: &ActuationAngles,
    params: &HsaParams,
) -> Result<Matrix3<f64>> {
    let a = actuation_jacobian(q, phi_ss, params);
    let mut jh = Matrix3::zeros();
    jh.set_row(0, &a.column(0).transpose());
    jh.set_row(1, &a.column(1).transpose());
    jh[(2, 1)] = 1.0;
    let det = jh.determinant();
    // Hadamard row-norm bound as the determinant scale
    let scale: f64 = (0..3).map(|r| jh.row(r).norm()).product();
    if det.abs() < 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(HsaError::CollocationSingularity { det });
    }
    Ok(jh)
}

/// Gravity in collocated coordinates: G_theta_c = J_h^{-T} G(q).
pub fn collocated_gravity(
    q: &Configuration,
    phi_ss: &ActuationAngles,
    params: &HsaParams,
) -> Result<Vector3<f64>> {
    let jh = collocated_jacobian(q, phi_ss, params)?;
    let g = gravity_vector(q, params);
    jh.transpose()
        .lu()
        .solve(&g)
        .ok_or(HsaError::CollocationSingularity { det: jh.determinant() })
}

/// Collocated velocity theta_c_dot = J_h(q) q_dot.
pub fn collocated_velocity(
    q: &Configuration,
    q_dot: &Vector3<f64>,
    phi_ss: &ActuationAngles,
    params: &HsaParams,
) -> Result<Vector3<f64>> {
    Ok(collocated_jacobian(q, phi_ss, params)? * q_dot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fpu() -> HsaParams {
        HsaParams::fpu().unwrap()
    }

    fn random_sample(rng: &mut impl Rng) -> (Configuration, ActuationAngles) {
        (
            Configuration::new(
                rng.gen_range(-12.0..12.0),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.05..0.6),
            ),
            ActuationAngles::new(rng.gen_range(0.0..3.4), rng.gen_range(0.0..3.4)),
        )
    }

    #[test]
    fn gradient_matches_actuation_columns() {
        let params = fpu();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let (q, phi_ss) = random_sample(&mut rng);
            let a = actuation_jacobian(&q, &phi_ss, &params);
            let h = 1e-6;
            for k in 0..2 {
                for comp in 0..3 {
                    let mut qp = q.as_vector();
                    let mut qm = q.as_vector();
                    qp[comp] += h;
                    qm[comp] -= h;
                    let hp = collocated_map(&Configuration::from_vector(&qp), &phi_ss, &params);
                    let hm = collocated_map(&Configuration::from_vector(&qm), &phi_ss, &params);
                    let fd = (hp.theta_c[k] - hm.theta_c[k]) / (2.0 * h);
                    assert!(
                        (fd - a[(comp, k)]).abs() < 1e-6 * fd.abs().max(1.0),
                        "dh_{k}/dq_{comp}: {fd} vs {}",
                        a[(comp, k)]
                    );
                }
            }
        }
    }

    #[test]
    fn third_component_is_shear() {
        let params = fpu();
        let q = Configuration::new(3.0, 0.12, 0.4);
        let h = collocated_map(&q, &ActuationAngles::new(1.0, 2.0), &params);
        assert_eq!(h.theta_c[2], q.sigma_sh);
        let jh = collocated_jacobian(&q, &ActuationAngles::new(1.0, 2.0), &params).unwrap();
        assert_eq!(jh[(2, 0)], 0.0);
        assert_eq!(jh[(2, 1)], 1.0);
        assert_eq!(jh[(2, 2)], 0.0);
    }

    #[test]
    fn vanishes_at_origin_with_zero_rest_and_twist() {
        let params = fpu();
        let h = collocated_map(&Configuration::zero(), &ActuationAngles::zero(), &params);
        assert_relative_eq!(h.theta_c[0], 0.0);
        assert_relative_eq!(h.theta_c[1], 0.0);
    }

    #[test]
    fn jacobian_rows_equal_actuation_transpose_and_invertible() {
        let params = fpu();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..1000 {
            let (q, phi_ss) = random_sample(&mut rng);
            let a = actuation_jacobian(&q, &phi_ss, &params);
            let jh = collocated_jacobian(&q, &phi_ss, &params).unwrap();
            for k in 0..2 {
                for comp in 0..3 {
                    assert!((jh[(k, comp)] - a[(comp, k)]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn transformed_input_matrix_is_identity_over_zero() {
        let params = fpu();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let (q, phi_ss) = random_sample(&mut rng);
            let a = actuation_jacobian(&q, &phi_ss, &params);
            let jh = collocated_jacobian(&q, &phi_ss, &params).unwrap();
            let a_theta = jh.transpose().lu().solve(&a).unwrap();
            for i in 0..3 {
                for j in 0..2 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((a_theta[(i, j)] - expected).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn collocated_gravity_definition() {
        let mut params = fpu();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let (q, phi_ss) = random_sample(&mut rng);
            let g_theta = collocated_gravity(&q, &phi_ss, &params).unwrap();
            let jh = collocated_jacobian(&q, &phi_ss, &params).unwrap();
            let g = gravity_vector(&q, &params);
            assert!((jh.transpose() * g_theta - g).norm() < 1e-10 * g.norm().max(1.0));
        }
        params.gravity = [0.0, 0.0];
        let g_theta =
            collocated_gravity(&Configuration::new(2.0, 0.0, 0.3), &ActuationAngles::new(1.0, 1.0), &params)
                .unwrap();
        assert!(g_theta.norm() < 1e-14);
    }

    #[test]
    fn collocated_velocity_linearity() {
        let params = fpu();
        let q = Configuration::new(-4.0, 0.05, 0.25);
        let phi_ss = ActuationAngles::new(0.8, 2.2);
        let zero = collocated_velocity(&q, &Vector3::zeros(), &phi_ss, &params).unwrap();
        assert!(zero.norm() == 0.0);
        let v = Vector3::new(0.4, -0.1, 0.9);
        let tv = collocated_velocity(&q, &v, &phi_ss, &params).unwrap();
        let tv2 = collocated_velocity(&q, &(3.0 * v), &phi_ss, &params).unwrap();
        assert!((tv2 - 3.0 * tv).norm() < 1e-12);
    }

    #[test]
    fn smooth_in_q_near_zero_curvature() {
        let params = fpu();
        let phi_ss = ActuationAngles::new(1.5, 1.5);
        let base = collocated_map(&Configuration::new(0.0, 0.02, 0.3), &phi_ss, &params);
        for &k in &[1e-7, -1e-7, 1e-9] {
            let h = collocated_map(&Configuration::new(k, 0.02, 0.3), &phi_ss, &params);
            assert!((h.theta_c - base.theta_c).norm() < 1e-8);
        }
    }
}

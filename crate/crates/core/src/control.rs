//! Feedback controllers: the saturated-integral P-satI-D law in collocated
//! coordinates (with and without gravity cancellation) and a task-space PID
//! baseline.
//!
//! All step functions return the raw, unsaturated actuation command; the
//! caller clamps it with [`saturate`] before applying it to the plant. The
//! integral state is advanced before the command is formed, so the very first
//! step after an error already carries one integrator sample.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::collocated::{collocated_gravity, collocated_map, collocated_velocity};
use crate::dynamics::{ActuationAngles, RobotState};
use crate::error::Result;
use crate::kinematics::{end_effector_pose, pose_jacobian};
use crate::params::{HsaParams, MotorLayout};
use crate::planning::PlanResult;

/// Diagonal gains of the collocated P-satI-D law.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PsatidGains {
    pub kp: [f64; 2],
    pub ki: [f64; 2],
    pub kd: [f64; 2],
    /// Slope of the tanh saturation inside the integral.
    pub gamma: f64,
}

impl Default for PsatidGains {
    fn default() -> Self {
        Self { kp: [0.3; 2], ki: [0.05; 2], kd: [0.01; 2], gamma: 100.0 }
    }
}

/// Scalar gains of the task-space PID baseline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self { kp: 10.0, ki: 110.0, kd: 0.25 }
    }
}

/// Integrator memory shared by all controllers (2 components each).
#[derive(Debug, Clone, Copy, Default)]
pub struct ControllerState {
    pub integral: Vector2<f64>,
}

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.integral = Vector2::zeros();
    }
}

fn p_sati_d_core(
    state: &RobotState,
    plan: &PlanResult,
    gains: &PsatidGains,
    params: &HsaParams,
    dt: f64,
    ctrl: &mut ControllerState,
    gravity_cancel: bool,
) -> Result<Vector2<f64>> {
    let theta = collocated_map(&state.q, &plan.phi_ss, params).actuated();
    let theta_d = collocated_map(&plan.q_d, &plan.phi_ss, params).actuated();
    let theta_dot =
        collocated_velocity(&state.q, &state.q_dot_vec(), &plan.phi_ss, params)?;
    let e = theta_d - theta;
    ctrl.integral += dt * e.map(|v| (gains.gamma * v).tanh());
    let mut phi = plan.phi_ss.as_vector();
    for i in 0..2 {
        phi[i] += gains.kp[i] * e[i] + gains.ki[i] * ctrl.integral[i]
            - gains.kd[i] * theta_dot[i];
    }
    if gravity_cancel {
        let g_d = collocated_gravity(&plan.q_d, &plan.phi_ss, params)?;
        let g = collocated_gravity(&state.q, &plan.phi_ss, params)?;
        for i in 0..2 {
            phi[i] += g[i] - g_d[i];
        }
    }
    Ok(phi)
}

/// One control step of the P-satI-D law.
pub fn p_sati_d_step(
    state: &RobotState,
    plan: &PlanResult,
    gains: &PsatidGains,
    params: &HsaParams,
    dt: f64,
    ctrl: &mut ControllerState,
) -> Result<Vector2<f64>> {
    p_sati_d_core(state, plan, gains, params, dt, ctrl, false)
}

/// One control step of the P-satI-D law with gravity cancellation: the
/// potential forces felt along the actuated collocated coordinates are
/// cancelled at the current configuration and re-imposed at the desired one.
pub fn p_sati_d_gc_step(
    state: &RobotState,
    plan: &PlanResult,
    gains: &PsatidGains,
    params: &HsaParams,
    dt: f64,
    ctrl: &mut ControllerState,
) -> Result<Vector2<f64>> {
    p_sati_d_core(state, plan, gains, params, dt, ctrl, true)
}

/// One control step of the task-space PID baseline. The planar position error
/// is controlled with scalar PID gains and mapped onto the two actuation
/// angles through the fixed mixing (u_x + u_y, -u_x + u_y).
pub fn baseline_pid_step(
    state: &RobotState,
    p_d: &Vector2<f64>,
    gains: &PidGains,
    params: &HsaParams,
    dt: f64,
    ctrl: &mut ControllerState,
) -> Result<Vector2<f64>> {
    let ee = end_effector_pose(&state.q, &params.geom)?;
    let jac = pose_jacobian(&state.q, params.geom.l0);
    let p_dot = jac.fixed_rows::<2>(0) * state.q_dot_vec();
    let e = p_d - Vector2::new(ee.p_x, ee.p_y);
    ctrl.integral += dt * e;
    let u = gains.kp * e + gains.ki * ctrl.integral - gains.kd * p_dot;
    Ok(Vector2::new(u[0] + u[1], -u[0] + u[1]))
}

/// Clamp a raw command onto the admissible actuation box [0, phi_max].
pub fn saturate(phi_raw: &Vector2<f64>, phi_max: f64) -> ActuationAngles {
    ActuationAngles::new(phi_raw[0].clamp(0.0, phi_max), phi_raw[1].clamp(0.0, phi_max))
}

/// Expand the two planar actuation angles into the four motor commands of the
/// physical rod layout, restoring the per-rod handedness signs.
pub fn motor_map(phi: &ActuationAngles, layout: &MotorLayout) -> [f64; 4] {
    let mut motors = [0.0; 4];
    for j in 0..4 {
        motors[j] = layout.handedness[j] * phi.phi[layout.sides[j]];
    }
    motors
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{Configuration, PlanarPose};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn fpu() -> HsaParams {
        HsaParams::fpu().unwrap()
    }

    fn plan_for(q_d: Configuration, phi_ss: ActuationAngles, params: &HsaParams) -> PlanResult {
        let chi = end_effector_pose(&q_d, &params.geom).unwrap();
        PlanResult { q_d, phi_ss, chi_ee_d: chi, residual: 0.0 }
    }

    #[test]
    fn command_is_steady_state_at_the_setpoint() {
        let params = fpu();
        let q_d = Configuration::new(2.0, 0.01, 0.3);
        let plan = plan_for(q_d, ActuationAngles::new(1.2, 0.9), &params);
        let mut ctrl = ControllerState::new();
        let phi = p_sati_d_step(
            &RobotState::at_rest(q_d),
            &plan,
            &PsatidGains::default(),
            &params,
            0.025,
            &mut ctrl,
        )
        .unwrap();
        assert_relative_eq!(phi[0], 1.2, epsilon = 1e-12);
        assert_relative_eq!(phi[1], 0.9, epsilon = 1e-12);
        assert_eq!(ctrl.integral, Vector2::zeros());
        // gravity-cancelled variant also reduces to the feedforward
        let phi_gc = p_sati_d_gc_step(
            &RobotState::at_rest(q_d),
            &plan,
            &PsatidGains::default(),
            &params,
            0.025,
            &mut ctrl,
        )
        .unwrap();
        assert_relative_eq!(phi_gc[0], 1.2, epsilon = 1e-10);
        assert_relative_eq!(phi_gc[1], 0.9, epsilon = 1e-10);
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        let params = fpu();
        let q_d = Configuration::new(1.5, 0.0, 0.25);
        let plan = plan_for(q_d, ActuationAngles::new(1.0, 1.0), &params);
        let q = Configuration::new(1.4, 0.0, 0.24);
        let gains = PsatidGains::default();
        let dt = 0.025;

        let theta = collocated_map(&q, &plan.phi_ss, &params).actuated();
        let theta_d = collocated_map(&q_d, &plan.phi_ss, &params).actuated();
        let e = theta_d - theta;

        let mut ctrl = ControllerState::new();
        let phi =
            p_sati_d_step(&RobotState::at_rest(q), &plan, &gains, &params, dt, &mut ctrl)
                .unwrap();
        for i in 0..2 {
            // integral is updated first, so one tanh sample enters the command
            let expected = 1.0 + 0.3 * e[i] + 0.05 * dt * (100.0 * e[i]).tanh();
            assert_relative_eq!(phi[i], expected, epsilon = 1e-12);
            assert_relative_eq!(ctrl.integral[i], dt * (100.0 * e[i]).tanh(), epsilon = 1e-15);
        }
    }

    #[test]
    fn integral_accumulates_bounded_increments() {
        let params = fpu();
        let q_d = Configuration::new(3.0, 0.0, 0.35);
        let plan = plan_for(q_d, ActuationAngles::new(1.5, 1.5), &params);
        let gains = PsatidGains::default();
        let dt = 0.025;
        let far = RobotState::at_rest(Configuration::zero());
        let mut ctrl = ControllerState::new();
        for step in 1..=50 {
            p_sati_d_step(&far, &plan, &gains, &params, dt, &mut ctrl).unwrap();
            // tanh bounds each increment by dt regardless of the error size
            assert!(ctrl.integral.amax() <= dt * step as f64 + 1e-12);
        }
    }

    #[test]
    fn damping_term_opposes_motion() {
        let params = fpu();
        let q_d = Configuration::new(1.5, 0.0, 0.25);
        let plan = plan_for(q_d, ActuationAngles::new(1.0, 1.0), &params);
        let gains = PsatidGains { kp: [0.0; 2], ki: [0.0; 2], kd: [0.01; 2], gamma: 100.0 };
        let moving = RobotState::new(q_d, Vector3::new(5.0, 0.0, 0.2));
        let mut ctrl = ControllerState::new();
        let phi = p_sati_d_step(&moving, &plan, &gains, &params, 0.025, &mut ctrl).unwrap();
        let theta_dot =
            collocated_velocity(&q_d, &moving.q_dot_vec(), &plan.phi_ss, &params).unwrap();
        for i in 0..2 {
            assert_relative_eq!(phi[i] - 1.0, -0.01 * theta_dot[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn baseline_pid_single_step() {
        let params = fpu();
        let state = RobotState::at_rest(Configuration::zero());
        let ee = end_effector_pose(&state.q, &params.geom).unwrap();
        // pure +y error of 1 mm
        let p_d = Vector2::new(ee.p_x, ee.p_y + 1e-3);
        let gains = PidGains::default();
        let dt = 0.025;
        let mut ctrl = ControllerState::new();
        let phi = baseline_pid_step(&state, &p_d, &gains, &params, dt, &mut ctrl).unwrap();
        let u_y = 10.0 * 1e-3 + 110.0 * dt * 1e-3;
        assert_relative_eq!(phi[0], u_y, epsilon = 1e-12);
        assert_relative_eq!(phi[1], u_y, epsilon = 1e-12);

        // a +x error commands opposite-sign contributions on the two sides
        ctrl.reset();
        let p_dx = Vector2::new(ee.p_x + 1e-3, ee.p_y);
        let phi_x = baseline_pid_step(&state, &p_dx, &gains, &params, dt, &mut ctrl).unwrap();
        assert_relative_eq!(phi_x[0], -phi_x[1], epsilon = 1e-12);
    }

    #[test]
    fn saturation_clamps_to_the_box() {
        let sat = saturate(&Vector2::new(-0.4, 5.0), 3.4);
        assert_eq!(sat.phi, [0.0, 3.4]);
        let inside = saturate(&Vector2::new(1.1, 2.2), 3.4);
        assert_eq!(inside.phi, [1.1, 2.2]);
    }

    #[test]
    fn motor_map_restores_handedness() {
        let layout = MotorLayout::default();
        let motors = motor_map(&ActuationAngles::new(1.5, 2.5), &layout);
        assert_eq!(motors, [1.5, -1.5, 2.5, -2.5]);
    }

    #[test]
    fn setpoint_is_reachable_pose() {
        // sanity on the helper used across these tests
        let params = fpu();
        let q_d = Configuration::new(2.0, 0.01, 0.3);
        let plan = plan_for(q_d, ActuationAngles::new(1.2, 0.9), &params);
        let PlanarPose { p_x, p_y, .. } = plan.chi_ee_d;
        assert!(p_y > 0.0 && p_x.is_finite());
    }
}

//! Fixed-step Dormand-Prince 5(4) integration.
//!
//! The step is advanced with the 5th-order solution; the embedded 4th-order
//! solution is kept as a per-step error monitor only (no step-size control).

use nalgebra::SVector;

use crate::error::{HsaError, Result};

// Dormand-Prince coefficients
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 4th-order embedded weights
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One DOPRI5 step from (t, x) with step dt. `k1` must hold f(t, x) on entry
/// (FSAL: on exit it holds f(t + dt, x_next)). Returns (x_next, embedded error
/// estimate).
pub fn dopri_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    x: &SVector<f64, N>,
    dt: f64,
    k1: &mut SVector<f64, N>,
) -> Result<(SVector<f64, N>, f64)>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let mut k = [SVector::<f64, N>::zeros(); 7];
    k[0] = *k1;
    for stage in 1..7 {
        let mut xs = *x;
        for (j, kj) in k.iter().enumerate().take(stage) {
            if A[stage][j] != 0.0 {
                xs += dt * A[stage][j] * kj;
            }
        }
        k[stage] = f(t + C[stage] * dt, &xs)?;
    }
    // stage 7 abscissa is the 5th-order solution itself
    let mut x5 = *x;
    for (j, kj) in k.iter().enumerate().take(6) {
        if A[6][j] != 0.0 {
            x5 += dt * A[6][j] * kj;
        }
    }
    let mut x4 = *x;
    for (j, kj) in k.iter().enumerate() {
        if B4[j] != 0.0 {
            x4 += dt * B4[j] * kj;
        }
    }
    *k1 = k[6];
    Ok((x5, (x5 - x4).norm()))
}

/// Result of a fixed-step integration: states at t0 + i*dt and the embedded
/// 4th/5th-order error estimate of every step.
pub struct DopriTrajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<SVector<f64, N>>,
    pub embedded_errors: Vec<f64>,
}

impl<const N: usize> DopriTrajectory<N> {
    pub fn final_state(&self) -> &SVector<f64, N> {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn max_embedded_error(&self) -> f64 {
        self.embedded_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Integrate x' = f(t, x) from t0 to t1 with fixed step dt, storing every step.
pub fn integrate_dopri<const N: usize, F>(
    mut f: F,
    x0: &SVector<f64, N>,
    t_span: (f64, f64),
    dt: f64,
) -> Result<DopriTrajectory<N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HsaError::InvalidArgument(format!("dt = {dt} must be > 0")));
    }
    let (t0, t1) = t_span;
    if t1 < t0 {
        return Err(HsaError::InvalidArgument("t1 < t0".into()));
    }
    let n_steps = ((t1 - t0) / dt).round() as usize;
    let mut traj = DopriTrajectory {
        times: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        embedded_errors: Vec::with_capacity(n_steps),
    };
    let mut t = t0;
    let mut x = *x0;
    let mut k1 = f(t, &x)?;
    traj.times.push(t);
    traj.states.push(x);
    for i in 0..n_steps {
        let (x_next, err) = dopri_step(&mut f, t, &x, dt, &mut k1)?;
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(HsaError::IntegrationDiverged { t });
        }
        x = x_next;
        t = t0 + (i + 1) as f64 * dt;
        traj.times.push(t);
        traj.states.push(x);
        traj.embedded_errors.push(err);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Vector1, Vector2};

    #[test]
    fn constant_field_stays_constant() {
        let traj = integrate_dopri(
            |_, _x: &Vector1<f64>| Ok(Vector1::zeros()),
            &Vector1::new(2.5),
            (0.0, 1.0),
            1e-2,
        )
        .unwrap();
        assert_eq!(traj.final_state()[0], 2.5);
        assert_eq!(traj.max_embedded_error(), 0.0);
    }

    #[test]
    fn exponential_decay_accuracy() {
        let traj = integrate_dopri(
            |_, x: &Vector1<f64>| Ok(-x),
            &Vector1::new(1.0),
            (0.0, 1.0),
            1e-3,
        )
        .unwrap();
        assert_relative_eq!(traj.final_state()[0], (-1.0f64).exp(), epsilon = 1e-9);
        assert_relative_eq!(traj.final_state()[0], 0.3678794412, epsilon = 1e-9);
    }

    #[test]
    fn fifth_order_convergence() {
        let err_at = |dt: f64| {
            let traj = integrate_dopri(
                |_, x: &Vector1<f64>| Ok(-x),
                &Vector1::new(1.0),
                (0.0, 1.0),
                dt,
            )
            .unwrap();
            (traj.final_state()[0] - (-1.0f64).exp()).abs()
        };
        // steps large enough that truncation error stays above roundoff
        let e1 = err_at(1e-1);
        let e2 = err_at(5e-2);
        let e3 = err_at(2.5e-2);
        let slope1 = (e1 / e2).log2();
        let slope2 = (e2 / e3).log2();
        assert!((slope1 - 5.0).abs() < 0.3, "slope {slope1}");
        assert!((slope2 - 5.0).abs() < 0.3, "slope {slope2}");
    }

    #[test]
    fn harmonic_oscillator_energy_drift() {
        let traj = integrate_dopri(
            |_, x: &Vector2<f64>| Ok(Vector2::new(x[1], -x[0])),
            &Vector2::new(1.0, 0.0),
            (0.0, 1000.0 * 2.0 * std::f64::consts::PI),
            1e-2,
        )
        .unwrap();
        let energy = |x: &Vector2<f64>| 0.5 * (x[0] * x[0] + x[1] * x[1]);
        let e0 = energy(&traj.states[0]);
        let ef = energy(traj.final_state());
        assert!((ef - e0).abs() / e0 < 1e-6, "drift {}", (ef - e0).abs() / e0);
    }

    #[test]
    fn blow_up_reports_diverged() {
        let res = integrate_dopri(
            |_, x: &Vector1<f64>| Ok(x * x[0]),
            &Vector1::new(10.0),
            (0.0, 10.0),
            1e-2,
        );
        assert!(matches!(res, Err(HsaError::IntegrationDiverged { .. })));
    }
}

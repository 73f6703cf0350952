//! Scalar trigonometric kernels of the constant-strain kinematics and their
//! first two derivatives, with Taylor-series branches near the straight
//! configuration so that every quantity stays smooth across `kappa_be = 0`.
//!
//! All kernels are functions of `u = kappa_be * s`. Formulations avoid the
//! catastrophic `1 - cos(u)` cancellation by rewriting through `sin(u/2)`.

/// Series branch width. Below this the Taylor expansions are exact to
/// double precision; above it the closed forms are well conditioned.
const SERIES_EPS: f64 = 1e-2;

/// sin(u)/u.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < SERIES_EPS {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0 - u2 * u2 * u2 / 5040.0
    } else {
        u.sin() / u
    }
}

/// d/du [sin(u)/u].
pub fn dsinc(u: f64) -> f64 {
    if u.abs() < SERIES_EPS {
        let u2 = u * u;
        u * (-1.0 / 3.0 + u2 / 30.0 - u2 * u2 / 840.0)
    } else {
        (u.cos() - sinc(u)) / u
    }
}

/// d^2/du^2 [sin(u)/u].
pub fn d2sinc(u: f64) -> f64 {
    if u.abs() < SERIES_EPS {
        let u2 = u * u;
        -1.0 / 3.0 + u2 / 10.0 - u2 * u2 / 168.0
    } else {
        (-u * u.sin() - 2.0 * u.cos() + 2.0 * sinc(u)) / (u * u)
    }
}

/// (cos(u) - 1)/u, written as -u sin^2(u/2) / (u/2)^2 / 2 to avoid cancellation.
pub fn cosm1_over(u: f64) -> f64 {
    let sh = sinc(0.5 * u);
    -0.5 * u * sh * sh
}

/// d/du [(cos(u) - 1)/u].
pub fn dcosm1_over(u: f64) -> f64 {
    if u.abs() < SERIES_EPS {
        let u2 = u * u;
        -0.5 + u2 / 8.0 - u2 * u2 / 144.0
    } else {
        let sh = sinc(0.5 * u);
        -sinc(u) + 0.5 * sh * sh
    }
}

/// d^2/du^2 [(cos(u) - 1)/u].
pub fn d2cosm1_over(u: f64) -> f64 {
    if u.abs() < SERIES_EPS {
        let u2 = u * u;
        u * (0.25 - u2 / 36.0 + u2 * u2 / 960.0)
    } else {
        let sh = sinc(0.5 * u);
        (-u.cos() + 2.0 * sinc(u) - sh * sh) / u
    }
}

/// theta * sin(theta) / (1 - cos(theta)) = theta * cot(theta/2), the kernel of
/// the closed-form inverse kinematics. Tends to 2 as theta -> 0.
pub fn theta_cot_half(theta: f64) -> f64 {
    if theta.abs() < 1e-6 {
        let t2 = theta * theta;
        2.0 - t2 / 6.0 - t2 * t2 / 360.0
    } else {
        theta * (0.5 * theta).cos() / (0.5 * theta).sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd2(f: fn(f64) -> f64, u: f64, h: f64) -> f64 {
        (f(u + h) - f(u - h)) / (2.0 * h)
    }

    #[test]
    fn branches_agree_at_switch() {
        for &u in &[SERIES_EPS * 0.999, SERIES_EPS * 1.001, -SERIES_EPS * 0.999] {
            assert_relative_eq!(sinc(u), u.sin() / u, epsilon = 1e-14);
            assert_relative_eq!(dsinc(u), (u.cos() - u.sin() / u) / u, epsilon = 1e-11);
            assert_relative_eq!(cosm1_over(u), (u.cos() - 1.0) / u, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &u in &[0.0, 1e-8, 5e-3, 0.3, 1.7, -0.9] {
            let h = 1e-5;
            assert_relative_eq!(dsinc(u), fd2(sinc, u, h), epsilon = 1e-8, max_relative = 1e-7);
            assert_relative_eq!(d2sinc(u), fd2(dsinc, u, h), epsilon = 1e-8, max_relative = 1e-7);
            assert_relative_eq!(
                dcosm1_over(u),
                fd2(cosm1_over, u, h),
                epsilon = 1e-8,
                max_relative = 1e-7
            );
            assert_relative_eq!(
                d2cosm1_over(u),
                fd2(dcosm1_over, u, h),
                epsilon = 1e-8,
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn cot_kernel_limit() {
        assert_relative_eq!(theta_cot_half(0.0), 2.0);
        assert_relative_eq!(theta_cot_half(1e-7), 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            theta_cot_half(0.8),
            0.8 * (0.8f64).sin() / (1.0 - (0.8f64).cos()),
            epsilon = 1e-13
        );
    }
}

//! Savitzky-Golay differentiation: local least-squares polynomial fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{HsaError, Result};

/// Derivative of `signal` by Savitzky-Golay filtering: a polynomial of order
/// `poly_order` is fit over a window of `window` seconds and differentiated
/// at each sample. Interior points use a centered window, edges one-sided
/// windows of the same length.
pub fn savgol_derivative(signal: &[f64], window: f64, poly_order: usize, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && window > 0.0) {
        return Err(HsaError::InvalidArgument("window and dt must be > 0".into()));
    }
    let mut w = (window / dt).round() as usize;
    if w % 2 == 0 {
        w += 1;
    }
    if w < poly_order + 1 {
        return Err(HsaError::InvalidArgument(format!(
            "window of {w} samples too short for poly_order {poly_order}"
        )));
    }
    if signal.len() < w {
        return Err(HsaError::InvalidArgument(format!(
            "signal of {} samples shorter than window of {w}",
            signal.len()
        )));
    }
    let half = w / 2;
    let n = signal.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(half).min(n - w);
        out[i] = fit_derivative(&signal[lo..lo + w], i - lo, poly_order, dt);
    }
    Ok(out)
}

/// Least-squares polynomial derivative at sample `at` of a window.
fn fit_derivative(window: &[f64], at: usize, poly_order: usize, dt: f64) -> f64 {
    let w = window.len();
    let mut vander = DMatrix::zeros(w, poly_order + 1);
    for (row, _) in window.iter().enumerate() {
        // abscissa centered on the evaluation point, in units of dt
        let x = row as f64 - at as f64;
        let mut pow = 1.0;
        for col in 0..=poly_order {
            vander[(row, col)] = pow;
            pow *= x;
        }
    }
    let y = DVector::from_column_slice(window);
    let coeffs = vander
        .svd(true, true)
        .solve(&y, 1e-14)
        .expect("svd solve on a Vandermonde system");
    // derivative at x = 0 is the linear coefficient, rescaled by dt
    coeffs[1] / dt
}

/// Root-mean-square Euclidean error between a reference and an actual
/// sequence of planar positions.
pub fn rmse(reference: &[[f64; 2]], actual: &[[f64; 2]]) -> Result<f64> {
    if reference.len() != actual.len() {
        return Err(HsaError::InvalidArgument(format!(
            "length mismatch: {} reference vs {} actual samples",
            reference.len(),
            actual.len()
        )));
    }
    if reference.is_empty() {
        return Err(HsaError::InvalidArgument("empty sequences".into()));
    }
    let sum: f64 = reference
        .iter()
        .zip(actual)
        .map(|(r, a)| {
            let dx = r[0] - a[0];
            let dy = r[1] - a[1];
            dx * dx + dy * dy
        })
        .sum();
    Ok((sum / reference.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_signal_has_zero_derivative() {
        let signal = vec![3.7; 100];
        let deriv = savgol_derivative(&signal, 0.1, 3, 5e-3).unwrap();
        assert!(deriv.iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn quadratic_is_differentiated_exactly() {
        let dt = 5e-3;
        let signal: Vec<f64> = (0..200).map(|i| {
            let t = i as f64 * dt;
            1.5 * t * t - 0.7 * t + 0.2
        }).collect();
        let deriv = savgol_derivative(&signal, 0.1, 3, dt).unwrap();
        for (i, d) in deriv.iter().enumerate().skip(15).take(170) {
            let t = i as f64 * dt;
            assert!((d - (3.0 * t - 0.7)).abs() < 1e-10, "at {t}: {d}");
        }
    }

    #[test]
    fn sine_derivative_accuracy() {
        let dt = 5e-3;
        let signal: Vec<f64> = (0..500).map(|i| (i as f64 * dt).sin()).collect();
        let deriv = savgol_derivative(&signal, 0.1, 3, dt).unwrap();
        let max_err = deriv
            .iter()
            .enumerate()
            .skip(15)
            .take(470)
            .map(|(i, d)| (d - (i as f64 * dt).cos()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-3, "max interior error {max_err}");
    }

    #[test]
    fn window_too_short_rejected() {
        assert!(savgol_derivative(&[1.0; 50], 0.01, 5, 5e-3).is_err());
    }

    #[test]
    fn rmse_examples() {
        let a = [[0.0, 0.0], [0.0, 0.0]];
        assert_relative_eq!(rmse(&a, &a).unwrap(), 0.0);
        // constant offset in one axis
        let b = [[1.0, 2.0], [3.0, -1.0]];
        let b_off: Vec<[f64; 2]> = b.iter().map(|p| [p[0] + 5e-3, p[1]]).collect();
        assert_relative_eq!(rmse(&b, &b_off).unwrap(), 5e-3, epsilon = 1e-15);
        // hand-evaluated two-sample case
        let actual = [[3e-3, 0.0], [0.0, 4e-3]];
        assert_relative_eq!(rmse(&a, &actual).unwrap(), (25e-6f64 / 2.0).sqrt(), epsilon = 1e-12);
        assert!(rmse(&a, &[[0.0, 0.0]]).is_err());
    }
}

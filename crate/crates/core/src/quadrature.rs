//! Gauss-Legendre quadrature nodes for the arclength integrals.

/// Nodes and weights on [0, upper]. Computed by Newton iteration on the
/// Legendre polynomial; exact for polynomials of degree 2n - 1.
pub fn gauss_legendre(n: usize, upper: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((0.5 * upper * (1.0 - x), 0.5 * upper * w));
    }
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        // degree 9 monomial with a 5-point rule over [0, 2]
        let rule = gauss_legendre(5, 2.0);
        let got: f64 = rule.iter().map(|(x, w)| w * x.powi(9)).sum();
        assert_relative_eq!(got, 2.0f64.powi(10) / 10.0, max_relative = 1e-13);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [2, 5, 13, 40] {
            let rule = gauss_legendre(n, 0.059);
            let total: f64 = rule.iter().map(|(_, w)| w).sum();
            assert_relative_eq!(total, 0.059, max_relative = 1e-12);
        }
    }
}

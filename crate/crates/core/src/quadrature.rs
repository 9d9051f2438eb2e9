//! Gauss-Legendre quadrature with doubling refinement.

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial,
    /// starting from the Chebyshev-angle approximation of the roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "rule order must be at least 2");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // initial guess for the i-th root in descending order
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            let (_, d) = legendre_with_derivative(n, 0.0);
            nodes[n / 2] = 0.0;
            weights[n / 2] = 2.0 / (d * d);
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: &F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        half * acc
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates with rules of doubling order until two successive estimates
/// agree within `tol`, starting from `n0` points.
pub fn integrate_refining<F: Fn(f64) -> f64>(
    a: f64,
    b: f64,
    f: &F,
    n0: usize,
    tol: f64,
) -> Result<f64> {
    let mut n = n0;
    let mut prev = GaussLegendre::new(n).integrate(a, b, f);
    if !prev.is_finite() {
        return Err(Error::Integration(
            "integrand produced a non-finite value".into(),
        ));
    }
    for _ in 0..6 {
        n *= 2;
        let next = GaussLegendre::new(n).integrate(a, b, f);
        if !next.is_finite() {
            return Err(Error::Integration(
                "integrand produced a non-finite value".into(),
            ));
        }
        if (next - prev).abs() < tol {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomial_exactly() {
        let rule = GaussLegendre::new(8);
        // degree-7 polynomial is exact for an 8-point rule
        let val = rule.integrate(0.0, 2.0, &|x| x.powi(7) - 3.0 * x.powi(3) + 1.0);
        let exact = 2.0f64.powi(8) / 8.0 - 3.0 * 2.0f64.powi(4) / 4.0 + 2.0;
        assert_relative_eq!(val, exact, epsilon = 1e-12);
    }

    #[test]
    fn refining_hits_tolerance_on_oscillatory_integrand() {
        let val = integrate_refining(
            0.0,
            std::f64::consts::PI,
            &|x| (10.0 * x).sin().powi(2),
            16,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(val, std::f64::consts::PI / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn refining_rejects_non_finite() {
        assert!(integrate_refining(0.0, 1.0, &|x| (x - 0.5).sqrt(), 16, 1e-10).is_err());
    }
}

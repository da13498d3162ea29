//! Quadrature rules.
//!
//! Two families live here: a plain Gauss-Legendre rule on `[0, 1]`, used by
//! the eigenfunction probe after a grading substitution, and the
//! product-integration weights for the Riemann-Liouville integral
//! `(1/Γ(β)) ∫ (t - s)^(β-1) F(s) ds` on a uniform grid. The simulator and
//! the Picard operator both use the latter, so the discrete fixed point of
//! the operator is exactly the implicit product-trapezoidal solution.

use crate::specfun::gamma;
use crate::Result;

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess for the i-th root of P_n on [-1, 1].
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over `[0, 1]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
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
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Product-integration weights for the fractional integral of order `beta`
/// on a uniform grid with step `h`.
///
/// For target index `m` (time `t0 + m h`) the product-trapezoidal rule is
/// `c_trap * Σ_{j=0..m} w(m, j) F_j` and the product-rectangle rule is
/// `c_rect * Σ_{j=0..m-1} v(m, j) F_j`. Both weight families depend on
/// `m - j` only (apart from the trapezoidal end weight at `j = 0`), so they
/// are tabulated once per grid.
#[derive(Debug, Clone)]
pub struct ProductWeights {
    beta: f64,
    /// `h^β / Γ(β + 2)`
    pub c_trap: f64,
    /// `h^β / Γ(β + 1)`
    pub c_rect: f64,
    /// `trap[k] = (k+1)^(β+1) - 2 k^(β+1) + (k-1)^(β+1)` for `k ≥ 1`.
    trap: Vec<f64>,
    /// `rect[k] = k^β - (k-1)^β` for `k ≥ 1`.
    rect: Vec<f64>,
}

impl ProductWeights {
    pub fn new(beta: f64, h: f64, steps: usize) -> Result<Self> {
        let c_trap = h.powf(beta) / gamma(beta + 2.0)?;
        let c_rect = h.powf(beta) / gamma(beta + 1.0)?;
        let b1 = beta + 1.0;
        let mut trap = vec![0.0; steps + 1];
        let mut rect = vec![0.0; steps + 1];
        for k in 1..=steps {
            let kf = k as f64;
            trap[k] = (kf + 1.0).powf(b1) - 2.0 * kf.powf(b1) + (kf - 1.0).powf(b1);
            rect[k] = kf.powf(beta) - (kf - 1.0).powf(beta);
        }
        Ok(Self {
            beta,
            c_trap,
            c_rect,
            trap,
            rect,
        })
    }

    pub fn steps(&self) -> usize {
        self.trap.len() - 1
    }

    /// Trapezoidal weight of node `j` for target `m ≥ 1`, without `c_trap`.
    pub fn trapezoid(&self, m: usize, j: usize) -> f64 {
        debug_assert!(m >= 1 && j <= m);
        if j == m {
            1.0
        } else if j == 0 {
            let mf = m as f64;
            (mf - 1.0).powf(self.beta + 1.0) - (mf - 1.0 - self.beta) * mf.powf(self.beta)
        } else {
            self.trap[m - j]
        }
    }

    /// Rectangle weight of node `j < m` for target `m ≥ 1`, without `c_rect`.
    pub fn rectangle(&self, m: usize, j: usize) -> f64 {
        debug_assert!(j < m);
        self.rect[m - j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the exactness limit for 8 nodes
        let got = rule.integrate(|x| x.powi(15));
        assert!((got - 1.0 / 16.0).abs() < 1e-15);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_large_rule_is_accurate() {
        let rule = GaussLegendre::new(256);
        let got = rule.integrate(|x| (3.0 * x).exp());
        let exact = ((3.0f64).exp() - 1.0) / 3.0;
        assert!((got - exact).abs() / exact < 1e-14);
    }

    #[test]
    fn product_weights_integrate_constants_exactly() {
        // (1/Γ(β)) ∫_0^t (t-s)^(β-1) ds = t^β / Γ(β+1)
        for &beta in &[0.3, 0.6, 0.9, 1.0] {
            let n = 50;
            let h = 0.02;
            let w = ProductWeights::new(beta, h, n).unwrap();
            for m in 1..=n {
                let trap: f64 = (0..=m).map(|j| w.trapezoid(m, j)).sum::<f64>() * w.c_trap;
                let rect: f64 = (0..m).map(|j| w.rectangle(m, j)).sum::<f64>() * w.c_rect;
                let exact = (m as f64 * h).powf(beta) / gamma(beta + 1.0).unwrap();
                assert!((trap - exact).abs() < 1e-12 * exact.max(1.0), "beta={beta} m={m}");
                assert!((rect - exact).abs() < 1e-12 * exact.max(1.0));
            }
        }
    }

    #[test]
    fn product_trapezoid_is_exact_for_linear_integrands() {
        // (1/Γ(β)) ∫_0^t (t-s)^(β-1) s ds = t^(β+1) / Γ(β+2)
        let beta = 0.7;
        let n = 40;
        let h = 0.05;
        let w = ProductWeights::new(beta, h, n).unwrap();
        for m in 1..=n {
            let approx: f64 = (0..=m)
                .map(|j| w.trapezoid(m, j) * j as f64 * h)
                .sum::<f64>()
                * w.c_trap;
            let t = m as f64 * h;
            let exact = t.powf(beta + 1.0) / gamma(beta + 2.0).unwrap();
            assert!((approx - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_order_reduces_to_classical_trapezoid() {
        let w = ProductWeights::new(1.0, 0.1, 10).unwrap();
        assert!((w.trapezoid(5, 0) - 1.0).abs() < 1e-15);
        assert!((w.trapezoid(5, 3) - 2.0).abs() < 1e-12);
        assert!((w.c_trap - 0.05).abs() < 1e-15);
    }
}

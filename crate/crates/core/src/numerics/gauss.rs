//! Gauss–Legendre rules with the extra tables needed for collocation:
//! barycentric weights for interpolation and the cumulative integration
//! matrix `S[i][j] = ∫_{-1}^{x_i} ℓ_j(x) dx`.

use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    bary: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes (ascending) and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        let bary: Vec<f64> = (0..n)
            .map(|j| {
                let prod: f64 = (0..n)
                    .filter(|&k| k != j)
                    .map(|k| nodes[j] - nodes[k])
                    .product();
                1.0 / prod
            })
            .collect();
        let mut rule = GaussRule {
            nodes,
            weights,
            bary,
            cumulative: vec![0.0; n * n],
        };
        // ℓ_j has degree n-1, so the n-point rule on [-1, x_i] integrates it exactly.
        let mut cumulative = vec![0.0; n * n];
        for i in 0..n {
            let xi = rule.nodes[i];
            let half = 0.5 * (xi + 1.0);
            for k in 0..n {
                let x = -1.0 + half * (rule.nodes[k] + 1.0);
                let w = half * rule.weights[k];
                let basis = rule.lagrange_basis(x);
                for j in 0..n {
                    cumulative[i * n + j] += w * basis[j];
                }
            }
        }
        rule.cumulative = cumulative;
        rule
    }

    pub fn shared(n: usize) -> Arc<Self> {
        Arc::new(Self::new(n))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of all Lagrange basis polynomials at `x`.
    pub fn lagrange_basis(&self, x: f64) -> Vec<f64> {
        let n = self.len();
        if let Some(k) = self.nodes.iter().position(|&t| (t - x).abs() < 1e-15) {
            let mut out = vec![0.0; n];
            out[k] = 1.0;
            return out;
        }
        let terms: Vec<f64> = (0..n).map(|j| self.bary[j] / (x - self.nodes[j])).collect();
        let denom: f64 = terms.iter().sum();
        terms.into_iter().map(|t| t / denom).collect()
    }

    /// `∫_{-1}^{x_i} ℓ_j`, row-major.
    pub fn cumulative(&self, i: usize, j: usize) -> f64 {
        self.cumulative[i * self.len() + j]
    }

    /// Derivative of the interpolating polynomial of `values` at `x`.
    pub fn derivative_at(&self, values: &[f64], x: f64) -> f64 {
        let n = self.len();
        // Differentiate P(x) = Σ w_j f_j /(x-x_j) / Σ w_j/(x-x_j) directly.
        let mut num = 0.0;
        let mut den = 0.0;
        let mut dnum = 0.0;
        let mut dden = 0.0;
        for j in 0..n {
            let d = x - self.nodes[j];
            if d.abs() < 1e-13 {
                // Fall back to a symmetric difference on the interpolant.
                let h = 1e-6;
                let f = |y: f64| -> f64 {
                    self.lagrange_basis(y)
                        .iter()
                        .zip(values)
                        .map(|(b, v)| b * v)
                        .sum()
                };
                return (f(x + h) - f(x - h)) / (2.0 * h);
            }
            let t = self.bary[j] / d;
            num += t * values[j];
            den += t;
            dnum -= t * values[j] / d;
            dden -= t / d;
        }
        (dnum * den - num * dden) / (den * den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_integrate_polynomials() {
        for n in [1, 2, 5, 12, 20] {
            let rule = GaussRule::new(n);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-14);
            // x^(2n-2) integrates to 2/(2n-1)
            let deg = 2 * n - 2;
            let integral: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            assert!((integral - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn cumulative_matrix_integrates_cubic() {
        let rule = GaussRule::new(6);
        let f: Vec<f64> = rule.nodes.iter().map(|x| 3.0 * x * x).collect();
        for i in 0..rule.len() {
            let s: f64 = (0..rule.len()).map(|j| rule.cumulative(i, j) * f[j]).sum();
            let exact = rule.nodes[i].powi(3) + 1.0;
            assert!((s - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_and_derivative_are_exact_for_low_degree() {
        let rule = GaussRule::new(8);
        let f: Vec<f64> = rule.nodes.iter().map(|x| x.powi(5) - 2.0 * x).collect();
        let x = 0.3217;
        let p: f64 = rule
            .lagrange_basis(x)
            .iter()
            .zip(&f)
            .map(|(b, v)| b * v)
            .sum();
        assert!((p - (x.powi(5) - 2.0 * x)).abs() < 1e-13);
        let dp = rule.derivative_at(&f, x);
        assert!((dp - (5.0 * x.powi(4) - 2.0)).abs() < 1e-11);
    }
}

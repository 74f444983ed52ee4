//! Fixed-order Gauss-Legendre rules.

use std::sync::OnceLock;

/// Nodes and weights of an `n`-point rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_n` from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// `integral_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (h, m) = (0.5 * (b - a), 0.5 * (b + a));
        h * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(m + h * x))
            .sum::<f64>()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// The 16-point rule mapped to `[0, 1]`, as `(node, weight)` pairs.
pub fn unit_interval_16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let g = GaussLegendre::new(16);
        g.nodes
            .iter()
            .zip(&g.weights)
            .map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        for n in [1, 2, 5, 16] {
            let g = GaussLegendre::new(n);
            assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                let got = g.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn known_nodes() {
        let g = GaussLegendre::new(2);
        assert!((g.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let g = GaussLegendre::new(16);
        // largest node of the 16-point rule
        assert!((g.nodes[15] - 0.989_400_934_991_649_9).abs() < 1e-15);
        assert!((g.weights[15] - 0.027_152_459_411_754_095).abs() < 1e-15);
    }

    #[test]
    fn unit_rule() {
        let r = unit_interval_16();
        assert_eq!(r.len(), 16);
        let m1: f64 = r.iter().map(|(x, w)| w * x).sum();
        let m2: f64 = r.iter().map(|(x, w)| w * x * x).sum();
        assert!((m1 - 0.5).abs() < 1e-15 && (m2 - 1.0 / 3.0).abs() < 1e-15);
        let e: f64 = r.iter().map(|(x, w)| w * x.exp()).sum();
        assert!((e - (1f64.exp() - 1.0)).abs() < 1e-15);
    }
}

//! Gauss–Legendre rules with a process-wide node cache.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre recurrence; roots are symmetric so
    /// only the positive half is solved for.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared rule for `n` nodes, computed once per process.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
            return Arc::clone(rule);
        }
        let rule = Arc::new(GaussLegendre::new(n));
        cache
            .lock()
            .expect("quadrature cache poisoned")
            .entry(n)
            .or_insert(rule)
            .clone()
    }

    /// Nodes and weights mapped to `[0, 1]`.
    pub fn unit_interval(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w))
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
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 64, 257, 1024] {
            let r = GaussLegendre::new(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-12, "n={n}: {s}");
        }
    }

    #[test]
    fn integrates_polynomials_exactly() {
        // degree 2n-1 exactness: ∫_{-1}^{1} x^10 dx = 2/11 with n = 6
        let r = GaussLegendre::new(6);
        let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(10)).sum();
        assert!((v - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn three_point_rule_matches_table() {
        let r = GaussLegendre::new(3);
        assert!((r.nodes[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((r.weights[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((r.weights[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn smooth_oscillatory_integral() {
        // ∫_0^1 cos(20 s) ds = sin(20)/20
        let r = GaussLegendre::cached(64);
        let v: f64 = r.unit_interval().map(|(s, w)| w * (20.0 * s).cos()).sum();
        assert!((v - 20f64.sin() / 20.0).abs() < 1e-14);
    }
}

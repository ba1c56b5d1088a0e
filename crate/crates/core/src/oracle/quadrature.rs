//! Gauss–Legendre quadrature on finite windows.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math;
use crate::oracle::Gauss1D;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Roots of `P_n` by Newton iteration from the Tricomi initial guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = math::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n(x) and P_{n-1}(x)
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Composite rule: `panels` copies of the `n`-point rule tiling `[lo, hi]`.
pub fn composite(lo: f64, hi: f64, n: usize, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(n);
    let h = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(n * panels);
    let mut weights = Vec::with_capacity(n * panels);
    for p in 0..panels {
        let a = lo + p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            nodes.push(a + 0.5 * h * (x + 1.0));
            weights.push(0.5 * h * w);
        }
    }
    (nodes, weights)
}

/// Tensor-product rule over `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub x_lo: f64,
    pub x_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_nodes: Vec<f64>,
    pub x_weights: Vec<f64>,
    pub t_nodes: Vec<f64>,
    pub t_weights: Vec<f64>,
}

impl Default for QuadratureRule {
    /// 64 nodes × 8 panels on `[-10, 10]`, 32 time nodes on `[1e-3, 1 - 1e-3]`.
    fn default() -> Self {
        Self::new(-10.0, 10.0, 64, 8, 1e-3, 1.0 - 1e-3, 32)
    }
}

impl QuadratureRule {
    pub fn new(
        x_lo: f64,
        x_hi: f64,
        x_order: usize,
        x_panels: usize,
        t_lo: f64,
        t_hi: f64,
        t_order: usize,
    ) -> Self {
        let (x_nodes, x_weights) = composite(x_lo, x_hi, x_order, x_panels);
        let (t_nodes, t_weights) = composite(t_lo, t_hi, t_order, 1);
        Self {
            x_lo,
            x_hi,
            t_lo,
            t_hi,
            x_nodes,
            x_weights,
            t_nodes,
            t_weights,
        }
    }

    /// `∫ f(x) dx` over the window.
    pub fn integrate_x(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x_nodes
            .iter()
            .zip(&self.x_weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `∫∫ f(t, x) dx dt` over the window.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.t_nodes
            .iter()
            .zip(&self.t_weights)
            .map(|(&t, &wt)| wt * self.integrate_x(|x| f(t, x)))
            .sum()
    }

    /// Fails unless every listed density keeps at least `1 - 1e-10` of its
    /// mass inside the window (as measured by this rule).
    pub fn check_window(&self, densities: &[Gauss1D]) -> Result<()> {
        for g in densities {
            let mass = self.integrate_x(|x| g.pdf(x));
            if !(mass >= 1.0 - 1e-10) {
                return Err(Error::WindowTooNarrow {
                    lo: self.x_lo,
                    hi: self.x_hi,
                    mass,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_rules_match_tables() {
        let (x, w) = gauss_legendre(2);
        let r = 1.0 / math::sqrt(3.0);
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!(x[1].abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((x[2] - math::sqrt(0.6)).abs() < 1e-15);
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        for n in [4usize, 16, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for k in 0..2 * n {
                let got: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(&x, &w)| w * math::powi(x, k as i32))
                    .sum();
                let want = if k % 2 == 1 {
                    0.0
                } else {
                    2.0 / (k as f64 + 1.0)
                };
                assert!((got - want).abs() < 1e-13, "n={n} k={k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn default_window_holds_a_standard_normal() {
        let rule = QuadratureRule::default();
        let mass = rule.integrate_x(|x| Gauss1D::unit(0.0).pdf(x));
        assert!((mass - 1.0).abs() < 1e-13);
        assert!(rule.check_window(&[Gauss1D::unit(2.0)]).is_ok());
        let narrow = QuadratureRule::new(-2.0, 2.0, 64, 1, 0.1, 0.9, 4);
        assert!(matches!(
            narrow.check_window(&[Gauss1D::unit(0.0)]),
            Err(Error::WindowTooNarrow { .. })
        ));
    }

    #[test]
    fn time_nodes_cover_the_clamped_interval() {
        let rule = QuadratureRule::default();
        assert_eq!(rule.t_nodes.len(), 32);
        let len: f64 = rule.t_weights.iter().sum();
        assert!((len - (1.0 - 2e-3)).abs() < 1e-14);
        assert!(rule.t_nodes.iter().all(|&t| t > 1e-3 && t < 1.0 - 1e-3));
    }
}

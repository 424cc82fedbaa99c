use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `φ(x) = ((1 - |x - c|^2 / ρ^2)_+)^4`, a C³ bump with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    center: Vec<f64>,
    radius: f64,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("bump radius must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("bump center".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn s(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        1.0 - r2 / (self.radius * self.radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let s = self.s(x);
        if s <= 0.0 {
            0.0
        } else {
            s.powi(4)
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s = self.s(x);
        let rho2 = self.radius * self.radius;
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| if s <= 0.0 { 0.0 } else { 4.0 * s.powi(3) * (-2.0 * (a - c) / rho2) })
            .collect()
    }

    /// `∂_ij φ = 12 s^2 ∂_i s ∂_j s + 4 s^3 ∂_ij s` with `∂_ij s = -2 δ_ij / ρ^2`.
    pub fn second_derivative(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let s = self.s(x);
        if s <= 0.0 {
            return 0.0;
        }
        let rho2 = self.radius * self.radius;
        let si = -2.0 * (x[i] - self.center[i]) / rho2;
        let sj = -2.0 * (x[j] - self.center[j]) / rho2;
        let sij = if i == j { -2.0 / rho2 } else { 0.0 };
        12.0 * s * s * (si * sj) + 4.0 * s.powi(3) * sij
    }

    /// `∫ φ` over R^n: `π^{n/2} ρ^n Γ(5) / Γ(n/2 + 5)`.
    pub fn integral(&self) -> f64 {
        let n = self.dim() as f64;
        let half = n / 2.0;
        let mut denom = gamma_half_integer(half);
        for k in 0..5 {
            denom *= half + k as f64;
        }
        std::f64::consts::PI.powf(half) * self.radius.powf(n) * 24.0 / denom
    }
}

/// `Γ(x)` for positive integer or half-integer `x`.
fn gamma_half_integer(x: f64) -> f64 {
    let mut g = if x.fract() == 0.0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut k = if x.fract() == 0.0 { 1.0 } else { 0.5 };
    while k < x {
        g *= k;
        k += 1.0;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vanishes_outside_support() {
        let b = TestFunction::new(vec![0.0, 0.0, 0.0], 0.5).unwrap();
        let x = [0.4, 0.4, 0.0];
        assert_eq!(b.value(&x), 0.0);
        assert!(b.gradient(&x).iter().all(|g| *g == 0.0));
        assert_eq!(b.second_derivative(&x, 0, 1), 0.0);
        assert_eq!(b.value(&[0.0; 3]), 1.0);
    }

    #[test]
    fn derivatives_match_difference_quotients() {
        let b = TestFunction::new(vec![0.1, -0.2, 0.05], 0.7).unwrap();
        let x = [0.3, 0.1, -0.1];
        let h = 1e-5;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (b.value(&xp) - b.value(&xm)) / (2.0 * h);
            assert_relative_eq!(b.gradient(&x)[i], fd, max_relative = 1e-7);
            for j in 0..3 {
                let fd2 = (b.gradient(&xp)[j] - b.gradient(&xm)[j]) / (2.0 * h);
                assert_relative_eq!(b.second_derivative(&x, i, j), fd2, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn integral_matches_radial_quadrature() {
        // n = 3: 4π ∫_0^ρ r^2 (1 - r^2/ρ^2)^4 dr by the midpoint rule
        let b = TestFunction::new(vec![0.0; 3], 0.8).unwrap();
        let m = 200_000;
        let dr = 0.8 / m as f64;
        let q: f64 = (0..m)
            .map(|k| {
                let r = (k as f64 + 0.5) * dr;
                4.0 * std::f64::consts::PI * r * r * b.value(&[r, 0.0, 0.0]) * dr
            })
            .sum();
        assert_relative_eq!(b.integral(), q, max_relative = 1e-9);
        let b2 = TestFunction::new(vec![0.0; 2], 1.0).unwrap();
        assert_relative_eq!(b2.integral(), std::f64::consts::PI / 5.0, max_relative = 1e-14);
    }
}

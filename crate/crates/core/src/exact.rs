//! Closed-form solutions and distinguished coefficient sets.

use num_complex::Complex64;

use crate::dynamics::{semigroup_apply, CoefficientSet};
use crate::error::Result;
use crate::spectral::{sqrt_two_pi, Grid, SpectralField};

/// `λ₁ = -1/2, λ₂ = -3ν/8, λ₃ = -3ν/2, λ₄ = -ν, λ₅ = -ν/2, λ₆ = -2ν`, the completely
/// integrable case.
pub fn integrable_coefficients(nu: f64) -> Result<CoefficientSet> {
    CoefficientSet::new(
        nu,
        [-0.5, -3.0 * nu / 8.0, -1.5 * nu, -nu, -0.5 * nu, -2.0 * nu],
    )
}

/// Initial data `κe^{iτx}` and the frequency `ω` for which `κe^{iτx + iωt}` is an exact solution:
///
/// `ω = -τ² + ντ⁴ - λ₁κ² - λ₂κ⁴ + (λ₃ - λ₄ + λ₅ + λ₆)τ²κ²`.
pub fn standing_wave(grid: Grid, kappa: f64, tau: i64, c: &CoefficientSet) -> (SpectralField, f64) {
    let psi = SpectralField::single_mode(grid, tau, Complex64::new(kappa * sqrt_two_pi(), 0.0));
    (psi, standing_wave_frequency(kappa, tau, c))
}

pub fn standing_wave_frequency(kappa: f64, tau: i64, c: &CoefficientSet) -> f64 {
    let t2 = (tau * tau) as f64;
    let k2 = kappa * kappa;
    -t2 + c.nu() * t2 * t2 - c.lambda(1) * k2 - c.lambda(2) * k2 * k2
        + (c.lambda(3) - c.lambda(4) + c.lambda(5) + c.lambda(6)) * t2 * k2
}

/// `L²` norm of `i∂ₜψ + ∂²ψ + ν∂⁴ψ - N(ψ)` at `t = 0` for `ψ = κe^{iτx + iωt}`.
pub fn standing_wave_residual(grid: Grid, kappa: f64, tau: i64, c: &CoefficientSet, pad: usize) -> Result<f64> {
    let (psi, omega) = standing_wave(grid, kappa, tau, c);
    // i∂ₜψ = -ωψ
    let mut lhs = psi.scale(Complex64::new(-omega, 0.0));
    lhs.axpy(Complex64::new(1.0, 0.0), &psi.derivative(2));
    lhs.axpy(Complex64::new(c.nu(), 0.0), &psi.derivative(4));
    let n = crate::dynamics::eval_nonlinearity(&psi, c, pad)?;
    Ok((&lhs - &n).l2_norm())
}

/// Free evolution `e^{it(∂² + ν∂⁴)}ψ₀`, valid for every real `t`.
pub fn linear_solution(psi0: &SpectralField, t: f64, nu: f64) -> SpectralField {
    semigroup_apply(psi0, t, 0.0, nu).expect("epsilon = 0 admits every t")
}

//! Bona–Smith regularization of initial data by a Fourier multiplier `φ(εn)`.
//!
//! The kernel is `φ(ξ) = exp(-ξ² e^{-1/ξ²})`, `φ(0) = 1`: flat to all orders at the origin,
//! valued in `[0, 1]`, with Gaussian decay at infinity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

pub fn kernel_value(xi: f64) -> f64 {
    if xi == 0.0 {
        return 1.0;
    }
    let x2 = xi * xi;
    (-x2 * (-1.0 / x2).exp()).exp()
}

/// `1 - φ(ξ)`, accurate where `φ` is within round-off of one.
pub fn kernel_complement(xi: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    let x2 = xi * xi;
    -(-x2 * (-1.0 / x2).exp()).exp_m1()
}

/// `φ_ε = Σ φ(εn) φ̂(n) e^{inx}/√(2π)` for `ε ∈ (0, 1]`.
pub fn mollify(data: &SpectralField, epsilon: f64) -> Result<SpectralField> {
    check_epsilon(epsilon)?;
    Ok(data.map_modes(|n, c| c * kernel_value(epsilon * n as f64)))
}

/// `φ - φ_ε`, computed with [`kernel_complement`] so tiny differences keep full precision.
pub fn mollification_residual(data: &SpectralField, epsilon: f64) -> Result<SpectralField> {
    check_epsilon(epsilon)?;
    Ok(data.map_modes(|n, c| c * kernel_complement(epsilon * n as f64)))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param(format!("mollifier epsilon must lie in (0, 1], got {epsilon}")));
    }
    Ok(())
}

/// Deterministic data of critical regularity: `ψ̂(n) = ⟨n⟩^{-(m + 0.6)}`.
pub fn critical_decay_data(grid: crate::spectral::Grid, m: u32) -> SpectralField {
    let mut f = SpectralField::from_fn(grid, |n| {
        Complex64::new(crate::spectral::bracket(n as f64).powf(-(m as f64 + 0.6)), 0.0)
    });
    f.zero_nyquist();
    f
}

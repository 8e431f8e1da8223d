//! Fourier pseudospectral toolkit for the fourth-order nonlinear Schrödinger equation
//!
//! ```text
//! i∂ₜψ + ∂ₓ²ψ + ν∂ₓ⁴ψ = λ₁|ψ|²ψ + λ₂|ψ|⁴ψ + λ₃(∂ψ)²ψ̄ + λ₄|∂ψ|²ψ + λ₅ψ²∂²ψ̄ + λ₆|ψ|²∂²ψ
//! ```
//!
//! on the torus `ℝ/2πℤ`, together with its parabolic regularization, modified energies,
//! conserved quantities and the numerical studies built on them.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod spectral;

pub use error::{Error, Result};
pub mod exact;
pub mod experiments;
pub mod fields;
pub mod functionals;
pub mod mollifier;

//! Seeded random fields with a prescribed spectral decay profile.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::spectral::{bracket, Grid, SpectralField};

pub type FieldRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> FieldRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coefficients `ψ̂(n) = (a + ib)⟨n⟩^{-decay}` with Gaussian `a, b`, supported on `|n| ≤ band`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayProfile {
    pub band: usize,
    pub decay: f64,
}

impl DecayProfile {
    pub fn new(band: usize, decay: f64) -> Self {
        Self { band, decay }
    }

    pub fn sample(&self, grid: Grid, rng: &mut impl Rng) -> SpectralField {
        let band = self.band.min(grid.num_modes() / 2 - 1) as i64;
        // Draw in ascending |n| so a profile produces the same function on any grid that resolves it.
        let mut field = SpectralField::zeros(grid);
        for k in 0..=band {
            for n in if k == 0 { vec![0] } else { vec![k, -k] } {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let w = bracket(n as f64).powf(-self.decay);
                field
                    .set_coeff(n, Complex64::new(re * w, im * w))
                    .expect("band is below the Nyquist mode");
            }
        }
        field
    }
}

/// Rescales `psi` to the requested norm; the zero field is returned unchanged.
pub fn normalize(psi: &SpectralField, target: f64, norm: impl Fn(&SpectralField) -> f64) -> SpectralField {
    let current = norm(psi);
    if current == 0.0 {
        psi.clone()
    } else {
        psi * (target / current)
    }
}

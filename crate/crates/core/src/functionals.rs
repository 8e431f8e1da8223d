//! Energy-type functionals: the modified energy `E_m`, the conserved quantities `I₀, I₁, I₂` of
//! the integrable case, and the difference energies `Ẽ_m` used for uniqueness and continuity.
//!
//! Every integral of a nonlinear expression is evaluated on a grid three times finer than the
//! field's own, which integrates products of up to six band-limited factors exactly.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::dynamics::{eval_nonlinearity, CoefficientSet, TrajectorySample};
use crate::error::{Error, Result};
use crate::fields::{seeded_rng, DecayProfile};
use crate::spectral::{Grid, SpectralField};

/// Oversampling used for quadrature of nonlinear integrands.
pub const QUADRATURE_PAD: usize = 3;

/// Physical samples of `∂^k ψ` on the quadrature grid.
fn fine_samples(psi: &SpectralField, k: u32) -> Vec<Complex64> {
    let fine = psi.grid().refined(QUADRATURE_PAD);
    psi.derivative(k).resample(fine).to_physical().into_samples()
}

fn quadrature<T>(grid: Grid, values: impl Iterator<Item = T>) -> T
where
    T: std::iter::Sum<T> + std::ops::Mul<f64, Output = T>,
{
    values.sum::<T>() * grid.refined(QUADRATURE_PAD).spacing()
}

/// The two quartic correction integrals of `E_m`:
///
/// `((λ₅/ν) Re∫(∂^{m-1}ψ)² ψ̄² dx,  ((2λ₃ + λ₄ + 2(m-1)λ₆)/(4ν)) ∫|∂^{m-1}ψ|²|ψ|² dx)`.
pub fn correction_terms(psi: &SpectralField, m: u32, c: &CoefficientSet) -> Result<(f64, f64)> {
    if m < 1 {
        return Err(Error::param("modified energy needs m >= 1"));
    }
    if psi.is_zero() {
        return Ok((0.0, 0.0));
    }
    let (w5, wq) = correction_weights(m, c);
    let u = fine_samples(psi, 0);
    let d = fine_samples(psi, m - 1);
    let grid = psi.grid();
    let first = quadrature(grid, u.iter().zip(&d).map(|(u, d)| (d * d * u.conj() * u.conj()).re));
    let second = quadrature(grid, u.iter().zip(&d).map(|(u, d)| d.norm_sqr() * u.norm_sqr()));
    Ok((w5 * first, wq * second))
}

/// `(λ₅/ν, (2λ₃ + λ₄ + 2(m-1)λ₆)/(4ν))`
pub fn correction_weights(m: u32, c: &CoefficientSet) -> (f64, f64) {
    let nu = c.nu();
    (
        c.lambda(5) / nu,
        (2.0 * c.lambda(3) + c.lambda(4) + 2.0 * (m as f64 - 1.0) * c.lambda(6)) / (4.0 * nu),
    )
}

/// `‖∂^m ψ‖² + ‖ψ‖²`, the energy without corrections.
pub fn raw_energy(psi: &SpectralField, m: u32) -> f64 {
    psi.seminorm_sq(m) + psi.l2_norm_sq()
}

/// `E_m(ψ) = ‖∂^m ψ‖² + ‖ψ‖² + c_m‖ψ‖^{4m+2} + corrections`.
pub fn modified_energy(psi: &SpectralField, m: u32, c: &CoefficientSet, c_m: f64) -> Result<f64> {
    if c_m < 0.0 {
        return Err(Error::param(format!("c_m must be nonnegative, got {c_m}")));
    }
    let (a, b) = correction_terms(psi, m, c)?;
    let l2 = psi.l2_norm_sq();
    Ok(raw_energy(psi, m) + c_m * l2.powi(2 * m as i32 + 1) + a + b)
}

/// Instantaneous rates `(dE_m/dt, d/dt(‖∂^m ψ‖² + ‖ψ‖²))` along the semi-discrete flow of the
/// regularized equation with damping `epsilon`.
///
/// The time derivative `ψ_t = i(∂²ψ + (ν+iε)∂⁴ψ - N(ψ))` is formed spectrally and each term of
/// the energy is differentiated in that direction. The dispersive part of `ψ_t` drops out of the
/// quadratic terms exactly and is omitted there.
pub fn energy_rates(psi: &SpectralField, m: u32, c: &CoefficientSet, c_m: f64, epsilon: f64) -> Result<(f64, f64)> {
    if m < 1 {
        return Err(Error::param("energy rates need m >= 1"));
    }
    if psi.is_zero() {
        return Ok((0.0, 0.0));
    }
    let nl = eval_nonlinearity(psi, c, c.required_padding())?;
    let nu = c.nu();
    let damped = psi.map_modes(|n, a| a * (-epsilon * (n as f64).powi(4)));
    let mut slow = nl.scale(Complex64::new(0.0, -1.0));
    slow.axpy(Complex64::new(1.0, 0.0), &damped);
    let mut velocity = psi.map_modes(|n, a| {
        let n = n as f64;
        a * Complex64::new(0.0, nu * n.powi(4) - n * n)
    });
    velocity.axpy(Complex64::new(1.0, 0.0), &slow);

    let weighted = |w: &dyn Fn(f64) -> f64| -> f64 {
        2.0 * psi
            .modes()
            .zip(slow.as_slice().iter().zip(psi.as_slice()))
            .map(|((n, _), (b, a))| w(n as f64) * (a.conj() * b).re)
            .sum::<f64>()
    };
    let l2_rate = weighted(&|_| 1.0);
    let raw_rate = weighted(&|n: f64| n.powi(2 * m as i32)) + l2_rate;

    let (w5, wq) = correction_weights(m, c);
    let u = fine_samples(psi, 0);
    let d = fine_samples(psi, m - 1);
    let uv = fine_samples(&velocity, 0);
    let dv = fine_samples(&velocity, m - 1);
    let grid = psi.grid();
    let first = quadrature(
        grid,
        (0..u.len()).map(|j| {
            let ub = u[j].conj();
            (2.0 * d[j] * dv[j] * ub * ub + 2.0 * d[j] * d[j] * ub * uv[j].conj()).re
        }),
    );
    let second = quadrature(
        grid,
        (0..u.len()).map(|j| {
            2.0 * (d[j].conj() * dv[j]).re * u[j].norm_sqr() + 2.0 * d[j].norm_sqr() * (u[j].conj() * uv[j]).re
        }),
    );
    let l2 = psi.l2_norm_sq();
    let mass_term = c_m * (2 * m + 1) as f64 * l2.powi(2 * m as i32) * l2_rate;
    Ok((raw_rate + mass_term + w5 * first + wq * second, raw_rate))
}

/// Evidence that `c_m` keeps `E_m ≥ ½(‖∂^m ψ‖² + ‖ψ‖²)` on every sampled field.
#[derive(Debug, Clone, Serialize)]
pub struct CmCertificate {
    pub m: u32,
    pub coefficients: CoefficientSet,
    pub c_m: f64,
    pub trials: usize,
    /// Smallest `E_m - ½(‖∂^m ψ‖² + ‖ψ‖²)` seen with the certified `c_m`.
    pub worst_margin: f64,
    pub l2_ceiling: f64,
    pub seed: u64,
}

/// Multiplier applied to the largest `c_m` the search found necessary.
pub const CM_SAFETY_FACTOR: f64 = 2.0;

const CERTIFY_RESOLUTIONS: [usize; 3] = [16, 32, 64];

/// The `i`-th field of the certification stream.
///
/// Resolution cycles through 16/32/64 modes; band, decay exponent and `L²` size (up to
/// `l2_ceiling`) are drawn at random. Sample `i` never depends on the total trial count.
fn certification_sample(rng: &mut impl Rng, i: usize, m: u32, l2_ceiling: f64) -> SpectralField {
    let grid = Grid::new(CERTIFY_RESOLUTIONS[i % CERTIFY_RESOLUTIONS.len()]).expect("valid size");
    let band = rng.random_range(1..grid.num_modes() / 2);
    let decay = rng.random_range(0.0..(m as f64 + 1.0));
    let size = l2_ceiling * rng.random_range(0.0f64..1.0).sqrt();
    let psi = DecayProfile::new(band, decay).sample(grid, rng);
    crate::fields::normalize(&psi, size, |p| p.l2_norm())
}

/// Randomized adversarial search for `c_m`.
pub fn certify_cm(m: u32, c: &CoefficientSet, l2_ceiling: f64, trials: usize, seed: u64) -> Result<CmCertificate> {
    if m < 1 || trials < 1 || !(l2_ceiling > 0.0) {
        return Err(Error::param("certify_cm needs m >= 1, trials >= 1 and a positive L2 ceiling"));
    }
    let mut rng = seeded_rng(seed);
    let mut samples = Vec::with_capacity(trials);
    let mut needed: f64 = 0.0;
    for i in 0..trials {
        let psi = certification_sample(&mut rng, i, m, l2_ceiling);
        let l2 = psi.l2_norm_sq();
        if l2 == 0.0 {
            continue;
        }
        let (a, b) = correction_terms(&psi, m, c)?;
        let raw = raw_energy(&psi, m);
        let deficit = -0.5 * raw - a - b;
        needed = needed.max(deficit / l2.powi(2 * m as i32 + 1));
        samples.push((raw, a + b, l2));
    }
    let c_m = CM_SAFETY_FACTOR * needed;
    let worst_margin = samples
        .iter()
        .map(|(raw, corr, l2)| 0.5 * raw + corr + c_m * l2.powi(2 * m as i32 + 1))
        .fold(f64::INFINITY, f64::min);
    Ok(CmCertificate {
        m,
        coefficients: *c,
        c_m,
        trials,
        worst_margin: if worst_margin.is_finite() { worst_margin } else { 0.0 },
        l2_ceiling,
        seed,
    })
}

/// `E_m(ψ) / ((‖ψ‖^{4m}_{L²} + 1) ‖ψ‖²_{H^m})`, the constant in the upper equivalence bound.
pub fn equivalence_upper_ratio(psi: &SpectralField, m: u32, c: &CoefficientSet, c_m: f64) -> Result<f64> {
    if psi.is_zero() {
        return Err(Error::ZeroField);
    }
    let e = modified_energy(psi, m, c, c_m)?;
    let l2 = psi.l2_norm_sq();
    Ok(e / ((l2.powi(2 * m as i32) + 1.0) * psi.sobolev_norm_sq(m)))
}

/// `I₀, I₁, I₂` of the integrable equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservedQuantities {
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
    /// Imaginary part of the raw `I₂` quadrature; zero up to round-off for resolved fields.
    pub i2_imag: f64,
}

/// ```text
/// I₀ = ½∫|ψ|²
/// I₁ = ½∫|∂ψ|² - ⅛∫|ψ|⁴
/// I₂ = ½∫|∂²ψ|² + ¾∫|ψ|²ψ̄∂²ψ + ⅛∫|ψ|²ψ∂²ψ̄ + ⅝∫(∂ψ)²ψ̄² + ¾∫|∂ψ|²|ψ|² + (1/16)∫|ψ|⁶
/// ```
pub fn conserved_quantities(psi: &SpectralField) -> ConservedQuantities {
    let grid = psi.grid();
    if psi.is_zero() {
        return ConservedQuantities {
            i0: 0.0,
            i1: 0.0,
            i2: 0.0,
            i2_imag: 0.0,
        };
    }
    let u = fine_samples(psi, 0);
    let ux = fine_samples(psi, 1);
    let uxx = fine_samples(psi, 2);

    let quartic = quadrature(grid, u.iter().map(|u| u.norm_sqr() * u.norm_sqr()));
    let i2_tail = quadrature(
        grid,
        u.iter().zip(&ux).zip(&uxx).map(|((&u, &ux), &uxx)| {
            let a = u.norm_sqr();
            let ubar = u.conj();
            0.75 * a * ubar * uxx + 0.125 * a * u * uxx.conj() + 0.625 * ux * ux * ubar * ubar
                + Complex64::new(0.75 * ux.norm_sqr() * a + a * a * a / 16.0, 0.0)
        }),
    );
    ConservedQuantities {
        i0: 0.5 * psi.l2_norm_sq(),
        i1: 0.5 * psi.seminorm_sq(1) - 0.125 * quartic,
        i2: 0.5 * psi.seminorm_sq(2) + i2_tail.re,
        i2_imag: i2_tail.im,
    }
}

/// Weights on the quartic terms of `Ẽ_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum QuarticWeights {
    /// `(2λ₃ + λ₄ + 2(m-1)λ₆)/(4ν)` and `λ₅/ν`, the weights of the differential inequality the
    /// energy is built from (and of `Ẽ₁`).
    #[default]
    LambdaWeighted,
    /// Unit weights on both quartic terms.
    Unit,
}

/// Difference energy
///
/// `Ẽ_m(ψ) = ‖∂^m ψ‖² + c̃‖ψ‖² + w_q∫|ψ_ref|²|∂^{m-1}ψ|² + w_5 Re∫ψ_ref²(∂^{m-1}ψ̄)²`
///
/// where `ψ` is a difference of two solutions and `ψ_ref` one of them. With
/// [`QuarticWeights::LambdaWeighted`] and `m = 1` this is `Ẽ₁`.
pub fn difference_energy(
    psi: &SpectralField,
    reference: &SpectralField,
    m: u32,
    c: &CoefficientSet,
    c_tilde: f64,
    weights: QuarticWeights,
) -> Result<f64> {
    if m < 1 {
        return Err(Error::param("difference energy needs m >= 1"));
    }
    if psi.grid() != reference.grid() {
        return Err(Error::GridMismatch {
            left: psi.grid().num_modes(),
            right: reference.grid().num_modes(),
        });
    }
    let base = psi.seminorm_sq(m) + c_tilde * psi.l2_norm_sq();
    if psi.is_zero() || reference.is_zero() {
        return Ok(base);
    }
    let (w5, wq) = match weights {
        QuarticWeights::LambdaWeighted => correction_weights(m, c),
        QuarticWeights::Unit => (1.0, 1.0),
    };
    let r = fine_samples(reference, 0);
    let d = fine_samples(psi, m - 1);
    let grid = psi.grid();
    let q = quadrature(grid, r.iter().zip(&d).map(|(r, d)| r.norm_sqr() * d.norm_sqr()));
    let p = quadrature(grid, r.iter().zip(&d).map(|(r, d)| (r * r * d.conj() * d.conj()).re));
    Ok(base + wq * q + w5 * p)
}

/// A `c̃` making `Ẽ_m ≥ ‖∂^m ψ‖² + ‖ψ‖²` whenever `m = 1` and `sup|ψ_ref| ≤ ref_sup`.
///
/// The quartic terms are bounded by `(|w_q| + |w_5|) ref_sup² ‖ψ‖²`.
pub fn difference_constant(m: u32, c: &CoefficientSet, ref_sup: f64, weights: QuarticWeights) -> f64 {
    let (w5, wq) = match weights {
        QuarticWeights::LambdaWeighted => correction_weights(m, c),
        QuarticWeights::Unit => (1.0, 1.0),
    };
    1.0 + (w5.abs() + wq.abs()) * ref_sup * ref_sup
}

/// Time series of norms and energies along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub m: u32,
    pub c_m_used: f64,
    pub times: Vec<f64>,
    /// `‖∂^m ψ‖²`
    pub h_m_norm_sq: Vec<f64>,
    /// `Σ⟨n⟩^{2m}|ψ̂(n)|²`
    pub sobolev_norm_sq: Vec<f64>,
    pub l2_norm_sq: Vec<f64>,
    pub modified_energy: Vec<f64>,
    pub i0: Vec<f64>,
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
}

impl EnergyReport {
    pub fn new(m: u32, c_m: f64) -> Self {
        Self {
            m,
            c_m_used: c_m,
            times: Vec::new(),
            h_m_norm_sq: Vec::new(),
            sobolev_norm_sq: Vec::new(),
            l2_norm_sq: Vec::new(),
            modified_energy: Vec::new(),
            i0: Vec::new(),
            i1: Vec::new(),
            i2: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn record(&mut self, sample: &TrajectorySample, c: &CoefficientSet) -> Result<()> {
        let psi = &sample.state;
        let q = conserved_quantities(psi);
        self.times.push(sample.time);
        self.h_m_norm_sq.push(psi.seminorm_sq(self.m));
        self.sobolev_norm_sq.push(psi.sobolev_norm_sq(self.m));
        self.l2_norm_sq.push(psi.l2_norm_sq());
        self.modified_energy.push(modified_energy(psi, self.m, c, self.c_m_used)?);
        self.i0.push(q.i0);
        self.i1.push(q.i1);
        self.i2.push(q.i2);
        Ok(())
    }

    pub fn from_samples(samples: &[TrajectorySample], m: u32, c: &CoefficientSet, c_m: f64) -> Result<Self> {
        let mut report = Self::new(m, c_m);
        for s in samples {
            report.record(s, c)?;
        }
        Ok(report)
    }

    /// Indices where `E_m < ½(‖∂^m ψ‖² + ‖ψ‖²)`.
    pub fn lower_bound_violations(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.modified_energy[k] < 0.5 * (self.h_m_norm_sq[k] + self.l2_norm_sq[k]))
            .collect()
    }

    /// Largest `|I(t) - I(0)| / |I(0)|` for each of `I₀, I₁, I₂` (absolute drift when `I(0) = 0`).
    pub fn max_relative_drifts(&self) -> [f64; 3] {
        [&self.i0, &self.i1, &self.i2].map(|series| relative_drift(series))
    }
}

pub(crate) fn relative_drift(series: &[f64]) -> f64 {
    let Some(&first) = series.first() else {
        return 0.0;
    };
    let scale = if first == 0.0 { 1.0 } else { first.abs() };
    series.iter().map(|v| (v - first).abs() / scale).fold(0.0, f64::max)
}

//! Periodic grids on `[0, 2π)`, Fourier transforms, spectral derivatives and norms.
//!
//! Coefficients use the unitary convention
//!
//! ```text
//! ψ̂(n) = (1/√(2π)) ∫₀^{2π} ψ(x) e^{-inx} dx,      ψ(x) = (1/√(2π)) Σₙ ψ̂(n) e^{inx}
//! ```
//!
//! so that `∫|ψ|² dx = Σ|ψ̂(n)|²`. On a grid of `N` nodes the integral is replaced by the
//! trapezoid rule, which makes the forward transform a scaled DFT. Coefficients are stored
//! in FFT order; the public accessors take signed mode numbers `n ∈ [-N/2, N/2)`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// `√(2π)`
pub(crate) fn sqrt_two_pi() -> f64 {
    (2.0 * PI).sqrt()
}

/// Japanese bracket `⟨n⟩ = √(1+n²)`.
pub fn bracket(n: f64) -> f64 {
    (1.0 + n * n).sqrt()
}

/// Uniform grid of `N` nodes `x_j = 2πj/N` on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(num_modes: usize) -> Result<Self> {
        if num_modes < 4 || num_modes % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "number of modes must be even and at least 4, got {num_modes}"
            )));
        }
        Ok(Self { n: num_modes })
    }

    pub fn num_modes(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|j| h * j as f64).collect()
    }

    /// The Nyquist mode `-N/2`.
    pub fn nyquist(&self) -> i64 {
        -(self.n as i64) / 2
    }

    /// Signed mode number stored at FFT slot `idx`.
    pub fn mode(&self, idx: usize) -> i64 {
        if idx < self.n / 2 {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// FFT slot of mode `n`, if resolved.
    pub fn index(&self, n: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if n < -half || n >= half {
            None
        } else if n >= 0 {
            Some(n as usize)
        } else {
            Some((n + self.n as i64) as usize)
        }
    }

    /// FFT slots ordered by ascending `|n|`: `0, 1, -1, 2, -2, …, -N/2`.
    ///
    /// All reductions over modes use this order so sums are reproducible.
    pub fn ascending_slots(&self) -> impl Iterator<Item = usize> {
        let n = self.n;
        std::iter::once(0).chain((1..n / 2).flat_map(move |k| [k, n - k])).chain(std::iter::once(n / 2))
    }

    /// A grid `factor` times finer.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid { n: self.n * factor.max(1) }
    }
}

/// Fourier coefficients `ψ̂(n)` of a periodic function.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

/// Samples `ψ(x_j)` of a periodic function at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    grid: Grid,
    samples: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.num_modes()],
        }
    }

    /// Wraps coefficients given in FFT order.
    pub fn from_fft_order(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.num_modes() {
            return Err(Error::GridMismatch {
                left: grid.num_modes(),
                right: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    /// Builds a field from a function of the signed mode number.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let coeffs = (0..grid.num_modes()).map(|idx| f(grid.mode(idx))).collect();
        Self { grid, coeffs }
    }

    /// Field with a single populated mode. Unresolved modes give the zero field.
    pub fn single_mode(grid: Grid, n: i64, amplitude: Complex64) -> Self {
        let mut out = Self::zeros(grid);
        if let Some(idx) = grid.index(n) {
            out.coeffs[idx] = amplitude;
        }
        out
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Coefficients in FFT order.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// `ψ̂(n)`, zero for unresolved modes.
    pub fn coeff(&self, n: i64) -> Complex64 {
        self.grid
            .index(n)
            .map_or(Complex64::new(0.0, 0.0), |idx| self.coeffs[idx])
    }

    pub fn set_coeff(&mut self, n: i64, value: Complex64) -> Result<()> {
        let idx = self
            .grid
            .index(n)
            .ok_or_else(|| Error::param(format!("mode {n} is not resolved on {} modes", self.grid.num_modes())))?;
        self.coeffs[idx] = value;
        Ok(())
    }

    /// `(n, ψ̂(n))` pairs in FFT order.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(idx, c)| (self.grid.mode(idx), *c))
    }

    /// Applies a Fourier multiplier `ψ̂(n) ↦ f(n) ψ̂(n)`.
    pub fn map_modes(&self, mut f: impl FnMut(i64, Complex64) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| f(self.grid.mode(idx), *c))
            .collect();
        Self { grid: self.grid, coeffs }
    }

    pub fn scale(&self, a: Complex64) -> Self {
        self.map_modes(|_, c| a * c)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Sets the Nyquist coefficient `ψ̂(-N/2)` to zero.
    pub fn zero_nyquist(&mut self) {
        let idx = self.grid.num_modes() / 2;
        self.coeffs[idx] = Complex64::new(0.0, 0.0);
    }

    /// Synthesis `ψ(x_j) = (1/√(2π)) Σ ψ̂(n) e^{inx_j}`.
    pub fn to_physical(&self) -> PhysicalField {
        let mut buf = self.coeffs.clone();
        inverse_plan(buf.len()).process(&mut buf);
        let s = 1.0 / sqrt_two_pi();
        buf.iter_mut().for_each(|v| *v *= s);
        PhysicalField {
            grid: self.grid,
            samples: buf,
        }
    }

    /// Spectral derivative: coefficient `n` is multiplied by `(in)^k`.
    pub fn derivative(&self, k: u32) -> Self {
        if k == 0 {
            return self.clone();
        }
        self.map_modes(|n, c| c * ik_power(n, k))
    }

    /// Copies the field onto `grid`, zero-padding or truncating the spectrum.
    ///
    /// When truncating, the target's Nyquist slot receives `ψ̂(-M/2)` from the source.
    pub fn resample(&self, grid: Grid) -> Self {
        if grid == self.grid {
            return self.clone();
        }
        let mut out = Self::zeros(grid);
        for (idx, c) in self.coeffs.iter().enumerate() {
            if let Some(j) = grid.index(self.grid.mode(idx)) {
                out.coeffs[j] = *c;
            }
        }
        out
    }

    /// `Σ w(n) |ψ̂(n)|²` summed in ascending `|n|`.
    fn weighted_sum(&self, w: impl Fn(i64) -> f64) -> f64 {
        self.grid
            .ascending_slots()
            .map(|idx| w(self.grid.mode(idx)) * self.coeffs[idx].norm_sqr())
            .sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.weighted_sum(|_| 1.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `‖ψ‖²_{H^m} = Σ ⟨n⟩^{2m} |ψ̂(n)|²`.
    pub fn sobolev_norm_sq(&self, m: u32) -> f64 {
        self.weighted_sum(|n| (1.0 + (n * n) as f64).powi(m as i32))
    }

    pub fn sobolev_norm(&self, m: u32) -> f64 {
        self.sobolev_norm_sq(m).sqrt()
    }

    /// Real-order variant of [`Self::sobolev_norm`], used by the mollifier rate study.
    pub fn sobolev_norm_real(&self, s: f64) -> f64 {
        self.weighted_sum(|n| (1.0 + (n * n) as f64).powf(s)).sqrt()
    }

    /// `‖∂^m ψ‖²_{L²} = Σ n^{2m} |ψ̂(n)|²`.
    pub fn seminorm_sq(&self, m: u32) -> f64 {
        self.weighted_sum(|n| (n as f64).powi(2 * m as i32))
    }

    fn check_grid(&self, other: &Self) {
        assert_eq!(
            self.grid, other.grid,
            "spectral fields live on different grids"
        );
    }

    /// `self - other`, rejecting mismatched grids.
    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.num_modes(),
                right: other.grid.num_modes(),
            });
        }
        Ok(self - other)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: Complex64, other: &Self) {
        self.check_grid(other);
        self.coeffs
            .iter_mut()
            .zip(&other.coeffs)
            .for_each(|(s, o)| *s += a * o);
    }
}

/// `(in)^k` for integer `n`.
pub(crate) fn ik_power(n: i64, k: u32) -> Complex64 {
    let mag = (n as f64).powi(k as i32);
    match k % 4 {
        0 => Complex64::new(mag, 0.0),
        1 => Complex64::new(0.0, mag),
        2 => Complex64::new(-mag, 0.0),
        _ => Complex64::new(0.0, -mag),
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;

    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.check_grid(rhs);
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect();
        SpectralField { grid: self.grid, coeffs }
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;

    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.check_grid(rhs);
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
        SpectralField { grid: self.grid, coeffs }
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;

    fn neg(self) -> SpectralField {
        self.map_modes(|_, c| -c)
    }
}

impl Mul<Complex64> for &SpectralField {
    type Output = SpectralField;

    fn mul(self, rhs: Complex64) -> SpectralField {
        self.scale(rhs)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;

    fn mul(self, rhs: f64) -> SpectralField {
        self.map_modes(|_, c| c * rhs)
    }
}

impl Mul<f64> for SpectralField {
    type Output = SpectralField;

    fn mul(mut self, rhs: f64) -> SpectralField {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
        self
    }
}

impl PhysicalField {
    pub fn from_samples(grid: Grid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.num_modes() {
            return Err(Error::GridMismatch {
                left: grid.num_modes(),
                right: samples.len(),
            });
        }
        Ok(Self { grid, samples })
    }

    /// Samples a function at the grid nodes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = grid.nodes().into_iter().map(f).collect();
        Self { grid, samples }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Trapezoid-rule DFT `ψ̂(n) = (√(2π)/N) Σ ψ(x_j) e^{-inx_j}`.
    pub fn to_spectral(&self) -> SpectralField {
        let mut buf = self.samples.clone();
        forward_plan(buf.len()).process(&mut buf);
        let s = sqrt_two_pi() / self.grid.num_modes() as f64;
        buf.iter_mut().for_each(|v| *v *= s);
        SpectralField {
            grid: self.grid,
            coeffs: buf,
        }
    }

    /// Trapezoid-rule integral `∫₀^{2π} ψ dx`.
    pub fn integral(&self) -> Complex64 {
        self.samples.iter().sum::<Complex64>() * self.grid.spacing()
    }

    /// `(∫|ψ|^p dx)^{1/p}` by the trapezoid rule; `p = ∞` gives the largest sample modulus.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 2.0 {
            return Err(Error::param(format!("L^p norm requires p >= 2, got {p}")));
        }
        if p.is_infinite() {
            return Ok(self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
        let sum: f64 = self.samples.iter().map(|v| v.norm().powf(p)).sum();
        Ok((sum * self.grid.spacing()).powf(1.0 / p))
    }
}

/// Gagliardo–Nirenberg interpolation exponent `α = (l + 1/2 - 1/p)/m`.
pub fn gn_exponent(l: u32, m: u32, p: f64) -> f64 {
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    (l as f64 + 0.5 - inv_p) / m as f64
}

/// Oversampling used when evaluating `L^p` norms inside [`gn_ratio`].
pub const GN_OVERSAMPLE: usize = 4;

/// Ratio of `‖∂^l ψ‖_{L^p}` to the Gagliardo–Nirenberg bound with unit constant:
/// `‖ψ‖^{1-α} ‖∂^m ψ‖^α`, plus `‖ψ‖` when `l = 0`.
///
/// The `L^p` norm is taken on a grid refined by [`GN_OVERSAMPLE`], so band-limited fields
/// give nearly resolution-independent ratios.
pub fn gn_ratio(psi: &SpectralField, l: u32, m: u32, p: f64) -> Result<f64> {
    if m == 0 || l >= m {
        return Err(Error::param(format!("need 0 <= l <= m-1, got l={l}, m={m}")));
    }
    if p.is_nan() || p < 2.0 {
        return Err(Error::param(format!("need 2 <= p <= inf, got p={p}")));
    }
    if psi.is_zero() {
        return Err(Error::ZeroField);
    }
    let alpha = gn_exponent(l, m, p);
    let fine = psi.grid().refined(GN_OVERSAMPLE);
    let numerator = psi.derivative(l).resample(fine).to_physical().lp_norm(p)?;
    let l2 = psi.l2_norm();
    let top = psi.seminorm_sq(m).sqrt();
    let mut rhs = l2.powf(1.0 - alpha) * top.powf(alpha);
    if l == 0 {
        rhs += l2;
    }
    Ok(numerator / rhs)
}

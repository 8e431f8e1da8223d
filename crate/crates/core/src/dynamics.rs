//! Nonlinearity, regularized linear semigroup and time steppers for
//!
//! ```text
//! i∂ₜψ + ∂ₓ²ψ + (ν + iε)∂ₓ⁴ψ = N(ψ, ψ̄, ∂ψ, ∂ψ̄, ∂²ψ, ∂²ψ̄)
//! ```
//!
//! In Fourier variables the linear part is the diagonal multiplier
//! `exp((-in² + iνn⁴ - εn⁴)t)`, and the solution satisfies the Duhamel formula
//! `ψ(t) = W_ε(t)ψ(0) - i∫₀ᵗ W_ε(t-τ) N(ψ(τ)) dτ`.
//!
//! The main stepper ([`DuhamelStepper`]) solves that integral equation one step at a time by
//! Picard iteration with an exponential trapezoid quadrature. [`reference_integrate`] is an
//! unrelated integrating-factor RK4 scheme kept as a cross-check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Dispersion coefficient `ν` and nonlinearity coefficients `λ₁..λ₆`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    nu: f64,
    lambda: [f64; 6],
}

impl CoefficientSet {
    pub fn new(nu: f64, lambda: [f64; 6]) -> Result<Self> {
        if nu == 0.0 || !nu.is_finite() {
            return Err(Error::param(format!("nu must be finite and nonzero, got {nu}")));
        }
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::param("lambda coefficients must be finite"));
        }
        Ok(Self { nu, lambda })
    }

    /// All `λⱼ = 0`: the linear equation.
    pub fn linear(nu: f64) -> Result<Self> {
        Self::new(nu, [0.0; 6])
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lambdas(&self) -> [f64; 6] {
        self.lambda
    }

    /// `λⱼ` with the usual 1-based numbering.
    pub fn lambda(&self, j: usize) -> f64 {
        self.lambda[j - 1]
    }

    pub fn has_quintic(&self) -> bool {
        self.lambda[1] != 0.0
    }

    pub fn is_linear(&self) -> bool {
        self.lambda.iter().all(|l| *l == 0.0)
    }

    /// Smallest zero-padding factor that removes aliasing from every product present.
    pub fn required_padding(&self) -> usize {
        if self.has_quintic() {
            3
        } else {
            2
        }
    }
}

/// Step size, regularization and Picard controls for the time steppers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Parabolic regularization `ε ∈ [0, 1]`.
    pub epsilon: f64,
    /// Largest allowed step; runs use `t_end / ceil(t_end / dt)`.
    pub dt: f64,
    /// Picard stopping tolerance on the `H^m` distance of successive iterates.
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub dealias_pad: usize,
    pub sobolev_index: u32,
    /// Blow-up is suspected once `‖ψ‖_{H^m}` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl SolverConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            epsilon: 0.0,
            dt,
            picard_tol: 1e-12,
            picard_max_iters: 50,
            dealias_pad: 2,
            sobolev_index: 4,
            blowup_factor: 1e6,
        }
    }

    /// Defaults with the padding factor chosen for `c`.
    pub fn for_coefficients(dt: f64, c: &CoefficientSet) -> Self {
        Self {
            dealias_pad: c.required_padding(),
            ..Self::new(dt)
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_sobolev_index(mut self, m: u32) -> Self {
        self.sobolev_index = m;
        self
    }

    pub fn validate(&self, c: &CoefficientSet) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::param(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.picard_tol > 0.0) || self.picard_max_iters == 0 {
            return Err(Error::param("Picard tolerance and iteration cap must be positive"));
        }
        if self.dealias_pad < 1 {
            return Err(Error::param("dealiasing pad factor must be at least 1"));
        }
        if c.has_quintic() && self.dealias_pad < 3 {
            return Err(Error::param(format!(
                "quintic term active: pad factor must be >= 3, got {}",
                self.dealias_pad
            )));
        }
        if self.sobolev_index < 1 {
            return Err(Error::param("Sobolev index must be at least 1"));
        }
        if !(self.blowup_factor > 1.0) {
            return Err(Error::param("blow-up factor must exceed 1"));
        }
        Ok(())
    }
}

/// State at one instant of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub state: SpectralField,
}

/// Marker left when a run stops because the `H^m` norm crossed the blow-up ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowUpSuspected {
    pub time: f64,
    pub sobolev_norm: f64,
    pub ceiling: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub blow_up: Option<BlowUpSuspected>,
    /// Picard iterations used by each step.
    pub iterations: Vec<usize>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory holds at least the initial sample")
    }
}

/// Pseudospectral evaluation of
/// `λ₁|ψ|²ψ + λ₂|ψ|⁴ψ + λ₃(∂ψ)²ψ̄ + λ₄|∂ψ|²ψ + λ₅ψ²∂²ψ̄ + λ₆|ψ|²∂²ψ`.
///
/// Derivatives are spectral; products are formed on a grid `pad` times finer and the result
/// is truncated back to the input resolution with the Nyquist mode cleared.
pub fn eval_nonlinearity(psi: &SpectralField, c: &CoefficientSet, pad: usize) -> Result<SpectralField> {
    if pad < 1 {
        return Err(Error::param("pad factor must be at least 1"));
    }
    Ok(nonlinearity(psi, c, pad))
}

fn nonlinearity(psi: &SpectralField, c: &CoefficientSet, pad: usize) -> SpectralField {
    let grid = psi.grid();
    if c.is_linear() || psi.is_zero() {
        return SpectralField::zeros(grid);
    }
    let fine = grid.refined(pad);
    let u = psi.resample(fine).to_physical().into_samples();
    let ux = psi.derivative(1).resample(fine).to_physical().into_samples();
    let uxx = psi.derivative(2).resample(fine).to_physical().into_samples();
    let [l1, l2, l3, l4, l5, l6] = c.lambdas();

    let out: Vec<Complex64> = u
        .iter()
        .zip(&ux)
        .zip(&uxx)
        .map(|((&u, &ux), &uxx)| {
            let a = u.norm_sqr();
            let ubar = u.conj();
            (l1 * a + l2 * a * a) * u
                + l3 * ux * ux * ubar
                + l4 * ux.norm_sqr() * u
                + l5 * u * u * uxx.conj()
                + l6 * a * uxx
        })
        .collect();

    let mut result = crate::spectral::PhysicalField::from_samples(fine, out)
        .expect("sample count matches the refined grid")
        .to_spectral()
        .resample(grid);
    result.zero_nyquist();
    result
}

/// `-εn⁴ + i(νn⁴ - n²)`, the exponent of the linear propagator.
fn linear_symbol(n: i64, epsilon: f64, nu: f64) -> (f64, f64) {
    let n2 = (n * n) as f64;
    let n4 = n2 * n2;
    (-epsilon * n4, nu * n4 - n2)
}

/// Multipliers of `W_ε(t)` in FFT order.
pub fn semigroup_multipliers(grid: Grid, t: f64, epsilon: f64, nu: f64) -> Vec<Complex64> {
    (0..grid.num_modes())
        .map(|idx| {
            let (decay, freq) = linear_symbol(grid.mode(idx), epsilon, nu);
            Complex64::from_polar((decay * t).exp(), freq * t)
        })
        .collect()
}

fn apply_multipliers(psi: &SpectralField, mult: &[Complex64]) -> SpectralField {
    let mut out = psi.clone();
    out.as_mut_slice()
        .iter_mut()
        .zip(mult)
        .for_each(|(c, m)| *c *= m);
    out
}

/// `W_ε(t)ψ`: each coefficient times `exp((-in² + iνn⁴ - εn⁴)t)`.
pub fn semigroup_apply(psi: &SpectralField, t: f64, epsilon: f64, nu: f64) -> Result<SpectralField> {
    if epsilon < 0.0 {
        return Err(Error::param(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    if epsilon > 0.0 && t < 0.0 {
        return Err(Error::param(format!(
            "backward evolution (t = {t}) is ill-posed for epsilon = {epsilon} > 0"
        )));
    }
    let mult = semigroup_multipliers(psi.grid(), t, epsilon, nu);
    Ok(apply_multipliers(psi, &mult))
}

/// `max_n ⟨n⟩² e^{-εn⁴s}` over the resolved modes of `grid`.
pub fn smoothing_multiplier_sup(epsilon: f64, s: f64, grid: Grid) -> Result<f64> {
    if !(epsilon > 0.0) || !(s > 0.0) {
        return Err(Error::param(format!(
            "smoothing multiplier needs epsilon > 0 and s > 0, got {epsilon}, {s}"
        )));
    }
    Ok((0..grid.num_modes())
        .map(|idx| {
            let n = grid.mode(idx) as f64;
            (1.0 + n * n) * (-epsilon * n.powi(4) * s).exp()
        })
        .fold(0.0, f64::max))
}

/// Number of uniform steps of size at most `dt` covering `[0, t_end]`.
pub(crate) fn step_count(t_end: f64, dt: f64) -> usize {
    if t_end <= 0.0 {
        0
    } else {
        ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// One-step solver for the Duhamel integral equation over `[t, t + h]`.
///
/// With `W = W_ε(h)` and `Ñ = N(ψ)` evaluated at the step start, it iterates
///
/// ```text
/// ψ⁽ᵏ⁺¹⁾ = Wψ - (ih/2)(W Ñ + N(ψ⁽ᵏ⁾))
/// ```
///
/// starting from the exponential Euler predictor `Wψ - ih W Ñ`.
#[derive(Debug, Clone)]
pub struct DuhamelStepper {
    coefficients: CoefficientSet,
    config: SolverConfig,
    step: f64,
    propagator: Vec<Complex64>,
}

impl DuhamelStepper {
    pub fn new(grid: Grid, step: f64, config: SolverConfig, coefficients: CoefficientSet) -> Result<Self> {
        config.validate(&coefficients)?;
        if !(step > 0.0) {
            return Err(Error::param(format!("step must be positive, got {step}")));
        }
        Ok(Self {
            coefficients,
            config,
            step,
            propagator: semigroup_multipliers(grid, step, config.epsilon, coefficients.nu()),
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// Advances `psi` by one step, returning the new state and the Picard iteration count.
    /// `time` is only used to label errors.
    pub fn advance(&self, psi: &SpectralField, time: f64) -> Result<(SpectralField, usize)> {
        let pad = self.config.dealias_pad;
        let m = self.config.sobolev_index;
        let half = -I * (0.5 * self.step);

        let linear = apply_multipliers(psi, &self.propagator);
        if self.coefficients.is_linear() {
            return Ok((linear, 1));
        }
        let start_term = apply_multipliers(&nonlinearity(psi, &self.coefficients, pad), &self.propagator);
        let mut base = linear;
        base.axpy(half, &start_term);
        let mut current = base.clone();
        current.axpy(half, &start_term);

        let mut previous_update = f64::INFINITY;
        for iteration in 1..=self.config.picard_max_iters {
            let mut next = base.clone();
            next.axpy(half, &nonlinearity(&current, &self.coefficients, pad));
            if !next.is_finite() {
                return Err(Error::NonFinite { time: time + self.step });
            }
            let update = (&next - &current).sobolev_norm(m);
            let scale = next.sobolev_norm(m).max(1.0);
            let tol = self.config.picard_tol * scale;
            // Once the update sits at round-off and stops shrinking, further sweeps are noise.
            let stalled = iteration >= 4 && update <= 1e3 * tol && update >= 0.5 * previous_update;
            if update <= tol || stalled {
                return Ok((next, iteration));
            }
            previous_update = update;
            current = next;
        }
        Err(Error::NonConvergence {
            time,
            iterations: self.config.picard_max_iters,
            residual: previous_update,
        })
    }
}

/// One Picard–Duhamel step of length `cfg.dt`.
pub fn duhamel_step(psi: &SpectralField, cfg: &SolverConfig, c: &CoefficientSet) -> Result<(SpectralField, usize)> {
    DuhamelStepper::new(psi.grid(), cfg.dt, *cfg, *c)?.advance(psi, 0.0)
}

/// Integrates with [`DuhamelStepper`] over `[0, t_end]`, calling `observer` on every sample
/// (including the initial one).
///
/// Stops early, keeping the partial trajectory, if the `H^m` norm leaves the blow-up ceiling.
pub fn integrate(
    psi0: &SpectralField,
    t_end: f64,
    cfg: &SolverConfig,
    c: &CoefficientSet,
    observer: &mut dyn FnMut(&TrajectorySample),
) -> Result<Trajectory> {
    if !(t_end >= 0.0) {
        return Err(Error::param(format!("t_end must be nonnegative, got {t_end}")));
    }
    cfg.validate(c)?;
    let first = TrajectorySample {
        time: 0.0,
        state: psi0.clone(),
    };
    observer(&first);
    let mut trajectory = Trajectory {
        samples: vec![first],
        blow_up: None,
        iterations: Vec::new(),
    };
    let steps = step_count(t_end, cfg.dt);
    if steps == 0 {
        return Ok(trajectory);
    }
    let h = t_end / steps as f64;
    let stepper = DuhamelStepper::new(psi0.grid(), h, *cfg, *c)?;
    let ceiling = cfg.blowup_factor * psi0.sobolev_norm(cfg.sobolev_index);
    let mut state = psi0.clone();
    for k in 0..steps {
        let t = h * k as f64;
        let (next, iters) = stepper.advance(&state, t)?;
        let time = if k + 1 == steps { t_end } else { h * (k + 1) as f64 };
        let norm = next.sobolev_norm(cfg.sobolev_index);
        let sample = TrajectorySample { time, state: next };
        observer(&sample);
        trajectory.iterations.push(iters);
        state = sample.state.clone();
        trajectory.samples.push(sample);
        if norm > ceiling {
            trajectory.blow_up = Some(BlowUpSuspected {
                time,
                sobolev_norm: norm,
                ceiling,
            });
            break;
        }
    }
    Ok(trajectory)
}

/// Integrating-factor RK4 (Lawson) reference solver.
///
/// Only forward propagators `W_ε(h/2)`, `W_ε(h)` are used, so the scheme is valid for `ε > 0`.
/// Returns one sample per step.
pub fn reference_integrate(
    psi0: &SpectralField,
    t_end: f64,
    cfg: &SolverConfig,
    c: &CoefficientSet,
) -> Result<Vec<TrajectorySample>> {
    if !(t_end >= 0.0) {
        return Err(Error::param(format!("t_end must be nonnegative, got {t_end}")));
    }
    cfg.validate(c)?;
    let grid = psi0.grid();
    let pad = cfg.dealias_pad;
    let mut out = vec![TrajectorySample {
        time: 0.0,
        state: psi0.clone(),
    }];
    let steps = step_count(t_end, cfg.dt);
    if steps == 0 {
        return Ok(out);
    }
    let h = t_end / steps as f64;
    let half_prop = semigroup_multipliers(grid, 0.5 * h, cfg.epsilon, c.nu());
    let full_prop = semigroup_multipliers(grid, h, cfg.epsilon, c.nu());
    let rhs = |psi: &SpectralField| nonlinearity(psi, c, pad).scale(-I);
    let hc = |a: f64| Complex64::new(a * h, 0.0);

    let mut state = psi0.clone();
    for k in 0..steps {
        let k1 = rhs(&state);
        let mut a = state.clone();
        a.axpy(hc(0.5), &k1);
        let a = apply_multipliers(&a, &half_prop);
        let k2 = rhs(&a);

        let mut b = apply_multipliers(&state, &half_prop);
        b.axpy(hc(0.5), &k2);
        let k3 = rhs(&b);

        let mut d = apply_multipliers(&state, &full_prop);
        d.axpy(hc(1.0), &apply_multipliers(&k3, &half_prop));
        let k4 = rhs(&d);

        let mut mid = k2;
        mid.axpy(Complex64::new(1.0, 0.0), &k3);
        let mut next = apply_multipliers(&state, &full_prop);
        next.axpy(hc(1.0 / 6.0), &apply_multipliers(&k1, &full_prop));
        next.axpy(hc(2.0 / 6.0), &apply_multipliers(&mid, &half_prop));
        next.axpy(hc(1.0 / 6.0), &k4);

        let time = if k + 1 == steps { t_end } else { h * (k + 1) as f64 };
        if !next.is_finite() {
            return Err(Error::NonFinite { time });
        }
        state = next;
        out.push(TrajectorySample {
            time,
            state: state.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn generic() -> CoefficientSet {
        CoefficientSet::new(0.8, [0.3, -0.2, 0.45, -0.6, 0.25, 0.7]).unwrap()
    }

    fn smooth_field(grid: Grid, amp: f64) -> SpectralField {
        let mut f = SpectralField::from_fn(grid, |n| {
            let n = n as f64;
            Complex64::from_polar(amp * (-0.5 * n * n).exp(), 0.3 * n + 0.1)
        });
        f.zero_nyquist();
        f
    }

    fn low_mode_field(grid: Grid, amp: f64) -> SpectralField {
        SpectralField::from_fn(grid, |n| {
            let n = n as f64;
            Complex64::from_polar(amp * (-n * n).exp(), 0.5 * n)
        })
    }

    #[test]
    fn coefficient_validation() {
        assert!(CoefficientSet::new(0.0, [0.0; 6]).is_err());
        assert!(CoefficientSet::new(f64::NAN, [0.0; 6]).is_err());
        assert_eq!(CoefficientSet::linear(1.0).unwrap().required_padding(), 2);
        assert_eq!(generic().required_padding(), 3);
        assert_eq!(generic().lambda(1), 0.3);
    }

    #[test]
    fn config_validation() {
        let c = generic();
        let mut cfg = SolverConfig::new(1e-3);
        assert!(cfg.validate(&c).is_err(), "quintic needs pad 3");
        cfg.dealias_pad = 3;
        assert!(cfg.validate(&c).is_ok());
        assert!(cfg.with_epsilon(1.5).validate(&c).is_err());
        assert!(cfg.with_epsilon(-0.1).validate(&c).is_err());
        let mut bad = cfg;
        bad.dt = 0.0;
        assert!(bad.validate(&c).is_err());
    }

    #[test]
    fn nonlinearity_of_zero_and_constants() {
        let g = Grid::new(16).unwrap();
        let c = generic();
        assert!(eval_nonlinearity(&SpectralField::zeros(g), &c, 3).unwrap().is_zero());
        assert!(eval_nonlinearity(&SpectralField::zeros(g), &c, 0).is_err());

        let value = Complex64::new(0.4, -0.3);
        let psi = SpectralField::single_mode(g, 0, value * (2.0 * PI).sqrt());
        let out = eval_nonlinearity(&psi, &c, 3).unwrap();
        let a = value.norm_sqr();
        let expected = (c.lambda(1) * a + c.lambda(2) * a * a) * value * (2.0 * PI).sqrt();
        assert!((out.coeff(0) - expected).norm() < 1e-14);
        assert!(out.modes().filter(|(n, _)| *n != 0).all(|(_, v)| v.norm() < 1e-14));
    }

    /// Plane wave `κe^{iτx}` against hand substitution and a pointwise fine-grid quadrature
    /// that never touches the pseudospectral path.
    #[test]
    fn nonlinearity_of_plane_wave() {
        let g = Grid::new(32).unwrap();
        let c = generic();
        let (kappa, tau) = (0.7_f64, 3_i64);
        let psi = SpectralField::single_mode(g, tau, Complex64::new(kappa * (2.0 * PI).sqrt(), 0.0));
        let out = eval_nonlinearity(&psi, &c, 3).unwrap();

        let t2 = (tau * tau) as f64;
        let k2 = kappa * kappa;
        let factor = c.lambda(1) * k2 + c.lambda(2) * k2 * k2
            + (-c.lambda(3) + c.lambda(4) - c.lambda(5) - c.lambda(6)) * t2 * k2;
        let hand = factor * kappa * (2.0 * PI).sqrt();

        // Oracle: N evaluated from closed-form derivatives on 512 nodes, projected on e^{iτx}.
        let nodes = 512;
        let mut proj = Complex64::new(0.0, 0.0);
        for j in 0..nodes {
            let x = 2.0 * PI * j as f64 / nodes as f64;
            let u = Complex64::from_polar(kappa, tau as f64 * x);
            let ux = I * tau as f64 * u;
            let uxx = -t2 * u;
            let a = u.norm_sqr();
            let val = c.lambda(1) * a * u
                + c.lambda(2) * a * a * u
                + c.lambda(3) * ux * ux * u.conj()
                + c.lambda(4) * ux.norm_sqr() * u
                + c.lambda(5) * u * u * uxx.conj()
                + c.lambda(6) * a * uxx;
            proj += val * Complex64::from_polar(1.0, -(tau as f64) * x);
        }
        proj *= (2.0 * PI / nodes as f64) / (2.0 * PI).sqrt();

        assert!((out.coeff(tau) - Complex64::new(hand, 0.0)).norm() < 1e-12);
        assert!((proj - Complex64::new(hand, 0.0)).norm() < 1e-12);
        let off: f64 = out.modes().filter(|(n, _)| *n != tau).map(|(_, v)| v.norm_sqr()).sum();
        assert!(off < 1e-26);
    }

    #[test]
    fn dealiasing_matches_finer_resolution() {
        let g = Grid::new(32).unwrap();
        let c = generic();
        // support |n| <= N/8
        let psi = SpectralField::from_fn(g, |n| {
            if n.abs() <= 4 {
                Complex64::new(0.2 / (1.0 + n.abs() as f64), 0.05 * n as f64)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let coarse = eval_nonlinearity(&psi, &c, 3).unwrap();
        let fine = eval_nonlinearity(&psi.resample(g.refined(4)), &c, 3).unwrap().resample(g);
        let mut fine = fine;
        fine.zero_nyquist();
        assert!((&coarse - &fine).l2_norm() < 1e-11);
    }

    #[test]
    fn gauge_covariance() {
        let g = Grid::new(32).unwrap();
        let c = generic();
        let psi = smooth_field(g, 0.5);
        let phase = Complex64::from_polar(1.0, 0.83);
        let lhs = eval_nonlinearity(&psi.scale(phase), &c, 3).unwrap();
        let rhs = eval_nonlinearity(&psi, &c, 3).unwrap().scale(phase);
        assert!((&lhs - &rhs).l2_norm() < 1e-14);
    }

    #[test]
    fn semigroup_examples() {
        let g = Grid::new(16).unwrap();
        let psi = smooth_field(g, 1.0);
        assert_eq!(semigroup_apply(&psi, 0.0, 0.3, 1.0).unwrap(), psi);
        let one = SpectralField::single_mode(g, 1, Complex64::new(1.0, 0.0));
        let stationary = semigroup_apply(&one, 2.7, 0.0, 1.0).unwrap();
        assert!((stationary.coeff(1) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let damped = semigroup_apply(&one, 1.0, 1.0, 0.37).unwrap();
        assert_relative_eq!(damped.coeff(1).norm(), (-1.0f64).exp(), epsilon = 1e-15);
        assert!(semigroup_apply(&one, -1.0, 0.1, 1.0).is_err());
        assert!(semigroup_apply(&one, -1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn semigroup_composition_and_contraction() {
        let g = Grid::new(32).unwrap();
        let psi = smooth_field(g, 1.0);
        for eps in [0.0, 0.01] {
            let ab = semigroup_apply(&semigroup_apply(&psi, 0.3, eps, 1.3).unwrap(), 0.2, eps, 1.3).unwrap();
            let direct = semigroup_apply(&psi, 0.5, eps, 1.3).unwrap();
            assert!((&ab - &direct).l2_norm() < 1e-14);
            let n0 = psi.sobolev_norm(4);
            let n1 = direct.sobolev_norm(4);
            if eps == 0.0 {
                assert_relative_eq!(n0, n1, max_relative = 1e-14);
            } else {
                assert!(n1 < n0);
            }
        }
    }

    #[test]
    fn smoothing_multiplier_examples() {
        let g = Grid::new(64).unwrap();
        assert!(smoothing_multiplier_sup(0.01, 0.01, g).unwrap() >= 1.0);
        // n = ±1 gives 2e^{-10}
        assert_eq!(smoothing_multiplier_sup(1.0, 10.0, g).unwrap(), 1.0);
        assert!(smoothing_multiplier_sup(0.0, 1.0, g).is_err());
        assert!(smoothing_multiplier_sup(1.0, -1.0, g).is_err());
    }

    #[test]
    fn duhamel_step_trivial_cases() {
        let g = Grid::new(32).unwrap();
        let c = generic();
        let cfg = SolverConfig::for_coefficients(1e-3, &c);
        let (zero, iters) = duhamel_step(&SpectralField::zeros(g), &cfg, &c).unwrap();
        assert!(zero.is_zero());
        assert_eq!(iters, 1);

        let lin = CoefficientSet::linear(0.8).unwrap();
        let cfg = SolverConfig::for_coefficients(1e-3, &lin).with_epsilon(0.05);
        let psi = smooth_field(g, 0.7);
        let (out, iters) = duhamel_step(&psi, &cfg, &lin).unwrap();
        assert!(iters <= 2);
        assert_eq!(out, semigroup_apply(&psi, 1e-3, 0.05, 0.8).unwrap());
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = Grid::new(64).unwrap();
        let c = generic();
        let mut cfg = SolverConfig::for_coefficients(0.5, &c);
        cfg.picard_max_iters = 5;
        let psi = smooth_field(g, 3.0);
        assert!(matches!(
            duhamel_step(&psi, &cfg, &c),
            Err(Error::NonConvergence { .. }) | Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn integrate_zero_time_and_linear() {
        let g = Grid::new(32).unwrap();
        let lin = CoefficientSet::linear(1.1).unwrap();
        let cfg = SolverConfig::for_coefficients(1e-2, &lin);
        let psi = smooth_field(g, 1.0);
        let mut seen = 0;
        let traj = integrate(&psi, 0.0, &cfg, &lin, &mut |_| seen += 1).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(seen, 1);
        assert_eq!(traj.last().state, psi);

        let traj = integrate(&psi, 0.5, &cfg, &lin, &mut |_| seen += 1).unwrap();
        assert_eq!(traj.samples.len(), 51);
        assert_relative_eq!(traj.last().time, 0.5);
        let exact = semigroup_apply(&psi, 0.5, 0.0, 1.1).unwrap();
        let err = (&traj.last().state - &exact).sobolev_norm(4) / exact.sobolev_norm(4);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn l2_decays_under_regularization() {
        let g = Grid::new(32).unwrap();
        let lin = CoefficientSet::linear(1.0).unwrap();
        let cfg = SolverConfig::for_coefficients(1e-2, &lin).with_epsilon(0.01);
        let traj = integrate(&smooth_field(g, 1.0), 0.2, &cfg, &lin, &mut |_| {}).unwrap();
        for w in traj.samples.windows(2) {
            assert!(w[1].state.l2_norm() < w[0].state.l2_norm());
        }
    }

    #[test]
    fn blow_up_ceiling_stops_run() {
        let g = Grid::new(32).unwrap();
        let c = generic();
        let cfg = SolverConfig::for_coefficients(1e-3, &c);
        let psi = low_mode_field(g, 0.6);
        let m = cfg.sobolev_index;
        let h0 = psi.sobolev_norm(m);
        let full = integrate(&psi, 0.05, &cfg, &c, &mut |_| {}).unwrap();
        assert!(full.blow_up.is_none());
        let peak = full.samples.iter().map(|s| s.state.sobolev_norm(m) / h0).fold(0.0, f64::max);
        assert!(peak > 1.0 + 1e-6, "trajectory must grow somewhere, peak ratio {peak}");

        let mut tight = cfg;
        tight.blowup_factor = 0.5 * (1.0 + peak);
        let stopped = integrate(&psi, 0.05, &tight, &c, &mut |_| {}).unwrap();
        let flag = stopped.blow_up.expect("ceiling below the peak must trip");
        assert!(flag.sobolev_norm > flag.ceiling);
        assert_eq!(stopped.last().time, flag.time);
        assert!(stopped.samples.len() < full.samples.len());
    }

    #[test]
    fn reference_linear_exact() {
        let g = Grid::new(32).unwrap();
        let lin = CoefficientSet::linear(0.9).unwrap();
        let cfg = SolverConfig::for_coefficients(1e-2, &lin);
        let psi = smooth_field(g, 1.0);
        let out = reference_integrate(&psi, 0.3, &cfg, &lin).unwrap();
        let exact = semigroup_apply(&psi, 0.3, 0.0, 0.9).unwrap();
        assert!((&out.last().unwrap().state - &exact).l2_norm() < 1e-13);
    }

    #[test]
    fn reference_is_fourth_order() {
        let g = Grid::new(32).unwrap();
        let c = generic();
        let psi = low_mode_field(g, 0.4);
        let run = |dt: f64| {
            let cfg = SolverConfig::for_coefficients(dt, &c);
            reference_integrate(&psi, 0.1, &cfg, &c).unwrap().pop().unwrap().state
        };
        let truth = run(2e-3 / 8.0);
        let e1 = (&run(2e-3) - &truth).sobolev_norm(4);
        let e2 = (&run(1e-3) - &truth).sobolev_norm(4);
        let ratio = e1 / e2;
        assert!(ratio > 13.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn duhamel_agrees_with_reference() {
        let g = Grid::new(32).unwrap();
        let c = generic();
        let psi = low_mode_field(g, 0.3);
        let cfg = SolverConfig::for_coefficients(1e-4, &c);
        let a = integrate(&psi, 0.1, &cfg, &c, &mut |_| {}).unwrap();
        let b = reference_integrate(&psi, 0.1, &cfg, &c).unwrap();
        let diff = (&a.last().state - &b.last().unwrap().state).sobolev_norm(4);
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn reference_reports_non_finite() {
        let g = Grid::new(32).unwrap();
        let c = CoefficientSet::new(1.0, [0.0, 0.0, 0.0, 0.0, 0.0, 50.0]).unwrap();
        let cfg = SolverConfig::for_coefficients(0.5, &c);
        let psi = smooth_field(g, 20.0);
        assert!(matches!(
            reference_integrate(&psi, 200.0, &cfg, &c),
            Err(Error::NonFinite { .. })
        ));
    }
}
